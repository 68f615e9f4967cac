#include "voluntier/proto/messages.hpp"

#include "voluntier/common/digest.hpp"
#include "voluntier/errors.hpp"

namespace voluntier::proto {

using nlohmann::json;

namespace {

const json& field(const json& j, const char* key)
{
    if (!j.is_object()) {
        throw ProtocolError("expected an object while reading '" + std::string(key) + "'");
    }
    auto it = j.find(key);
    if (it == j.end()) {
        throw ProtocolError(std::string("missing field '") + key + "'");
    }
    return *it;
}

template <typename T>
T get(const json& j, const char* key)
{
    try {
        return field(j, key).get<T>();
    } catch (const json::exception&) {
        throw ProtocolError(std::string("field '") + key + "' has the wrong type");
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback)
{
    if (!j.is_object() || !j.contains(key)) {
        return fallback;
    }
    return get<T>(j, key);
}

std::string get_bytes(const json& j, const char* key)
{
    try {
        return base64_decode(get<std::string>(j, key));
    } catch (const std::invalid_argument&) {
        throw ProtocolError(std::string("field '") + key + "' is not valid base64");
    }
}

json payload_to_json(const SignedPayload& p)
{
    return json{{"name", p.name},
                {"bytes", base64_encode(p.bytes)},
                {"digest", p.digest},
                {"signature", to_hex(p.signature)},
                {"key_id", p.key_id}};
}

SignedPayload payload_from_json(const json& j)
{
    SignedPayload p;
    p.name = get<std::string>(j, "name");
    p.bytes = get_bytes(j, "bytes");
    p.digest = get<std::string>(j, "digest");
    try {
        p.signature = from_hex(get<std::string>(j, "signature"));
    } catch (const std::invalid_argument&) {
        throw ProtocolError("field 'signature' is not valid hex");
    }
    p.key_id = get<std::string>(j, "key_id");
    return p;
}

struct ToJson {
    json operator()(const Register& m) const
    {
        json j{{"platform", to_string(m.platform)},
               {"ncpus", m.ncpus},
               {"benchmark_flops", m.benchmark_flops},
               {"on_fraction", m.on_fraction},
               {"active_fraction", m.active_fraction}};
        if (!m.host_id.empty()) {
            j["host_id"] = m.host_id;
        }
        return j;
    }
    json operator()(const RegisterAck& m) const { return json{{"host_id", m.host_id}}; }
    json operator()(const RequestWork& m) const { return json{{"host_id", m.host_id}}; }
    json operator()(const AssignWork& m) const
    {
        json payloads = json::array();
        for (const auto& p : m.payloads) {
            payloads.push_back(payload_to_json(p));
        }
        json j{{"result_id", m.result_id}, {"work_unit", to_json(m.work_unit)}, {"payloads", std::move(payloads)}};
        if (m.job) {
            j["job"] = to_json(*m.job);
        }
        return j;
    }
    json operator()(const NoWork&) const { return json::object(); }
    json operator()(const Heartbeat& m) const
    {
        return json{{"host_id", m.host_id}, {"result_id", m.result_id}, {"progress_fraction", m.progress_fraction}};
    }
    json operator()(const HeartbeatAck& m) const { return json{{"ok", m.ok}, {"warning", m.warning}}; }
    json operator()(const SubmitResult& m) const
    {
        return json{{"host_id", m.host_id},
                    {"result_id", m.result_id},
                    {"outcome", m.outcome == Outcome::Success ? "success" : "error"},
                    {"output", base64_encode(m.output)},
                    {"cpu_time", m.cpu_time},
                    {"flops_estimate", m.flops_estimate},
                    {"error_message", m.error_message}};
    }
    json operator()(const SubmitAck& m) const { return json{{"accepted", m.accepted}, {"reason", m.reason}}; }
    json operator()(const SubmitSweep& m) const { return json{{"spec", to_json(m.spec)}}; }
    json operator()(const SubmitSweepAck& m) const { return json{{"created", m.created}}; }
    json operator()(const ErrorReply& m) const { return json{{"message", m.message}}; }
};

} // namespace

std::string_view kind_of(const Message& m)
{
    static constexpr std::string_view kNames[] = {
        "Register",  "RegisterAck", "RequestWork", "AssignWork",  "NoWork",         "Heartbeat",
        "HeartbeatAck", "SubmitResult", "SubmitAck", "SubmitSweep", "SubmitSweepAck", "Error"};
    return kNames[m.index()];
}

json to_json(const Message& m)
{
    json j = std::visit(ToJson{}, m);
    j["kind"] = kind_of(m);
    return j;
}

Message from_json(const json& j)
{
    const auto kind = get<std::string>(j, "kind");
    if (kind == "Register") {
        Register m;
        m.platform = parse_platform(get<std::string>(j, "platform"));
        m.ncpus = get<std::uint32_t>(j, "ncpus");
        m.benchmark_flops = get<double>(j, "benchmark_flops");
        m.on_fraction = get_or<double>(j, "on_fraction", 1.0);
        m.active_fraction = get_or<double>(j, "active_fraction", 1.0);
        m.host_id = get_or<std::string>(j, "host_id", "");
        return m;
    }
    if (kind == "RegisterAck") {
        return RegisterAck{get<std::string>(j, "host_id")};
    }
    if (kind == "RequestWork") {
        return RequestWork{get<std::string>(j, "host_id")};
    }
    if (kind == "AssignWork") {
        AssignWork m;
        m.result_id = get<ResultId>(j, "result_id");
        m.work_unit = work_unit_from_json(field(j, "work_unit"));
        const auto& payloads = field(j, "payloads");
        if (!payloads.is_array()) {
            throw ProtocolError("field 'payloads' must be an array");
        }
        for (const auto& p : payloads) {
            m.payloads.push_back(payload_from_json(p));
        }
        if (j.contains("job") && !j.at("job").is_null()) {
            m.job = job_from_json(j.at("job"));
        }
        return m;
    }
    if (kind == "NoWork") {
        return NoWork{};
    }
    if (kind == "Heartbeat") {
        return Heartbeat{get<std::string>(j, "host_id"), get<ResultId>(j, "result_id"),
                         get<double>(j, "progress_fraction")};
    }
    if (kind == "HeartbeatAck") {
        return HeartbeatAck{get<bool>(j, "ok"), get_or<std::string>(j, "warning", "")};
    }
    if (kind == "SubmitResult") {
        SubmitResult m;
        m.host_id = get<std::string>(j, "host_id");
        m.result_id = get<ResultId>(j, "result_id");
        const auto outcome = get<std::string>(j, "outcome");
        if (outcome != "success" && outcome != "error") {
            throw ProtocolError("unknown outcome '" + outcome + "'");
        }
        m.outcome = outcome == "success" ? Outcome::Success : Outcome::Error;
        m.output = get_bytes(j, "output");
        m.cpu_time = get<double>(j, "cpu_time");
        m.flops_estimate = get<double>(j, "flops_estimate");
        m.error_message = get_or<std::string>(j, "error_message", "");
        return m;
    }
    if (kind == "SubmitAck") {
        return SubmitAck{get<bool>(j, "accepted"), get_or<std::string>(j, "reason", "")};
    }
    if (kind == "SubmitSweep") {
        return SubmitSweep{sweep_from_json(field(j, "spec"))};
    }
    if (kind == "SubmitSweepAck") {
        return SubmitSweepAck{get<std::vector<std::string>>(j, "created")};
    }
    if (kind == "Error") {
        return ErrorReply{get<std::string>(j, "message")};
    }
    throw ProtocolError("unknown message kind '" + kind + "'");
}

json to_json(const WorkUnit& wu)
{
    json refs = json::array();
    for (const auto& r : wu.input_refs) {
        refs.push_back(json{{"name", r.name}, {"digest", r.digest}});
    }
    json j{{"wu_id", wu.wu_id},
           {"sweep", wu.sweep},
           {"app_id", to_string(wu.app_id)},
           {"input_refs", std::move(refs)},
           {"command_args", wu.command_args},
           {"target_replicas", wu.target_replicas},
           {"min_quorum", wu.min_quorum},
           {"max_error_results", wu.max_error_results},
           {"deadline", wu.deadline},
           {"state", to_string(wu.state)}};
    j["canonical_result_id"] = wu.canonical_result_id ? json(*wu.canonical_result_id) : json(nullptr);
    return j;
}

WorkUnit work_unit_from_json(const json& j)
{
    WorkUnit wu;
    wu.wu_id = get<std::string>(j, "wu_id");
    wu.sweep = get_or<std::string>(j, "sweep", "");
    wu.app_id = parse_app_id(get<std::string>(j, "app_id"));
    for (const auto& r : field(j, "input_refs")) {
        wu.input_refs.push_back({get<std::string>(r, "name"), get<std::string>(r, "digest")});
    }
    wu.command_args = get<std::vector<std::string>>(j, "command_args");
    wu.target_replicas = get<std::uint32_t>(j, "target_replicas");
    wu.min_quorum = get<std::uint32_t>(j, "min_quorum");
    wu.max_error_results = get<std::uint32_t>(j, "max_error_results");
    wu.deadline = get<double>(j, "deadline");
    wu.state = parse_wu_state(get<std::string>(j, "state"));
    if (j.contains("canonical_result_id") && !j.at("canonical_result_id").is_null()) {
        wu.canonical_result_id = get<ResultId>(j, "canonical_result_id");
    }
    return wu;
}

json to_json(const JobDescriptor& job)
{
    return json{{"program", job.program},
                {"inputs", job.inputs},
                {"outputs", job.outputs},
                {"args", job.args},
                {"checkpoint_file", job.checkpoint_file},
                {"solution_file", job.solution_file},
                {"resume_args", job.resume_args},
                {"expected_output_bytes", job.expected_output_bytes}};
}

JobDescriptor job_from_json(const json& j)
{
    JobDescriptor job;
    job.program = get<std::string>(j, "program");
    job.inputs = get_or<std::vector<std::string>>(j, "inputs", {});
    job.outputs = get<std::vector<std::string>>(j, "outputs");
    job.args = get_or<std::vector<std::string>>(j, "args", {});
    job.checkpoint_file = get_or<std::string>(j, "checkpoint_file", "");
    job.solution_file = get_or<std::string>(j, "solution_file", "solution");
    job.resume_args = get_or<std::vector<std::string>>(j, "resume_args", {"--resume"});
    job.expected_output_bytes = get_or<std::uint64_t>(j, "expected_output_bytes", 0);
    return job;
}

json to_json(const SweepSpec& spec)
{
    json files = json::object();
    for (const auto& [name, bytes] : spec.files) {
        files[name] = base64_encode(bytes);
    }
    json j{{"name", spec.name},
           {"app_id", to_string(spec.app_id)},
           {"base_params", gp::render_params(spec.base_params)},
           {"dimensions", spec.dimensions},
           {"replicates", spec.replicates},
           {"seed_base", spec.seed_base},
           {"target_replicas", spec.target_replicas},
           {"min_quorum", spec.min_quorum},
           {"max_error_results", spec.max_error_results},
           {"deadline", spec.deadline},
           {"files", std::move(files)}};
    j["job"] = spec.job ? to_json(*spec.job) : json(nullptr);
    return j;
}

SweepSpec sweep_from_json(const json& j)
{
    SweepSpec s;
    s.name = get<std::string>(j, "name");
    s.app_id = parse_app_id(get_or<std::string>(j, "app_id", "embedded_gp"));
    try {
        s.base_params = gp::parse_params(get_or<std::string>(j, "base_params", ""));
    } catch (const ConfigError& e) {
        throw ProtocolError(std::string("base_params: ") + e.what());
    }
    s.dimensions = get_or<std::map<std::string, std::vector<std::string>>>(j, "dimensions", {});
    s.replicates = get_or<std::uint32_t>(j, "replicates", 1);
    s.seed_base = get_or<std::uint64_t>(j, "seed_base", 1);
    s.target_replicas = get_or<std::uint32_t>(j, "target_replicas", 1);
    s.min_quorum = get_or<std::uint32_t>(j, "min_quorum", 1);
    s.max_error_results = get_or<std::uint32_t>(j, "max_error_results", 3);
    s.deadline = get_or<double>(j, "deadline", 3600.0);
    if (j.contains("files")) {
        for (const auto& [name, b64] : field(j, "files").items()) {
            try {
                s.files[name] = base64_decode(b64.get<std::string>());
            } catch (const std::exception&) {
                throw ProtocolError("file '" + name + "' is not valid base64");
            }
        }
    }
    if (j.contains("job") && !j.at("job").is_null()) {
        s.job = job_from_json(j.at("job"));
    }
    return s;
}

std::string frame(std::string_view body)
{
    if (body.size() > kMaxFrame) {
        throw ProtocolError("frame too large", 0);
    }
    const auto n = static_cast<std::uint32_t>(body.size());
    std::string out;
    out.reserve(kFrameHeader + body.size());
    out.push_back(static_cast<char>((n >> 24) & 0xFF));
    out.push_back(static_cast<char>((n >> 16) & 0xFF));
    out.push_back(static_cast<char>((n >> 8) & 0xFF));
    out.push_back(static_cast<char>(n & 0xFF));
    out.append(body);
    return out;
}

std::optional<std::pair<std::string_view, std::size_t>> unframe(std::string_view bytes)
{
    if (bytes.size() < kFrameHeader) {
        return std::nullopt;
    }
    const auto b = [&](std::size_t i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])); };
    const std::size_t n = (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
    if (n > kMaxFrame) {
        throw ProtocolError("frame length " + std::to_string(n) + " exceeds limit", 0);
    }
    if (bytes.size() < kFrameHeader + n) {
        return std::nullopt;
    }
    return std::pair{bytes.substr(kFrameHeader, n), kFrameHeader + n};
}

std::string encode(const Message& m) { return frame(to_json(m).dump()); }

Message decode(std::string_view bytes)
{
    const auto parsed = unframe(bytes);
    if (!parsed) {
        throw ProtocolError("truncated frame", bytes.size());
    }
    if (parsed->second != bytes.size()) {
        throw ProtocolError("trailing bytes after frame", parsed->second);
    }
    json j;
    try {
        j = json::parse(parsed->first);
    } catch (const json::parse_error& e) {
        throw ProtocolError(std::string("malformed JSON: ") + e.what(), kFrameHeader + (e.byte > 0 ? e.byte - 1 : 0));
    }
    return from_json(j);
}

} // namespace voluntier::proto
