#include "voluntier/proto/sweep_file.hpp"

#include <fstream>
#include <sstream>

#include "voluntier/common/keyvalue.hpp"
#include "voluntier/errors.hpp"
#include "voluntier/gp/params.hpp"

namespace voluntier::proto {

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        const auto b = item.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        out.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
    }
    return out;
}

} // namespace

SweepSpec parse_sweep_file(std::string_view text, const fs::path& base_dir)
{
    auto kv = KeyValues::parse(text);
    SweepSpec s;
    s.name = kv.text("name").value_or("");
    const auto app = kv.text("app").value_or("embedded");
    if (app == "embedded") {
        s.app_id = AppId::EmbeddedGp;
    } else if (app == "wrapped") {
        s.app_id = AppId::Wrapped;
    } else {
        throw ConfigError("app must be embedded or wrapped, not '" + app + "'");
    }
    if (auto p = kv.text("params")) s.base_params = gp::parse_params(slurp(base_dir / *p));
    for (const auto& [key, values] : kv.with_prefix("dim.")) s.dimensions[key] = split(values, ',');
    if (auto v = kv.integer("replicates")) s.replicates = static_cast<std::uint32_t>(*v);
    if (auto v = kv.integer("seed_base")) s.seed_base = *v;
    if (auto v = kv.integer("target_replicas")) s.target_replicas = static_cast<std::uint32_t>(*v);
    if (auto v = kv.integer("min_quorum")) s.min_quorum = static_cast<std::uint32_t>(*v);
    if (auto v = kv.integer("max_error_results")) s.max_error_results = static_cast<std::uint32_t>(*v);
    if (auto v = kv.number("deadline")) s.deadline = *v;

    auto job = kv.with_prefix("job.");
    auto files = kv.with_prefix("file.");
    if (s.app_id == AppId::Wrapped) {
        JobDescriptor j;
        for (const auto& [key, value] : job) {
            if (key == "program") j.program = value;
            else if (key == "inputs") j.inputs = split(value, ',');
            else if (key == "outputs") j.outputs = split(value, ',');
            else if (key == "args") j.args = split(value, ' ');
            else if (key == "resume_args") j.resume_args = split(value, ' ');
            else if (key == "checkpoint_file") j.checkpoint_file = value;
            else if (key == "solution_file") j.solution_file = value;
            else if (key == "expected_output_bytes") j.expected_output_bytes = std::stoull(value);
            else throw ConfigError("unknown key job." + key);
        }
        s.job = std::move(j);
        for (const auto& [name, path] : files) s.files[name] = slurp(base_dir / path);
    } else if (!job.empty() || !files.empty()) {
        throw ConfigError("job.* and file.* keys need app = wrapped");
    }
    kv.finish();
    s.validate();
    return s;
}

SweepSpec load_sweep_file(const fs::path& path)
{
    return parse_sweep_file(slurp(path), path.parent_path());
}

} // namespace voluntier::proto
