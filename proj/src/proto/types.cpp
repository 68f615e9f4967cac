#include "voluntier/proto/types.hpp"

#include <algorithm>
#include <array>
#include <charconv>

#include "voluntier/common/digest.hpp"
#include "voluntier/errors.hpp"

namespace voluntier::proto {

namespace {

template <typename E, std::size_t N>
std::string_view name_of(E v, const std::array<std::string_view, N>& names)
{
    return names[static_cast<std::size_t>(v)];
}

template <typename E, std::size_t N>
E parse_name(std::string_view s, const std::array<std::string_view, N>& names, const char* what)
{
    for (std::size_t i = 0; i < N; ++i) {
        if (names[i] == s) {
            return static_cast<E>(i);
        }
    }
    throw ProtocolError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

constexpr std::array<std::string_view, 2> kAppNames{"embedded_gp", "wrapped"};
constexpr std::array<std::string_view, 3> kWuStateNames{"unsent", "in_progress", "over"};
constexpr std::array<std::string_view, 7> kResultStateNames{"assigned", "running",   "uploaded", "valid",
                                                            "invalid",  "timed_out", "error"};
constexpr std::array<std::string_view, 5> kPlatformNames{"linux-x86_64", "windows-x86_64", "macos-x86_64",
                                                         "macos-aarch64", "linux-aarch64"};

} // namespace

std::string_view to_string(AppId v) { return name_of(v, kAppNames); }
std::string_view to_string(WuState v) { return name_of(v, kWuStateNames); }
std::string_view to_string(ResultState v) { return name_of(v, kResultStateNames); }
std::string_view to_string(Platform v) { return name_of(v, kPlatformNames); }
AppId parse_app_id(std::string_view s) { return parse_name<AppId>(s, kAppNames, "app"); }
WuState parse_wu_state(std::string_view s) { return parse_name<WuState>(s, kWuStateNames, "work unit state"); }
ResultState parse_result_state(std::string_view s)
{
    return parse_name<ResultState>(s, kResultStateNames, "result state");
}
Platform parse_platform(std::string_view s) { return parse_name<Platform>(s, kPlatformNames, "platform"); }

Platform host_platform()
{
#if defined(__APPLE__) && defined(__aarch64__)
    return Platform::MacosAarch64;
#elif defined(__APPLE__)
    return Platform::MacosX86_64;
#elif defined(_WIN32)
    return Platform::WindowsX86_64;
#elif defined(__aarch64__)
    return Platform::LinuxAarch64;
#else
    return Platform::LinuxX86_64;
#endif
}

bool is_terminal(ResultState s)
{
    return s == ResultState::Valid || s == ResultState::Invalid || s == ResultState::TimedOut ||
           s == ResultState::Error;
}

void JobDescriptor::validate() const
{
    if (program.empty()) {
        throw ConfigError("job descriptor names no program");
    }
    if (solution_file.empty()) {
        throw ConfigError("job descriptor names no solution file");
    }
    if (std::find(inputs.begin(), inputs.end(), solution_file) != inputs.end() || solution_file == program) {
        throw ConfigError("solution file '" + solution_file + "' must differ from the inputs");
    }
    if (outputs.empty()) {
        throw ConfigError("job descriptor declares no output file");
    }
}

void SweepSpec::validate() const
{
    if (name.empty()) {
        throw ConfigError("sweep has no name");
    }
    if (name.find_first_of(" /\\\t\n") != std::string::npos) {
        throw ConfigError("sweep name must not contain whitespace or slashes");
    }
    if (replicates == 0) {
        throw ConfigError("sweep '" + name + "' needs at least one replicate");
    }
    if (target_replicas == 0 || min_quorum == 0 || min_quorum > target_replicas) {
        throw ConfigError("sweep '" + name + "' needs 1 <= min_quorum <= target_replicas");
    }
    if (!(deadline > 0.0)) {
        throw ConfigError("sweep '" + name + "' needs a positive deadline");
    }
    for (const auto& [key, values] : dimensions) {
        if (values.empty()) {
            throw ConfigError("sweep dimension '" + key + "' has no values");
        }
    }
    if (app_id == AppId::Wrapped) {
        if (!job) {
            throw ConfigError("wrapped sweep '" + name + "' has no job descriptor");
        }
        job->validate();
        if (!files.contains(job->program)) {
            throw ConfigError("wrapped sweep '" + name + "' does not ship program '" + job->program + "'");
        }
        for (const auto& in : job->inputs) {
            if (!files.contains(in)) {
                throw ConfigError("wrapped sweep '" + name + "' does not ship input '" + in + "'");
            }
        }
    } else {
        base_params.validate();
    }
}

namespace {

// Odometer over the dimension value lists; last key varies fastest.
std::vector<std::vector<std::pair<std::string, std::string>>> combinations(
    const std::map<std::string, std::vector<std::string>>& dims)
{
    std::vector<std::vector<std::pair<std::string, std::string>>> out{{}};
    for (const auto& [key, values] : dims) {
        std::vector<std::vector<std::pair<std::string, std::string>>> next;
        for (const auto& partial : out) {
            for (const auto& v : values) {
                auto c = partial;
                c.emplace_back(key, v);
                next.push_back(std::move(c));
            }
        }
        out = std::move(next);
    }
    return out;
}

} // namespace

SweepExpansion expand_sweep(const SweepSpec& spec)
{
    spec.validate();
    SweepExpansion out;

    auto add_payload = [&](const std::string& name, std::string bytes) {
        const std::string digest = sha256_hex(bytes);
        out.payloads.try_emplace(digest, Payload{name, std::move(bytes)});
        return InputRef{name, digest};
    };

    std::vector<InputRef> shared_refs;
    if (spec.app_id == AppId::Wrapped) {
        shared_refs.push_back(add_payload(spec.job->program, spec.files.at(spec.job->program)));
        for (const auto& in : spec.job->inputs) {
            shared_refs.push_back(add_payload(in, spec.files.at(in)));
        }
    }

    std::uint64_t index = 0;
    for (const auto& combo : combinations(spec.dimensions)) {
        std::string suffix;
        std::vector<std::string> dim_args;
        std::vector<InputRef> refs = shared_refs;
        for (const auto& [k, v] : combo) {
            suffix += "_" + k + v;
            dim_args.push_back("--" + k + "=" + v);
        }
        if (spec.app_id == AppId::EmbeddedGp) {
            std::string text = gp::render_params(spec.base_params);
            for (const auto& [k, v] : combo) {
                text += k + "=" + v + "\n";
            }
            // Later keys override earlier ones; re-render to get the canonical form.
            gp::GpParams params = gp::parse_params(text);
            params.seed = 0;
            refs.push_back(add_payload("params", gp::render_params(params)));
        }
        for (std::uint32_t rep = 0; rep < spec.replicates; ++rep, ++index) {
            WorkUnit wu;
            wu.wu_id = spec.name + suffix + "_rep" + std::to_string(rep);
            wu.sweep = spec.name;
            wu.app_id = spec.app_id;
            wu.input_refs = refs;
            wu.command_args = {"--seed", std::to_string(spec.seed_base + index)};
            if (spec.app_id == AppId::Wrapped) {
                wu.command_args.insert(wu.command_args.end(), dim_args.begin(), dim_args.end());
            }
            wu.target_replicas = spec.target_replicas;
            wu.min_quorum = spec.min_quorum;
            wu.max_error_results = spec.max_error_results;
            wu.deadline = spec.deadline;
            out.work_units.push_back(std::move(wu));
        }
    }
    return out;
}

gp::GpParams embedded_params(std::string_view params_payload, const std::vector<std::string>& command_args)
{
    gp::GpParams params = gp::parse_params(params_payload);
    for (std::size_t i = 0; i + 1 < command_args.size(); ++i) {
        if (command_args[i] == "--seed") {
            const auto& v = command_args[i + 1];
            std::uint64_t seed = 0;
            auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), seed);
            if (ec != std::errc{} || ptr != v.data() + v.size()) {
                throw ConfigError("invalid --seed argument '" + v + "'");
            }
            params.seed = seed;
        }
    }
    return params;
}

} // namespace voluntier::proto
