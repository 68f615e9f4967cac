#include "voluntier/gp/params.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "voluntier/common/digest.hpp"
#include "voluntier/errors.hpp"

namespace voluntier::gp {

namespace {

std::string format_double(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view value)
{
    T out{};
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || ptr != value.data() + value.size()) {
        throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key));
    }
    return out;
}

} // namespace

void GpParams::validate() const
{
    auto prob_ok = [](double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; };
    if (!prob_ok(crossover_prob) || !prob_ok(mutation_prob) || !prob_ok(reproduction_prob)) {
        throw ConfigError("operator probabilities must lie in [0, 1]");
    }
    if (std::abs(crossover_prob + mutation_prob + reproduction_prob - 1.0) > 1e-9) {
        throw ConfigError("crossover_prob + mutation_prob + reproduction_prob must equal 1");
    }
    if (population_size < 2) {
        throw ConfigError("population_size must be >= 2");
    }
    if (generations < 1) {
        throw ConfigError("generations must be >= 1");
    }
    if (tournament_size < 1) {
        throw ConfigError("tournament_size must be >= 1");
    }
    if (min_initial_depth > max_initial_depth) {
        throw ConfigError("min_initial_depth must not exceed max_initial_depth");
    }
    if (max_initial_depth > max_depth) {
        throw ConfigError("max_initial_depth must not exceed max_depth");
    }
    if (max_depth > 64) {
        throw ConfigError("max_depth must be <= 64");
    }
    if (problem.kind == ProblemKind::SantaFe && steps_limit < 1) {
        throw ConfigError("steps_limit must be >= 1");
    }
    if (problem.kind == ProblemKind::Multiplexer && (problem.k < 1 || problem.k > 8)) {
        throw ConfigError("multiplexer k must be in [1, 8]");
    }
}

std::string render_params(const GpParams& p)
{
    // std::map keeps the keys sorted.
    std::map<std::string, std::string> kv{
        {"crossover_prob", format_double(p.crossover_prob)},
        {"generations", std::to_string(p.generations)},
        {"max_depth", std::to_string(p.max_depth)},
        {"max_initial_depth", std::to_string(p.max_initial_depth)},
        {"min_initial_depth", std::to_string(p.min_initial_depth)},
        {"mutation_prob", format_double(p.mutation_prob)},
        {"population_size", std::to_string(p.population_size)},
        {"problem", p.problem.to_string()},
        {"reproduction_prob", format_double(p.reproduction_prob)},
        {"seed", std::to_string(p.seed)},
        {"tournament_size", std::to_string(p.tournament_size)},
    };
    if (p.problem.kind == ProblemKind::SantaFe) {
        kv["steps_limit"] = std::to_string(p.steps_limit);
        if (!p.trail_file.empty()) {
            kv["trail_file"] = p.trail_file;
        }
    }
    std::string out;
    for (const auto& [k, v] : kv) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

GpParams parse_params(std::string_view text)
{
    GpParams p;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key == "problem") {
            p.problem = ProblemId::parse(value);
        } else if (key == "population_size") {
            p.population_size = parse_number<std::uint32_t>(key, value);
        } else if (key == "generations") {
            p.generations = parse_number<std::uint32_t>(key, value);
        } else if (key == "crossover_prob") {
            p.crossover_prob = parse_number<double>(key, value);
        } else if (key == "mutation_prob") {
            p.mutation_prob = parse_number<double>(key, value);
        } else if (key == "reproduction_prob") {
            p.reproduction_prob = parse_number<double>(key, value);
        } else if (key == "tournament_size") {
            p.tournament_size = parse_number<std::uint32_t>(key, value);
        } else if (key == "max_depth") {
            p.max_depth = parse_number<std::uint32_t>(key, value);
        } else if (key == "min_initial_depth") {
            p.min_initial_depth = parse_number<std::uint32_t>(key, value);
        } else if (key == "max_initial_depth") {
            p.max_initial_depth = parse_number<std::uint32_t>(key, value);
        } else if (key == "steps_limit") {
            p.steps_limit = parse_number<std::uint32_t>(key, value);
        } else if (key == "trail_file") {
            p.trail_file = std::string(value);
        } else if (key == "seed") {
            p.seed = parse_number<std::uint64_t>(key, value);
        } else {
            throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
        }
    }
    p.validate();
    return p;
}

std::string params_digest(const GpParams& params) { return sha256_hex(render_params(params)); }

} // namespace voluntier::gp
