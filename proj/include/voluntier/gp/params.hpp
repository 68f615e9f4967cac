#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "voluntier/gp/primitive_set.hpp"

namespace voluntier::gp {

/// Run parameters. Defaults are Koza's settings for the 11-multiplexer.
struct GpParams {
    ProblemId problem{ProblemKind::Multiplexer, 3};
    std::uint32_t population_size = 4000;
    std::uint32_t generations = 50;
    double crossover_prob = 0.9;
    double mutation_prob = 0.0;
    double reproduction_prob = 0.1;
    std::uint32_t tournament_size = 7;
    std::uint32_t max_depth = 17;
    std::uint32_t min_initial_depth = 2;
    std::uint32_t max_initial_depth = 6;
    std::uint32_t steps_limit = 400; // Santa Fe only
    std::string trail_file;          // Santa Fe only; empty = built-in canonical trail
    std::uint64_t seed = 1;

    // Throws ConfigError describing the first violated constraint.
    void validate() const;

    friend bool operator==(const GpParams&, const GpParams&) = default;
};

/// Flat key=value text, one key per line, keys sorted. '#' starts a comment.
std::string render_params(const GpParams& params);

/// Unknown keys are a ConfigError; missing keys keep their defaults. The result is validated.
GpParams parse_params(std::string_view text);

// Lowercase hex SHA-256 of render_params(params).
std::string params_digest(const GpParams& params);

} // namespace voluntier::gp
