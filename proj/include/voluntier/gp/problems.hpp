#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "voluntier/gp/params.hpp"
#include "voluntier/gp/primitive_set.hpp"
#include "voluntier/gp/tree.hpp"

namespace voluntier::gp {

/// Koza-style fitness triple. raw = total_cases - hits, adjusted = 1 / (1 + raw).
struct EvalReport {
    std::uint64_t hits = 0;
    std::uint64_t total_cases = 0;
    double raw = 0.0;
    double adjusted = 1.0;

    static EvalReport from_hits(std::uint64_t hits, std::uint64_t total_cases);

    bool perfect() const noexcept { return hits == total_cases; }

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// "%g"-style rendering, as fitness is usually printed.
std::string format_fitness(double value);

class Problem {
public:
    virtual ~Problem() = default;

    virtual const PrimitiveSet& primitives() const noexcept = 0;
    virtual std::uint64_t total_cases() const noexcept = 0;

    // ops is incremented by the number of primitive operations performed.
    virtual EvalReport evaluate(const ProgramTree& tree, std::uint64_t& ops) const = 0;

    EvalReport evaluate(const ProgramTree& tree) const
    {
        std::uint64_t ops = 0;
        return evaluate(tree, ops);
    }
};

/// Boolean k-multiplexer, evaluated exhaustively and bit-parallel over all
/// 2^(k + 2^k) input assignments. Case c assigns d_j = bit j of c and
/// a_i = bit (2^k + i) of c.
class MultiplexerProblem final : public Problem {
public:
    static constexpr std::uint64_t kMaxCases = std::uint64_t{1} << 24;

    explicit MultiplexerProblem(int k);

    const PrimitiveSet& primitives() const noexcept override { return pset_; }
    std::uint64_t total_cases() const noexcept override { return cases_; }
    EvalReport evaluate(const ProgramTree& tree, std::uint64_t& ops) const override;
    using Problem::evaluate;

    int k() const noexcept { return k_; }

private:
    enum class Op : std::uint8_t { And, Or, Not, If, Input };

    int k_;
    std::uint64_t cases_;
    std::size_t words_;
    std::uint64_t tail_mask_;
    PrimitiveSet pset_;
    std::vector<Op> ops_;                // per primitive id
    std::vector<std::uint64_t> inputs_;  // per terminal, words_ each
    std::vector<std::uint64_t> target_;  // words_
};

/// 32x32 toroidal grid with food pellets and a start cell facing east.
struct Trail {
    static constexpr int kSize = 32;
    std::vector<bool> food; // row-major
    int start_row = 0;
    int start_col = 0;
    int food_count = 0;

    static Trail parse(std::string_view text);
    static Trail load(const std::string& path);
    static const Trail& canonical();
};

// The Santa Fe trail as shipped in data/santafe_trail.txt.
std::string_view canonical_trail_text();

/// Artificial ant. MOVE, LEFT and RIGHT each cost one step; the program is
/// re-run from the root until steps_limit steps have been spent.
class SantaFeProblem final : public Problem {
public:
    SantaFeProblem(Trail trail, std::uint32_t steps_limit);

    const PrimitiveSet& primitives() const noexcept override { return pset_; }
    std::uint64_t total_cases() const noexcept override { return static_cast<std::uint64_t>(trail_.food_count); }
    EvalReport evaluate(const ProgramTree& tree, std::uint64_t& ops) const override;
    using Problem::evaluate;

    std::uint32_t steps_limit() const noexcept { return steps_limit_; }

private:
    enum class Op : std::uint8_t { IfFoodAhead, Progn, Move, Left, Right };

    Trail trail_;
    std::uint32_t steps_limit_;
    PrimitiveSet pset_;
    std::vector<Op> ops_;
};

// Builds the problem named in params (loads the trail file if one is given).
std::unique_ptr<Problem> make_problem(const GpParams& params);

} // namespace voluntier::gp
