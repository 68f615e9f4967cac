#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "voluntier/gp/params.hpp"
#include "voluntier/gp/problems.hpp"
#include "voluntier/gp/rng.hpp"
#include "voluntier/gp/tree.hpp"

namespace voluntier::gp {

struct Individual {
    ProgramTree tree;
    EvalReport report;
};

using Population = std::vector<ProgramTree>;

struct GenerationStats {
    std::uint32_t generation = 0;
    std::uint64_t best_hits = 0;
    std::uint64_t raw_sum = 0; // mean raw = raw_sum / population_size, kept exact

    friend bool operator==(const GenerationStats&, const GenerationStats&) = default;
};

struct BestSoFar {
    ProgramTree tree;
    EvalReport report;
    std::uint32_t generation = 0;

    friend bool operator==(const BestSoFar&, const BestSoFar&) = default;
};

struct GpRunResult {
    BestSoFar best;
    std::vector<GenerationStats> generations;
    std::uint64_t evaluations = 0;
    std::uint64_t operations = 0; // primitive operations, reported as the FLOP estimate
    double cpu_time = 0.0;        // seconds; not part of the canonical artifact
};

/// Ramped half-and-half over depths [min_initial_depth, max_initial_depth],
/// alternating full and grow, retrying duplicates a bounded number of times.
Population init_population(const GpParams& params, const PrimitiveSet& pset, Rng& rng);

/// One generational step: tournament selection feeding crossover, subtree
/// mutation or reproduction according to the operator probabilities.
Population breed(const std::vector<Individual>& evaluated, const GpParams& params, const PrimitiveSet& pset,
                 Rng& rng);

// Exposed for tests. Both return a copy of `a` when no depth-valid offspring is found.
ProgramTree subtree_crossover(const ProgramTree& a, const ProgramTree& b, const GpParams& params,
                              const PrimitiveSet& pset, Rng& rng);
ProgramTree subtree_mutation(const ProgramTree& a, const GpParams& params, const PrimitiveSet& pset, Rng& rng);
ProgramTree grow_tree(const PrimitiveSet& pset, int max_depth, Rng& rng);
ProgramTree full_tree(const PrimitiveSet& pset, int depth, Rng& rng);

/// Everything needed to continue a run between generations.
struct Checkpoint {
    std::string params_digest;
    std::uint32_t next_generation = 0;
    Population population; // not yet evaluated
    std::uint64_t rng_state = 0;
    std::optional<BestSoFar> best;
    std::vector<GenerationStats> generations;
    std::uint64_t evaluations = 0;
    std::uint64_t operations = 0;
    double cpu_time = 0.0;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// "VOLCKPT1 <sha256 hex>\n" followed by a JSON body.
std::string checkpoint_save(const Checkpoint& checkpoint, const PrimitiveSet& pset);
// Throws CheckpointError on truncation, tampering or parse failure.
Checkpoint checkpoint_load(std::string_view bytes, const PrimitiveSet& pset);

struct CheckpointPolicy {
    std::uint32_t every_generations = 10;
    double every_seconds = 60.0;
};

/// Where run_gp persists and looks for checkpoints.
class CheckpointSink {
public:
    virtual ~CheckpointSink() = default;
    virtual std::optional<std::string> load() = 0;
    virtual void save(const std::string& bytes) = 0;
    virtual void clear() = 0;
};

// Writes to `<path>.tmp` then renames over `path`.
class FileCheckpointSink final : public CheckpointSink {
public:
    explicit FileCheckpointSink(std::string path) : path_(std::move(path)) {}
    std::optional<std::string> load() override;
    void save(const std::string& bytes) override;
    void clear() override;
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class MemoryCheckpointSink final : public CheckpointSink {
public:
    std::optional<std::string> load() override { return bytes_; }
    void save(const std::string& bytes) override
    {
        bytes_ = bytes;
        ++saves_;
    }
    void clear() override { bytes_.reset(); }
    std::optional<std::string>& bytes() noexcept { return bytes_; }
    int saves() const noexcept { return saves_; }

private:
    std::optional<std::string> bytes_;
    int saves_ = 0;
};

/// Thrown out of run_gp when RunHooks::interrupt asks to stop.
struct RunInterrupted {
    std::uint32_t generation;
};

struct RunHooks {
    // Called after every generation is evaluated with (generation, generations).
    std::function<void(std::uint32_t, std::uint32_t)> progress;
    // Called after a generation is bred; returning true abandons the run.
    std::function<bool(std::uint32_t)> interrupt;
    CheckpointPolicy policy;
};

/// Generational GP. With a sink, a matching checkpoint is resumed and new ones
/// are written per policy; the result does not depend on where it resumed.
/// A checkpoint whose params digest differs or that fails its integrity check
/// raises CheckpointError.
GpRunResult run_gp(const GpParams& params, const Problem& problem, CheckpointSink* sink = nullptr,
                   const RunHooks& hooks = {});

// Same, but a bad checkpoint is discarded and the run starts fresh.
GpRunResult run_gp_resuming(const GpParams& params, const Problem& problem, CheckpointSink& sink,
                            const RunHooks& hooks = {});

/// Canonical result document: sorted keys, no whitespace, integers only except
/// shortest round-trip doubles. Quorum validation compares these bytes.
std::string result_artifact(const GpParams& params, const Problem& problem, const GpRunResult& result);

struct ArtifactSummary {
    std::string problem;
    std::string params_digest;
    std::uint64_t seed = 0;
    std::string best_tree;
    std::uint64_t hits = 0;
    std::uint64_t total_cases = 0;
    double raw = 0.0;
    double adjusted = 0.0;
    std::uint32_t generations = 0;
    std::uint64_t evaluations = 0;

    bool perfect() const noexcept { return hits == total_cases; }
};

// Throws ConfigError if the bytes are not a result artifact.
ArtifactSummary parse_artifact(std::string_view bytes);

} // namespace voluntier::gp
