#include "voluntier/gp/engine.hpp"

#include <time.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "voluntier/common/digest.hpp"
#include "voluntier/errors.hpp"

namespace voluntier::gp {

using nlohmann::json;

namespace {

constexpr int kMutationDepth = 4;
constexpr int kOperatorRetries = 10;
constexpr int kDuplicateRetries = 20;
constexpr double kInternalPointBias = 0.9;

double thread_cpu_seconds()
{
    timespec ts{};
    clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
    return static_cast<double>(ts.tv_sec) + static_cast<double>(ts.tv_nsec) * 1e-9;
}

void grow_into(const PrimitiveSet& pset, int depth, int max_depth, Rng& rng, std::vector<PrimitiveId>& out)
{
    PrimitiveId id;
    if (depth >= max_depth) {
        id = pset.terminal_id(rng.below(pset.terminal_count()));
    } else {
        id = static_cast<PrimitiveId>(rng.below(pset.size()));
    }
    out.push_back(id);
    for (int i = 0; i < pset.arity(id); ++i) {
        grow_into(pset, depth + 1, max_depth, rng, out);
    }
}

void full_into(const PrimitiveSet& pset, int depth, int max_depth, Rng& rng, std::vector<PrimitiveId>& out)
{
    PrimitiveId id;
    if (depth >= max_depth) {
        id = pset.terminal_id(rng.below(pset.terminal_count()));
    } else {
        id = pset.function_id(rng.below(pset.function_count()));
    }
    out.push_back(id);
    for (int i = 0; i < pset.arity(id); ++i) {
        full_into(pset, depth + 1, max_depth, rng, out);
    }
}

// Koza's node selection: an internal node with probability 0.9 when one exists.
std::size_t pick_point(const PrimitiveSet& pset, const ProgramTree& tree, Rng& rng)
{
    std::size_t functions = 0;
    for (PrimitiveId id : tree.nodes) {
        functions += pset.is_terminal(id) ? 0 : 1;
    }
    const bool internal = functions > 0 && rng.chance(kInternalPointBias);
    std::size_t target = rng.below(internal ? functions : tree.size() - functions);
    for (std::size_t i = 0; i < tree.size(); ++i) {
        if (pset.is_terminal(tree.nodes[i]) != internal) {
            if (target-- == 0) {
                return i;
            }
        }
    }
    return 0;
}

ProgramTree splice(const PrimitiveSet& pset, const ProgramTree& host, std::size_t at,
                   std::span<const PrimitiveId> insert)
{
    const std::size_t end = subtree_end(pset, host.nodes, at);
    ProgramTree child;
    child.nodes.reserve(host.size() - (end - at) + insert.size());
    child.nodes.insert(child.nodes.end(), host.nodes.begin(), host.nodes.begin() + static_cast<std::ptrdiff_t>(at));
    child.nodes.insert(child.nodes.end(), insert.begin(), insert.end());
    child.nodes.insert(child.nodes.end(), host.nodes.begin() + static_cast<std::ptrdiff_t>(end), host.nodes.end());
    return child;
}

std::size_t tournament(const std::vector<Individual>& pop, std::uint32_t size, Rng& rng)
{
    std::size_t best = rng.below(pop.size());
    for (std::uint32_t i = 1; i < size; ++i) {
        const std::size_t c = rng.below(pop.size());
        if (pop[c].report.hits > pop[best].report.hits) {
            best = c;
        }
    }
    return best;
}

struct TreeHash {
    std::size_t operator()(const std::vector<PrimitiveId>& v) const noexcept
    {
        return std::hash<std::string_view>{}(
            std::string_view(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(PrimitiveId)));
    }
};

} // namespace

ProgramTree grow_tree(const PrimitiveSet& pset, int max_depth, Rng& rng)
{
    ProgramTree t;
    grow_into(pset, 0, max_depth, rng, t.nodes);
    return t;
}

ProgramTree full_tree(const PrimitiveSet& pset, int depth, Rng& rng)
{
    ProgramTree t;
    full_into(pset, 0, depth, rng, t.nodes);
    return t;
}

Population init_population(const GpParams& params, const PrimitiveSet& pset, Rng& rng)
{
    params.validate();
    if (pset.terminal_count() == 0) {
        throw ConfigError("primitive set has no terminals");
    }
    const std::uint32_t lo = params.min_initial_depth;
    const std::uint32_t span = params.max_initial_depth - lo + 1;
    Population pop;
    pop.reserve(params.population_size);
    std::unordered_set<std::vector<PrimitiveId>, TreeHash> seen;
    for (std::uint32_t i = 0; i < params.population_size; ++i) {
        const int depth = static_cast<int>(lo + i % span);
        const bool full = (i / span) % 2 == 0;
        ProgramTree tree;
        for (int attempt = 0; attempt < kDuplicateRetries; ++attempt) {
            tree = full ? full_tree(pset, depth, rng) : grow_tree(pset, depth, rng);
            if (!seen.contains(tree.nodes)) {
                break;
            }
        }
        seen.insert(tree.nodes);
        pop.push_back(std::move(tree));
    }
    return pop;
}

ProgramTree subtree_crossover(const ProgramTree& a, const ProgramTree& b, const GpParams& params,
                              const PrimitiveSet& pset, Rng& rng)
{
    for (int attempt = 0; attempt < kOperatorRetries; ++attempt) {
        const std::size_t at = pick_point(pset, a, rng);
        const std::size_t from = pick_point(pset, b, rng);
        const std::size_t from_end = subtree_end(pset, b.nodes, from);
        ProgramTree child =
            splice(pset, a, at, std::span<const PrimitiveId>(b.nodes).subspan(from, from_end - from));
        if (tree_depth(pset, child) <= static_cast<int>(params.max_depth)) {
            return child;
        }
    }
    return a;
}

ProgramTree subtree_mutation(const ProgramTree& a, const GpParams& params, const PrimitiveSet& pset, Rng& rng)
{
    for (int attempt = 0; attempt < kOperatorRetries; ++attempt) {
        const std::size_t at = pick_point(pset, a, rng);
        const ProgramTree fresh = grow_tree(pset, kMutationDepth, rng);
        ProgramTree child = splice(pset, a, at, fresh.nodes);
        if (tree_depth(pset, child) <= static_cast<int>(params.max_depth)) {
            return child;
        }
    }
    return a;
}

Population breed(const std::vector<Individual>& evaluated, const GpParams& params, const PrimitiveSet& pset,
                 Rng& rng)
{
    Population next;
    next.reserve(evaluated.size());
    const double xover = params.crossover_prob;
    const double mutate = params.crossover_prob + params.mutation_prob;
    for (std::size_t i = 0; i < evaluated.size(); ++i) {
        const double r = rng.uniform();
        if (r < xover) {
            const auto& a = evaluated[tournament(evaluated, params.tournament_size, rng)].tree;
            const auto& b = evaluated[tournament(evaluated, params.tournament_size, rng)].tree;
            next.push_back(subtree_crossover(a, b, params, pset, rng));
        } else if (r < mutate) {
            const auto& a = evaluated[tournament(evaluated, params.tournament_size, rng)].tree;
            next.push_back(subtree_mutation(a, params, pset, rng));
        } else {
            next.push_back(evaluated[tournament(evaluated, params.tournament_size, rng)].tree);
        }
    }
    return next;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::string_view kCheckpointMagic = "VOLCKPT1 ";

json best_to_json(const PrimitiveSet& pset, const BestSoFar& b)
{
    return json{{"generation", b.generation},
                {"hits", b.report.hits},
                {"total", b.report.total_cases},
                {"tree", to_sexpr(pset, b.tree)}};
}

} // namespace

std::string checkpoint_save(const Checkpoint& cp, const PrimitiveSet& pset)
{
    json body;
    body["params_digest"] = cp.params_digest;
    body["next_generation"] = cp.next_generation;
    body["rng_state"] = cp.rng_state;
    body["evaluations"] = cp.evaluations;
    body["operations"] = cp.operations;
    body["cpu_time"] = cp.cpu_time;
    body["best"] = cp.best ? best_to_json(pset, *cp.best) : json(nullptr);
    json stats = json::array();
    for (const auto& s : cp.generations) {
        stats.push_back(json::array({s.generation, s.best_hits, s.raw_sum}));
    }
    body["generations"] = std::move(stats);
    json pop = json::array();
    for (const auto& t : cp.population) {
        pop.push_back(to_sexpr(pset, t));
    }
    body["population"] = std::move(pop);

    const std::string text = body.dump();
    std::string out(kCheckpointMagic);
    out += sha256_hex(text);
    out += '\n';
    out += text;
    return out;
}

Checkpoint checkpoint_load(std::string_view bytes, const PrimitiveSet& pset)
{
    constexpr std::size_t header = kCheckpointMagic.size() + 64 + 1;
    if (bytes.size() < header || !bytes.starts_with(kCheckpointMagic) || bytes[header - 1] != '\n') {
        throw CheckpointError("checkpoint header missing or truncated");
    }
    const std::string_view digest = bytes.substr(kCheckpointMagic.size(), 64);
    const std::string_view text = bytes.substr(header);
    if (sha256_hex(text) != digest) {
        throw CheckpointError("checkpoint digest mismatch");
    }
    try {
        const json body = json::parse(text);
        Checkpoint cp;
        cp.params_digest = body.at("params_digest").get<std::string>();
        cp.next_generation = body.at("next_generation").get<std::uint32_t>();
        cp.rng_state = body.at("rng_state").get<std::uint64_t>();
        cp.evaluations = body.at("evaluations").get<std::uint64_t>();
        cp.operations = body.at("operations").get<std::uint64_t>();
        cp.cpu_time = body.at("cpu_time").get<double>();
        if (const auto& b = body.at("best"); !b.is_null()) {
            BestSoFar best;
            best.generation = b.at("generation").get<std::uint32_t>();
            best.report = EvalReport::from_hits(b.at("hits").get<std::uint64_t>(), b.at("total").get<std::uint64_t>());
            best.tree = parse_sexpr(pset, b.at("tree").get<std::string>());
            cp.best = std::move(best);
        }
        for (const auto& s : body.at("generations")) {
            cp.generations.push_back(
                {s.at(0).get<std::uint32_t>(), s.at(1).get<std::uint64_t>(), s.at(2).get<std::uint64_t>()});
        }
        for (const auto& t : body.at("population")) {
            cp.population.push_back(parse_sexpr(pset, t.get<std::string>()));
        }
        return cp;
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint body malformed: ") + e.what());
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("checkpoint body malformed: ") + e.what());
    }
}

std::optional<std::string> FileCheckpointSink::load()
{
    std::ifstream in(path_, std::ios::binary);
    if (!in) {
        return std::nullopt;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void FileCheckpointSink::save(const std::string& bytes)
{
    const std::string tmp = path_ + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            throw std::runtime_error("failed to write checkpoint '" + tmp + "'");
        }
    }
    std::filesystem::rename(tmp, path_);
}

void FileCheckpointSink::clear()
{
    std::error_code ec;
    std::filesystem::remove(path_, ec);
}

// ---------------------------------------------------------------------------
// Run loop

GpRunResult run_gp(const GpParams& params, const Problem& problem, CheckpointSink* sink, const RunHooks& hooks)
{
    params.validate();
    const PrimitiveSet& pset = problem.primitives();
    const std::string digest = params_digest(params);

    Checkpoint state;
    state.params_digest = digest;
    Rng rng(params.seed);
    std::optional<std::string> saved = sink ? sink->load() : std::nullopt;
    if (saved) {
        state = checkpoint_load(*saved, pset);
        if (state.params_digest != digest) {
            throw CheckpointError("checkpoint belongs to different parameters");
        }
        if (state.population.size() != params.population_size || state.next_generation >= params.generations) {
            throw CheckpointError("checkpoint inconsistent with parameters");
        }
        rng.set_state(state.rng_state);
    } else {
        state.population = init_population(params, pset, rng);
    }

    const double cpu_start = thread_cpu_seconds() - state.cpu_time;
    auto last_save = std::chrono::steady_clock::now();
    std::vector<Individual> evaluated(params.population_size);

    for (std::uint32_t g = state.next_generation; g < params.generations; ++g) {
        GenerationStats stats{g, 0, 0};
        std::size_t best_index = 0;
        for (std::size_t i = 0; i < state.population.size(); ++i) {
            evaluated[i].tree = std::move(state.population[i]);
            evaluated[i].report = problem.evaluate(evaluated[i].tree, state.operations);
            stats.raw_sum += evaluated[i].report.total_cases - evaluated[i].report.hits;
            if (evaluated[i].report.hits > evaluated[best_index].report.hits) {
                best_index = i;
            }
        }
        state.evaluations += state.population.size();
        stats.best_hits = evaluated[best_index].report.hits;
        state.generations.push_back(stats);
        if (!state.best || evaluated[best_index].report.hits > state.best->report.hits) {
            state.best = BestSoFar{evaluated[best_index].tree, evaluated[best_index].report, g};
        }
        if (hooks.progress) {
            hooks.progress(g, params.generations);
        }
        if (g + 1 == params.generations) {
            break;
        }

        state.population = breed(evaluated, params, pset, rng);
        state.next_generation = g + 1;

        const auto now = std::chrono::steady_clock::now();
        const bool due = (hooks.policy.every_generations > 0 && (g + 1) % hooks.policy.every_generations == 0) ||
                         std::chrono::duration<double>(now - last_save).count() >= hooks.policy.every_seconds;
        if (sink && due) {
            state.rng_state = rng.state();
            state.cpu_time = thread_cpu_seconds() - cpu_start;
            sink->save(checkpoint_save(state, pset));
            last_save = now;
        }
        if (hooks.interrupt && hooks.interrupt(g)) {
            throw RunInterrupted{g};
        }
    }

    GpRunResult result;
    result.best = std::move(*state.best);
    result.generations = std::move(state.generations);
    result.evaluations = state.evaluations;
    result.operations = state.operations;
    result.cpu_time = thread_cpu_seconds() - cpu_start;
    return result;
}

GpRunResult run_gp_resuming(const GpParams& params, const Problem& problem, CheckpointSink& sink,
                            const RunHooks& hooks)
{
    try {
        return run_gp(params, problem, &sink, hooks);
    } catch (const CheckpointError&) {
        sink.clear();
        return run_gp(params, problem, &sink, hooks);
    }
}

// ---------------------------------------------------------------------------
// Result artifact

std::string result_artifact(const GpParams& params, const Problem& problem, const GpRunResult& result)
{
    const PrimitiveSet& pset = problem.primitives();
    json doc;
    doc["problem"] = params.problem.to_string();
    doc["params_digest"] = params_digest(params);
    doc["seed"] = params.seed;
    doc["total_cases"] = problem.total_cases();
    doc["evaluations"] = result.evaluations;
    doc["best"] = json{{"tree", to_sexpr(pset, result.best.tree)},
                       {"hits", result.best.report.hits},
                       {"raw", result.best.report.raw},
                       {"adjusted", result.best.report.adjusted},
                       {"generation", result.best.generation}};
    json gens = json::array();
    for (const auto& s : result.generations) {
        gens.push_back(json{{"generation", s.generation},
                            {"best_hits", s.best_hits},
                            {"mean_raw", static_cast<double>(s.raw_sum) / params.population_size}});
    }
    doc["generations"] = std::move(gens);
    return doc.dump() + "\n";
}

ArtifactSummary parse_artifact(std::string_view bytes)
{
    try {
        const json doc = json::parse(bytes);
        ArtifactSummary s;
        s.problem = doc.at("problem").get<std::string>();
        s.params_digest = doc.at("params_digest").get<std::string>();
        s.seed = doc.at("seed").get<std::uint64_t>();
        s.total_cases = doc.at("total_cases").get<std::uint64_t>();
        s.evaluations = doc.at("evaluations").get<std::uint64_t>();
        const auto& best = doc.at("best");
        s.best_tree = best.at("tree").get<std::string>();
        s.hits = best.at("hits").get<std::uint64_t>();
        s.raw = best.at("raw").get<double>();
        s.adjusted = best.at("adjusted").get<double>();
        s.generations = static_cast<std::uint32_t>(doc.at("generations").size());
        if (s.hits > s.total_cases) {
            throw ConfigError("result artifact reports more hits than cases");
        }
        return s;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("not a result artifact: ") + e.what());
    }
}

} // namespace voluntier::gp
