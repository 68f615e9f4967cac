#include <doctest.h>

#include <filesystem>

#include "voluntier/errors.hpp"
#include "voluntier/gp/engine.hpp"

using namespace voluntier;
using namespace voluntier::gp;

namespace {

GpParams small_mux(std::uint32_t pop, std::uint32_t gens, std::uint64_t seed, int k = 1)
{
    GpParams p;
    p.problem = ProblemId{ProblemKind::Multiplexer, k};
    p.population_size = pop;
    p.generations = gens;
    p.seed = seed;
    return p;
}

std::vector<Individual> evaluate_all(const Population& pop, const Problem& problem)
{
    std::vector<Individual> out;
    for (const auto& t : pop) out.push_back({t, problem.evaluate(t)});
    return out;
}

} // namespace

TEST_CASE("init_population")
{
    auto params = small_mux(4, 1, 42);
    params.max_initial_depth = 3;
    const auto pset = PrimitiveSet::multiplexer(1);

    Rng a(params.seed), b(params.seed);
    const auto pop = init_population(params, pset, a);
    REQUIRE(pop.size() == 4);
    for (const auto& t : pop) {
        CHECK(is_well_formed(pset, t));
        CHECK(tree_depth(pset, t) <= 3);
    }
    CHECK(init_population(params, pset, b) == pop);

    SUBCASE("Koza-sized population")
    {
        auto big = small_mux(4000, 1, 1, 3);
        Rng rng(1);
        const auto p3 = PrimitiveSet::multiplexer(3);
        const auto many = init_population(big, p3, rng);
        CHECK(many.size() == 4000);
        for (const auto& t : many) REQUIRE(tree_depth(p3, t) <= 6);
    }
    SUBCASE("full trees reach their depth exactly")
    {
        Rng rng(3);
        for (int d = 0; d < 5; ++d) CHECK(tree_depth(pset, full_tree(pset, d, rng)) == d);
    }
}

TEST_CASE("crossover of two terminals returns the donor")
{
    const auto pset = PrimitiveSet::multiplexer(1);
    const auto params = small_mux(2, 1, 1);
    Rng rng(9);
    const auto a = parse_sexpr(pset, "d0");
    const auto b = parse_sexpr(pset, "a0");
    CHECK(subtree_crossover(a, b, params, pset, rng) == b);
}

TEST_CASE("mutation replaces exactly one subtree")
{
    const auto pset = PrimitiveSet::multiplexer(2);
    auto params = small_mux(2, 1, 1, 2);
    params.crossover_prob = 0.0;
    params.mutation_prob = 1.0;
    params.reproduction_prob = 0.0;
    Rng rng(11);
    const auto parent = parse_sexpr(pset, "(IF a0 (AND d1 (NOT d2)) (OR a1 d3))");
    for (int i = 0; i < 100; ++i) {
        const auto child = subtree_mutation(parent, params, pset, rng);
        REQUIRE(is_well_formed(pset, child));
        // Some subtree of the parent, starting at `at`, was swapped for a new one.
        bool explained = false;
        for (std::size_t at = 0; at < parent.size() && !explained; ++at) {
            const auto end = subtree_end(pset, parent.nodes, at);
            const std::size_t suffix = parent.size() - end;
            if (child.size() < at + suffix) continue;
            const bool prefix_ok = std::equal(parent.nodes.begin(), parent.nodes.begin() + at, child.nodes.begin());
            const bool suffix_ok = std::equal(parent.nodes.end() - suffix, parent.nodes.end(), child.nodes.end() - suffix);
            const std::vector<PrimitiveId> middle(child.nodes.begin() + at, child.nodes.end() - suffix);
            explained = prefix_ok && suffix_ok && is_well_formed(pset, ProgramTree{middle});
        }
        REQUIRE(explained);
    }
}

TEST_CASE("breed keeps size and validity and is deterministic")
{
    MultiplexerProblem mux(2);
    const auto& pset = mux.primitives();
    auto params = small_mux(60, 1, 5, 2);
    params.max_depth = 6;
    params.crossover_prob = 0.6;
    params.mutation_prob = 0.3;
    params.reproduction_prob = 0.1;
    Rng rng(5);
    auto pop = init_population(params, pset, rng);
    for (int gen = 0; gen < 15; ++gen) {
        const auto evaluated = evaluate_all(pop, mux);
        Rng r1(100 + static_cast<std::uint64_t>(gen)), r2(100 + static_cast<std::uint64_t>(gen));
        auto next = breed(evaluated, params, pset, r1);
        REQUIRE(next == breed(evaluated, params, pset, r2));
        REQUIRE(next.size() == pop.size());
        for (const auto& t : next) {
            REQUIRE(is_well_formed(pset, t));
            REQUIRE(tree_depth(pset, t) <= 6);
        }
        pop = std::move(next);
    }
}

TEST_CASE("run_gp basics")
{
    MultiplexerProblem mux(1);
    SUBCASE("deterministic per seed")
    {
        const auto p = small_mux(50, 10, 7);
        const auto a = run_gp(p, mux);
        const auto b = run_gp(p, mux);
        CHECK(result_artifact(p, mux, a) == result_artifact(p, mux, b));
        CHECK(a.evaluations == 500);
        CHECK(a.generations.size() == 10);
    }
    SUBCASE("one generation of two")
    {
        const auto p = small_mux(2, 1, 3);
        const auto r = run_gp(p, mux);
        CHECK(r.evaluations == 2);
        CHECK(r.generations.size() == 1);
        CHECK(r.best.generation == 0);
        CHECK(r.best.report.hits == r.generations[0].best_hits);
    }
    SUBCASE("best so far never decreases")
    {
        const auto r = run_gp(small_mux(30, 12, 21, 2), MultiplexerProblem(2));
        std::uint64_t best = 0;
        for (const auto& g : r.generations) best = std::max(best, g.best_hits);
        CHECK(r.best.report.hits == best);
    }
}

TEST_CASE("checkpoint encoding")
{
    const auto pset = PrimitiveSet::multiplexer(1);
    Checkpoint cp;
    cp.params_digest = params_digest(small_mux(4, 3, 1));
    cp.next_generation = 2;
    cp.population = {parse_sexpr(pset, "(AND a0 d1)"), parse_sexpr(pset, "d0")};
    cp.rng_state = 0xDEADBEEFCAFEF00DULL;
    cp.best = BestSoFar{parse_sexpr(pset, "(IF a0 d1 d0)"), EvalReport::from_hits(8, 8), 1};
    cp.generations = {{0, 6, 10}, {1, 8, 4}};
    cp.evaluations = 8;
    cp.operations = 123;
    cp.cpu_time = 0.25;

    const auto bytes = checkpoint_save(cp, pset);
    CHECK(checkpoint_load(bytes, pset) == cp);

    SUBCASE("every single-byte tamper is caught")
    {
        for (std::size_t i = 0; i < bytes.size(); ++i) {
            auto bad = bytes;
            bad[i] = static_cast<char>(bad[i] ^ 0x01);
            REQUIRE_THROWS_AS(checkpoint_load(bad, pset), CheckpointError);
        }
    }
    SUBCASE("truncation is caught")
    {
        for (std::size_t n : {std::size_t{0}, std::size_t{5}, bytes.size() / 2, bytes.size() - 1}) {
            CHECK_THROWS_AS(checkpoint_load(bytes.substr(0, n), pset), CheckpointError);
        }
    }
}

TEST_CASE("resuming reproduces the uninterrupted run")
{
    MultiplexerProblem mux(1);
    const auto p = small_mux(50, 10, 7);
    const auto reference = result_artifact(p, mux, run_gp(p, mux));

    MemoryCheckpointSink sink;
    RunHooks hooks;
    hooks.policy.every_generations = 1;
    hooks.interrupt = [](std::uint32_t g) { return g == 4; };
    CHECK_THROWS_AS(run_gp(p, mux, &sink, hooks), RunInterrupted);
    REQUIRE(sink.bytes().has_value());
    CHECK(checkpoint_load(*sink.bytes(), mux.primitives()).next_generation == 5);

    hooks.interrupt = nullptr;
    CHECK(result_artifact(p, mux, run_gp(p, mux, &sink, hooks)) == reference);

    SUBCASE("checkpoint from other parameters is refused")
    {
        auto other = p;
        other.seed = 8;
        CHECK_THROWS_AS(run_gp(other, mux, &sink, hooks), CheckpointError);
        // The resuming variant discards it and runs fresh.
        CHECK(result_artifact(other, mux, run_gp_resuming(other, mux, sink, hooks)) ==
              result_artifact(other, mux, run_gp(other, mux)));
    }
    SUBCASE("corrupt checkpoint is refused")
    {
        (*sink.bytes())[20] ^= 0x40;
        CHECK_THROWS_AS(run_gp(p, mux, &sink, hooks), CheckpointError);
    }
}

TEST_CASE("file checkpoint sink writes atomically")
{
    const auto dir = std::filesystem::temp_directory_path() / "voluntier_ckpt_test";
    std::filesystem::create_directories(dir);
    FileCheckpointSink sink((dir / "state.ckpt").string());
    sink.clear();
    CHECK_FALSE(sink.load().has_value());
    sink.save("hello");
    CHECK(sink.load() == std::optional<std::string>("hello"));
    CHECK_FALSE(std::filesystem::exists(dir / "state.ckpt.tmp"));
    sink.clear();
    CHECK_FALSE(sink.load().has_value());
    std::filesystem::remove_all(dir);
}

TEST_CASE("result artifact is canonical and parseable")
{
    MultiplexerProblem mux(2);
    const auto p = small_mux(20, 3, 4, 2);
    const auto r = run_gp(p, mux);
    const auto bytes = result_artifact(p, mux, r);
    const auto s = parse_artifact(bytes);
    CHECK(s.problem == "multiplexer:2");
    CHECK(s.seed == 4);
    CHECK(s.total_cases == 64);
    CHECK(s.hits == r.best.report.hits);
    CHECK(s.evaluations == 60);
    CHECK(s.generations == 3);
    CHECK(s.params_digest == params_digest(p));
    CHECK(bytes.back() == '\n');
    CHECK(bytes.find("\"best\"") < bytes.find("\"evaluations\""));
    CHECK(bytes.find("\"evaluations\"") < bytes.find("\"seed\""));
    CHECK_THROWS_AS(parse_artifact("not json"), ConfigError);
    CHECK_THROWS_AS(parse_artifact("{\"problem\":1}"), ConfigError);
}
