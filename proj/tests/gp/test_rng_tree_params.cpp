#include <doctest.h>

#include <set>

#include "voluntier/errors.hpp"
#include "voluntier/gp/params.hpp"
#include "voluntier/gp/rng.hpp"
#include "voluntier/gp/tree.hpp"

using namespace voluntier;
using namespace voluntier::gp;

TEST_CASE("splitmix64 reproduces the published reference outputs")
{
    Rng rng(0);
    CHECK(rng.next() == 0xe220a8397b1dcdafULL);
    CHECK(rng.next() == 0x6e789e6aa1b965f4ULL);
    CHECK(rng.next() == 0x06c45d188009454fULL);
    CHECK(rng.next() == 0xf88bb8a8724c81ecULL);
}

TEST_CASE("bounded draws stay in range and cover it")
{
    Rng rng(99);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const auto v = rng.below(7);
        REQUIRE(v < 7);
        seen.insert(v);
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
    CHECK(seen.size() == 7);
}

TEST_CASE("restoring the state resumes the sequence")
{
    Rng a(5);
    a.next();
    Rng b(0);
    b.set_state(a.state());
    CHECK(a.next() == b.next());
}

TEST_CASE("primitive sets")
{
    SUBCASE("multiplexer terminal count is k + 2^k")
    {
        for (int k = 1; k <= 4; ++k) {
            const auto p = PrimitiveSet::multiplexer(k);
            CHECK(p.terminal_count() == static_cast<std::size_t>(k + (1 << k)));
            CHECK(p.function_count() == 4);
        }
        const auto p = PrimitiveSet::multiplexer(3);
        CHECK(p.find("a2").has_value());
        CHECK(p.find("d7").has_value());
        CHECK_FALSE(p.find("d8").has_value());
    }
    SUBCASE("santa fe")
    {
        const auto p = PrimitiveSet::santa_fe();
        CHECK(p.terminal_count() == 3);
        CHECK(p.arity(*p.find("PROGN3")) == 3);
        CHECK(p.arity(*p.find("IF-FOOD-AHEAD")) == 2);
    }
    SUBCASE("invalid sets are rejected")
    {
        CHECK_THROWS_AS(PrimitiveSet({}, {{"F", 2}}, {}), ConfigError);
        CHECK_THROWS_AS(PrimitiveSet({}, {{"F", 0}}, {"x"}), ConfigError);
        CHECK_THROWS_AS(PrimitiveSet({}, {{"x", 1}}, {"x"}), ConfigError);
    }
}

TEST_CASE("s-expressions round trip and report depth")
{
    const auto pset = PrimitiveSet::multiplexer(2);
    const std::string text = "(IF a0 (AND d1 (NOT d2)) (OR a1 d3))";
    const auto tree = parse_sexpr(pset, text);
    CHECK(to_sexpr(pset, tree) == text);
    CHECK(tree.size() == 9);
    CHECK(tree_depth(pset, tree) == 3);
    CHECK(is_well_formed(pset, tree));
    CHECK(subtree_end(pset, tree.nodes, 2) == 6);

    CHECK(tree_depth(pset, parse_sexpr(pset, "d0")) == 0);
    CHECK(tree_depth(pset, parse_sexpr(pset, "(NOT (NOT (NOT d0)))")) == 3);

    CHECK_THROWS_AS(parse_sexpr(pset, "(AND d0)"), ConfigError);
    CHECK_THROWS_AS(parse_sexpr(pset, "(FOO d0 d1)"), ConfigError);
    CHECK_THROWS_AS(parse_sexpr(pset, "(NOT d0) d1"), ConfigError);
    CHECK_THROWS_AS(parse_sexpr(pset, "(d0)"), ConfigError);

    ProgramTree broken{{0}};
    CHECK_FALSE(is_well_formed(pset, broken));
}

TEST_CASE("parameter files")
{
    GpParams p;
    p.population_size = 50;
    p.generations = 10;
    p.seed = 7;
    p.problem = ProblemId{ProblemKind::Multiplexer, 1};
    const auto text = render_params(p);
    CHECK(parse_params(text) == p);
    CHECK(params_digest(p) == params_digest(parse_params(text)));

    auto q = p;
    q.seed = 8;
    CHECK(params_digest(p) != params_digest(q));

    SUBCASE("comments, blank lines and santafe keys")
    {
        const auto s = parse_params("# ant\nproblem = santafe\n\nsteps_limit=600\npopulation_size=1000 # comment\n");
        CHECK(s.problem.kind == ProblemKind::SantaFe);
        CHECK(s.steps_limit == 600);
        CHECK(s.population_size == 1000);
    }
    SUBCASE("constraint violations")
    {
        CHECK_THROWS_AS(parse_params("crossover_prob=0.5\n"), ConfigError);
        CHECK_THROWS_AS(parse_params("population_size=1\n"), ConfigError);
        CHECK_THROWS_AS(parse_params("generations=0\n"), ConfigError);
        CHECK_THROWS_AS(parse_params("colour=blue\n"), ConfigError);
        CHECK_THROWS_AS(parse_params("seed=abc\n"), ConfigError);
        CHECK_THROWS_AS(parse_params("problem=regression\n"), ConfigError);
        CHECK_THROWS_AS(parse_params("crossover_prob=1.2\nreproduction_prob=-0.2\n"), ConfigError);
    }
}
