#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <fstream>
#include <random>

#include "voluntier/errors.hpp"
#include "voluntier/gp/engine.hpp"
#include "voluntier/server/project_server.hpp"

using namespace voluntier;
using namespace voluntier::server;
using proto::ResultState;
using proto::WuState;

namespace {

proto::SweepSpec sweep(const std::string& name, std::uint32_t replicates, std::uint32_t target = 1,
                       std::uint32_t quorum = 1)
{
    proto::SweepSpec s;
    s.name = name;
    s.base_params.problem = gp::ProblemId{gp::ProblemKind::Multiplexer, 1};
    s.base_params.population_size = 20;
    s.base_params.generations = 3;
    s.replicates = replicates;
    s.target_replicas = target;
    s.min_quorum = quorum;
    return s;
}

struct Fixture {
    ManualClock clock{1000.0};
    ServerConfig cfg;
    ProjectServer server{clock, cfg};

    std::string host(unsigned ncpus = 1)
    {
        proto::Register r;
        r.ncpus = ncpus;
        return server.register_host(r);
    }

    std::optional<proto::AssignWork> ask(const std::string& h)
    {
        auto m = server.request_work(h);
        if (auto* a = std::get_if<proto::AssignWork>(&m)) return *a;
        return std::nullopt;
    }

    proto::SubmitAck upload(const std::string& h, proto::ResultId id, std::string output, double cpu = 1.0)
    {
        proto::SubmitResult s;
        s.host_id = h;
        s.result_id = id;
        s.output = std::move(output);
        s.cpu_time = cpu;
        s.flops_estimate = cpu * 1e6;
        return server.submit_result(s);
    }

    proto::SubmitAck error(const std::string& h, proto::ResultId id)
    {
        proto::SubmitResult s;
        s.host_id = h;
        s.result_id = id;
        s.outcome = proto::Outcome::Error;
        s.error_message = "boom";
        return server.submit_result(s);
    }

    const WuEntry& wu(const std::string& id) { return server.work_units().at(id); }
    const proto::ResultRecord& result(proto::ResultId id) { return server.results().at(id); }
};

std::string artifact(std::uint64_t seed, int k = 1)
{
    gp::GpParams p;
    p.problem = gp::ProblemId{gp::ProblemKind::Multiplexer, k};
    p.population_size = 20;
    p.generations = 3;
    p.seed = seed;
    auto problem = gp::make_problem(p);
    return gp::result_artifact(p, *problem, gp::run_gp(p, *problem));
}

std::filesystem::path temp_dir(const std::string& tag)
{
    auto d = std::filesystem::temp_directory_path() / ("voluntier-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}

} // namespace

TEST_CASE("submit_sweep")
{
    Fixture f;
    const auto ids = f.server.submit_sweep(sweep("mux20", 42));
    CHECK(ids.size() == 42);
    CHECK(f.server.unsent_count() == 42);
    for (const auto& id : ids) CHECK(f.wu(id).wu.state == WuState::Unsent);

    CHECK(f.server.submit_sweep(sweep("mux20", 42)).empty());
    CHECK(f.server.work_units().size() == 42);
    CHECK_THROWS_AS(f.server.submit_sweep(sweep("mux20", 43)), ConfigError);
    CHECK_THROWS_AS(f.server.submit_sweep(sweep("zero", 0)), ConfigError);
    CHECK_FALSE(f.server.sweeps().contains("zero"));
}

TEST_CASE("request_work scheduling")
{
    Fixture f;
    const auto a = f.host(), b = f.host(), c = f.host();
    CHECK(std::holds_alternative<proto::NoWork>(f.server.request_work(a)));
    CHECK_THROWS_AS(f.server.request_work("h999"), ProtocolError);

    SUBCASE("exclusivity")
    {
        f.server.submit_sweep(sweep("one", 1));
        const auto got = f.ask(a);
        REQUIRE(got);
        CHECK(got->work_unit.wu_id == "one_rep0");
        CHECK(f.wu("one_rep0").wu.state == WuState::InProgress);
        CHECK(f.result(got->result_id).state == ResultState::Assigned);
        CHECK_FALSE(f.ask(b));
    }
    SUBCASE("replicas go to distinct hosts")
    {
        f.server.submit_sweep(sweep("two", 1, 2, 2));
        const auto ra = f.ask(a);
        REQUIRE(ra);
        CHECK_FALSE(f.ask(a));
        const auto rb = f.ask(b);
        REQUIRE(rb);
        CHECK(rb->work_unit.wu_id == ra->work_unit.wu_id);
        CHECK_FALSE(f.ask(c));
    }
    SUBCASE("fifo by creation")
    {
        f.server.submit_sweep(sweep("first", 3));
        f.server.submit_sweep(sweep("second", 2));
        std::vector<std::string> order;
        for (int i = 0; i < 5; ++i) order.push_back(f.ask(a)->work_unit.wu_id);
        CHECK(order == std::vector<std::string>{"first_rep0", "first_rep1", "first_rep2", "second_rep0",
                                                "second_rep1"});
    }
    SUBCASE("payloads travel with the assignment")
    {
        f.server.submit_sweep(sweep("p", 1));
        const auto got = f.ask(a);
        REQUIRE(got->payloads.size() == 1);
        const auto params = proto::embedded_params(got->payloads[0].bytes, got->work_unit.command_args);
        CHECK(params.seed == 1);
        CHECK(params.population_size == 20);
    }
}

TEST_CASE("signed payloads verify against the project key")
{
    ManualClock clock;
    const auto keys = proto::generate_keypair();
    ProjectServer server(clock, {}, keys);
    server.submit_sweep(sweep("s", 1));
    const auto h = server.register_host({});
    const auto a = std::get<proto::AssignWork>(server.request_work(h));
    CHECK(proto::verify(a.payloads.at(0), keys.public_key));
}

TEST_CASE("heartbeats")
{
    Fixture f;
    const auto a = f.host(), b = f.host();
    f.server.submit_sweep(sweep("hb", 1));
    const auto got = *f.ask(a);

    f.clock.advance(5);
    auto ack = f.server.heartbeat({a, got.result_id, 0.8});
    CHECK(ack.ok);
    CHECK(f.result(got.result_id).state == ResultState::Running);
    CHECK(f.result(got.result_id).last_heartbeat == 1005);
    CHECK(f.server.hosts().at(a).last_contact == 1005);

    f.clock.advance(5);
    ack = f.server.heartbeat({a, got.result_id, 0.3});
    CHECK(ack.ok);
    CHECK(ack.warning == "progress regression");
    CHECK(f.server.progress_regressions() == 1);
    CHECK(f.result(got.result_id).progress == 0.3);

    CHECK_FALSE(f.server.heartbeat({a, 777, 0.1}).ok);
    CHECK_FALSE(f.server.heartbeat({b, got.result_id, 0.1}).ok);

    f.upload(a, got.result_id, artifact(1));
    const auto before = f.result(got.result_id);
    f.clock.advance(5);
    ack = f.server.heartbeat({a, got.result_id, 0.9});
    CHECK_FALSE(ack.ok);
    CHECK(f.result(got.result_id) == before);
}

TEST_CASE("silent task times out and is reissued")
{
    Fixture f;
    const auto a = f.host(), b = f.host();
    f.server.submit_sweep(sweep("t", 1));
    const auto got = *f.ask(a);
    f.clock.advance(f.cfg.timeout());
    CHECK(f.server.transition().empty());
    f.clock.advance(1);
    const auto changes = f.server.transition();
    REQUIRE(changes.size() == 2);
    CHECK(changes[0].kind == StateChange::Kind::TimedOut);
    CHECK(changes[1].kind == StateChange::Kind::Reissue);
    CHECK(f.result(got.result_id).state == ResultState::TimedOut);

    const auto again = f.ask(b);
    REQUIRE(again);
    CHECK(again->work_unit.wu_id == "t_rep0");
    CHECK(f.upload(a, got.result_id, "late").accepted == false);
    CHECK(f.upload(b, again->result_id, artifact(1)).accepted);
    CHECK(f.wu("t_rep0").wu.canonical_result_id == again->result_id);
}

TEST_CASE("deadline applies even with heartbeats")
{
    Fixture f;
    const auto a = f.host();
    auto s = sweep("d", 1);
    s.deadline = 100;
    f.server.submit_sweep(s);
    const auto got = *f.ask(a);
    for (int i = 0; i < 10; ++i) {
        f.clock.advance(10);
        f.server.heartbeat({a, got.result_id, 0.1 * i});
        f.server.transition();
    }
    CHECK(f.result(got.result_id).state == ResultState::Running);
    f.clock.advance(10);
    f.server.transition();
    CHECK(f.result(got.result_id).state == ResultState::TimedOut);
}

TEST_CASE("max_error_results bounds a work unit")
{
    Fixture f;
    std::vector<std::string> hosts;
    for (int i = 0; i < 6; ++i) hosts.push_back(f.host());

    SUBCASE("three errors")
    {
        f.server.submit_sweep(sweep("e", 1));
        for (int i = 0; i < 3; ++i) {
            const auto got = f.ask(hosts[i]);
            REQUIRE(got);
            f.error(hosts[i], got->result_id);
        }
        CHECK(f.wu("e_rep0").wu.state == WuState::Over);
        CHECK(f.wu("e_rep0").failed);
        CHECK_FALSE(f.wu("e_rep0").wu.canonical_result_id);
        CHECK_FALSE(f.ask(hosts[3]));
    }
    SUBCASE("three disagreeing uploads beyond the quorum group")
    {
        f.server.submit_sweep(sweep("q", 1, 2, 2));
        std::vector<proto::ResultId> ids;
        for (int i = 0; i < 4; ++i) {
            const auto got = f.ask(hosts[i]);
            REQUIRE(got);
            ids.push_back(got->result_id);
            if (i < 1) continue;
            for (std::size_t j = ids.size() - (i == 1 ? 2 : 1); j < ids.size(); ++j) {
                f.upload(hosts[j], ids[j], "out" + std::to_string(j));
            }
        }
        CHECK(f.wu("q_rep0").failed);
        for (auto id : ids) CHECK(f.result(id).state == ResultState::Invalid);
    }
}

TEST_CASE("hosts silent for a day become inactive")
{
    Fixture f;
    const auto a = f.host(), b = f.host();
    f.clock.advance(86399);
    f.server.heartbeat({b, 0, 0});
    CHECK(f.server.transition().empty());
    f.clock.advance(1);
    const auto changes = f.server.transition();
    REQUIRE(changes.size() == 1);
    CHECK(changes[0].kind == StateChange::Kind::HostInactive);
    CHECK(changes[0].host_id == a);
    CHECK_FALSE(f.server.hosts().at(a).active);
    CHECK(f.server.hosts().at(b).active);
    f.server.request_work(a);
    CHECK(f.server.hosts().at(a).active);
}

TEST_CASE("quorum validation")
{
    Fixture f;
    const auto a = f.host(), b = f.host(), c = f.host();
    f.server.submit_sweep(sweep("v", 1, 2, 2));
    const auto ra = *f.ask(a), rb = *f.ask(b);
    const auto out = artifact(1);

    SUBCASE("agreement")
    {
        f.upload(a, ra.result_id, out);
        CHECK(f.wu("v_rep0").wu.state == WuState::InProgress);
        f.upload(b, rb.result_id, out);
        CHECK(f.wu("v_rep0").wu.state == WuState::Over);
        CHECK(f.wu("v_rep0").wu.canonical_result_id == ra.result_id);
        CHECK(f.result(ra.result_id).state == ResultState::Valid);
        CHECK(f.result(rb.result_id).state == ResultState::Valid);
        CHECK_FALSE(f.ask(c));
    }
    SUBCASE("disagreement asks for a third replica")
    {
        f.upload(a, ra.result_id, out);
        f.upload(b, rb.result_id, artifact(2));
        CHECK(f.wu("v_rep0").wu.state == WuState::InProgress);
        const auto rc = f.ask(c);
        REQUIRE(rc);
        f.upload(c, rc->result_id, artifact(2));
        CHECK(f.wu("v_rep0").wu.canonical_result_id == rb.result_id);
        CHECK(f.result(ra.result_id).state == ResultState::Invalid);
        CHECK(f.result(rc->result_id).state == ResultState::Valid);
    }
}

TEST_CASE("quorum one takes the first upload")
{
    Fixture f;
    const auto a = f.host();
    f.server.submit_sweep(sweep("one", 1));
    const auto got = *f.ask(a);
    CHECK(f.upload(a, got.result_id, artifact(1)).accepted);
    CHECK(f.wu("one_rep0").wu.canonical_result_id == got.result_id);
    CHECK(f.result(got.result_id).state == ResultState::Valid);
    CHECK(f.upload(a, got.result_id, artifact(1)).reason == "duplicate");
    CHECK_FALSE(f.upload(a, got.result_id, "other").accepted);
}

TEST_CASE("validation waits for replicas still in flight")
{
    Fixture f;
    const auto a = f.host(), b = f.host(), c = f.host();
    f.server.submit_sweep(sweep("wait", 1, 3, 2));
    const auto ra = *f.ask(a), rb = *f.ask(b), rc = *f.ask(c);
    f.upload(a, ra.result_id, "same");
    f.upload(b, rb.result_id, "same");
    CHECK(f.wu("wait_rep0").wu.state == WuState::InProgress);
    f.upload(c, rc.result_id, "different");
    CHECK(f.wu("wait_rep0").wu.canonical_result_id == ra.result_id);
    CHECK(f.result(rc.result_id).state == ResultState::Invalid);
}

TEST_CASE("late replica of a failed unit is invalid")
{
    Fixture f;
    const auto a = f.host(), b = f.host();
    auto s = sweep("late", 1, 2, 2);
    s.max_error_results = 1;
    f.server.submit_sweep(s);
    const auto ra = *f.ask(a), rb = *f.ask(b);
    f.error(a, ra.result_id);
    CHECK(f.wu("late_rep0").failed);
    CHECK(f.upload(b, rb.result_id, "x").accepted);
    CHECK(f.result(rb.result_id).state == ResultState::Invalid);
}

TEST_CASE("validation ignores arrival order")
{
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 3 + static_cast<int>(rng() % 4);
        std::vector<std::string> outputs;
        for (int i = 0; i < n; ++i) outputs.push_back("o" + std::to_string(rng() % 3));

        // oracle: largest group, ties to the group holding the lowest index
        std::map<std::string, std::pair<int, int>> groups; // output -> (size, first index)
        for (int i = 0; i < n; ++i) {
            auto [it, fresh] = groups.try_emplace(outputs[i], 0, i);
            ++it->second.first;
        }
        std::optional<std::string> expected;
        int best_size = 0, best_first = n;
        for (const auto& [out, g] : groups) {
            if (g.first > best_size || (g.first == best_size && g.second < best_first)) {
                best_size = g.first;
                best_first = g.second;
                expected = out;
            }
        }
        if (best_size < 2) expected.reset();

        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        for (int perm = 0; perm < 6; ++perm) {
            Fixture f;
            auto s = sweep("p", 1, n, 2);
            s.max_error_results = 10;
            f.server.submit_sweep(s);
            std::vector<std::string> hosts;
            std::vector<proto::ResultId> ids;
            for (int i = 0; i < n; ++i) {
                hosts.push_back(f.host());
                ids.push_back(f.ask(hosts.back())->result_id);
            }
            std::shuffle(order.begin(), order.end(), rng);
            for (int i : order) f.upload(hosts[i], ids[i], outputs[i]);
            const auto& e = f.wu("p_rep0");
            if (expected) {
                REQUIRE(e.wu.canonical_result_id);
                CHECK(f.result(*e.wu.canonical_result_id).output == *expected);
                CHECK(*e.wu.canonical_result_id == ids[best_first]);
            } else {
                CHECK_FALSE(e.wu.canonical_result_id);
            }
        }
    }
}

TEST_CASE("group choice depends on size then lowest result id")
{
    for (int perm = 0; perm < 24; ++perm) {
        Fixture f;
        auto s = sweep("g", 1, 4, 4);
        s.max_error_results = 10;
        f.server.submit_sweep(s);
        std::vector<std::string> hosts;
        std::vector<proto::ResultId> ids;
        for (int i = 0; i < 4; ++i) {
            hosts.push_back(f.host());
            ids.push_back(f.ask(hosts.back())->result_id);
        }
        // two groups of two; quorum 4 is never met, so the unit stays open
        // until every result is in, then asks for more
        const std::vector<std::string> outputs{"x", "y", "y", "x"};
        std::vector<int> order{0, 1, 2, 3};
        for (int k = 0; k < perm; ++k) std::next_permutation(order.begin(), order.end());
        for (int i : order) f.upload(hosts[i], ids[i], outputs[i]);
        const auto& e = f.wu("g_rep0");
        CHECK(e.wu.state == WuState::InProgress);
        CHECK(e.wanted == 5);
    }
}

TEST_CASE("assimilation")
{
    Fixture f;
    const auto a = f.host();

    SUBCASE("single run")
    {
        f.server.submit_sweep(sweep("s", 1));
        const auto got = *f.ask(a);
        const auto out = artifact(1);
        f.upload(a, got.result_id, out, 2.5);
        const auto& gpa = dynamic_cast<const GpAssimilator&>(f.server.assimilator());
        REQUIRE(gpa.ledger().size() == 1);
        const auto summary = gp::parse_artifact(out);
        CHECK(gpa.ledger()[0].hits == summary.hits);
        CHECK(gpa.ledger()[0].cpu_time == 2.5);
        const auto* agg = gpa.aggregate("s");
        REQUIRE(agg);
        CHECK(agg->runs == 1);
        CHECK(agg->perfect == (summary.perfect() ? 1 : 0));
        CHECK(agg->mean_cpu_time() == 2.5);
    }
    SUBCASE("malformed output is flagged")
    {
        f.server.submit_sweep(sweep("bad", 1));
        const auto got = *f.ask(a);
        f.upload(a, got.result_id, "not an artifact");
        CHECK(f.wu("bad_rep0").flagged);
        CHECK(f.wu("bad_rep0").wu.state == WuState::Over);
        CHECK(f.result(got.result_id).output == "not an artifact");
        CHECK(f.server.assimilator().aggregate("bad") == nullptr);
    }
    SUBCASE("perfect count over many runs")
    {
        f.server.submit_sweep(sweep("many", 30));
        std::size_t perfect = 0;
        for (std::uint64_t i = 0; i < 30; ++i) {
            const auto got = *f.ask(a);
            const auto out = artifact(1 + i);
            perfect += gp::parse_artifact(out).perfect() ? 1 : 0;
            f.upload(a, got.result_id, out);
        }
        CHECK(f.server.assimilator().aggregate("many")->runs == 30);
        CHECK(f.server.assimilator().aggregate("many")->perfect == perfect);
        CHECK(perfect > 0);
    }
}

TEST_CASE("host log export")
{
    Fixture f;
    CHECK(f.server.export_host_log().hosts.empty());

    const auto a = f.host(4);
    f.server.submit_sweep(sweep("x", 1));
    const auto got = *f.ask(a);
    f.clock.advance(30);
    f.upload(a, got.result_id, artifact(1), 7.0);
    const auto log = f.server.export_host_log();
    REQUIRE(log.hosts.size() == 1);
    CHECK(log.hosts[0].life() == 30);
    CHECK(log.hosts[0].ncpus == 4);
    REQUIRE(log.hosts[0].results.size() == 1);
    CHECK(log.hosts[0].results[0].cpu_time == 7.0);

    Fixture g;
    for (int i = 0; i < 45; ++i) {
        g.host();
        g.clock.advance(60);
    }
    CHECK(g.server.export_host_log().hosts.size() == 45);
}

TEST_CASE("sweep row")
{
    Fixture f;
    f.server.submit_sweep(sweep("r", 4));
    f.clock.advance(100);
    const auto a = f.host(), b = f.host();
    for (int i = 0; i < 2; ++i) {
        for (const auto& h : {a, b}) {
            const auto got = *f.ask(h);
            f.clock.advance(10);
            f.upload(h, got.result_id, artifact(got.work_unit.command_args[1] == "1" ? 1 : 2), 15.0);
        }
    }
    const auto row = *f.server.sweep_row("r");
    CHECK(row.runs == 4);
    CHECK(row.t_seq == 60.0);
    CHECK(row.t_b == 40.0); // from the first registration, which came after submission
    CHECK(*row.acc() == doctest::Approx(1.5));
    REQUIRE(row.cp);
    CHECK(*row.cp > 0.0);
    CHECK_FALSE(f.server.sweep_row("nope"));
}

TEST_CASE("safety and bounds under random schedules")
{
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 40; ++trial) {
        Fixture f;
        auto s = sweep("r", 5, 1 + rng() % 3, 1);
        s.min_quorum = 1 + static_cast<std::uint32_t>(rng() % s.target_replicas);
        s.deadline = 500;
        f.server.submit_sweep(s);
        std::vector<std::string> hosts;
        for (int i = 0; i < 6; ++i) hosts.push_back(f.host());
        std::map<proto::ResultId, std::string> owner;
        std::set<std::string> canonical_seen;
        for (int step = 0; step < 400; ++step) {
            f.clock.advance(static_cast<double>(rng() % 40));
            const auto& h = hosts[rng() % hosts.size()];
            switch (rng() % 5) {
            case 0:
            case 1:
                if (auto got = f.ask(h)) owner[got->result_id] = h;
                break;
            case 2:
                if (!owner.empty()) {
                    auto it = std::next(owner.begin(), static_cast<long>(rng() % owner.size()));
                    f.upload(it->second, it->first, rng() % 4 ? "good" : "bad" + std::to_string(rng() % 2));
                }
                break;
            case 3:
                if (!owner.empty()) {
                    auto it = std::next(owner.begin(), static_cast<long>(rng() % owner.size()));
                    if (rng() % 3 == 0) f.error(it->second, it->first);
                }
                break;
            default:
                f.server.transition();
            }
            for (const auto& [id, e] : f.server.work_units()) {
                std::set<std::string> hosts_used;
                for (auto rid : e.results) {
                    CHECK(hosts_used.insert(f.result(rid).host_id).second);
                }
                CHECK(e.results.size() <= e.wu.target_replicas + e.wu.max_error_results);
                if (e.wu.canonical_result_id) {
                    CHECK(e.wu.state == WuState::Over);
                    CHECK(f.result(*e.wu.canonical_result_id).state == ResultState::Valid);
                    CHECK_FALSE(e.failed);
                }
            }
        }
        // finish with honest hosts
        for (int round = 0; round < 200; ++round) {
            f.clock.advance(1000);
            f.server.transition();
            for (const auto& h : hosts) {
                if (auto got = f.ask(h)) f.upload(h, got->result_id, "good");
            }
        }
        for (const auto& [id, e] : f.server.work_units()) {
            CHECK(e.wu.state == WuState::Over);
        }
    }
}

TEST_CASE("event log replay rebuilds identical state")
{
    const auto dir = temp_dir("replay");
    const auto path = (dir / "events.log").string();
    ManualClock clock(50);
    std::map<std::string, WuEntry> wus;
    std::map<proto::ResultId, proto::ResultRecord> results;
    {
        ProjectServer s(clock, {});
        s.attach_log(path, false);
        s.submit_sweep(sweep("j", 3, 2, 2));
        const auto a = s.register_host({}), b = s.register_host({});
        auto ra = std::get<proto::AssignWork>(s.request_work(a));
        clock.advance(3);
        s.heartbeat({a, ra.result_id, 0.5});
        auto rb = std::get<proto::AssignWork>(s.request_work(b));
        s.submit_result({a, ra.result_id, proto::Outcome::Success, "x", 1, 2, ""});
        s.submit_result({b, rb.result_id, proto::Outcome::Success, "x", 1, 2, ""});
        clock.advance(1000);
        s.transition();
        s.request_work(a);
        wus = s.work_units();
        results = s.results();
        CHECK_THROWS_AS(ProjectServer(clock, {}).attach_log(path, false), LogLocked);
        CHECK(EventLog::locked(path));
    }
    CHECK_FALSE(EventLog::locked(path));

    // a torn tail is dropped
    {
        std::ofstream out(path, std::ios::binary | std::ios::app);
        out.write("\0\0\0\x40{\"t\"", 8);
    }
    ManualClock other(1e9);
    ProjectServer replayed(other, {});
    replayed.load_snapshot(path);
    CHECK(replayed.work_units().size() == wus.size());
    CHECK(replayed.results() == results);
    ProjectServer writer(other, {});
    writer.attach_log(path, false);
    CHECK(writer.results() == results);
    for (const auto& [id, e] : wus) {
        CHECK(writer.work_units().at(id).wu == e.wu);
        CHECK(writer.work_units().at(id).wanted == e.wanted);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("handle dispatches and reports errors")
{
    Fixture f;
    const auto ack = f.server.handle(proto::Register{});
    CHECK(std::get<proto::RegisterAck>(ack).host_id == "h1");
    CHECK(std::holds_alternative<proto::ErrorReply>(f.server.handle(proto::RequestWork{"h9"})));
    CHECK(std::holds_alternative<proto::ErrorReply>(f.server.handle(proto::NoWork{})));
    const auto sw = f.server.handle(proto::SubmitSweep{sweep("w", 2)});
    CHECK(std::get<proto::SubmitSweepAck>(sw).created.size() == 2);
    CHECK(std::holds_alternative<proto::ErrorReply>(f.server.handle(proto::SubmitSweep{sweep("w", 3)})));
}

TEST_CASE("purge keeps memory bounded")
{
    ManualClock clock;
    ServerConfig cfg;
    cfg.purge_completed = true;
    auto counter = std::make_unique<CountingAssimilator>();
    auto* count = counter.get();
    ProjectServer s(clock, cfg, std::nullopt, std::move(counter));
    s.submit_sweep(sweep("p", 50));
    const auto h = s.register_host({});
    for (int i = 0; i < 50; ++i) {
        const auto a = std::get<proto::AssignWork>(s.request_work(h));
        s.submit_result({h, a.result_id, proto::Outcome::Success, "o", 1, 1, ""});
    }
    CHECK(count->count() == 50);
    CHECK(s.work_units().empty());
    CHECK(s.results().empty());
    CHECK(s.sweeps().at("p").canonical == 50);
}
