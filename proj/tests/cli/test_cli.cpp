#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "support/process.hpp"
#include "voluntier/gp/engine.hpp"
#include "voluntier/gp/params.hpp"
#include "voluntier/gp/problems.hpp"

namespace fs = std::filesystem;
using namespace voluntier;

namespace {

const std::string kCli = VOLUNTIER_CLI;
const fs::path kSamples = VOLUNTIER_SAMPLES_DIR;

Captured cli(const std::string& args)
{
    return run_command(quote(kCli) + " " + args);
}

fs::path scratch(const std::string& tag)
{
    auto d = fs::temp_directory_path() / ("voluntier-cli-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& s, const std::string& needle)
{
    std::size_t n = 0;
    std::istringstream in(s);
    for (std::string line; std::getline(in, line);) n += line.find(needle) != std::string::npos;
    return n;
}

// Makes the project's client template quick to give up when idle.
void fast_clients(const fs::path& project)
{
    auto j = nlohmann::json::parse(slurp(project / "client.json"));
    j["backoff_base"] = 0.05;
    j["backoff_cap"] = 0.2;
    j["heartbeat_interval"] = 0.5;
    std::ofstream(project / "client.json") << j.dump(2);
}

} // namespace

TEST_CASE("usage errors exit 1, runtime errors exit 2")
{
    CHECK(cli("").code == 1);
    const auto unknown = cli("frobnicate");
    CHECK(unknown.code == 1);
    CHECK(unknown.out.find("Subcommands") != std::string::npos);
    CHECK(cli("gp run").code == 1);
    CHECK(cli("sweep status ant --format xml").code == 1);
    CHECK(cli("--help").code == 0);

    const auto missing = cli("gp run --params /nonexistent/file.params");
    CHECK(missing.code == 2);
    CHECK(missing.out.find("error:") != std::string::npos);

    const auto dir = scratch("twice");
    CHECK(cli("project init " + quote((dir / "p").string())).code == 0);
    CHECK(cli("project init " + quote((dir / "p").string())).code == 2);
    CHECK(cli("sweep status nothing --project " + quote((dir / "p").string())).code == 2);
}

TEST_CASE("gp run is deterministic and matches the library")
{
    const auto dir = scratch("gp");
    const auto params = (kSamples / "mux6.params").string();
    REQUIRE(cli("gp run --params " + quote(params) + " --out " + quote((dir / "a.json").string())).code == 0);
    REQUIRE(cli("gp run --params " + quote(params) + " --out " + quote((dir / "b.json").string())).code == 0);
    const auto a = slurp(dir / "a.json");
    CHECK(a == slurp(dir / "b.json"));

    auto p = gp::parse_params(slurp(params));
    const auto problem = gp::make_problem(p);
    CHECK(a == gp::result_artifact(p, *problem, gp::run_gp(p, *problem)));

    REQUIRE(cli("gp run --params " + quote(params) + " --seed 9 --out " + quote((dir / "c.json").string())).code == 0);
    CHECK(gp::parse_artifact(slurp(dir / "c.json")).seed == 9);
}

TEST_CASE("ant sweep lists 100 unsent work units")
{
    const auto dir = scratch("ant");
    const auto project = (dir / "p").string();
    REQUIRE(cli("project init " + quote(project)).code == 0);
    const auto submitted = cli("sweep submit " + quote((kSamples / "ant.sweep").string()) + " --project " + quote(project));
    REQUIRE(submitted.code == 0);
    CHECK(submitted.out.find("100 work units") != std::string::npos);
    CHECK(cli("sweep submit " + quote((kSamples / "ant.sweep").string()) + " --project " + quote(project)).code == 0);

    const auto status = cli("sweep status ant --format csv --project " + quote(project));
    REQUIRE(status.code == 0);
    CHECK(status.out.starts_with("wu_id,state,results,canonical_result\n"));
    CHECK(count_lines(status.out, ",unsent,0,") == 100);
    CHECK(cli("sweep status ant --project " + quote(project)).out.find("100 work units, 100 unsent") !=
          std::string::npos);
}

TEST_CASE("served sweep reports 42 runs")
{
    const auto dir = scratch("served");
    const auto project = dir / "p";
    REQUIRE(cli("project init " + quote(project.string()) + " --listen 127.0.0.1:0").code == 0);
    fast_clients(project);
    // the mux20 layout with a problem small enough for a test
    std::ofstream(dir / "small.params") << "problem = multiplexer:1\npopulation_size = 30\ngenerations = 3\n";
    std::ofstream(dir / "mux20.sweep") << "name = mux20\nparams = small.params\nreplicates = 42\n";
    REQUIRE(cli("sweep submit " + quote((dir / "mux20.sweep").string()) + " --project " + quote(project.string())).code == 0);

    Child server({kCli, "serve", "--config", project.string()}, dir / "serve.log");
    REQUIRE(wait_for_file(project / "server.port", 10));
    // a sweep submitted while the server runs goes over the wire
    std::ofstream(dir / "extra.sweep") << "name = extra\nparams = small.params\nreplicates = 2\n";
    const auto extra = cli("sweep submit " + quote((dir / "extra.sweep").string()) + " --project " + quote(project.string()));
    CHECK(extra.code == 0);
    CHECK(extra.out.find("2 work units") != std::string::npos);

    const auto client = cli("client run --config " + quote((project / "client.json").string()) + " --data-dir " +
                            quote((dir / "c1").string()) + " --exit-after-idle 2");
    CHECK(client.code == 0);
    CHECK(client.out.find("submitted 44 results") != std::string::npos);

    const auto csv = cli("report --sweep mux20 --format csv --project " + quote(project.string()));
    REQUIRE(csv.code == 0);
    std::istringstream lines(csv.out);
    std::string header, row;
    std::getline(lines, header);
    std::getline(lines, row);
    CHECK(header == "sweep,runs,perfect,t_seq_s,t_b_s,acc,cp_gflops,mean_run_s");
    CHECK(row.starts_with("mux20,42,"));
    const auto text = cli("report --sweep mux20 --project " + quote(project.string()));
    CHECK(text.out.find("Acc.") != std::string::npos);
    CHECK(cli("sweep status mux20 --project " + quote(project.string())).out.find("42 work units, 42 over") !=
          std::string::npos);

    server.signal(SIGTERM);
    CHECK(server.wait() == 0);
    CHECK_FALSE(fs::exists(project / "server.port"));
}

TEST_CASE("simulate prints the comparison and writes csv")
{
    const auto dir = scratch("sim");
    std::ofstream(dir / "one.conf") << "arrival_rate = 0\ninitial_hosts = 0\nimmortal_hosts = 1\n"
                                       "work_size = 1e12\ntotal_wus = 10\nhorizon = 1\n";
    const auto r = cli("simulate --config " + quote((dir / "one.conf").string()) + " --events " +
                       quote((dir / "ev.csv").string()) + " --hosts " + quote((dir / "hosts.csv").string()));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("ratio 1.0000") != std::string::npos);
    CHECK(count_lines(slurp(dir / "ev.csv"), ",complete,") == 10);
    CHECK(slurp(dir / "hosts.csv").starts_with("t_days,live,on\n"));

    const auto lab = cli("simulate --config " + quote((kSamples / "churn-lab.conf").string()));
    CHECK(lab.code == 0);
    CHECK(lab.out.find("work units completed 300") != std::string::npos);

    std::ofstream(dir / "bad.conf") << "horizon = 0\n";
    CHECK(cli("simulate --config " + quote((dir / "bad.conf").string())).code == 2);
}
