#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <thread>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "voluntier/churnsim/churnsim.hpp"
#include "voluntier/client/client.hpp"
#include "voluntier/errors.hpp"
#include "voluntier/gp/engine.hpp"
#include "voluntier/gp/params.hpp"
#include "voluntier/gp/problems.hpp"
#include "voluntier/proto/sweep_file.hpp"
#include "voluntier/server/daemon.hpp"
#include "voluntier/server/project.hpp"

using namespace voluntier;
namespace fs = std::filesystem;

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

// serve and client take a project dir or a file inside it
server::Project project_at(const fs::path& p)
{
    const auto dir = fs::is_directory(p) ? p : p.parent_path();
    if (!fs::exists(dir / "project.json")) throw ConfigError("no project at " + dir.string());
    return server::Project(dir.empty() ? "." : dir);
}

sigset_t stop_signals()
{
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    return set;
}

server::ProjectServer snapshot(const server::Project& project, const server::Clock& clock)
{
    server::ProjectServer s(clock, project.config().server);
    if (fs::exists(project.log_path())) s.load_snapshot(project.log_path().string());
    return s;
}

std::string pad(std::string_view s, std::size_t w)
{
    std::string out(s);
    if (out.size() < w) out.append(w - out.size(), ' ');
    return out;
}

int project_init(const fs::path& dir, const std::string& listen)
{
    const auto p = server::Project::init(dir, proto::Endpoint::parse(listen));
    fmt::print("initialized project in {}\nclient config: {}\n", p.dir().string(), p.client_config_path().string());
    return 0;
}

int serve(const fs::path& config)
{
    const auto project = project_at(config);
    const auto set = stop_signals();
    pthread_sigmask(SIG_BLOCK, &set, nullptr); // the daemon's threads inherit the mask
    server::SystemClock clock;
    server::ServerDaemon daemon(project, clock);
    const auto port = daemon.start();
    fmt::print("serving {} on port {}\n", project.dir().string(), port);
    std::fflush(stdout);
    int sig = 0;
    sigwait(&set, &sig);
    daemon.stop();
    fmt::print("stopped\n");
    return 0;
}

int client_run(const fs::path& config, std::optional<std::uint64_t> max_results,
               std::optional<std::uint32_t> exit_after_idle, const std::string& data_dir, const std::string& server)
{
    auto cfg = client::ClientConfig::load(config);
    if (!server.empty()) {
        cfg.server = proto::Endpoint::parse(server);
    } else if (cfg.server.port == 0) {
        // a client.json next to a project whose server picked its own port
        const auto port_file = config.parent_path() / "server.port";
        if (!fs::exists(port_file)) throw ConfigError("server port is 0 and no server.port next to the config");
        cfg.server.port = static_cast<std::uint16_t>(std::stoul(server::read_file(port_file)));
    }
    if (max_results) cfg.max_results = max_results;
    if (exit_after_idle) cfg.exit_after_idle = exit_after_idle;
    if (!data_dir.empty()) cfg.data_dir = data_dir;
    const auto set = stop_signals();
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    client::Client c(cfg, std::make_unique<client::TcpTransport>(cfg.server, cfg.request_timeout));
    std::thread([set, &c] {
        int sig = 0;
        sigwait(&set, &sig);
        c.stop();
    }).detach();
    c.run();
    fmt::print("host {} submitted {} results\n", c.host_id(), c.submitted());
    return 0;
}

int sweep_submit(const fs::path& spec_file, const fs::path& project_dir)
{
    const auto spec = proto::load_sweep_file(spec_file);
    const server::Project project(project_dir);
    std::vector<std::string> created;
    if (server::EventLog::locked(project.log_path().string())) {
        const auto reply = proto::exchange(project.endpoint(), proto::SubmitSweep{spec});
        if (const auto* e = std::get_if<proto::ErrorReply>(&reply)) throw std::runtime_error(e->message);
        const auto* ack = std::get_if<proto::SubmitSweepAck>(&reply);
        if (!ack) throw std::runtime_error("unexpected reply to SubmitSweep");
        created = ack->created;
    } else {
        const auto cfg = project.config();
        server::SystemClock clock;
        server::ProjectServer s(clock, cfg.server, project.keys());
        s.attach_log(project.log_path().string(), cfg.sync_log);
        created = s.submit_sweep(spec);
    }
    if (created.empty()) {
        fmt::print("sweep {} was already submitted\n", spec.name);
    } else {
        fmt::print("sweep {}: {} work units\n", spec.name, created.size());
    }
    return 0;
}

int sweep_status(const std::string& name, const fs::path& project_dir, const std::string& format)
{
    const server::Project project(project_dir);
    server::SystemClock clock;
    const auto s = snapshot(project, clock);
    const auto it = s.sweeps().find(name);
    if (it == s.sweeps().end()) throw std::runtime_error("unknown sweep '" + name + "'");
    const auto& sweep = it->second;

    struct Line {
        std::string id, state, canonical;
        std::size_t results = 0;
    };
    std::vector<Line> lines;
    std::map<std::string, std::size_t> tally;
    for (const auto& wu_id : sweep.wu_ids) {
        const auto w = s.work_units().find(wu_id);
        if (w == s.work_units().end()) continue;
        Line l{wu_id, std::string(proto::to_string(w->second.wu.state)), "", w->second.results.size()};
        if (w->second.failed) l.state = "Failed";
        if (w->second.wu.canonical_result_id) l.canonical = std::to_string(*w->second.wu.canonical_result_id);
        ++tally[l.state];
        lines.push_back(std::move(l));
    }
    if (format == "csv") {
        fmt::print("wu_id,state,results,canonical_result\n");
        for (const auto& l : lines) fmt::print("{},{},{},{}\n", l.id, l.state, l.results, l.canonical);
        return 0;
    }
    std::size_t w = 5;
    for (const auto& l : lines) w = std::max(w, l.id.size());
    fmt::print("{}  {}  {}  {}\n", pad("wu_id", w), pad("state", 10), pad("results", 7), "canonical");
    for (const auto& l : lines) {
        fmt::print("{}  {}  {:>7}  {}\n", pad(l.id, w), pad(l.state, 10), l.results, l.canonical.empty() ? "-" : l.canonical);
    }
    fmt::print("{}: {} work units", name, lines.size());
    for (const auto& [state, n] : tally) fmt::print(", {} {}", n, state);
    fmt::print("\n");
    return 0;
}

int report(const std::vector<std::string>& names, const fs::path& project_dir, const std::string& format)
{
    const server::Project project(project_dir);
    server::SystemClock clock;
    const auto s = snapshot(project, clock);
    std::vector<metrics::SweepRow> rows;
    for (const auto& n : names) {
        auto row = s.sweep_row(n);
        if (!row) throw std::runtime_error("unknown sweep '" + n + "'");
        rows.push_back(*row);
    }
    fmt::print("{}", format == "csv" ? metrics::report_csv(rows) : metrics::report_text(rows));
    return 0;
}

int simulate(const fs::path& config, std::optional<std::uint64_t> seed, const std::string& events_csv,
             const std::string& hosts_csv)
{
    auto cfg = churnsim::ChurnConfig::load(config);
    if (seed) cfg.seed = *seed;
    if (!events_csv.empty()) cfg.record_events = true;
    const auto cmp = churnsim::predicted_vs_simulated(cfg);
    const auto& t = cmp.trace;
    const auto f = cfg.factors();
    fmt::print("factors: arrival {:.4g}/day life {:.4g} d ncpus {:.4g} flops {:.4g} GFLOPS eff {:.4g} "
               "onfrac {:.4g} active {:.4g} redundancy {:.4g} share {:.4g}\n",
               f.x_arrival, f.x_life, f.x_ncpus, f.x_flops, f.x_eff, f.x_onfrac, f.x_active, f.x_redundancy, f.x_share);
    fmt::print("hosts seen {}  work units completed {}  failed {}  span {:.4f} d\n", t.hosts_seen, t.completed_wus,
               t.failed_wus, t.wall_span / metrics::kSecondsPerDay);
    fmt::print("replicas issued {}  completed {}  lost {}  timed out {}  outstanding {}  reissued completions {}\n",
               t.issued, t.completed_replicas, t.lost, t.timed_out, t.outstanding, t.reissued_completions);
    fmt::print("cp_formula {:.6g} GFLOPS  cp_sim {:.6g} GFLOPS  ratio {:.4f}\n", cmp.cp_formula, cmp.cp_sim, cmp.ratio);
    if (!events_csv.empty()) {
        std::ofstream out(events_csv);
        t.write_events_csv(out);
    }
    if (!hosts_csv.empty()) {
        std::ofstream out(hosts_csv);
        t.write_hosts_csv(out);
    }
    return 0;
}

int gp_run(const fs::path& params_file, std::optional<std::uint64_t> seed, const std::string& out_path)
{
    auto params = gp::parse_params(server::read_file(params_file));
    if (seed) params.seed = *seed;
    const auto problem = gp::make_problem(params);
    const auto start = std::chrono::steady_clock::now();
    const auto result = gp::run_gp(params, *problem);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto artifact = gp::result_artifact(params, *problem, result);
    if (out_path.empty()) {
        fmt::print("{}\n", artifact);
    } else {
        server::write_file_atomic(out_path, artifact);
    }
    const auto summary = gp::parse_artifact(artifact);
    fmt::print(stderr, "hits {}/{}  T_seq {:.3f} s cpu  {:.3f} s wall\n", summary.hits, summary.total_cases,
               result.cpu_time, wall);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"voluntier: volunteer computing for genetic programming"};
    app.require_subcommand(1);

    auto* project = app.add_subcommand("project", "Manage a project directory")->require_subcommand(1);
    auto* init = project->add_subcommand("init", "Create keys, configs and an empty log");
    fs::path init_dir;
    std::string listen = "127.0.0.1:7710";
    init->add_option("dir", init_dir, "Project directory")->required();
    init->add_option("--listen", listen, "host:port the server binds (port 0 picks one)");

    auto* serve_cmd = app.add_subcommand("serve", "Run the project server");
    fs::path serve_config;
    serve_cmd->add_option("--config", serve_config, "Project directory or its project.json")->required();

    auto* client_cmd = app.add_subcommand("client", "Volunteer client")->require_subcommand(1);
    auto* client_run_cmd = client_cmd->add_subcommand("run", "Fetch, execute and upload work");
    fs::path client_config;
    std::optional<std::uint64_t> max_results;
    std::optional<std::uint32_t> exit_after_idle;
    std::string data_dir, server_at;
    client_run_cmd->add_option("--config", client_config, "client.json")->required();
    client_run_cmd->add_option("--max-results", max_results, "Exit after this many results");
    client_run_cmd->add_option("--exit-after-idle", exit_after_idle, "Exit after this many NoWork replies in a row");
    client_run_cmd->add_option("--data-dir", data_dir, "Override the state directory");
    client_run_cmd->add_option("--server", server_at, "Override the server host:port");

    auto* sweep = app.add_subcommand("sweep", "Parameter sweeps")->require_subcommand(1);
    fs::path project_dir = ".";
    sweep->add_option("--project", project_dir, "Project directory");
    auto* submit = sweep->add_subcommand("submit", "Submit a sweep spec file");
    fs::path spec_file;
    submit->add_option("spec", spec_file, "Sweep spec file")->required();
    submit->add_option("--project", project_dir, "Project directory");
    auto* status = sweep->add_subcommand("status", "Work unit states of a sweep");
    std::string sweep_name, format = "text";
    status->add_option("name", sweep_name, "Sweep name")->required();
    status->add_option("--project", project_dir, "Project directory");
    status->add_option("--format", format, "text or csv")->check(CLI::IsMember({"text", "csv"}));

    auto* report_cmd = app.add_subcommand("report", "T_seq, T_B, Acc and CP of finished sweeps");
    std::vector<std::string> report_names;
    report_cmd->add_option("--sweep", report_names, "Sweep name (repeatable)")->required();
    report_cmd->add_option("--project", project_dir, "Project directory");
    report_cmd->add_option("--format", format, "text or csv")->check(CLI::IsMember({"text", "csv"}));

    auto* sim = app.add_subcommand("simulate", "Host churn simulation against the server");
    fs::path churn_config;
    std::optional<std::uint64_t> seed;
    std::string events_csv, hosts_csv;
    sim->add_option("--config", churn_config, "Churn config file")->required();
    sim->add_option("--seed", seed, "Override the config seed");
    sim->add_option("--events", events_csv, "Write the event trace as CSV");
    sim->add_option("--hosts", hosts_csv, "Write live/on host counts over time as CSV");

    auto* gp_cmd = app.add_subcommand("gp", "Standalone genetic programming")->require_subcommand(1);
    auto* gp_run_cmd = gp_cmd->add_subcommand("run", "Sequential baseline run");
    fs::path params_file;
    std::string out_path;
    gp_run_cmd->add_option("--params", params_file, "Params file")->required();
    gp_run_cmd->add_option("--seed", seed, "Override the params seed");
    gp_run_cmd->add_option("--out", out_path, "Write the result artifact here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        if (code == 0) return 0;
        std::cerr << app.help();
        return kUsage;
    }

    try {
        if (*init) return project_init(init_dir, listen);
        if (*serve_cmd) return serve(serve_config);
        if (*client_run_cmd) return client_run(client_config, max_results, exit_after_idle, data_dir, server_at);
        if (*submit) return sweep_submit(spec_file, project_dir);
        if (*status) return sweep_status(sweep_name, project_dir, format);
        if (*report_cmd) return report(report_names, project_dir, format);
        if (*sim) return simulate(churn_config, seed, events_csv, hosts_csv);
        if (*gp_run_cmd) return gp_run(params_file, seed, out_path);
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kRuntime;
    }
    std::cerr << app.help();
    return kUsage;
}
