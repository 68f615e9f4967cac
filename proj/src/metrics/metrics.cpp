#include "voluntier/metrics/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

#include "voluntier/errors.hpp"

namespace voluntier::metrics {

using nlohmann::json;

double speedup(double t_seq, double t_b)
{
    if (!(t_b > 0.0) || !std::isfinite(t_b)) {
        throw std::domain_error("speedup needs T_B > 0");
    }
    if (!(t_seq >= 0.0)) {
        throw std::domain_error("speedup needs T_seq >= 0");
    }
    return t_seq / t_b;
}

double computing_power(const FactorSet& f)
{
    const double xs[] = {f.x_arrival, f.x_life,   f.x_ncpus,      f.x_flops, f.x_eff,
                         f.x_onfrac,  f.x_active, f.x_redundancy, f.x_share};
    double cp = 1.0;
    for (double x : xs) {
        if (!(x >= 0.0) || !std::isfinite(x)) {
            throw std::domain_error("computing power factors must be finite and non-negative");
        }
        cp *= x;
    }
    return cp;
}

std::string host_log_to_json(const HostLog& log)
{
    json hosts = json::array();
    for (const auto& h : log.hosts) {
        json results = json::array();
        for (const auto& r : h.results) {
            results.push_back({{"sweep", r.sweep},
                               {"cpu_time", r.cpu_time},
                               {"flops_estimate", r.flops_estimate},
                               {"completed_at", r.completed_at}});
        }
        hosts.push_back({{"host_id", h.host_id},
                         {"platform", h.platform},
                         {"ncpus", h.ncpus},
                         {"benchmark_flops", h.benchmark_flops},
                         {"first_contact", h.first_contact},
                         {"last_contact", h.last_contact},
                         {"on_fraction", h.on_fraction},
                         {"active_fraction", h.active_fraction},
                         {"results", std::move(results)}});
    }
    return json{{"exported_at", log.exported_at}, {"hosts", std::move(hosts)}}.dump(1) + "\n";
}

HostLog host_log_from_json(const std::string& text)
{
    try {
        const auto j = json::parse(text);
        HostLog log;
        log.exported_at = j.at("exported_at").get<double>();
        for (const auto& h : j.at("hosts")) {
            HostLogEntry e;
            e.host_id = h.at("host_id").get<std::string>();
            e.platform = h.value("platform", "");
            e.ncpus = h.at("ncpus").get<unsigned>();
            e.benchmark_flops = h.at("benchmark_flops").get<double>();
            e.first_contact = h.at("first_contact").get<double>();
            e.last_contact = h.at("last_contact").get<double>();
            e.on_fraction = h.value("on_fraction", 1.0);
            e.active_fraction = h.value("active_fraction", 1.0);
            for (const auto& r : h.value("results", json::array())) {
                e.results.push_back({r.value("sweep", ""), r.at("cpu_time").get<double>(),
                                     r.value("flops_estimate", 0.0), r.value("completed_at", 0.0)});
            }
            if (e.last_contact < e.first_contact) {
                throw ConfigError("host " + e.host_id + " has last_contact before first_contact");
            }
            log.hosts.push_back(std::move(e));
        }
        return log;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad host log: ") + e.what());
    }
}

void save_host_log(const HostLog& log, const std::string& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << host_log_to_json(log);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
}

HostLog load_host_log(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot read host log " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return host_log_from_json(ss.str());
}

FactorSet estimate_factors(const HostLog& log, double duration_days, const EstimateOptions& opts)
{
    if (!(duration_days > 0.0)) {
        throw std::domain_error("project duration must be positive");
    }
    if (log.hosts.empty()) {
        throw std::domain_error("cannot estimate factors from an empty host log");
    }
    const double n = static_cast<double>(log.hosts.size());
    FactorSet f;
    f.x_arrival = n / duration_days;

    double exposure = 0.0, ncpus = 0.0, flops = 0.0, on = 0.0, active = 0.0, eff = 0.0;
    std::size_t departed = 0, eff_hosts = 0;
    for (const auto& h : log.hosts) {
        exposure += h.life();
        if (log.exported_at - h.last_contact >= opts.departed_after) {
            ++departed;
        }
        ncpus += h.ncpus;
        flops += h.benchmark_flops / 1e9;
        on += h.on_fraction;
        active += h.active_fraction;

        double work = 0.0, cpu = 0.0;
        for (const auto& r : h.results) {
            work += r.flops_estimate;
            cpu += r.cpu_time;
        }
        if (cpu > 0.0 && h.benchmark_flops > 0.0) {
            eff += (work / cpu) / h.benchmark_flops;
            ++eff_hosts;
        }
    }
    exposure /= kSecondsPerDay;
    f.x_life = departed ? exposure / static_cast<double>(departed) : exposure / n;
    f.x_ncpus = ncpus / n;
    f.x_flops = flops / n;
    f.x_onfrac = on / n;
    f.x_active = active / n;
    f.x_eff = eff_hosts ? eff / static_cast<double>(eff_hosts) : 1.0;
    f.x_redundancy = opts.redundancy;
    f.x_share = opts.share;
    return f;
}

std::optional<double> SweepRow::acc() const
{
    if (!(t_b > 0.0)) {
        return std::nullopt;
    }
    return speedup(t_seq, t_b);
}

namespace {

std::string opt(const std::optional<double>& v, const char* spec)
{
    return v ? fmt::format(fmt::runtime(spec), *v) : std::string();
}

} // namespace

std::string report_csv(const std::vector<SweepRow>& rows)
{
    if (rows.empty()) {
        return {};
    }
    std::string out = "sweep,runs,perfect,t_seq_s,t_b_s,acc,cp_gflops,mean_run_s\n";
    for (const auto& r : rows) {
        out += fmt::format("{},{},{},{:.3f},{:.3f},{},{},{:.3f}\n", r.sweep, r.runs, r.perfect, r.t_seq, r.t_b,
                           opt(r.acc(), "{:.4f}"), opt(r.cp, "{:.4g}"), r.mean_run());
    }
    return out;
}

std::string report_text(const std::vector<SweepRow>& rows)
{
    if (rows.empty()) {
        return {};
    }
    std::vector<std::vector<std::string>> cells{
        {"Sweep", "Runs", "Perfect", "T_seq", "T_B", "Acc.", "CP", "Mean run"}};
    for (const auto& r : rows) {
        cells.push_back({r.sweep, std::to_string(r.runs), std::to_string(r.perfect), fmt::format("{:.0f}s", r.t_seq),
                         fmt::format("{:.0f}s", r.t_b), opt(r.acc(), "{:.2f}"), opt(r.cp, "{:.4g} GFLOPS"),
                         fmt::format("{:.2f}s", r.mean_run())});
    }
    std::vector<std::size_t> width(cells[0].size(), 0);
    for (const auto& row : cells) {
        for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
    }
    std::string out;
    for (const auto& row : cells) {
        std::string line;
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) line += "  ";
            line += i == 0 ? fmt::format("{:<{}}", row[i], width[i]) : fmt::format("{:>{}}", row[i], width[i]);
        }
        out += line + "\n";
    }
    return out;
}

} // namespace voluntier::metrics
