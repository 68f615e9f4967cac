#pragma once

#include <optional>
#include <string>
#include <vector>

namespace voluntier::metrics {

constexpr double kSecondsPerDay = 86400.0;

// A = T_seq / T_B. Throws std::domain_error for t_b <= 0 or t_seq < 0.
double speedup(double t_seq, double t_b);

struct FactorSet {
    double x_arrival = 1.0; // hosts per day
    double x_life = 1.0;    // days
    double x_ncpus = 1.0;
    double x_flops = 1.0;   // GFLOPS per cpu
    double x_eff = 1.0;
    double x_onfrac = 1.0;
    double x_active = 1.0;
    double x_redundancy = 1.0;
    double x_share = 1.0;
};

// Product of all nine factors, in GFLOPS. Throws std::domain_error on a negative
// or non-finite factor.
double computing_power(const FactorSet& f);

struct HostResult {
    std::string sweep;
    double cpu_time = 0.0;       // seconds
    double flops_estimate = 0.0; // operations performed
    double completed_at = 0.0;
};

struct HostLogEntry {
    std::string host_id;
    std::string platform;
    unsigned ncpus = 1;
    double benchmark_flops = 1e9;
    double first_contact = 0.0; // seconds
    double last_contact = 0.0;
    double on_fraction = 1.0;
    double active_fraction = 1.0;
    std::vector<HostResult> results;

    double life() const { return last_contact - first_contact; }
};

struct HostLog {
    double exported_at = 0.0; // project end for censoring, seconds
    std::vector<HostLogEntry> hosts;
};

std::string host_log_to_json(const HostLog& log);
HostLog host_log_from_json(const std::string& text); // throws ConfigError
void save_host_log(const HostLog& log, const std::string& path);
HostLog load_host_log(const std::string& path);

struct EstimateOptions {
    double redundancy = 1.0;
    double share = 1.0;
    double departed_after = kSecondsPerDay; // silence that counts as departure
};

/// Factor estimates from a host log.
///   x_arrival  hosts / duration
///   x_life     exponential MLE: total observed life (first to last contact)
///              over the number of departed hosts; the plain mean when no host
///              has departed yet
///   x_ncpus, x_flops, x_onfrac, x_active  host means
///   x_eff      mean over hosts of (sum flops_estimate / sum cpu_time) / benchmark,
///              1 when no host reported work
/// Throws std::domain_error for duration <= 0 or an empty log.
FactorSet estimate_factors(const HostLog& log, double duration_days, const EstimateOptions& opts = {});

struct SweepRow {
    std::string sweep;
    std::size_t runs = 0;
    std::size_t perfect = 0;
    double t_seq = 0.0; // seconds, sum of per-run cpu time
    double t_b = 0.0;   // seconds, wall span
    std::optional<double> cp; // GFLOPS
    double mean_run() const { return runs ? t_seq / static_cast<double>(runs) : 0.0; }
    std::optional<double> acc() const;
};

std::string report_csv(const std::vector<SweepRow>& rows);
std::string report_text(const std::vector<SweepRow>& rows);

} // namespace voluntier::metrics
