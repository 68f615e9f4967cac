#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "voluntier/metrics/metrics.hpp"

namespace voluntier::churnsim {

/// Host population and server policy for one simulation. Times are in days,
/// speeds in FLOPS, work in FLOP.
struct ChurnConfig {
    double arrival_rate = 100.0; // hosts/day, Poisson
    double mean_life = 1.0;      // exponential
    // Hosts present at t=0. -1 seeds the stationary population (Poisson with
    // mean arrival_rate * mean_life, residual lives exponential).
    std::int64_t initial_hosts = -1;
    std::uint32_t immortal_hosts = 0; // extra hosts that never leave
    double mean_on = 1.0;
    double mean_off = 0.0; // 0: always on
    double active_fraction = 1.0;
    double efficiency = 1.0;
    double flops_median = 1e9; // per cpu, log-normal
    double flops_sigma = 0.0;
    std::vector<std::pair<std::uint32_t, double>> ncpus{{1, 1.0}}; // value, weight
    double work_size = 1e12;
    double horizon = 10.0;
    std::uint64_t seed = 1;
    std::uint64_t total_wus = 0; // 0: unlimited supply

    std::uint32_t target_replicas = 1;
    std::uint32_t min_quorum = 1;
    std::uint32_t max_error_results = 3;
    double deadline = 2.0;
    double heartbeat_interval = 0.1;
    double heartbeat_timeout = 1.0;
    double transition_interval = 0.01;
    double retry_interval = 0.01;
    double corrupt_probability = 0.0;
    double sample_interval = 0.1;
    bool record_events = true;

    void validate() const;
    double mean_ncpus() const;
    double mean_flops() const;
    double on_fraction() const { return mean_off > 0.0 ? mean_on / (mean_on + mean_off) : 1.0; }
    // The nine factors implied by the configuration.
    metrics::FactorSet factors() const;

    static ChurnConfig parse(std::string_view text);
    static ChurnConfig load(const std::filesystem::path& path);
};

enum class EventKind { Arrival, Departure, TurnOn, TurnOff, Assign, Complete, Rejected, TimedOut, Lost, Abandon };

std::string_view to_string(EventKind k);

struct SimEvent {
    double t = 0.0; // seconds
    EventKind kind = EventKind::Arrival;
    std::uint32_t host = 0;
    std::uint64_t result = 0;
};

struct HostSample {
    double t = 0.0; // seconds
    std::uint32_t live = 0;
    std::uint32_t on = 0;
};

struct SimTrace {
    std::vector<SimEvent> events; // empty unless record_events
    std::vector<HostSample> samples;
    std::uint64_t completed_wus = 0; // distinct work units with a canonical result
    std::uint64_t failed_wus = 0;
    double useful_flop = 0.0;
    double wall_span = 0.0; // seconds
    std::uint64_t hosts_seen = 0;

    // Every issued replica ends in exactly one bucket; outstanding ones were
    // still running at the horizon.
    std::uint64_t issued = 0;
    std::uint64_t completed_replicas = 0;
    std::uint64_t lost = 0;
    std::uint64_t timed_out = 0;
    std::uint64_t outstanding = 0;
    // Work units whose canonical result came after at least one replica timed out or was lost.
    std::uint64_t reissued_completions = 0;

    double cp_gflops() const { return wall_span > 0.0 ? useful_flop / wall_span / 1e9 : 0.0; }

    void write_events_csv(std::ostream& out) const;
    void write_hosts_csv(std::ostream& out) const;
};

// Runs the real project server against a virtual host population.
SimTrace simulate(const ChurnConfig& cfg);

struct Comparison {
    double cp_formula = 0.0; // GFLOPS
    double cp_sim = 0.0;
    double ratio = 0.0;      // cp_sim / cp_formula
    SimTrace trace;
};

Comparison predicted_vs_simulated(const ChurnConfig& cfg);

} // namespace voluntier::churnsim
