#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "voluntier/proto/messages.hpp"
#include "voluntier/proto/net.hpp"

namespace voluntier::client {

struct ClientConfig {
    proto::Endpoint server;
    std::string public_key; // raw 32 bytes
    std::filesystem::path data_dir = "client-data";
    double heartbeat_interval = 10.0;
    double backoff_base = 2.0;
    double backoff_cap = 60.0;
    std::optional<double> benchmark_flops; // measured at start when absent
    std::uint32_t ncpus = 1;
    double on_fraction = 1.0;
    double active_fraction = 1.0;
    std::uint32_t checkpoint_generations = 10;
    double checkpoint_seconds = 60.0;
    double request_timeout = 30.0;
    std::optional<std::uint64_t> max_results; // exit after this many submissions
    std::optional<std::uint32_t> exit_after_idle; // exit after this many NoWork replies in a row

    // JSON file; a relative data_dir is taken relative to the file.
    static ClientConfig load(const std::filesystem::path& path);
};

class Transport {
public:
    virtual ~Transport() = default;
    // Throws proto::TransportError when the server cannot be reached.
    virtual proto::Message exchange(const proto::Message& request) = 0;
};

class TcpTransport final : public Transport {
public:
    TcpTransport(proto::Endpoint to, double timeout) : to_(std::move(to)), timeout_(timeout) {}
    proto::Message exchange(const proto::Message& request) override
    {
        return proto::exchange(to_, request, timeout_);
    }

private:
    proto::Endpoint to_;
    double timeout_;
};

// Shared between the running task and the heartbeat sender.
class ProgressCell {
public:
    void store(double v) { v_.store(v, std::memory_order_relaxed); }
    double load() const { return v_.load(std::memory_order_relaxed); }

private:
    std::atomic<double> v_{0.0};
};

struct ExecOutcome {
    bool ok = false;
    std::string output;
    double cpu_time = 0.0;
    double flops_estimate = 0.0;
    std::string error;
};

// Runs the GP payload of an embedded work unit, checkpointing into slot_dir.
// `interrupt` is handed to run_gp (tests use it to stop mid-run).
ExecOutcome execute_embedded(const proto::AssignWork& work, const std::filesystem::path& slot_dir,
                             ProgressCell& progress, std::uint32_t checkpoint_generations = 10,
                             double checkpoint_seconds = 60.0,
                             std::function<bool(std::uint32_t)> interrupt = {});

struct WrapperOptions {
    double wall_cap = 7200.0;     // seconds before the program is killed
    double poll_interval = 0.05;
    double benchmark_flops = 1e9; // turns cpu seconds into a FLOP estimate
};

/// Runs an unmodified program in slot_dir:
///   1. writes the payload files and unpacks .tar/.tgz/.tar.gz inputs once
///   2. launches it, adding resume_args and the checkpoint path if the
///      checkpoint file exists
///   3. waits for the solution file
///   4. collects the declared outputs
/// Each action is appended to `trace` ("unpack:<name>", "launch:fresh",
/// "launch:resume:<ckpt>", "wait-solution", "solution-found", "copy-output:<name>",
/// "complete", or a failure step).
ExecOutcome execute_wrapped(const proto::JobDescriptor& job, const std::map<std::string, std::string>& files,
                            const std::vector<std::string>& wu_args, const std::filesystem::path& slot_dir,
                            ProgressCell& progress, const WrapperOptions& opts,
                            std::vector<std::string>* trace = nullptr);

// Multiply-add throughput of this core, in FLOPS.
double measure_flops(double seconds = 0.1);

using Sleeper = std::function<void(double seconds)>;

/// The volunteer work loop. One task at a time; host id, the current
/// assignment and an unsent result live in data_dir/state.json so a restarted
/// client picks up where it stopped.
class Client {
public:
    Client(ClientConfig cfg, std::unique_ptr<Transport> transport, Sleeper sleeper = {});

    // Until stop(), max_results or exit_after_idle.
    void run();
    // One cycle; true if a result was submitted.
    bool step();
    void stop();

    const std::string& host_id() const noexcept { return host_id_; }
    std::uint64_t submitted() const noexcept { return submitted_; }
    // What the loop did, in order ("register:h1", "assigned:4", "refused:4", "submit:4:accepted", ...).
    const std::vector<std::string>& events() const noexcept { return events_; }
    // Handed to embedded runs; returning true abandons the run as if the process died.
    void set_interrupt(std::function<bool(std::uint32_t)> f) { interrupt_ = std::move(f); }

private:
    void load_state();
    void save_state();
    void ensure_registered();
    void backoff(std::uint32_t attempt);
    void sleep_for(double seconds);
    proto::Message call(const proto::Message& m);
    proto::SubmitResult execute(const proto::AssignWork& work);
    void submit_pending();
    std::filesystem::path slot(proto::ResultId id) const;

    ClientConfig cfg_;
    std::unique_ptr<Transport> transport_;
    Sleeper sleeper_;
    double benchmark_ = 1e9;
    std::string host_id_;
    std::optional<proto::AssignWork> current_;
    std::optional<proto::SubmitResult> pending_;
    std::uint32_t idle_ = 0;
    std::uint64_t submitted_ = 0;
    std::vector<std::string> events_;
    std::function<bool(std::uint32_t)> interrupt_;
    std::atomic<bool> stopping_{false};
    std::mutex sleep_mutex_;
    std::condition_variable sleep_cv_;
};

} // namespace voluntier::client
