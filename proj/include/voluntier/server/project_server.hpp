#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "voluntier/metrics/metrics.hpp"
#include "voluntier/proto/messages.hpp"
#include "voluntier/server/clock.hpp"
#include "voluntier/server/event_log.hpp"

namespace voluntier::server {

using proto::ResultId;

struct ServerConfig {
    double heartbeat_interval = 10.0;
    double heartbeat_timeout = 0.0; // 0: five heartbeat intervals
    double dead_threshold = 86400.0;
    // Drop work units and their results once they are over and nothing is in
    // flight. Long simulations use it; a project server keeps everything.
    bool purge_completed = false;

    double timeout() const { return heartbeat_timeout > 0.0 ? heartbeat_timeout : 5.0 * heartbeat_interval; }
};

struct LedgerEntry {
    std::string sweep;
    std::string wu_id;
    ResultId result_id = 0;
    std::string host_id;
    bool has_fitness = false;
    std::uint64_t hits = 0;
    std::uint64_t total_cases = 0;
    double raw = 0.0;
    double adjusted = 0.0;
    std::string best_tree;
    double cpu_time = 0.0;
    double completed_at = 0.0;
};

struct SweepAggregate {
    std::size_t runs = 0;
    std::size_t perfect = 0;
    double cpu_time = 0.0;
    std::uint64_t best_hits = 0;

    double mean_cpu_time() const { return runs ? cpu_time / static_cast<double>(runs) : 0.0; }
};

/// Receives each canonical result once. Returning false flags the work unit.
class Assimilator {
public:
    virtual ~Assimilator() = default;
    virtual bool assimilate(const proto::WorkUnit& wu, const proto::ResultRecord& canonical) = 0;
    virtual const SweepAggregate* aggregate(const std::string& /*sweep*/) const { return nullptr; }
};

// Parses GP result artifacts into a ledger. Wrapped work units are recorded
// without fitness.
class GpAssimilator final : public Assimilator {
public:
    bool assimilate(const proto::WorkUnit& wu, const proto::ResultRecord& canonical) override;
    const SweepAggregate* aggregate(const std::string& sweep) const override;
    const std::vector<LedgerEntry>& ledger() const noexcept { return ledger_; }

private:
    std::vector<LedgerEntry> ledger_;
    std::map<std::string, SweepAggregate> aggregates_;
};

class CountingAssimilator final : public Assimilator {
public:
    bool assimilate(const proto::WorkUnit&, const proto::ResultRecord&) override
    {
        ++count_;
        return true;
    }
    std::uint64_t count() const noexcept { return count_; }

private:
    std::uint64_t count_ = 0;
};

struct StateChange {
    enum class Kind { TimedOut, Reissue, Validated, NeedsMore, Failed, HostInactive };
    Kind kind;
    std::string wu_id;
    ResultId result_id = 0;
    std::string host_id;
};

std::string_view to_string(StateChange::Kind k);

struct WuEntry {
    proto::WorkUnit wu;
    std::uint64_t seq = 0;
    std::vector<ResultId> results; // ascending
    std::uint32_t wanted = 1;      // live replicas wanted: in flight plus uploaded
    bool failed = false;
    bool flagged = false; // canonical output rejected by the assimilator
};

struct SweepEntry {
    proto::SweepSpec spec;
    std::string spec_key; // canonical JSON, for idempotent resubmission
    double submitted_at = 0.0;
    std::vector<std::string> wu_ids;
    std::size_t over = 0;
    std::size_t failed = 0;
    std::size_t canonical = 0;
    double canonical_cpu_time = 0.0;
    double last_upload = 0.0;
    std::set<std::string> contributors; // hosts that uploaded a result
};

/// Project server state machine. Single-threaded; callers serialize access.
///
/// Time comes from the injected clock. With an event log attached every
/// mutating call is journaled after it succeeds, and the state is rebuilt by
/// replaying the journal on open.
class ProjectServer {
public:
    ProjectServer(const Clock& clock, ServerConfig cfg, std::optional<proto::KeyPair> keys = std::nullopt,
                  std::unique_ptr<Assimilator> assimilator = std::make_unique<GpAssimilator>());

    // Replays `path` and journals further calls to it. Holds the writer lock.
    void attach_log(const std::string& path, bool sync = true);
    // Replays a log someone else may be writing, without locking or journaling.
    void load_snapshot(const std::string& path);

    proto::Message handle(const proto::Message& m);

    std::string register_host(const proto::Register& m);
    // AssignWork or NoWork. Throws ProtocolError for an unknown host.
    proto::Message request_work(const std::string& host_id);
    proto::HeartbeatAck heartbeat(const proto::Heartbeat& m);
    proto::SubmitAck submit_result(const proto::SubmitResult& m);
    // Ids of newly created work units; empty when the identical spec was
    // already submitted. Throws ConfigError for a different spec reusing a name.
    std::vector<std::string> submit_sweep(const proto::SweepSpec& spec);
    std::vector<StateChange> transition();

    const std::map<std::string, WuEntry>& work_units() const noexcept { return wus_; }
    const std::map<ResultId, proto::ResultRecord>& results() const noexcept { return results_; }
    const std::map<std::string, proto::HostRecord>& hosts() const noexcept { return hosts_; }
    const std::map<std::string, SweepEntry>& sweeps() const noexcept { return sweeps_; }
    const Assimilator& assimilator() const noexcept { return *assimilator_; }
    const ServerConfig& config() const noexcept { return cfg_; }
    std::size_t unsent_count() const noexcept { return unsent_; }
    std::size_t in_flight_count() const noexcept { return in_flight_.size(); }
    std::uint64_t progress_regressions() const noexcept { return regressions_; }

    metrics::HostLog export_host_log() const;
    // T_seq, T_B, Acc and CP for one sweep; nullopt for an unknown sweep.
    std::optional<metrics::SweepRow> sweep_row(const std::string& sweep) const;

private:
    struct Counts {
        std::uint32_t in_flight = 0, uploaded = 0, errors = 0;
    };

    double now() const { return clock_->now(); }
    bool journaling() const noexcept { return log_ && !replaying_; }
    void journal(const char* op, nlohmann::json body);
    void replay(const std::vector<std::string>& records);
    void touch(const std::string& host_id);
    proto::SignedPayload signed_payload(const proto::InputRef& ref);
    Counts count(const WuEntry& e) const;
    void reconcile(WuEntry& e, std::vector<StateChange>* changes);
    void succeed(WuEntry& e, ResultId canonical, const std::set<ResultId>& group);
    void fail(WuEntry& e);
    void set_demand(WuEntry& e, bool wanted);
    void finish_in_flight(ResultId id);
    void maybe_purge(const std::string& wu_id);
    void record_upload(proto::ResultRecord& r, const proto::SubmitResult& m);

    const Clock* clock_;
    ManualClock replay_clock_;
    ServerConfig cfg_;
    std::optional<proto::KeyPair> keys_;
    std::unique_ptr<Assimilator> assimilator_;
    std::optional<EventLog> log_;
    bool replaying_ = false;

    std::map<std::string, proto::HostRecord> hosts_;
    std::uint64_t next_host_ = 1;
    std::map<std::string, WuEntry> wus_;
    std::uint64_t next_seq_ = 0;
    std::set<std::pair<std::uint64_t, std::string>> demand_;
    std::size_t unsent_ = 0;
    std::map<ResultId, proto::ResultRecord> results_;
    ResultId next_result_ = 1;
    std::set<ResultId> in_flight_;
    std::map<std::string, SweepEntry> sweeps_;
    std::map<std::string, proto::Payload> payloads_;
    std::map<std::string, proto::SignedPayload> signed_;
    std::uint64_t regressions_ = 0;
};

} // namespace voluntier::server
