#include "voluntier/server/project_server.hpp"

#include <algorithm>
#include <chrono>

#include "voluntier/common/digest.hpp"
#include "voluntier/errors.hpp"
#include "voluntier/gp/engine.hpp"

namespace voluntier::server {

using nlohmann::json;
using proto::ResultState;
using proto::WuState;

double SystemClock::now() const
{
    return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

std::string_view to_string(StateChange::Kind k)
{
    switch (k) {
    case StateChange::Kind::TimedOut: return "timed_out";
    case StateChange::Kind::Reissue: return "reissue";
    case StateChange::Kind::Validated: return "validated";
    case StateChange::Kind::NeedsMore: return "needs_more";
    case StateChange::Kind::Failed: return "failed";
    case StateChange::Kind::HostInactive: return "host_inactive";
    }
    return "?";
}

bool GpAssimilator::assimilate(const proto::WorkUnit& wu, const proto::ResultRecord& canonical)
{
    LedgerEntry e;
    e.sweep = wu.sweep;
    e.wu_id = wu.wu_id;
    e.result_id = canonical.result_id;
    e.host_id = canonical.host_id;
    e.cpu_time = canonical.cpu_time;
    e.completed_at = canonical.completed_at.value_or(0.0);
    if (wu.app_id == proto::AppId::EmbeddedGp) {
        gp::ArtifactSummary s;
        try {
            s = gp::parse_artifact(canonical.output);
        } catch (const ConfigError&) {
            return false;
        }
        e.has_fitness = true;
        e.hits = s.hits;
        e.total_cases = s.total_cases;
        e.raw = s.raw;
        e.adjusted = s.adjusted;
        e.best_tree = s.best_tree;
    }
    auto& agg = aggregates_[wu.sweep];
    ++agg.runs;
    agg.cpu_time += e.cpu_time;
    if (e.has_fitness) {
        agg.perfect += e.hits == e.total_cases ? 1 : 0;
        agg.best_hits = std::max(agg.best_hits, e.hits);
    }
    ledger_.push_back(std::move(e));
    return true;
}

const SweepAggregate* GpAssimilator::aggregate(const std::string& sweep) const
{
    auto it = aggregates_.find(sweep);
    return it == aggregates_.end() ? nullptr : &it->second;
}

ProjectServer::ProjectServer(const Clock& clock, ServerConfig cfg, std::optional<proto::KeyPair> keys,
                             std::unique_ptr<Assimilator> assimilator)
    : clock_(&clock), cfg_(cfg), keys_(std::move(keys)), assimilator_(std::move(assimilator))
{
}

void ProjectServer::attach_log(const std::string& path, bool sync)
{
    log_.emplace(EventLog::open_writer(path, sync));
    replay(log_->records());
}

void ProjectServer::load_snapshot(const std::string& path) { replay(EventLog::read_all(path)); }

void ProjectServer::replay(const std::vector<std::string>& records)
{
    const Clock* live = clock_;
    clock_ = &replay_clock_;
    replaying_ = true;
    struct Restore {
        ProjectServer* s;
        const Clock* c;
        ~Restore()
        {
            s->clock_ = c;
            s->replaying_ = false;
        }
    } restore{this, live};

    for (std::size_t i = 0; i < records.size(); ++i) {
        json ev;
        try {
            ev = json::parse(records[i]);
            replay_clock_.set(ev.at("t").get<double>());
            const auto op = ev.at("op").get<std::string>();
            const auto& body = ev.at("body");
            if (op == "register") {
                register_host(std::get<proto::Register>(proto::from_json(body)));
            } else if (op == "request_work") {
                request_work(body.at("host_id").get<std::string>());
            } else if (op == "heartbeat") {
                heartbeat(std::get<proto::Heartbeat>(proto::from_json(body)));
            } else if (op == "submit") {
                submit_result(std::get<proto::SubmitResult>(proto::from_json(body)));
            } else if (op == "sweep") {
                submit_sweep(proto::sweep_from_json(body));
            } else if (op == "transition") {
                transition();
            } else {
                throw ProtocolError("unknown event '" + op + "'");
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("event log record " + std::to_string(i) + " cannot be replayed: " + e.what());
        }
    }
}

void ProjectServer::journal(const char* op, json body)
{
    if (!log_ || replaying_) return;
    log_->append(json{{"t", now()}, {"op", op}, {"body", std::move(body)}}.dump());
}

void ProjectServer::touch(const std::string& host_id)
{
    auto it = hosts_.find(host_id);
    if (it == hosts_.end()) return;
    it->second.last_contact = std::max(it->second.last_contact, now());
    it->second.active = true;
}

proto::Message ProjectServer::handle(const proto::Message& m)
{
    try {
        if (auto* r = std::get_if<proto::Register>(&m)) return proto::RegisterAck{register_host(*r)};
        if (auto* r = std::get_if<proto::RequestWork>(&m)) return request_work(r->host_id);
        if (auto* r = std::get_if<proto::Heartbeat>(&m)) return heartbeat(*r);
        if (auto* r = std::get_if<proto::SubmitResult>(&m)) return submit_result(*r);
        if (auto* r = std::get_if<proto::SubmitSweep>(&m)) return proto::SubmitSweepAck{submit_sweep(r->spec)};
        return proto::ErrorReply{"unexpected message kind " + std::string(proto::kind_of(m))};
    } catch (const ProtocolError& e) {
        return proto::ErrorReply{e.what()};
    } catch (const ConfigError& e) {
        return proto::ErrorReply{e.what()};
    }
}

std::string ProjectServer::register_host(const proto::Register& m)
{
    std::string id = m.host_id;
    auto it = id.empty() ? hosts_.end() : hosts_.find(id);
    if (it == hosts_.end()) {
        id = "h" + std::to_string(next_host_++);
        proto::HostRecord h;
        h.host_id = id;
        h.first_contact = h.last_contact = now();
        it = hosts_.emplace(id, h).first;
    }
    auto& h = it->second;
    h.platform = m.platform;
    h.ncpus = m.ncpus;
    h.benchmark_flops = m.benchmark_flops;
    h.on_fraction = m.on_fraction;
    h.active_fraction = m.active_fraction;
    touch(id);
    if (journaling()) journal("register", proto::to_json(proto::Message{m}));
    return id;
}

proto::SignedPayload ProjectServer::signed_payload(const proto::InputRef& ref)
{
    auto it = signed_.find(ref.digest);
    if (it != signed_.end()) return it->second;
    const auto& p = payloads_.at(ref.digest);
    proto::SignedPayload s;
    if (keys_) {
        s = proto::sign(p.name, p.bytes, *keys_);
    } else {
        s.name = p.name;
        s.bytes = p.bytes;
        s.digest = ref.digest;
    }
    return signed_.emplace(ref.digest, std::move(s)).first->second;
}

proto::Message ProjectServer::request_work(const std::string& host_id)
{
    if (!hosts_.contains(host_id)) {
        throw ProtocolError("unregistered host '" + host_id + "'");
    }
    touch(host_id);

    WuEntry* pick = nullptr;
    for (const auto& [seq, id] : demand_) {
        auto& e = wus_.at(id);
        const bool seen = std::any_of(e.results.begin(), e.results.end(),
                                      [&](ResultId r) { return results_.at(r).host_id == host_id; });
        if (!seen) {
            pick = &e;
            break;
        }
    }
    if (!pick) {
        if (journaling()) journal("request_work", json{{"host_id", host_id}});
        return proto::NoWork{};
    }

    proto::ResultRecord r;
    r.result_id = next_result_++;
    r.wu_id = pick->wu.wu_id;
    r.host_id = host_id;
    r.assigned_at = r.last_heartbeat = now();
    results_.emplace(r.result_id, r);
    pick->results.push_back(r.result_id);
    in_flight_.insert(r.result_id);
    if (pick->wu.state == WuState::Unsent) {
        pick->wu.state = WuState::InProgress;
        --unsent_;
    }
    reconcile(*pick, nullptr);

    proto::AssignWork out;
    out.result_id = r.result_id;
    out.work_unit = pick->wu;
    for (const auto& ref : pick->wu.input_refs) {
        out.payloads.push_back(signed_payload(ref));
    }
    out.job = sweeps_.at(pick->wu.sweep).spec.job;
    if (journaling()) journal("request_work", json{{"host_id", host_id}});
    return out;
}

proto::HeartbeatAck ProjectServer::heartbeat(const proto::Heartbeat& m)
{
    touch(m.host_id);
    proto::HeartbeatAck ack;
    auto it = results_.find(m.result_id);
    if (it == results_.end()) {
        ack = {false, "unknown result " + std::to_string(m.result_id)};
    } else if (it->second.host_id != m.host_id) {
        ack = {false, "result belongs to another host"};
    } else if (it->second.state != ResultState::Assigned && it->second.state != ResultState::Running) {
        ack = {false, "result is " + std::string(proto::to_string(it->second.state))};
    } else {
        auto& r = it->second;
        if (m.progress_fraction < r.progress) {
            // a client restarted from its checkpoint
            ++regressions_;
            ack.warning = "progress regression";
        }
        r.state = ResultState::Running;
        r.last_heartbeat = now();
        r.progress = m.progress_fraction;
    }
    if (journaling()) journal("heartbeat", proto::to_json(proto::Message{m}));
    return ack;
}

void ProjectServer::record_upload(proto::ResultRecord& r, const proto::SubmitResult& m)
{
    r.state = ResultState::Uploaded;
    r.output = m.output;
    r.output_digest = sha256_hex(m.output);
    r.cpu_time = m.cpu_time;
    r.flops_estimate = m.flops_estimate;
    r.progress = 1.0;
    r.completed_at = now();
}

proto::SubmitAck ProjectServer::submit_result(const proto::SubmitResult& m)
{
    touch(m.host_id);
    auto reply = [&](proto::SubmitAck ack) {
        if (journaling()) journal("submit", proto::to_json(proto::Message{m}));
        return ack;
    };
    auto it = results_.find(m.result_id);
    if (it == results_.end()) return reply({false, "unknown result " + std::to_string(m.result_id)});
    auto& r = it->second;
    if (r.host_id != m.host_id) return reply({false, "result belongs to another host"});

    switch (r.state) {
    case ResultState::TimedOut:
        return reply({false, "result timed out"});
    case ResultState::Error:
        return reply({m.outcome == proto::Outcome::Error, "already reported"});
    case ResultState::Uploaded:
    case ResultState::Valid:
    case ResultState::Invalid: {
        const bool same = m.outcome == proto::Outcome::Success && sha256_hex(m.output) == r.output_digest;
        return reply({same, same ? "duplicate" : "already reported"});
    }
    case ResultState::Assigned:
    case ResultState::Running:
        break;
    }

    const std::string wu_id = r.wu_id;
    auto& e = wus_.at(wu_id);
    finish_in_flight(r.result_id);
    if (m.outcome == proto::Outcome::Error) {
        r.state = ResultState::Error;
        r.error_message = m.error_message;
        r.completed_at = now();
        reconcile(e, nullptr);
    } else if (e.wu.state == WuState::Over) {
        record_upload(r, m);
        // late replica: judged against the canonical output
        const auto& canon = e.wu.canonical_result_id;
        r.state = canon && results_.at(*canon).output_digest == r.output_digest ? ResultState::Valid
                                                                                 : ResultState::Invalid;
    } else {
        record_upload(r, m);
        auto& s = sweeps_.at(e.wu.sweep);
        s.last_upload = std::max(s.last_upload, now());
        s.contributors.insert(m.host_id);
        reconcile(e, nullptr);
    }
    maybe_purge(wu_id);
    return reply({true, ""});
}

std::vector<std::string> ProjectServer::submit_sweep(const proto::SweepSpec& spec)
{
    const auto key = proto::to_json(spec).dump();
    if (auto it = sweeps_.find(spec.name); it != sweeps_.end()) {
        if (it->second.spec_key == key) return {};
        throw ConfigError("sweep name '" + spec.name + "' is already used by a different spec");
    }
    auto ex = proto::expand_sweep(spec);
    for (const auto& wu : ex.work_units) {
        if (wus_.contains(wu.wu_id)) {
            throw ConfigError("work unit id '" + wu.wu_id + "' already exists");
        }
    }

    SweepEntry s;
    s.spec = spec;
    s.spec_key = key;
    s.submitted_at = now();
    for (auto& [digest, payload] : ex.payloads) {
        payloads_.try_emplace(digest, std::move(payload));
    }
    for (auto& wu : ex.work_units) {
        WuEntry e;
        e.seq = next_seq_++;
        e.wanted = wu.target_replicas;
        e.wu = std::move(wu);
        s.wu_ids.push_back(e.wu.wu_id);
        auto& placed = wus_.emplace(e.wu.wu_id, std::move(e)).first->second;
        ++unsent_;
        set_demand(placed, true);
    }
    auto ids = s.wu_ids;
    sweeps_.emplace(spec.name, std::move(s));
    if (journaling()) journal("sweep", proto::to_json(spec));
    return ids;
}

std::vector<StateChange> ProjectServer::transition()
{
    const double t = now();
    const double timeout = cfg_.timeout();
    std::vector<StateChange> changes;

    std::vector<ResultId> expired;
    for (ResultId id : in_flight_) {
        const auto& r = results_.at(id);
        const auto& wu = wus_.at(r.wu_id).wu;
        if (t - r.last_heartbeat > timeout || t - r.assigned_at > wu.deadline) {
            expired.push_back(id);
        }
    }
    for (ResultId id : expired) {
        auto& r = results_.at(id);
        r.state = ResultState::TimedOut;
        r.completed_at = t;
        finish_in_flight(id);
        changes.push_back({StateChange::Kind::TimedOut, r.wu_id, id, r.host_id});
        const std::string wu_id = r.wu_id;
        auto& e = wus_.at(wu_id);
        reconcile(e, &changes);
        if (demand_.contains({e.seq, wu_id})) {
            changes.push_back({StateChange::Kind::Reissue, wu_id, 0, ""});
        }
        maybe_purge(wu_id);
    }

    for (auto& [id, h] : hosts_) {
        if (h.active && t - h.last_contact >= cfg_.dead_threshold) {
            h.active = false;
            changes.push_back({StateChange::Kind::HostInactive, "", 0, id});
        }
    }
    if (journaling()) journal("transition", json::object());
    return changes;
}

ProjectServer::Counts ProjectServer::count(const WuEntry& e) const
{
    Counts c;
    for (ResultId id : e.results) {
        switch (results_.at(id).state) {
        case ResultState::Assigned:
        case ResultState::Running: ++c.in_flight; break;
        case ResultState::Uploaded: ++c.uploaded; break;
        case ResultState::Error:
        case ResultState::TimedOut: ++c.errors; break;
        case ResultState::Valid:
        case ResultState::Invalid: break;
        }
    }
    return c;
}

void ProjectServer::reconcile(WuEntry& e, std::vector<StateChange>* changes)
{
    if (e.wu.state == WuState::Over) {
        set_demand(e, false);
        return;
    }
    const Counts c = count(e);

    // Byte-identical groups; the largest wins, ties go to the lowest result id.
    std::map<std::string, std::set<ResultId>> groups;
    for (ResultId id : e.results) {
        const auto& r = results_.at(id);
        if (r.state == ResultState::Uploaded) groups[r.output_digest].insert(id);
    }
    const std::set<ResultId>* best = nullptr;
    for (const auto& [digest, ids] : groups) {
        if (!best || ids.size() > best->size() || (ids.size() == best->size() && *ids.begin() < *best->begin())) {
            best = &ids;
        }
    }
    const std::uint32_t largest = best ? static_cast<std::uint32_t>(best->size()) : 0;
    const std::uint32_t error_count = c.errors + (c.uploaded - largest);

    // Decided only once nothing is in flight, so arrival order cannot matter.
    if (largest >= e.wu.min_quorum && c.in_flight == 0) {
        const ResultId canonical = *best->begin();
        const auto group = *best;
        succeed(e, canonical, group);
        if (changes) changes->push_back({StateChange::Kind::Validated, e.wu.wu_id, canonical, ""});
        return;
    }
    if (error_count >= e.wu.max_error_results) {
        fail(e);
        if (changes) changes->push_back({StateChange::Kind::Failed, e.wu.wu_id, 0, ""});
        return;
    }
    if (c.in_flight == 0 && c.uploaded > 0 && c.uploaded >= e.wanted) {
        e.wanted = c.uploaded + 1;
        if (changes) changes->push_back({StateChange::Kind::NeedsMore, e.wu.wu_id, 0, ""});
    }
    const bool need = c.in_flight + c.uploaded < e.wanted;
    const std::size_t cap = std::size_t{e.wu.target_replicas} + e.wu.max_error_results;
    if (need && e.results.size() >= cap) {
        set_demand(e, false);
        if (c.in_flight == 0) {
            fail(e);
            if (changes) changes->push_back({StateChange::Kind::Failed, e.wu.wu_id, 0, ""});
        }
        return;
    }
    set_demand(e, need);
}

void ProjectServer::succeed(WuEntry& e, ResultId canonical, const std::set<ResultId>& group)
{
    for (ResultId id : e.results) {
        auto& r = results_.at(id);
        if (r.state == ResultState::Uploaded) {
            r.state = group.contains(id) ? ResultState::Valid : ResultState::Invalid;
        }
    }
    e.wu.state = WuState::Over;
    e.wu.canonical_result_id = canonical;
    set_demand(e, false);
    auto& s = sweeps_.at(e.wu.sweep);
    ++s.over;
    ++s.canonical;
    const auto& rec = results_.at(canonical);
    s.canonical_cpu_time += rec.cpu_time;
    if (!assimilator_->assimilate(e.wu, rec)) {
        e.flagged = true;
    }
}

void ProjectServer::fail(WuEntry& e)
{
    for (ResultId id : e.results) {
        auto& r = results_.at(id);
        if (r.state == ResultState::Uploaded) r.state = ResultState::Invalid;
    }
    e.wu.state = WuState::Over;
    e.failed = true;
    set_demand(e, false);
    auto& s = sweeps_.at(e.wu.sweep);
    ++s.over;
    ++s.failed;
}

void ProjectServer::set_demand(WuEntry& e, bool wanted)
{
    if (wanted) {
        demand_.insert({e.seq, e.wu.wu_id});
    } else {
        demand_.erase({e.seq, e.wu.wu_id});
    }
}

void ProjectServer::finish_in_flight(ResultId id) { in_flight_.erase(id); }

void ProjectServer::maybe_purge(const std::string& wu_id)
{
    if (!cfg_.purge_completed) return;
    auto it = wus_.find(wu_id);
    if (it == wus_.end() || it->second.wu.state != WuState::Over) return;
    for (ResultId id : it->second.results) {
        if (in_flight_.contains(id)) return;
    }
    for (ResultId id : it->second.results) results_.erase(id);
    wus_.erase(it);
}

metrics::HostLog ProjectServer::export_host_log() const
{
    metrics::HostLog log;
    log.exported_at = now();
    std::map<std::string, std::size_t> index;
    for (const auto& [id, h] : hosts_) {
        metrics::HostLogEntry e;
        e.host_id = id;
        e.platform = std::string(proto::to_string(h.platform));
        e.ncpus = h.ncpus;
        e.benchmark_flops = h.benchmark_flops;
        e.first_contact = h.first_contact;
        e.last_contact = h.last_contact;
        e.on_fraction = h.on_fraction;
        e.active_fraction = h.active_fraction;
        index[id] = log.hosts.size();
        log.hosts.push_back(std::move(e));
    }
    for (const auto& [rid, r] : results_) {
        if (r.state != ResultState::Uploaded && r.state != ResultState::Valid && r.state != ResultState::Invalid) {
            continue;
        }
        auto it = index.find(r.host_id);
        if (it == index.end()) continue;
        auto wu = wus_.find(r.wu_id);
        log.hosts[it->second].results.push_back({wu == wus_.end() ? std::string() : wu->second.wu.sweep, r.cpu_time,
                                                 r.flops_estimate, r.completed_at.value_or(0.0)});
    }
    return log;
}

std::optional<metrics::SweepRow> ProjectServer::sweep_row(const std::string& sweep) const
{
    auto it = sweeps_.find(sweep);
    if (it == sweeps_.end()) return std::nullopt;
    const auto& s = it->second;

    metrics::SweepRow row;
    row.sweep = sweep;
    row.runs = s.canonical;
    row.t_seq = s.canonical_cpu_time;
    if (const auto* agg = assimilator_->aggregate(sweep)) {
        row.perfect = agg->perfect;
    }
    if (s.contributors.empty()) return row;

    double first_registration = now();
    for (const auto& h : s.contributors) {
        first_registration = std::min(first_registration, hosts_.at(h).first_contact);
    }
    const double start = std::max(s.submitted_at, first_registration);
    row.t_b = std::max(0.0, s.last_upload - start);
    if (!(row.t_b > 0.0)) return row;

    // Computing power over the hosts that worked on this sweep, clipped to its span.
    auto full = export_host_log();
    metrics::HostLog log;
    log.exported_at = s.last_upload;
    for (auto& h : full.hosts) {
        if (!s.contributors.contains(h.host_id)) continue;
        h.first_contact = std::clamp(h.first_contact, start, s.last_upload);
        h.last_contact = std::clamp(h.last_contact, h.first_contact, s.last_upload);
        std::erase_if(h.results, [&](const metrics::HostResult& r) { return r.sweep != sweep; });
        log.hosts.push_back(std::move(h));
    }
    metrics::EstimateOptions opts;
    opts.redundancy = 1.0 / static_cast<double>(s.spec.target_replicas);
    opts.departed_after = cfg_.dead_threshold;
    row.cp = metrics::computing_power(
        metrics::estimate_factors(log, row.t_b / metrics::kSecondsPerDay, opts));
    return row;
}

} // namespace voluntier::server
