#include "voluntier/churnsim/churnsim.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_map>

#include "voluntier/common/keyvalue.hpp"
#include "voluntier/errors.hpp"
#include "voluntier/gp/rng.hpp"
#include "voluntier/server/project_server.hpp"

namespace voluntier::churnsim {

namespace {

constexpr double kDay = metrics::kSecondsPerDay;

void require(bool ok, const std::string& what)
{
    if (!ok) throw ConfigError("churn config: " + what);
}

} // namespace

void ChurnConfig::validate() const
{
    require(horizon > 0.0, "horizon must be positive");
    require(arrival_rate >= 0.0, "arrival_rate must be non-negative");
    require(arrival_rate > 0.0 || initial_hosts > 0 || immortal_hosts > 0, "no hosts");
    require(mean_life > 0.0, "mean_life must be positive");
    require(mean_on > 0.0, "mean_on must be positive");
    require(mean_off >= 0.0, "mean_off must be non-negative");
    require(active_fraction > 0.0 && active_fraction <= 1.0, "active_fraction must be in (0,1]");
    require(efficiency > 0.0 && efficiency <= 1.0, "efficiency must be in (0,1]");
    require(flops_median > 0.0 && flops_sigma >= 0.0, "flops distribution");
    require(!ncpus.empty(), "ncpus distribution is empty");
    for (const auto& [n, w] : ncpus) require(n >= 1 && w > 0.0, "ncpus entries need n >= 1 and weight > 0");
    require(work_size > 0.0, "work_size must be positive");
    require(target_replicas >= 1 && min_quorum >= 1 && min_quorum <= target_replicas, "quorum");
    require(max_error_results >= 1, "max_error_results must be at least 1");
    require(deadline > 0.0 && heartbeat_interval > 0.0 && heartbeat_timeout > 0.0, "timeouts must be positive");
    require(transition_interval > 0.0 && retry_interval > 0.0 && sample_interval > 0.0, "intervals must be positive");
    require(corrupt_probability >= 0.0 && corrupt_probability <= 1.0, "corrupt_probability must be in [0,1]");
}

double ChurnConfig::mean_ncpus() const
{
    double total = 0.0, weighted = 0.0;
    for (const auto& [n, w] : ncpus) {
        total += w;
        weighted += w * n;
    }
    return weighted / total;
}

double ChurnConfig::mean_flops() const
{
    return flops_median * std::exp(flops_sigma * flops_sigma / 2.0);
}

metrics::FactorSet ChurnConfig::factors() const
{
    metrics::FactorSet f;
    // arrival x life is the expected live host count
    if (arrival_rate > 0.0) {
        f.x_arrival = arrival_rate + immortal_hosts / mean_life;
        f.x_life = mean_life;
    } else {
        f.x_arrival = immortal_hosts + static_cast<double>(std::max<std::int64_t>(initial_hosts, 0));
        f.x_life = 1.0;
    }
    f.x_ncpus = mean_ncpus();
    f.x_flops = mean_flops() / 1e9;
    f.x_eff = efficiency;
    f.x_onfrac = on_fraction();
    f.x_active = active_fraction;
    f.x_redundancy = 1.0 / target_replicas;
    f.x_share = 1.0;
    return f;
}

ChurnConfig ChurnConfig::parse(std::string_view text)
{
    auto kv = KeyValues::parse(text);
    ChurnConfig c;
    auto num = [&](const char* k, double& into) {
        if (auto v = kv.number(k)) into = *v;
    };
    auto u32 = [&](const char* k, std::uint32_t& into) {
        if (auto v = kv.integer(k)) into = static_cast<std::uint32_t>(*v);
    };
    num("arrival_rate", c.arrival_rate);
    num("mean_life", c.mean_life);
    if (auto v = kv.text("initial_hosts")) {
        if (*v == "steady") {
            c.initial_hosts = -1;
        } else {
            std::int64_t n = 0;
            try {
                n = std::stoll(*v);
            } catch (const std::exception&) {
                throw ConfigError("churn config: initial_hosts must be an integer or 'steady'");
            }
            require(n >= 0, "initial_hosts must be non-negative");
            c.initial_hosts = n;
        }
    }
    u32("immortal_hosts", c.immortal_hosts);
    num("mean_on", c.mean_on);
    num("mean_off", c.mean_off);
    num("active_fraction", c.active_fraction);
    num("efficiency", c.efficiency);
    num("flops_median", c.flops_median);
    num("flops_sigma", c.flops_sigma);
    if (auto v = kv.text("ncpus")) {
        c.ncpus.clear();
        std::stringstream in(*v);
        std::string item;
        while (std::getline(in, item, ',')) {
            const auto colon = item.find(':');
            try {
                const auto n = static_cast<std::uint32_t>(std::stoul(item.substr(0, colon)));
                const double w = colon == std::string::npos ? 1.0 : std::stod(item.substr(colon + 1));
                c.ncpus.emplace_back(n, w);
            } catch (const std::exception&) {
                throw ConfigError("churn config: bad ncpus entry '" + item + "'");
            }
        }
    }
    num("work_size", c.work_size);
    num("horizon", c.horizon);
    if (auto v = kv.integer("seed")) c.seed = *v;
    if (auto v = kv.integer("total_wus")) c.total_wus = *v;
    u32("target_replicas", c.target_replicas);
    u32("min_quorum", c.min_quorum);
    u32("max_error_results", c.max_error_results);
    num("deadline", c.deadline);
    num("heartbeat_interval", c.heartbeat_interval);
    num("heartbeat_timeout", c.heartbeat_timeout);
    num("transition_interval", c.transition_interval);
    num("retry_interval", c.retry_interval);
    num("corrupt_probability", c.corrupt_probability);
    num("sample_interval", c.sample_interval);
    if (auto v = kv.flag("record_events")) c.record_events = *v;
    kv.finish();
    c.validate();
    return c;
}

ChurnConfig ChurnConfig::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string_view to_string(EventKind k)
{
    switch (k) {
    case EventKind::Arrival: return "arrival";
    case EventKind::Departure: return "departure";
    case EventKind::TurnOn: return "on";
    case EventKind::TurnOff: return "off";
    case EventKind::Assign: return "assign";
    case EventKind::Complete: return "complete";
    case EventKind::Rejected: return "rejected";
    case EventKind::TimedOut: return "timed-out";
    case EventKind::Lost: return "lost";
    case EventKind::Abandon: return "abandon";
    }
    return "?";
}

void SimTrace::write_events_csv(std::ostream& out) const
{
    out << "t_days,event,host,result\n";
    for (const auto& e : events) out << e.t / kDay << ',' << to_string(e.kind) << ',' << e.host << ',' << e.result << '\n';
}

void SimTrace::write_hosts_csv(std::ostream& out) const
{
    out << "t_days,live,on\n";
    for (const auto& s : samples) out << s.t / kDay << ',' << s.live << ',' << s.on << '\n';
}

namespace {

enum class Tick { Arrive, Depart, Flip, Complete, Heartbeat, Retry, Transition, Sample };

struct Pending {
    double t;
    std::uint64_t seq;
    Tick tick;
    std::uint32_t host;
    std::uint32_t cpu;
    std::uint64_t token;

    bool operator>(const Pending& o) const { return t != o.t ? t > o.t : seq > o.seq; }
};

struct Worker {
    bool busy = false;
    std::uint64_t rid = 0;
    std::string wu_id;
    double remaining = 0.0;
    double since = 0.0;
    std::uint64_t token = 0;
};

struct Host {
    std::string id;
    bool alive = true;
    bool on = true;
    double rate = 0.0; // FLOP/s while on
    std::uint64_t flip_token = 0;
    std::vector<Worker> workers;
};

enum class Fate : std::uint8_t { Open, Completed, Lost, TimedOut };

class Simulation {
public:
    explicit Simulation(const ChurnConfig& cfg)
        : cfg_(cfg), rng_(cfg.seed), server_(clock_, server_config(cfg), std::nullopt,
                                             std::make_unique<server::CountingAssimilator>())
    {
    }

    SimTrace run()
    {
        const double horizon = cfg_.horizon * kDay;
        if (cfg_.total_wus > 0) submit_batch(cfg_.total_wus);

        for (std::uint32_t i = 0; i < cfg_.immortal_hosts; ++i) spawn(0.0, true, false);
        std::uint64_t initial = cfg_.initial_hosts >= 0 ? static_cast<std::uint64_t>(cfg_.initial_hosts)
                                                        : poisson(cfg_.arrival_rate * cfg_.mean_life);
        for (std::uint64_t i = 0; i < initial; ++i) spawn(0.0, false, true);
        if (cfg_.arrival_rate > 0.0) push(exponential(kDay / cfg_.arrival_rate), Tick::Arrive, 0, 0, 0);
        push(cfg_.transition_interval * kDay, Tick::Transition, 0, 0, 0);
        push(0.0, Tick::Sample, 0, 0, 0);

        while (!queue_.empty() && !finished()) {
            const Pending p = queue_.top();
            if (p.t > horizon) break;
            queue_.pop();
            now_ = p.t;
            clock_.set(now_);
            dispatch(p);
        }

        const bool all_done = cfg_.total_wus > 0 && finished();
        trace_.wall_span = all_done ? last_completion_ : horizon;
        trace_.completed_wus = completions();
        trace_.useful_flop = static_cast<double>(trace_.completed_wus) * cfg_.work_size;
        for (const auto& [name, s] : server_.sweeps()) trace_.failed_wus += s.failed;
        trace_.outstanding = open_.size();
        trace_.hosts_seen = hosts_.size();
        return std::move(trace_);
    }

private:
    static server::ServerConfig server_config(const ChurnConfig& c)
    {
        server::ServerConfig s;
        s.heartbeat_interval = c.heartbeat_interval * kDay;
        s.heartbeat_timeout = c.heartbeat_timeout * kDay;
        s.purge_completed = true;
        return s;
    }

    std::uint64_t completions() const
    {
        return static_cast<const server::CountingAssimilator&>(server_.assimilator()).count();
    }

    bool finished() const
    {
        if (cfg_.total_wus == 0) return false;
        std::uint64_t over = 0;
        for (const auto& [name, s] : server_.sweeps()) over += s.over;
        return over >= cfg_.total_wus;
    }

    double exponential(double mean) { return -mean * std::log(1.0 - rng_.uniform()); }

    std::uint64_t poisson(double mean)
    {
        std::uint64_t n = 0;
        for (double t = exponential(1.0); t < mean; t += exponential(1.0)) ++n;
        return n;
    }

    double normal()
    {
        const double u1 = 1.0 - rng_.uniform();
        const double u2 = rng_.uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint32_t draw_ncpus()
    {
        double total = 0.0;
        for (const auto& [n, w] : cfg_.ncpus) total += w;
        double x = rng_.uniform() * total;
        for (const auto& [n, w] : cfg_.ncpus) {
            if (x < w) return n;
            x -= w;
        }
        return cfg_.ncpus.back().first;
    }

    void push(double t, Tick tick, std::uint32_t host, std::uint32_t cpu, std::uint64_t token)
    {
        queue_.push({t, seq_++, tick, host, cpu, token});
    }

    void note(EventKind k, std::uint32_t host, std::uint64_t result = 0)
    {
        if (cfg_.record_events) trace_.events.push_back({now_, k, host, result});
    }

    void settle(std::uint64_t rid, Fate fate, const std::string& wu_id)
    {
        if (open_.erase(rid) == 0) return;
        switch (fate) {
        case Fate::Completed: ++trace_.completed_replicas; break;
        case Fate::Lost: ++trace_.lost; troubled_.insert(wu_id); break;
        case Fate::TimedOut: ++trace_.timed_out; troubled_.insert(wu_id); break;
        case Fate::Open: break;
        }
    }

    void submit_batch(std::uint64_t n)
    {
        proto::SweepSpec s;
        s.name = "batch" + std::to_string(batches_++);
        s.replicates = static_cast<std::uint32_t>(n);
        s.seed_base = 1 + issued_wus_;
        s.target_replicas = cfg_.target_replicas;
        s.min_quorum = cfg_.min_quorum;
        s.max_error_results = cfg_.max_error_results;
        s.deadline = cfg_.deadline * kDay;
        issued_wus_ += n;
        server_.submit_sweep(s);
    }

    void spawn(double t, bool immortal, bool stationary)
    {
        Host h;
        const std::uint32_t ncpus = draw_ncpus();
        const double flops = cfg_.flops_median * std::exp(cfg_.flops_sigma * normal());
        h.rate = flops * cfg_.efficiency * cfg_.active_fraction;
        h.workers.resize(ncpus);
        proto::Register reg;
        reg.ncpus = ncpus;
        reg.benchmark_flops = flops;
        reg.on_fraction = cfg_.on_fraction();
        reg.active_fraction = cfg_.active_fraction;
        h.id = server_.register_host(reg);
        const auto index = static_cast<std::uint32_t>(hosts_.size());
        ++live_;
        note(EventKind::Arrival, index);

        if (cfg_.mean_off > 0.0) {
            // stationary on/off phase; exponential periods make the residual a fresh draw
            h.on = !stationary || rng_.chance(cfg_.on_fraction());
            push(t + exponential((h.on ? cfg_.mean_on : cfg_.mean_off) * kDay), Tick::Flip, index, 0, 0);
        }
        if (!immortal) push(t + exponential(cfg_.mean_life * kDay), Tick::Depart, index, 0, 0);
        if (h.on) ++on_;
        hosts_.push_back(std::move(h));
        if (hosts_.back().on) {
            for (std::uint32_t c = 0; c < ncpus; ++c) request(index, c);
        }
    }

    void top_up()
    {
        if (cfg_.total_wus > 0) return;
        const std::size_t low = std::max<std::size_t>(256, 2 * live_);
        if (server_.unsent_count() < low) submit_batch(std::max<std::size_t>(1024, 4 * live_));
    }

    void schedule_work(std::uint32_t hi, std::uint32_t c)
    {
        auto& w = hosts_[hi].workers[c];
        w.since = now_;
        push(now_ + w.remaining / hosts_[hi].rate, Tick::Complete, hi, c, w.token);
        push(now_ + cfg_.heartbeat_interval * kDay, Tick::Heartbeat, hi, c, w.token);
    }

    void request(std::uint32_t hi, std::uint32_t c)
    {
        top_up();
        auto& h = hosts_[hi];
        auto& w = h.workers[c];
        ++w.token;
        const auto reply = server_.request_work(h.id);
        if (const auto* a = std::get_if<proto::AssignWork>(&reply)) {
            w.busy = true;
            w.rid = a->result_id;
            w.wu_id = a->work_unit.wu_id;
            w.remaining = cfg_.work_size;
            open_.insert(w.rid);
            ++trace_.issued;
            note(EventKind::Assign, hi, w.rid);
            schedule_work(hi, c);
        } else {
            w.busy = false;
            push(now_ + cfg_.retry_interval * kDay, Tick::Retry, hi, c, w.token);
        }
    }

    void complete(std::uint32_t hi, std::uint32_t c)
    {
        auto& h = hosts_[hi];
        auto& w = h.workers[c];
        proto::SubmitResult s;
        s.host_id = h.id;
        s.result_id = w.rid;
        s.output = rng_.chance(cfg_.corrupt_probability) ? "corrupt:" + std::to_string(w.rid) : "done:" + w.wu_id;
        s.cpu_time = cfg_.work_size / h.rate;
        s.flops_estimate = cfg_.work_size;
        const auto before = completions();
        const auto ack = server_.submit_result(s);
        if (ack.accepted) {
            settle(w.rid, Fate::Completed, w.wu_id);
            note(EventKind::Complete, hi, w.rid);
        } else {
            note(EventKind::Rejected, hi, w.rid);
        }
        if (completions() > before) {
            last_completion_ = now_;
            if (troubled_.erase(w.wu_id)) ++trace_.reissued_completions;
        }
        w.busy = false;
        request(hi, c);
    }

    void flip(std::uint32_t hi)
    {
        auto& h = hosts_[hi];
        h.on = !h.on;
        if (h.on) {
            ++on_;
            note(EventKind::TurnOn, hi);
            push(now_ + exponential(cfg_.mean_on * kDay), Tick::Flip, hi, 0, h.flip_token);
            for (std::uint32_t c = 0; c < h.workers.size(); ++c) {
                auto& w = h.workers[c];
                if (w.busy) {
                    ++w.token;
                    w.since = now_;
                    push(now_ + w.remaining / h.rate, Tick::Complete, hi, c, w.token);
                    beat(hi, c); // back online: report in at once
                } else {
                    request(hi, c);
                }
            }
        } else {
            --on_;
            note(EventKind::TurnOff, hi);
            push(now_ + exponential(cfg_.mean_off * kDay), Tick::Flip, hi, 0, h.flip_token);
            for (auto& w : h.workers) {
                if (w.busy) w.remaining = std::max(0.0, w.remaining - (now_ - w.since) * h.rate);
                ++w.token;
            }
        }
    }

    void beat(std::uint32_t hi, std::uint32_t c)
    {
        auto& h = hosts_[hi];
        auto& w = h.workers[c];
        const double left = std::max(0.0, w.remaining - (now_ - w.since) * h.rate);
        const auto ack = server_.heartbeat({h.id, w.rid, 1.0 - left / cfg_.work_size});
        if (ack.ok) {
            push(now_ + cfg_.heartbeat_interval * kDay, Tick::Heartbeat, hi, c, w.token);
            return;
        }
        note(EventKind::Abandon, hi, w.rid);
        w.busy = false;
        request(hi, c);
    }

    void depart(std::uint32_t hi)
    {
        auto& h = hosts_[hi];
        h.alive = false;
        --live_;
        if (h.on) --on_;
        ++h.flip_token;
        note(EventKind::Departure, hi);
        for (auto& w : h.workers) {
            if (w.busy) {
                note(EventKind::Lost, hi, w.rid);
                settle(w.rid, Fate::Lost, w.wu_id);
            }
            w.busy = false;
            ++w.token;
        }
    }

    void transition()
    {
        for (const auto& ch : server_.transition()) {
            if (ch.kind == server::StateChange::Kind::TimedOut && open_.contains(ch.result_id)) {
                note(EventKind::TimedOut, 0, ch.result_id);
                settle(ch.result_id, Fate::TimedOut, ch.wu_id);
            }
        }
        push(now_ + cfg_.transition_interval * kDay, Tick::Transition, 0, 0, 0);
    }

    void dispatch(const Pending& p)
    {
        switch (p.tick) {
        case Tick::Arrive:
            spawn(now_, false, true);
            push(now_ + exponential(kDay / cfg_.arrival_rate), Tick::Arrive, 0, 0, 0);
            return;
        case Tick::Transition: transition(); return;
        case Tick::Sample:
            trace_.samples.push_back({now_, live_, on_});
            push(now_ + cfg_.sample_interval * kDay, Tick::Sample, 0, 0, 0);
            return;
        default: break;
        }
        auto& h = hosts_[p.host];
        if (!h.alive) return;
        switch (p.tick) {
        case Tick::Depart: depart(p.host); return;
        case Tick::Flip:
            if (p.token == h.flip_token) flip(p.host);
            return;
        default: break;
        }
        auto& w = h.workers[p.cpu];
        if (!h.on || p.token != w.token) return;
        switch (p.tick) {
        case Tick::Complete:
            if (w.busy) complete(p.host, p.cpu);
            break;
        case Tick::Heartbeat:
            if (w.busy) beat(p.host, p.cpu);
            break;
        case Tick::Retry:
            if (!w.busy) request(p.host, p.cpu);
            break;
        default: break;
        }
    }

    const ChurnConfig& cfg_;
    gp::Rng rng_;
    server::ManualClock clock_{0.0};
    server::ProjectServer server_;
    std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue_;
    std::uint64_t seq_ = 0;
    double now_ = 0.0;
    std::vector<Host> hosts_;
    std::uint32_t live_ = 0, on_ = 0;
    std::uint64_t batches_ = 0, issued_wus_ = 0;
    std::set<std::uint64_t> open_;
    std::set<std::string> troubled_;
    double last_completion_ = 0.0;
    SimTrace trace_;
};

} // namespace

SimTrace simulate(const ChurnConfig& cfg)
{
    cfg.validate();
    return Simulation(cfg).run();
}

Comparison predicted_vs_simulated(const ChurnConfig& cfg)
{
    Comparison c;
    c.trace = simulate(cfg);
    c.cp_formula = metrics::computing_power(cfg.factors());
    c.cp_sim = c.trace.cp_gflops();
    c.ratio = c.cp_formula > 0.0 ? c.cp_sim / c.cp_formula : 0.0;
    return c;
}

} // namespace voluntier::churnsim
