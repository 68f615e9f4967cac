#include "voluntier/client/client.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "voluntier/errors.hpp"
#include "voluntier/gp/engine.hpp"
#include "voluntier/proto/signing.hpp"

namespace voluntier::client {

namespace fs = std::filesystem;
using nlohmann::json;

ClientConfig ClientConfig::load(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read client config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        const auto j = json::parse(ss.str());
        ClientConfig c;
        c.server = proto::Endpoint::parse(j.at("server").get<std::string>());
        c.public_key = proto::decode_key(j.at("public_key").get<std::string>(), 32);
        c.data_dir = j.value("data_dir", c.data_dir.string());
        if (c.data_dir.is_relative()) c.data_dir = path.parent_path() / c.data_dir;
        c.heartbeat_interval = j.value("heartbeat_interval", c.heartbeat_interval);
        c.backoff_base = j.value("backoff_base", c.backoff_base);
        c.backoff_cap = j.value("backoff_cap", c.backoff_cap);
        if (j.contains("benchmark_flops")) c.benchmark_flops = j.at("benchmark_flops").get<double>();
        c.ncpus = j.value("ncpus", c.ncpus);
        c.on_fraction = j.value("on_fraction", c.on_fraction);
        c.active_fraction = j.value("active_fraction", c.active_fraction);
        c.checkpoint_generations = j.value("checkpoint_generations", c.checkpoint_generations);
        c.checkpoint_seconds = j.value("checkpoint_seconds", c.checkpoint_seconds);
        c.request_timeout = j.value("request_timeout", c.request_timeout);
        if (j.contains("max_results")) c.max_results = j.at("max_results").get<std::uint64_t>();
        if (j.contains("exit_after_idle")) c.exit_after_idle = j.at("exit_after_idle").get<std::uint32_t>();
        if (!(c.heartbeat_interval > 0) || !(c.backoff_base > 0) || c.backoff_cap < c.backoff_base) {
            throw ConfigError("client timings must be positive with backoff_cap >= backoff_base");
        }
        return c;
    } catch (const json::exception& e) {
        throw ConfigError("bad client config " + path.string() + ": " + e.what());
    }
}

double measure_flops(double seconds)
{
    using C = std::chrono::steady_clock;
    volatile double sink = 0.0;
    double a = 1.0, b = 1.0000001, c = 0.9999999;
    std::uint64_t iters = 0;
    const auto start = C::now();
    const auto stop = start + std::chrono::duration<double>(seconds);
    while (C::now() < stop) {
        for (int i = 0; i < 100000; ++i) {
            a = a * b + c;
            a = a * c - b;
        }
        iters += 100000;
    }
    sink = a;
    (void)sink;
    const double elapsed = std::chrono::duration<double>(C::now() - start).count();
    return 4.0 * static_cast<double>(iters) / elapsed;
}

ExecOutcome execute_embedded(const proto::AssignWork& work, const fs::path& slot_dir, ProgressCell& progress,
                             std::uint32_t checkpoint_generations, double checkpoint_seconds,
                             std::function<bool(std::uint32_t)> interrupt)
{
    ExecOutcome out;
    const proto::SignedPayload* params_payload = nullptr;
    for (const auto& p : work.payloads) {
        if (p.name == "params") params_payload = &p;
    }
    if (!params_payload) {
        out.error = "work unit carries no params payload";
        return out;
    }
    try {
        const auto params = proto::embedded_params(params_payload->bytes, work.work_unit.command_args);
        const auto problem = gp::make_problem(params);
        fs::create_directories(slot_dir);
        gp::FileCheckpointSink sink((slot_dir / "gp.ckpt").string());
        gp::RunHooks hooks;
        hooks.policy.every_generations = checkpoint_generations;
        hooks.policy.every_seconds = checkpoint_seconds;
        hooks.progress = [&](std::uint32_t g, std::uint32_t total) {
            progress.store(static_cast<double>(g + 1) / static_cast<double>(total));
        };
        hooks.interrupt = std::move(interrupt);
        const auto result = gp::run_gp_resuming(params, *problem, sink, hooks);
        out.output = gp::result_artifact(params, *problem, result);
        out.cpu_time = result.cpu_time;
        out.flops_estimate = static_cast<double>(result.operations);
        out.ok = true;
    } catch (const gp::RunInterrupted&) {
        throw;
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

Client::Client(ClientConfig cfg, std::unique_ptr<Transport> transport, Sleeper sleeper)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), sleeper_(std::move(sleeper))
{
    benchmark_ = cfg_.benchmark_flops ? *cfg_.benchmark_flops : measure_flops();
    fs::create_directories(cfg_.data_dir / "slots");
    load_state();
}

fs::path Client::slot(proto::ResultId id) const { return cfg_.data_dir / "slots" / std::to_string(id); }

void Client::load_state()
{
    const auto path = cfg_.data_dir / "state.json";
    if (!fs::exists(path)) return;
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        const auto j = json::parse(ss.str());
        host_id_ = j.value("host_id", "");
        if (j.contains("current") && !j["current"].is_null()) {
            current_ = std::get<proto::AssignWork>(proto::from_json(j["current"]));
        }
        if (j.contains("pending") && !j["pending"].is_null()) {
            pending_ = std::get<proto::SubmitResult>(proto::from_json(j["pending"]));
        }
    } catch (const std::exception&) {
        // unreadable state: start over as a new host
        host_id_.clear();
        current_.reset();
        pending_.reset();
    }
}

void Client::save_state()
{
    json j{{"host_id", host_id_}};
    j["current"] = current_ ? proto::to_json(proto::Message{*current_}) : json(nullptr);
    j["pending"] = pending_ ? proto::to_json(proto::Message{*pending_}) : json(nullptr);
    const auto path = cfg_.data_dir / "state.json";
    const auto tmp = cfg_.data_dir / "state.json.tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << j.dump();
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

void Client::sleep_for(double seconds)
{
    if (sleeper_) {
        sleeper_(seconds);
        return;
    }
    std::unique_lock lock(sleep_mutex_);
    sleep_cv_.wait_for(lock, std::chrono::duration<double>(seconds), [this] { return stopping_.load(); });
}

void Client::backoff(std::uint32_t attempt)
{
    const double delay = std::min(cfg_.backoff_cap, cfg_.backoff_base * std::pow(2.0, attempt - 1.0));
    sleep_for(delay);
}

void Client::stop()
{
    {
        std::lock_guard lock(sleep_mutex_);
        stopping_ = true;
    }
    sleep_cv_.notify_all();
}

proto::Message Client::call(const proto::Message& m) { return transport_->exchange(m); }

void Client::ensure_registered()
{
    if (!host_id_.empty()) return;
    proto::Register r;
    r.platform = proto::host_platform();
    r.ncpus = cfg_.ncpus;
    r.benchmark_flops = benchmark_;
    r.on_fraction = cfg_.on_fraction;
    r.active_fraction = cfg_.active_fraction;
    const auto reply = call(r);
    const auto* ack = std::get_if<proto::RegisterAck>(&reply);
    if (!ack) throw proto::TransportError("registration refused");
    host_id_ = ack->host_id;
    events_.push_back("register:" + host_id_);
    save_state();
}

namespace {

// Sends heartbeats with the current progress until destroyed.
class HeartbeatSender {
public:
    HeartbeatSender(Transport& t, std::string host, proto::ResultId id, ProgressCell& progress, double interval)
        : thread_([=, this, &t, &progress] {
              std::unique_lock lock(m_);
              while (!cv_.wait_for(lock, std::chrono::duration<double>(interval), [this] { return done_; })) {
                  lock.unlock();
                  try {
                      t.exchange(proto::Heartbeat{host, id, progress.load()});
                  } catch (const std::exception&) {
                      // the next beat carries the latest progress anyway
                  }
                  lock.lock();
              }
          })
    {
    }
    ~HeartbeatSender()
    {
        {
            std::lock_guard lock(m_);
            done_ = true;
        }
        cv_.notify_all();
        thread_.join();
    }

private:
    std::mutex m_;
    std::condition_variable cv_;
    bool done_ = false;
    std::thread thread_;
};

} // namespace

proto::SubmitResult Client::execute(const proto::AssignWork& work)
{
    proto::SubmitResult s;
    s.host_id = host_id_;
    s.result_id = work.result_id;

    // Every referenced input must be present, signed by the project key and match its digest.
    std::map<std::string, std::string> files;
    for (const auto& ref : work.work_unit.input_refs) {
        const proto::SignedPayload* found = nullptr;
        for (const auto& p : work.payloads) {
            if (p.name == ref.name && p.digest == ref.digest) found = &p;
        }
        if (!found || !proto::verify(*found, cfg_.public_key)) {
            events_.push_back("refused:" + std::to_string(work.result_id));
            s.outcome = proto::Outcome::Error;
            s.error_message = "payload signature rejected: " + ref.name;
            return s;
        }
        files[found->name] = found->bytes;
    }

    ProgressCell progress;
    ExecOutcome o;
    {
        HeartbeatSender beats(*transport_, host_id_, work.result_id, progress, cfg_.heartbeat_interval);
        events_.push_back("execute:" + std::to_string(work.result_id));
        if (work.work_unit.app_id == proto::AppId::EmbeddedGp) {
            o = execute_embedded(work, slot(work.result_id), progress, cfg_.checkpoint_generations,
                                 cfg_.checkpoint_seconds, interrupt_);
        } else if (!work.job) {
            o.error = "wrapped work unit without a job descriptor";
        } else {
            WrapperOptions opts;
            opts.wall_cap = 2.0 * work.work_unit.deadline;
            opts.benchmark_flops = benchmark_;
            o = execute_wrapped(*work.job, files, work.work_unit.command_args, slot(work.result_id), progress, opts);
        }
    }
    s.cpu_time = o.cpu_time;
    s.flops_estimate = o.flops_estimate;
    if (o.ok) {
        s.output = std::move(o.output);
    } else {
        s.outcome = proto::Outcome::Error;
        s.error_message = o.error;
    }
    return s;
}

void Client::submit_pending()
{
    for (std::uint32_t attempt = 1;; ++attempt) {
        try {
            const auto reply = call(*pending_);
            const auto* ack = std::get_if<proto::SubmitAck>(&reply);
            const bool accepted = ack && ack->accepted;
            events_.push_back("submit:" + std::to_string(pending_->result_id) + (accepted ? ":accepted" : ":rejected"));
            break;
        } catch (const proto::TransportError&) {
            if (stopping_) return;
            backoff(attempt);
        } catch (const ProtocolError&) {
            if (stopping_) return;
            backoff(attempt);
        }
    }
    ++submitted_;
    std::error_code ec;
    fs::remove_all(slot(pending_->result_id), ec);
    pending_.reset();
    save_state();
}

bool Client::step()
{
    try {
        ensure_registered();
        if (pending_) {
            submit_pending();
            return !pending_;
        }
        if (!current_) {
            const auto reply = call(proto::RequestWork{host_id_});
            if (const auto* a = std::get_if<proto::AssignWork>(&reply)) {
                idle_ = 0;
                current_ = *a;
                events_.push_back("assigned:" + std::to_string(a->result_id));
                save_state();
            } else {
                if (const auto* e = std::get_if<proto::ErrorReply>(&reply)) {
                    events_.push_back("error:" + e->message);
                    if (e->message.find("unregistered host") != std::string::npos) {
                        host_id_.clear();
                        save_state();
                    }
                } else {
                    events_.push_back("nowork");
                }
                backoff(++idle_);
                return false;
            }
        }
        pending_ = execute(*current_);
        current_.reset();
        save_state();
        submit_pending();
        return !pending_;
    } catch (const proto::TransportError& e) {
        events_.push_back(std::string("unreachable:") + e.what());
        backoff(++idle_);
        return false;
    } catch (const ProtocolError& e) {
        events_.push_back(std::string("bad-reply:") + e.what());
        backoff(++idle_);
        return false;
    }
}

void Client::run()
{
    while (!stopping_) {
        step();
        if (cfg_.max_results && submitted_ >= *cfg_.max_results) break;
        if (cfg_.exit_after_idle && idle_ >= *cfg_.exit_after_idle) break;
    }
}

} // namespace voluntier::client
