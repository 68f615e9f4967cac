#pragma once

#include <atomic>
#include <mutex>
#include <vector>

#include "voluntier/client/client.hpp"
#include "voluntier/server/project_server.hpp"

// In-process transport straight into a ProjectServer.
class Loopback final : public voluntier::client::Transport {
public:
    explicit Loopback(voluntier::server::ProjectServer& s, std::mutex& m) : server_(s), mutex_(m) {}

    voluntier::proto::Message exchange(const voluntier::proto::Message& request) override
    {
        if (down) throw voluntier::proto::TransportError("link down");
        std::lock_guard lock(mutex_);
        if (auto* hb = std::get_if<voluntier::proto::Heartbeat>(&request)) heartbeats.push_back(hb->progress_fraction);
        if (tamper && std::holds_alternative<voluntier::proto::RequestWork>(request)) {
            auto reply = server_.handle(request);
            if (auto* a = std::get_if<voluntier::proto::AssignWork>(&reply)) tamper(*a);
            return reply;
        }
        return server_.handle(request);
    }

    std::atomic<bool> down{false};
    std::vector<double> heartbeats;
    std::function<void(voluntier::proto::AssignWork&)> tamper;

private:
    voluntier::server::ProjectServer& server_;
    std::mutex& mutex_;
};
