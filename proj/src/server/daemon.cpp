#include "voluntier/server/daemon.hpp"

#include <chrono>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <fmt/format.h>

#include "voluntier/errors.hpp"

namespace voluntier::server {

ServerDaemon::ServerDaemon(const Project& project, const Clock& clock)
    : project_(project), cfg_(project.config()), server_(clock, cfg_.server, project.keys())
{
    server_.attach_log(project_.log_path().string(), cfg_.sync_log);
}

ServerDaemon::~ServerDaemon() { stop(); }

std::uint16_t ServerDaemon::start()
{
    std::uint16_t port = 0;
    listen_fd_ = proto::tcp_listen(cfg_.listen, &port);
    write_file_atomic(project_.port_path(), std::to_string(port) + "\n");
    acceptor_ = std::thread([this] { accept_loop(); });
    timer_ = std::thread([this] { timer_loop(); });
    return port;
}

void ServerDaemon::stop()
{
    {
        std::lock_guard lock(stop_mutex_);
        if (stopping_.exchange(true)) return;
    }
    stop_cv_.notify_all();
    if (acceptor_.joinable()) acceptor_.join();
    if (timer_.joinable()) timer_.join();
    while (connections_.load() > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    if (listen_fd_ >= 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        std::error_code ec;
        std::filesystem::remove(project_.port_path(), ec);
    }
}

void ServerDaemon::wait()
{
    std::unique_lock lock(stop_mutex_);
    stop_cv_.wait(lock, [this] { return stopping_.load(); });
}

void ServerDaemon::accept_loop()
{
    while (!stopping_) {
        pollfd p{listen_fd_, POLLIN, 0};
        if (::poll(&p, 1, 200) <= 0) continue;
        const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
        if (fd < 0) continue;
        ++connections_;
        std::thread([this, fd] {
            serve_connection(fd);
            ::close(fd);
            --connections_;
        }).detach();
    }
}

void ServerDaemon::serve_connection(int fd)
{
    proto::Message reply;
    try {
        const auto body = proto::recv_frame(fd, 30.0);
        proto::Message request;
        try {
            request = proto::from_json(nlohmann::json::parse(body));
        } catch (const nlohmann::json::parse_error& e) {
            throw ProtocolError(std::string("malformed JSON: ") + e.what(), proto::kFrameHeader + e.byte);
        }
        std::lock_guard lock(mutex_);
        reply = server_.handle(request);
    } catch (const ProtocolError& e) {
        reply = proto::ErrorReply{e.what()};
    } catch (const proto::TransportError&) {
        return;
    } catch (const std::exception& e) {
        fmt::print(stderr, "server error: {}\n", e.what());
        reply = proto::ErrorReply{"internal error"};
    }
    try {
        proto::send_all(fd, proto::encode(reply), 30.0);
    } catch (const proto::TransportError&) {
    }
}

void ServerDaemon::timer_loop()
{
    const auto period = std::chrono::milliseconds(static_cast<long long>(cfg_.transition_interval * 1000.0));
    std::unique_lock lock(stop_mutex_);
    while (!stop_cv_.wait_for(lock, period, [this] { return stopping_.load(); })) {
        std::vector<StateChange> changes;
        {
            std::lock_guard server_lock(mutex_);
            changes = server_.transition();
        }
        for (const auto& c : changes) {
            fmt::print(stderr, "{} wu={} result={} host={}\n", to_string(c.kind), c.wu_id, c.result_id, c.host_id);
        }
    }
}

} // namespace voluntier::server
