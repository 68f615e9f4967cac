#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <thread>

#include "voluntier/server/project.hpp"

namespace voluntier::server {

/// TCP front end: one thread per connection, one request per connection, all
/// server calls under one mutex, and a timer thread running transition().
class ServerDaemon {
public:
    // Replays the project's journal and takes its writer lock.
    ServerDaemon(const Project& project, const Clock& clock);
    ~ServerDaemon();

    // Binds, writes server.port and starts serving. Returns the bound port.
    std::uint16_t start();
    void stop();
    // Blocks until stop() is called.
    void wait();

    template <typename F>
    auto with_server(F&& f)
    {
        std::lock_guard lock(mutex_);
        return f(server_);
    }

private:
    void accept_loop();
    void timer_loop();
    void serve_connection(int fd);

    Project project_;
    ProjectConfig cfg_;
    ProjectServer server_;
    std::mutex mutex_;

    int listen_fd_ = -1;
    std::atomic<bool> stopping_{false};
    std::mutex stop_mutex_;
    std::condition_variable stop_cv_;
    std::atomic<int> connections_{0};
    std::thread acceptor_;
    std::thread timer_;
};

} // namespace voluntier::server
