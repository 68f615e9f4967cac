#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace voluntier::server {

class LogLocked : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Append-only file of length-prefixed frames, one event per frame.
///
/// A writer holds an exclusive flock for its lifetime. Opening for writing
/// truncates a torn final frame left by a crash; read-only opening skips it.
class EventLog {
public:
    // Throws LogLocked if another writer holds the file.
    static EventLog open_writer(const std::string& path, bool sync);
    static std::vector<std::string> read_all(const std::string& path);
    // True when some process holds the writer lock.
    static bool locked(const std::string& path);

    EventLog(EventLog&& other) noexcept;
    EventLog& operator=(EventLog&&) = delete;
    ~EventLog();

    // Records that were present when the log was opened.
    const std::vector<std::string>& records() const noexcept { return records_; }
    std::size_t truncated_bytes() const noexcept { return truncated_; }

    void append(std::string_view body);

private:
    EventLog(int fd, bool sync) : fd_(fd), sync_(sync) {}

    int fd_ = -1;
    bool sync_ = true;
    std::vector<std::string> records_;
    std::size_t truncated_ = 0;
};

} // namespace voluntier::server
