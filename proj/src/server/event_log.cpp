#include "voluntier/server/event_log.hpp"

#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include "voluntier/errors.hpp"
#include "voluntier/proto/messages.hpp"

namespace voluntier::server {

namespace {

std::runtime_error sys_error(const std::string& what)
{
    return std::runtime_error(what + ": " + std::strerror(errno));
}

std::string slurp(int fd)
{
    std::string out;
    char buf[1 << 16];
    if (::lseek(fd, 0, SEEK_SET) < 0) {
        throw sys_error("seek");
    }
    for (;;) {
        const ssize_t n = ::read(fd, buf, sizeof buf);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw sys_error("read event log");
        }
        if (n == 0) break;
        out.append(buf, static_cast<std::size_t>(n));
    }
    return out;
}

// Complete frames, and the offset just past the last one.
std::pair<std::vector<std::string>, std::size_t> split(std::string_view bytes)
{
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const auto f = proto::unframe(bytes.substr(pos));
        if (!f) break;
        out.emplace_back(f->first);
        pos += f->second;
    }
    return {std::move(out), pos};
}

} // namespace

EventLog EventLog::open_writer(const std::string& path, bool sync)
{
    const int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) {
        throw sys_error("open " + path);
    }
    if (::flock(fd, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd);
        throw LogLocked("event log " + path + " is in use by another process");
    }
    EventLog log(fd, sync);
    const auto bytes = slurp(fd);
    auto [records, end] = split(bytes);
    log.records_ = std::move(records);
    if (end < bytes.size()) {
        log.truncated_ = bytes.size() - end;
        if (::ftruncate(fd, static_cast<off_t>(end)) != 0) {
            throw sys_error("truncate " + path);
        }
    }
    if (::lseek(fd, 0, SEEK_END) < 0) {
        throw sys_error("seek");
    }
    return log;
}

std::vector<std::string> EventLog::read_all(const std::string& path)
{
    const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd < 0) {
        if (errno == ENOENT) return {};
        throw sys_error("open " + path);
    }
    std::string bytes;
    try {
        bytes = slurp(fd);
    } catch (...) {
        ::close(fd);
        throw;
    }
    ::close(fd);
    return split(bytes).first;
}

bool EventLog::locked(const std::string& path)
{
    const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd < 0) return false;
    const bool busy = ::flock(fd, LOCK_EX | LOCK_NB) != 0;
    ::close(fd);
    return busy;
}

EventLog::EventLog(EventLog&& other) noexcept
    : fd_(other.fd_), sync_(other.sync_), records_(std::move(other.records_)), truncated_(other.truncated_)
{
    other.fd_ = -1;
}

EventLog::~EventLog()
{
    if (fd_ >= 0) ::close(fd_);
}

void EventLog::append(std::string_view body)
{
    const std::string f = proto::frame(body);
    std::size_t done = 0;
    while (done < f.size()) {
        const ssize_t n = ::write(fd_, f.data() + done, f.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw sys_error("append to event log");
        }
        done += static_cast<std::size_t>(n);
    }
    if (sync_ && ::fdatasync(fd_) != 0) {
        throw sys_error("sync event log");
    }
}

} // namespace voluntier::server
