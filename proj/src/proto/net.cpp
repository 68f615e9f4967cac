#include "voluntier/proto/net.hpp"

#include <cerrno>
#include <chrono>
#include <cstring>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "voluntier/errors.hpp"

namespace voluntier::proto {

namespace {

using Clock = std::chrono::steady_clock;

TransportError sys_error(const std::string& what)
{
    return TransportError(what + ": " + std::strerror(errno));
}

struct Fd {
    int fd;
    ~Fd()
    {
        if (fd >= 0) ::close(fd);
    }
};

sockaddr_in resolve(const Endpoint& e)
{
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const int rc = ::getaddrinfo(e.host.c_str(), nullptr, &hints, &res);
    if (rc != 0 || !res) {
        throw TransportError("cannot resolve '" + e.host + "': " + ::gai_strerror(rc));
    }
    sockaddr_in addr = *reinterpret_cast<sockaddr_in*>(res->ai_addr);
    ::freeaddrinfo(res);
    addr.sin_port = htons(e.port);
    return addr;
}

int remaining_ms(Clock::time_point deadline)
{
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    return left > 0 ? static_cast<int>(left) : 0;
}

void wait_for(int fd, short events, Clock::time_point deadline, const char* what)
{
    for (;;) {
        pollfd p{fd, events, 0};
        const int rc = ::poll(&p, 1, remaining_ms(deadline));
        if (rc > 0) return;
        if (rc == 0) throw TransportError(std::string("timed out while ") + what);
        if (errno != EINTR) throw sys_error(what);
    }
}

void read_exact(int fd, char* out, std::size_t n, Clock::time_point deadline)
{
    std::size_t got = 0;
    while (got < n) {
        wait_for(fd, POLLIN, deadline, "receiving");
        const ssize_t r = ::recv(fd, out + got, n - got, 0);
        if (r == 0) throw TransportError("connection closed after " + std::to_string(got) + " bytes");
        if (r < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw sys_error("recv");
        }
        got += static_cast<std::size_t>(r);
    }
}

Clock::time_point after(double seconds)
{
    return Clock::now() + std::chrono::milliseconds(static_cast<long long>(seconds * 1000.0));
}

} // namespace

Endpoint Endpoint::parse(const std::string& text)
{
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0) {
        throw ConfigError("expected host:port, got '" + text + "'");
    }
    Endpoint e;
    e.host = text.substr(0, colon);
    try {
        const unsigned long port = std::stoul(text.substr(colon + 1));
        if (port > 65535) throw std::out_of_range("port");
        e.port = static_cast<std::uint16_t>(port);
    } catch (const std::exception&) {
        throw ConfigError("bad port in '" + text + "'");
    }
    return e;
}

std::string Endpoint::to_string() const { return host + ":" + std::to_string(port); }

int tcp_listen(const Endpoint& at, std::uint16_t* bound_port)
{
    const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) throw sys_error("socket");
    Fd guard{fd};
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr = resolve(at);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        throw sys_error("bind " + at.to_string());
    }
    if (::listen(fd, 128) != 0) throw sys_error("listen");
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    if (bound_port) *bound_port = ntohs(addr.sin_port);
    guard.fd = -1;
    return fd;
}

int tcp_connect(const Endpoint& to, double timeout_s)
{
    const sockaddr_in addr = resolve(to);
    const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0);
    if (fd < 0) throw sys_error("socket");
    Fd guard{fd};
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
        if (errno != EINPROGRESS) throw sys_error("connect " + to.to_string());
        wait_for(fd, POLLOUT, after(timeout_s), "connecting");
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) {
            errno = err;
            throw sys_error("connect " + to.to_string());
        }
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    guard.fd = -1;
    return fd;
}

void send_all(int fd, std::string_view bytes, double timeout_s)
{
    const auto deadline = after(timeout_s);
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        wait_for(fd, POLLOUT, deadline, "sending");
        const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw sys_error("send");
        }
        sent += static_cast<std::size_t>(n);
    }
}

std::string recv_frame(int fd, double timeout_s)
{
    const auto deadline = after(timeout_s);
    char header[kFrameHeader];
    read_exact(fd, header, kFrameHeader, deadline);
    const auto b = [&](int i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(header[i])); };
    const std::size_t n = (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
    if (n > kMaxFrame) throw ProtocolError("frame length " + std::to_string(n) + " exceeds limit", 0);
    std::string body(n, '\0');
    read_exact(fd, body.data(), n, deadline);
    return body;
}

Message exchange(const Endpoint& to, const Message& request, double timeout_s)
{
    Fd fd{tcp_connect(to, timeout_s)};
    send_all(fd.fd, encode(request), timeout_s);
    const auto body = recv_frame(fd.fd, timeout_s);
    try {
        return from_json(nlohmann::json::parse(body));
    } catch (const nlohmann::json::parse_error& e) {
        throw ProtocolError(std::string("malformed reply: ") + e.what(), kFrameHeader + e.byte);
    }
}

} // namespace voluntier::proto
