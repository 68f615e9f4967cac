#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "voluntier/proto/messages.hpp"

namespace voluntier::proto {

// Connection refused, reset, timed out, or closed mid-exchange.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    // "host:port"; throws ConfigError.
    static Endpoint parse(const std::string& text);
    std::string to_string() const;
};

// Listening socket; port 0 picks a free one. Returns the fd and the bound port.
int tcp_listen(const Endpoint& at, std::uint16_t* bound_port);
int tcp_connect(const Endpoint& to, double timeout_s);

void send_all(int fd, std::string_view bytes, double timeout_s);
// One frame body. Throws TransportError on EOF or timeout, ProtocolError on a bad length.
std::string recv_frame(int fd, double timeout_s);

// One request/reply over a fresh connection.
Message exchange(const Endpoint& to, const Message& request, double timeout_s = 30.0);

} // namespace voluntier::proto
