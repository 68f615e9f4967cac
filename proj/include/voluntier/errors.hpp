#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace voluntier {

// Bad configuration: parameter files, primitive sets, sweep specs, trails.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Requested something the implementation refuses to do (e.g. a 2^37-case multiplexer).
class UnsupportedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Corrupt, truncated or mismatched checkpoint. Callers restart from scratch.
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed frame or message. offset is the byte position where decoding failed.
class ProtocolError : public std::runtime_error {
public:
    ProtocolError(const std::string& what, std::size_t offset = 0)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset)
    {
    }
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

} // namespace voluntier
