#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "voluntier/proto/signing.hpp"
#include "voluntier/proto/types.hpp"

namespace voluntier::proto {

struct Register {
    Platform platform = Platform::LinuxX86_64;
    std::uint32_t ncpus = 1;
    double benchmark_flops = 1e9;
    double on_fraction = 1.0;
    double active_fraction = 1.0;
    std::string host_id; // set when a known host re-registers
    friend bool operator==(const Register&, const Register&) = default;
};

struct RegisterAck {
    std::string host_id;
    friend bool operator==(const RegisterAck&, const RegisterAck&) = default;
};

struct RequestWork {
    std::string host_id;
    friend bool operator==(const RequestWork&, const RequestWork&) = default;
};

struct AssignWork {
    ResultId result_id = 0;
    WorkUnit work_unit;
    std::vector<SignedPayload> payloads;
    std::optional<JobDescriptor> job;
    friend bool operator==(const AssignWork&, const AssignWork&) = default;
};

struct NoWork {
    friend bool operator==(const NoWork&, const NoWork&) = default;
};

struct Heartbeat {
    std::string host_id;
    ResultId result_id = 0;
    double progress_fraction = 0.0;
    friend bool operator==(const Heartbeat&, const Heartbeat&) = default;
};

struct HeartbeatAck {
    bool ok = true;
    std::string warning;
    friend bool operator==(const HeartbeatAck&, const HeartbeatAck&) = default;
};

enum class Outcome { Success, Error };

struct SubmitResult {
    std::string host_id;
    ResultId result_id = 0;
    Outcome outcome = Outcome::Success;
    std::string output; // bytes
    double cpu_time = 0.0;
    double flops_estimate = 0.0;
    std::string error_message;
    friend bool operator==(const SubmitResult&, const SubmitResult&) = default;
};

struct SubmitAck {
    bool accepted = true;
    std::string reason;
    friend bool operator==(const SubmitAck&, const SubmitAck&) = default;
};

// Operator messages sent by the command-line tool to a running server.
struct SubmitSweep {
    SweepSpec spec;
    friend bool operator==(const SubmitSweep&, const SubmitSweep&) = default;
};

struct SubmitSweepAck {
    std::vector<std::string> created;
    friend bool operator==(const SubmitSweepAck&, const SubmitSweepAck&) = default;
};

struct ErrorReply {
    std::string message;
    friend bool operator==(const ErrorReply&, const ErrorReply&) = default;
};

using Message = std::variant<Register, RegisterAck, RequestWork, AssignWork, NoWork, Heartbeat, HeartbeatAck,
                             SubmitResult, SubmitAck, SubmitSweep, SubmitSweepAck, ErrorReply>;

std::string_view kind_of(const Message& m);

// JSON document for one message: {"kind": "...", ...fields}.
nlohmann::json to_json(const Message& m);
// Unknown fields are ignored; missing or mistyped required fields throw ProtocolError.
Message from_json(const nlohmann::json& j);

nlohmann::json to_json(const SweepSpec& spec);
SweepSpec sweep_from_json(const nlohmann::json& j);
nlohmann::json to_json(const WorkUnit& wu);
WorkUnit work_unit_from_json(const nlohmann::json& j);
nlohmann::json to_json(const JobDescriptor& job);
JobDescriptor job_from_json(const nlohmann::json& j);

constexpr std::size_t kFrameHeader = 4;
constexpr std::size_t kMaxFrame = 64u << 20;

// 4-byte big-endian length followed by that many bytes.
std::string frame(std::string_view body);

/// Parses one frame from the front of `bytes`. Returns the body and the bytes
/// consumed, or nullopt when `bytes` holds only a prefix of a frame.
/// Throws ProtocolError for an oversized length.
std::optional<std::pair<std::string_view, std::size_t>> unframe(std::string_view bytes);

// frame(to_json(m).dump())
std::string encode(const Message& m);
// Inverse of encode; the input must be exactly one frame.
Message decode(std::string_view bytes);

} // namespace voluntier::proto
