#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "voluntier/gp/params.hpp"

namespace voluntier::proto {

using ResultId = std::uint64_t;

enum class AppId { EmbeddedGp, Wrapped };
enum class WuState { Unsent, InProgress, Over };
enum class ResultState { Assigned, Running, Uploaded, Valid, Invalid, TimedOut, Error };
enum class Platform { LinuxX86_64, WindowsX86_64, MacosX86_64, MacosAarch64, LinuxAarch64 };

std::string_view to_string(AppId v);
std::string_view to_string(WuState v);
std::string_view to_string(ResultState v);
std::string_view to_string(Platform v);
// Parsers throw ProtocolError on unknown names.
AppId parse_app_id(std::string_view s);
WuState parse_wu_state(std::string_view s);
ResultState parse_result_state(std::string_view s);
Platform parse_platform(std::string_view s);
Platform host_platform();

// True for TimedOut/Error/Valid/Invalid: nothing further happens to such a result.
bool is_terminal(ResultState s);

struct InputRef {
    std::string name;
    std::string digest; // sha256 hex of the payload bytes

    friend bool operator==(const InputRef&, const InputRef&) = default;
};

struct WorkUnit {
    std::string wu_id;
    std::string sweep;
    AppId app_id = AppId::EmbeddedGp;
    std::vector<InputRef> input_refs;
    std::vector<std::string> command_args;
    std::uint32_t target_replicas = 1;
    std::uint32_t min_quorum = 1;
    std::uint32_t max_error_results = 3;
    double deadline = 3600.0; // seconds after assignment
    WuState state = WuState::Unsent;
    std::optional<ResultId> canonical_result_id;

    friend bool operator==(const WorkUnit&, const WorkUnit&) = default;
};

struct ResultRecord {
    ResultId result_id = 0;
    std::string wu_id;
    std::string host_id;
    ResultState state = ResultState::Assigned;
    std::string output; // bytes
    std::string output_digest;
    double cpu_time = 0.0;
    double flops_estimate = 0.0;
    double progress = 0.0;
    double assigned_at = 0.0;
    double last_heartbeat = 0.0;
    std::optional<double> completed_at;
    std::string error_message;

    friend bool operator==(const ResultRecord&, const ResultRecord&) = default;
};

struct HostRecord {
    std::string host_id;
    Platform platform = Platform::LinuxX86_64;
    std::uint32_t ncpus = 1;
    double benchmark_flops = 1e9;
    double first_contact = 0.0;
    double last_contact = 0.0;
    double on_fraction = 1.0;
    double active_fraction = 1.0;
    bool active = true; // false once silent past the dead threshold

    friend bool operator==(const HostRecord&, const HostRecord&) = default;
};

/// Describes an unmodified program run under the wrapper.
struct JobDescriptor {
    std::string program;                   // payload name of the executable or script
    std::vector<std::string> inputs;       // payload names copied into the slot
    std::vector<std::string> outputs;      // files collected into the result
    std::vector<std::string> args;
    std::string checkpoint_file;           // empty: the program does not checkpoint
    std::string solution_file = "solution";
    std::vector<std::string> resume_args{"--resume"}; // followed by the checkpoint path
    std::uint64_t expected_output_bytes = 0; // progress heuristic; 0 = unknown

    // Throws ConfigError (e.g. solution file listed as an input).
    void validate() const;

    friend bool operator==(const JobDescriptor&, const JobDescriptor&) = default;
};

/// Parameter-sweep declaration. Dimension values are strings in the params
/// file syntax ("population_size" -> {"1000", "2000"}).
struct SweepSpec {
    std::string name;
    AppId app_id = AppId::EmbeddedGp;
    gp::GpParams base_params;
    std::map<std::string, std::vector<std::string>> dimensions;
    std::uint32_t replicates = 1;
    std::uint64_t seed_base = 1;
    std::uint32_t target_replicas = 1;
    std::uint32_t min_quorum = 1;
    std::uint32_t max_error_results = 3;
    double deadline = 3600.0;
    std::optional<JobDescriptor> job;          // Wrapped only
    std::map<std::string, std::string> files;  // Wrapped only: payload name -> bytes

    void validate() const;

    friend bool operator==(const SweepSpec&, const SweepSpec&) = default;
};

struct Payload {
    std::string name;
    std::string bytes;
};

struct SweepExpansion {
    std::vector<WorkUnit> work_units;
    std::map<std::string, Payload> payloads; // by digest
};

/// Cross product of the dimension values (keys in sorted order, last key
/// fastest) times replicates. Work unit i gets seed seed_base + i and id
/// `<name>[_<key><value>...]_rep<r>`. Pure: equal specs give equal output.
SweepExpansion expand_sweep(const SweepSpec& spec);

// The params a client should run for an embedded work unit: the params payload
// with the seed replaced by the one in command_args.
gp::GpParams embedded_params(std::string_view params_payload, const std::vector<std::string>& command_args);

} // namespace voluntier::proto
