#pragma once

#include <filesystem>
#include <string_view>

#include "voluntier/proto/types.hpp"

namespace voluntier::proto {

/// Sweep spec as key = value text:
///
///   name = ant
///   app = embedded               # or wrapped
///   params = ant.params          # gp params file
///   dim.population_size = 1000,2000
///   replicates = 25
///   seed_base, target_replicas, min_quorum, max_error_results, deadline (seconds)
///   job.program, job.inputs, job.outputs (comma lists), job.args, job.resume_args
///   (space separated), job.checkpoint_file, job.solution_file, job.expected_output_bytes
///   file.<payload name> = <path>  # wrapped payloads
///
/// Paths are relative to base_dir. Throws ConfigError.
SweepSpec parse_sweep_file(std::string_view text, const std::filesystem::path& base_dir);
SweepSpec load_sweep_file(const std::filesystem::path& path);

} // namespace voluntier::proto
