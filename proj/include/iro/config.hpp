#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "iro/iro_loop.hpp"
#include "iro/mdp.hpp"
#include "iro/policy.hpp"

namespace iro {

/**
 * Everything a run needs, loaded from one JSON file. Parsing is strict:
 * unknown keys are rejected with the full key path in the error message,
 * as are type mismatches, so config typos fail loudly before any compute.
 */
struct ExperimentConfig {
  MdpSpec mdp;
  RewardSpec reward;
  BasePolicy base;
  IroConfig iro;
  std::string output_dir = "out";

  /// Cross-field validation (delegates to the component validators).
  void validate() const;
};

/// Parses and validates; throws ConfigError naming the offending key.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);

/// Reads the file, parses the JSON, then parse_experiment_config.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/**
 * The fully resolved config: every optional key expanded to its effective
 * value. Feeding resolved JSON back through parse_experiment_config yields
 * an equivalent configuration.
 */
nlohmann::json resolved_config_json(const ExperimentConfig& cfg);

/**
 * Provenance sidecar of a run directory: resolved config, seed, wall-clock
 * bracket, and a checksum per emitted artifact. Written once before any
 * artifact (empty list) and rewritten complete at the end.
 */
struct RunManifest {
  nlohmann::json resolved_config;
  std::uint64_t master_seed = 0;
  std::string started_at;
  std::string finished_at;
  struct Artifact {
    std::string path;  // relative to the run directory
    std::uint64_t bytes = 0;
    std::string checksum;  // fnv1a hex of the file contents
  };
  std::vector<Artifact> artifacts;
};

nlohmann::json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

/// ISO-8601 UTC timestamp of the current wall clock.
std::string utc_timestamp_now();

}  // namespace iro
