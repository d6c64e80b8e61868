#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "slung/env.hpp"
#include "slung/ppo.hpp"

namespace slung {

struct EvalSettings {
  int trials = 8;
  bool deterministic = true;
};

// Everything needed to reproduce a run. JSON keys mirror the field names;
// see README for the full schema.
struct RunConfig {
  EnvConfig env;
  PpoConfig ppo;
  EvalSettings eval;
  std::uint64_t seed = 0;
  std::string output_dir;  // empty: derived from scenario, track and seed
  int checkpoint_every = 10;  // iterations between periodic checkpoints, 0 disables

  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);

// Parses a full or partial config. Missing keys take defaults; unknown keys,
// wrong types and invalid values throw ConfigError naming the field.
RunConfig run_config_from_json(const nlohmann::json& j);

// Parses a config file; syntax errors report the line.
nlohmann::json read_config_file(const std::filesystem::path& path);

// Applies "a.b.c=value" (value parsed as JSON, else taken as a string).
void apply_override(nlohmann::json& j, const std::string& assignment);

// File (optional) + overrides, resolved against the defaults.
RunConfig load_run_config(const std::filesystem::path* path,
                          const std::vector<std::string>& overrides);

// Output directory after applying the output-root environment variable.
std::filesystem::path resolve_output_dir(const RunConfig& cfg);

inline constexpr const char* kOutputRootEnv = "SLUNG_OUTPUT_ROOT";

nlohmann::json state_to_json(const SystemState& s);
SystemState state_from_json(const nlohmann::json& j);

}  // namespace slung
