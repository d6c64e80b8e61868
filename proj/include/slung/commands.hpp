#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "slung/config.hpp"
#include "slung/evaluator.hpp"

namespace slung {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitReplayMismatch = 3;

// Files written by a training run inside its output directory.
struct TrainOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path curve;
  std::filesystem::path snapshot;
};

// Header of the append-only training curve CSV.
const std::vector<std::string>& curve_columns();

// Runs training for a resolved config, writing the snapshot first, the curve
// as it grows, periodic checkpoints, and the final checkpoint.
TrainOutputs cmd_train(const RunConfig& cfg, bool verbose);

struct EvalOutputs {
  std::vector<std::filesystem::path> logs;
  std::filesystem::path summary;
  AggregateReport aggregate;
};

// `cfg.eval.trials` rollouts with seeds cfg.seed + i. Throws FormatError on a
// checkpoint that does not match the configured scenario.
EvalOutputs cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                     const std::filesystem::path& out_dir, ExportFormat format);

// Sidecar written next to every log so it can be replayed.
std::filesystem::path meta_path_for(const std::filesystem::path& log);

// Replays a CSV log using its sidecar (or an explicit one).
ReplayReport cmd_replay(const std::filesystem::path& log, const std::filesystem::path& meta);

struct BenchOptions {
  std::vector<std::size_t> batch_sizes{1, 16, 64, 256};
  std::size_t env_steps = 200'000;  // per batch size
  std::size_t latency_samples = 5'000;
  int hidden = 128;
  ScenarioKind kind = ScenarioKind::GateTraversal;
};

struct LatencyStats {
  double mean = 0, p50 = 0, p90 = 0, p99 = 0, max = 0;
};

LatencyStats latency_stats(std::vector<double> samples);

struct BenchReport {
  std::string isa;
  std::vector<std::pair<std::size_t, double>> env_steps_per_s;  // (batch, rate)
  LatencyStats policy_forward_s;
  LatencyStats step_and_inference_s;
};

BenchReport cmd_bench(const BenchOptions& opts);
nlohmann::json to_json(const BenchReport& r);

// Full command-line entry point; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace slung
