#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "slung/env.hpp"
#include "slung/policy.hpp"

namespace slung {

struct LogRow {
  double t = 0.0;
  SystemState state;  // post-step
  Action action{};    // as commanded by the policy (before clamping)
  RewardBreakdown reward;
  std::size_t progress = 0;
  std::vector<Event> events;
};

struct RolloutLog {
  ScenarioKind kind = ScenarioKind::WaypointPassing;
  double dt = 0.01;
  SystemState initial;
  std::vector<LogRow> rows;
  bool terminated = false;
  bool truncated = false;
  std::vector<double> inference_latency_s;  // one per step, empty when not measured
};

struct MetricsReport {
  double max_vel = 0.0;
  double avg_vel = 0.0;
  std::optional<double> completion_time;
  // Mean over gates crossed; per-gate values in the vectors.
  std::optional<double> quad_gate_deviation;
  std::optional<double> payload_gate_deviation;
  std::vector<double> quad_gate_deviations;
  std::vector<double> payload_gate_deviations;
  bool success = false;
  std::vector<double> target_errors;  // payload-targeting: min payload distance per target
  std::optional<double> latency_mean_s;
  std::optional<double> latency_p99_s;
};

// Policy rollout from env reset with `seed`; mean action when deterministic,
// otherwise sampled from the policy with a stream derived from the seed.
RolloutLog run_rollout(const PolicyParams& params, const EnvConfig& env, std::uint64_t seed,
                       bool deterministic);

// Throws EmptyLog when the log has no rows.
MetricsReport compute_metrics(const RolloutLog& log, const TrackSpec& track);

// Column order of the CSV export.
const std::vector<std::string>& log_columns();

enum class ExportFormat { Csv, Json };

// Throws IoError when the file cannot be written.
void export_log(const RolloutLog& log, const std::filesystem::path& path, ExportFormat format);
// Throws IoError or SchemaError.
RolloutLog import_log_csv(const std::filesystem::path& path, ScenarioKind kind, double dt,
                          const SystemState& initial);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 when fewer than two values
  std::size_t n = 0;
};

struct AggregateReport {
  std::size_t trials = 0;
  double success_rate = 0.0;
  MetricSummary max_vel, avg_vel, completion_time, quad_gate_deviation, payload_gate_deviation,
      target_error, latency_mean_s, latency_p99_s;
};

MetricSummary summarize(const std::vector<double>& values);
AggregateReport aggregate(const std::vector<MetricsReport>& reports);

void export_report(const MetricsReport& report, const std::filesystem::path& path);
void export_summary(const AggregateReport& summary, const std::filesystem::path& path);

struct ReplayReport {
  bool pass = false;
  std::size_t steps = 0;
  double max_divergence = 0.0;
  std::optional<std::size_t> first_divergence_step;
  std::vector<double> divergence;  // per step, max abs state difference
};

// Re-simulates the logged actions open-loop from env reset with `seed` and
// compares every logged state, reward term and event bit for bit. Logged
// actions outside [-1, 1] count as divergence since the env would clamp them.
ReplayReport replay(const EnvConfig& env, std::uint64_t seed, const RolloutLog& log);

}  // namespace slung
