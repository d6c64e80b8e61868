#include "slung/commands.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "slung/checkpoint.hpp"
#include "slung/errors.hpp"
#include "slung/simd/kernels.hpp"

namespace slung {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << j.dump(2) << '\n';
  if (!f) throw IoError("failed writing: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

std::string indexed(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu%s", stem, i, ext);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

const std::vector<std::string>& curve_columns() {
  static const std::vector<std::string> cols = {
      "iteration",   "timesteps",   "mean_reward", "success_rate", "episodes",
      "mean_vel",    "max_vel",     "policy_loss", "value_loss",   "entropy",
      "approx_kl",   "clip_fraction", "grad_norm"};
  return cols;
}

TrainOutputs cmd_train(const RunConfig& cfg, bool verbose) {
  cfg.validate();
  const fs::path dir = resolve_output_dir(cfg);
  fs::create_directories(dir);
  TrainOutputs out{dir / "policy.ckpt", dir / "curve.csv", dir / "config.resolved.json"};
  write_json(out.snapshot, to_json(cfg));

  std::ofstream curve(out.curve, std::ios::trunc);
  if (!curve) throw IoError("cannot open for writing: " + out.curve.string());
  const auto& cols = curve_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) curve << (c ? "," : "") << cols[c];
  curve << '\n' << std::flush;

  const ScenarioKind kind = cfg.env.track.kind;
  TrainCallbacks cb;
  cb.on_iteration = [&](const IterationMetrics& m, const PolicyParams& p) {
    const UpdateStats& u = m.update;
    curve << m.iteration << ',' << m.timesteps << ',' << fmt(m.mean_reward) << ','
          << fmt(m.success_rate) << ',' << m.episodes << ',' << fmt(m.mean_vel) << ','
          << fmt(m.max_vel) << ',' << fmt(u.policy_loss) << ',' << fmt(u.value_loss) << ','
          << fmt(u.entropy) << ',' << fmt(u.approx_kl) << ',' << fmt(u.clip_fraction) << ','
          << fmt(u.grad_norm) << '\n'
          << std::flush;
    if (cfg.checkpoint_every > 0 && m.iteration % cfg.checkpoint_every == 0) {
      fs::create_directories(dir / "checkpoints");
      save_checkpoint(dir / "checkpoints" / indexed("iter", m.iteration, ".ckpt"), p, kind);
      save_checkpoint(out.checkpoint, p, kind);
    }
    if (verbose) {
      std::printf("iter %4d  steps %9lld  reward %9.3f  success %5.3f  vel %5.2f  kl %.4f\n",
                  m.iteration, m.timesteps, m.mean_reward, m.success_rate, m.mean_vel,
                  u.approx_kl);
      std::fflush(stdout);
    }
  };
  cb.on_failure = [&](const PolicyParams& p) { save_checkpoint(dir / "failure.ckpt", p, kind); };

  const TrainResult result = train(cfg.env, cfg.ppo, cfg.seed, cb);
  save_checkpoint(out.checkpoint, result.params, kind);
  return out;
}

fs::path meta_path_for(const fs::path& log) {
  fs::path p = log;
  p.replace_extension(".meta.json");
  return p;
}

EvalOutputs cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out_dir,
                     ExportFormat format) {
  cfg.validate();
  const Checkpoint ck = load_checkpoint(checkpoint, cfg.env.track.kind);
  fs::create_directories(out_dir);
  EvalOutputs out;
  std::vector<MetricsReport> reports;
  const char* ext = format == ExportFormat::Csv ? ".csv" : ".json";
  for (int i = 0; i < cfg.eval.trials; ++i) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(i);
    const RolloutLog log = run_rollout(ck.params, cfg.env, seed, cfg.eval.deterministic);
    const fs::path log_path = out_dir / indexed("rollout", i, ext);
    export_log(log, log_path, format);
    write_json(meta_path_for(log_path), {{"config", to_json(cfg)},
                                         {"seed", seed},
                                         {"checkpoint", checkpoint.string()},
                                         {"deterministic", cfg.eval.deterministic},
                                         {"initial", state_to_json(log.initial)}});
    reports.push_back(compute_metrics(log, cfg.env.track));
    export_report(reports.back(), out_dir / indexed("report", i, ".json"));
    out.logs.push_back(log_path);
  }
  out.aggregate = aggregate(reports);
  out.summary = out_dir / "summary.json";
  export_summary(out.aggregate, out.summary);
  return out;
}

ReplayReport cmd_replay(const fs::path& log_path, const fs::path& meta_path) {
  const json meta = read_json(meta_path);
  for (const char* key : {"config", "seed", "initial"}) {
    if (!meta.contains(key)) throw SchemaError(meta_path.string() + ": missing '" + key + "'");
  }
  if (!meta["seed"].is_number_unsigned()) throw SchemaError("meta seed must be an unsigned integer");
  RunConfig cfg;
  try {
    cfg = run_config_from_json(meta["config"]);
  } catch (const ConfigError& e) {
    throw SchemaError(meta_path.string() + ": config: " + e.what());
  }
  const SystemState initial = state_from_json(meta["initial"]);
  const RolloutLog log =
      import_log_csv(log_path, cfg.env.track.kind, cfg.env.physics.dt, initial);
  return replay(cfg.env, meta["seed"].get<std::uint64_t>(), log);
}

LatencyStats latency_stats(std::vector<double> s) {
  LatencyStats r;
  if (s.empty()) return r;
  std::sort(s.begin(), s.end());
  auto pct = [&](double q) {
    const std::size_t k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(s.size())));
    return s[std::min(s.size() - 1, k == 0 ? 0 : k - 1)];
  };
  double sum = 0.0;
  for (double v : s) sum += v;
  r.mean = sum / static_cast<double>(s.size());
  r.p50 = pct(0.50);
  r.p90 = pct(0.90);
  r.p99 = pct(0.99);
  r.max = s.back();
  return r;
}

BenchReport cmd_bench(const BenchOptions& opts) {
  BenchReport rep;
  rep.isa = std::string(simd::to_string(simd::kernels().isa));
  EnvConfig env_cfg;
  if (opts.kind == ScenarioKind::GateTraversal) env_cfg.track = make_preset("gate_single");
  env_cfg.track.kind = opts.kind;
  const Action hover = hover_action(env_cfg);

  for (std::size_t batch : opts.batch_sizes) {
    BatchEnv envs(env_cfg, batch, 7);
    envs.reset();
    std::vector<double> actions(batch * kActionDim);
    for (std::size_t e = 0; e < batch; ++e) {
      std::copy(hover.begin(), hover.end(), actions.begin() + static_cast<std::ptrdiff_t>(e * kActionDim));
    }
    const std::size_t iters = std::max<std::size_t>(1, opts.env_steps / batch);
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t k = 0; k < iters; ++k) envs.step(actions);
    const double secs = seconds_since(t0);
    rep.env_steps_per_s.emplace_back(batch, static_cast<double>(iters * batch) / secs);
  }

  Rng rng(11);
  const std::size_t dim = observation_dim(opts.kind);
  const PolicyParams params =
      init_policy(dim, static_cast<std::size_t>(opts.hidden), rng, hover, std::log(0.5));
  std::vector<double> obs(dim);
  for (double& v : obs) v = rng.normal();
  std::vector<double> fwd, step;
  fwd.reserve(opts.latency_samples);
  step.reserve(opts.latency_samples);
  double sink = 0.0;
  for (std::size_t k = 0; k < opts.latency_samples; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    const PolicyOutput o = policy_forward(params, obs);
    fwd.push_back(seconds_since(t0));
    sink += o.value;
  }
  Env env(env_cfg, 3);
  env.observe_into(obs);
  RewardBreakdown reward;
  StepInfo info;
  bool term = false, trunc = false;
  for (std::size_t k = 0; k < opts.latency_samples; ++k) {
    if (env.done()) env.reset_into(obs);
    const auto t0 = std::chrono::steady_clock::now();
    const PolicyOutput o = policy_forward(params, obs);
    env.step_into(o.mean, obs, reward, term, trunc, info);
    step.push_back(seconds_since(t0));
  }
  if (!std::isfinite(sink)) throw NonFiniteLoss("bench: non-finite policy output");
  rep.policy_forward_s = latency_stats(std::move(fwd));
  rep.step_and_inference_s = latency_stats(std::move(step));
  return rep;
}

json to_json(const BenchReport& r) {
  auto lat = [](const LatencyStats& s) {
    return json{{"mean", s.mean}, {"p50", s.p50}, {"p90", s.p90}, {"p99", s.p99}, {"max", s.max}};
  };
  json rates = json::array();
  for (const auto& [batch, rate] : r.env_steps_per_s) {
    rates.push_back({{"batch", batch}, {"env_steps_per_s", rate}});
  }
  return {{"isa", r.isa},
          {"throughput", rates},
          {"policy_forward_latency_s", lat(r.policy_forward_s)},
          {"step_and_inference_latency_s", lat(r.step_and_inference_s)}};
}

namespace {

struct CommonOptions {
  std::string config;
  std::string scenario;
  std::string track;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "JSON config file");
  cmd->add_option("--scenario", o.scenario, "wp, pt or gt");
  cmd->add_option("--track", o.track, "track preset name");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--set", o.overrides, "dotted override, e.g. ppo.n_envs=64")->allow_extra_args(false);
  cmd->add_option("--out", o.out, "output directory");
}

RunConfig resolve(const CommonOptions& o, const fs::path* fallback_config) {
  std::vector<std::string> ov;
  if (!o.track.empty()) ov.push_back("track=\"" + o.track + "\"");
  if (!o.scenario.empty()) ov.push_back("scenario=\"" + o.scenario + "\"");
  if (o.seed) ov.push_back("seed=" + std::to_string(*o.seed));
  if (!o.out.empty()) ov.push_back("output_dir=" + json(o.out).dump());
  ov.insert(ov.end(), o.overrides.begin(), o.overrides.end());
  if (!o.config.empty()) {
    const fs::path p = o.config;
    return load_run_config(&p, ov);
  }
  if (fallback_config && fs::exists(*fallback_config)) {
    // A resolved snapshot names every field; a new track must not inherit its
    // inline geometry, so drop it before applying the overrides.
    json j = read_config_file(*fallback_config);
    if (!o.track.empty()) j.erase("track");
    if (!o.track.empty() || !o.scenario.empty()) j.erase("scenario");
    j.erase("output_dir");
    for (const std::string& s : ov) apply_override(j, s);
    return run_config_from_json(j);
  }
  return load_run_config(nullptr, ov);
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Cable-suspended payload quadrotor: simulation, PPO training and evaluation"};
  app.require_subcommand(1);

  CommonOptions train_o, eval_o;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "train a policy");
  add_common(train_cmd, train_o);
  train_cmd->add_flag("--quiet", quiet, "no per-iteration output");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint over several trials");
  add_common(eval_cmd, eval_o);
  std::string ckpt_path, format_name = "csv";
  std::optional<int> trials;
  bool stochastic = false;
  eval_cmd->add_option("--checkpoint", ckpt_path, "policy checkpoint")->required();
  eval_cmd->add_option("--trials", trials, "number of rollouts");
  eval_cmd->add_option("--format", format_name, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  eval_cmd->add_flag("--stochastic", stochastic, "sample actions instead of using the mean");

  auto* replay_cmd = app.add_subcommand("replay", "re-simulate a logged rollout");
  std::string log_path, meta_path, profile_path;
  replay_cmd->add_option("--log", log_path, "rollout CSV")->required();
  replay_cmd->add_option("--meta", meta_path, "sidecar metadata (default: log path with a .meta.json extension)");
  replay_cmd->add_option("--profile", profile_path, "write per-step divergence CSV");

  auto* bench_cmd = app.add_subcommand("bench", "throughput and latency benchmark");
  BenchOptions bench_opts;
  std::string bench_out, bench_kind = "gt";
  bench_cmd->add_option("--batch-sizes", bench_opts.batch_sizes, "env batch sizes")->delimiter(',');
  bench_cmd->add_option("--env-steps", bench_opts.env_steps, "env steps per batch size");
  bench_cmd->add_option("--samples", bench_opts.latency_samples, "latency samples");
  bench_cmd->add_option("--scenario", bench_kind, "wp, pt or gt");
  bench_cmd->add_option("--out", bench_out, "write the report JSON here");

  auto* list_cmd = app.add_subcommand("list-tracks", "list shipped track presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train_cmd) {
      const RunConfig cfg = resolve(train_o, nullptr);
      const TrainOutputs out = cmd_train(cfg, !quiet);
      std::cout << "checkpoint: " << out.checkpoint.string() << '\n'
                << "curve: " << out.curve.string() << '\n'
                << "config: " << out.snapshot.string() << '\n';
    } else if (*eval_cmd) {
      const fs::path snapshot = fs::path(ckpt_path).parent_path() / "config.resolved.json";
      RunConfig cfg = resolve(eval_o, &snapshot);
      if (trials) cfg.eval.trials = *trials;
      if (stochastic) cfg.eval.deterministic = false;
      cfg.validate();
      const fs::path out_dir = eval_o.out.empty()
                                   ? fs::path(ckpt_path).parent_path() / "eval"
                                   : resolve_output_dir(cfg);
      const EvalOutputs out =
          cmd_eval(cfg, ckpt_path, out_dir, format_name == "csv" ? ExportFormat::Csv : ExportFormat::Json);
      const AggregateReport& a = out.aggregate;
      std::printf("trials %zu  success %.3f  avg_vel %.3f +- %.3f  max_vel %.3f +- %.3f\n",
                  a.trials, a.success_rate, a.avg_vel.mean, a.avg_vel.std, a.max_vel.mean,
                  a.max_vel.std);
      if (a.quad_gate_deviation.n > 0) {
        std::printf("quad dev %.3f +- %.3f  payload dev %.3f +- %.3f\n", a.quad_gate_deviation.mean,
                    a.quad_gate_deviation.std, a.payload_gate_deviation.mean,
                    a.payload_gate_deviation.std);
      }
      std::cout << "summary: " << out.summary.string() << '\n';
    } else if (*replay_cmd) {
      const fs::path meta = meta_path.empty() ? meta_path_for(log_path) : fs::path(meta_path);
      const ReplayReport r = cmd_replay(log_path, meta);
      if (!profile_path.empty()) {
        std::ofstream f(profile_path, std::ios::trunc);
        if (!f) throw IoError("cannot open for writing: " + profile_path);
        f << "step,divergence\n";
        for (std::size_t i = 0; i < r.divergence.size(); ++i) f << i + 1 << ',' << fmt(r.divergence[i]) << '\n';
      }
      std::printf("%s steps=%zu max_divergence=%s", r.pass ? "PASS" : "FAIL", r.steps,
                  fmt(r.max_divergence).c_str());
      if (r.first_divergence_step) std::printf(" first_divergence_step=%zu", *r.first_divergence_step);
      std::printf("\n");
      return r.pass ? kExitOk : kExitReplayMismatch;
    } else if (*bench_cmd) {
      bench_opts.kind = parse_scenario_kind(bench_kind);
      const json j = to_json(cmd_bench(bench_opts));
      std::cout << j.dump(2) << '\n';
      if (!bench_out.empty()) write_json(bench_out, j);
    } else if (*list_cmd) {
      for (const std::string& name : preset_names()) {
        const TrackSpec t = make_preset(name);
        std::printf("%-12s %-3s waypoints=%zu laps=%d gates=%zu path=%.2fm\n", name.c_str(),
                    std::string(to_string(t.kind)).c_str(), t.waypoints.size(), t.laps,
                    t.gates.size(), t.path_length());
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace slung
