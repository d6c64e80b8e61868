#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "slung/env.hpp"
#include "slung/policy.hpp"
#include "slung/rng.hpp"

namespace slung {

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_epsilon = 0.2;
  double learning_rate = 3e-4;
  int epochs_per_batch = 4;
  int minibatch_size = 1024;
  int rollout_length = 128;
  int n_envs = 256;
  double entropy_coef = 0.003;
  double value_coef = 0.5;
  double max_grad_norm = 1.0;
  long long total_timesteps = 2'000'000;
  int hidden = 128;
  double initial_log_std = std::log(0.5);
  // Linearly anneal the learning rate to zero over total_timesteps.
  bool anneal_lr = false;
  // Divide rewards by a running std of the discounted return before GAE.
  bool normalize_rewards = false;

  void validate() const;
  long long batch_size() const { return static_cast<long long>(rollout_length) * n_envs; }
};

// Time-major storage: index (t, env) -> t * n_envs + env.
struct RolloutBuffer {
  std::size_t steps = 0;
  std::size_t n_envs = 0;
  std::size_t obs_dim = 0;
  std::vector<double> obs;         // steps * n_envs * obs_dim
  std::vector<double> pre_squash;  // steps * n_envs * 4
  std::vector<double> log_probs;   // Gaussian log-density of pre_squash under the behavior policy
  std::vector<double> values;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;  // episode ended at this step (terminated or truncated)
  std::vector<double> last_values;  // bootstrap V(s_T) per env
  std::vector<double> advantages;
  std::vector<double> returns;

  RolloutBuffer() = default;
  RolloutBuffer(std::size_t steps, std::size_t n_envs, std::size_t obs_dim);
  std::size_t size() const { return steps * n_envs; }
};

// A_t = sum_k (gamma lambda)^k delta_{t+k}, delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t.
// Fills advantages and returns (= advantages + values).
void compute_gae(RolloutBuffer& buffer, const PpoConfig& cfg);

// Minibatch view into a rollout buffer (rows are contiguous copies).
struct LossBatch {
  std::size_t rows = 0;
  std::span<const double> obs;
  std::span<const double> pre_squash;
  std::span<const double> old_log_probs;
  std::span<const double> advantages;
  std::span<const double> returns;
};

struct LossParts {
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double total = 0.0;
};

// Clipped-surrogate + value + entropy loss. When grad is non-empty it is
// overwritten with d(total)/d(params).
LossParts ppo_loss(const PolicyParams& params, const LossBatch& batch, const PpoConfig& cfg,
                   std::span<double> grad);

class Adam {
 public:
  explicit Adam(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(n, 0.0), v_(n, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(std::span<double> params, std::span<const double> grad, double lr);

 private:
  std::vector<double> m_, v_;
  double beta1_, beta2_, eps_;
  long long t_ = 0;
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
};

// Several epochs of shuffled minibatch Adam steps. Advantages are normalized
// over the whole buffer first. Throws NonFiniteLoss on NaN/Inf.
UpdateStats ppo_update(PolicyParams& params, Adam& opt, const RolloutBuffer& buffer,
                       const PpoConfig& cfg, Rng& rng, double lr);

struct IterationMetrics {
  int iteration = 0;
  long long timesteps = 0;
  double mean_reward = 0.0;  // mean episodic return of episodes finished this iteration
  double success_rate = 0.0;
  int episodes = 0;
  double mean_vel = 0.0;  // mean over episodes of average quadrotor speed
  double max_vel = 0.0;
  UpdateStats update;
};

struct TrainCallbacks {
  std::function<void(const IterationMetrics&, const PolicyParams&)> on_iteration;
  // Called with the pre-update parameters before NonFiniteLoss propagates.
  std::function<void(const PolicyParams&)> on_failure;
};

struct TrainResult {
  PolicyParams params;
  std::vector<IterationMetrics> curve;
};

// Action whose denormalized thrust balances the full system weight.
Action hover_action(const EnvConfig& env);

TrainResult train(const EnvConfig& env, const PpoConfig& cfg, std::uint64_t seed,
                  const TrainCallbacks& callbacks = {});

}  // namespace slung
