#include "slung/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "slung/errors.hpp"

namespace slung {

void PpoConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("ppo: " + what); };
  if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must be in [0, 1)");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) fail("gae_lambda must be in [0, 1]");
  if (!(clip_epsilon > 0.0)) fail("clip_epsilon must be > 0");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (epochs_per_batch < 1 || minibatch_size < 1 || rollout_length < 1 || n_envs < 1 ||
      hidden < 1) {
    fail("sizes must be >= 1");
  }
  if (total_timesteps < 1) fail("total_timesteps must be >= 1");
  if (entropy_coef < 0 || value_coef < 0) fail("loss coefficients must be >= 0");
  if (!(max_grad_norm > 0.0)) fail("max_grad_norm must be > 0");
}

RolloutBuffer::RolloutBuffer(std::size_t steps_, std::size_t n_envs_, std::size_t obs_dim_)
    : steps(steps_), n_envs(n_envs_), obs_dim(obs_dim_) {
  const std::size_t n = steps * n_envs;
  obs.assign(n * obs_dim, 0.0);
  pre_squash.assign(n * kActionDim, 0.0);
  log_probs.assign(n, 0.0);
  values.assign(n, 0.0);
  rewards.assign(n, 0.0);
  dones.assign(n, 0);
  last_values.assign(n_envs, 0.0);
  advantages.assign(n, 0.0);
  returns.assign(n, 0.0);
}

void compute_gae(RolloutBuffer& b, const PpoConfig& cfg) {
  const std::size_t T = b.steps, N = b.n_envs;
  b.advantages.assign(T * N, 0.0);
  b.returns.assign(T * N, 0.0);
  for (std::size_t e = 0; e < N; ++e) {
    double next_value = b.last_values[e];
    double next_adv = 0.0;
    for (std::size_t t = T; t-- > 0;) {
      const std::size_t i = t * N + e;
      const double live = b.dones[i] ? 0.0 : 1.0;
      const double delta = b.rewards[i] + cfg.gamma * next_value * live - b.values[i];
      next_adv = delta + cfg.gamma * cfg.gae_lambda * live * next_adv;
      b.advantages[i] = next_adv;
      b.returns[i] = next_adv + b.values[i];
      next_value = b.values[i];
    }
  }
}

LossParts ppo_loss(const PolicyParams& params, const LossBatch& batch, const PpoConfig& cfg,
                   std::span<double> grad) {
  const std::size_t B = batch.rows;
  if (B == 0) throw DimensionMismatch("ppo_loss: empty batch");
  thread_local MlpCache actor, critic;
  actor_forward(params, batch.obs, B, actor);
  critic_forward(params, batch.obs, B, critic);

  Action log_std;
  std::copy_n(params.log_std().begin(), kActionDim, log_std.begin());
  Action inv_var;
  for (std::size_t k = 0; k < kActionDim; ++k) inv_var[k] = std::exp(-2.0 * log_std[k]);

  const bool want_grad = !grad.empty();
  thread_local std::vector<double> d_mu, d_v;
  Action d_log_std{};
  if (want_grad) {
    d_mu.assign(B * kActionDim, 0.0);
    d_v.assign(B, 0.0);
  }

  LossParts parts;
  const double inv_b = 1.0 / static_cast<double>(B);
  const double lo = 1.0 - cfg.clip_epsilon, hi = 1.0 + cfg.clip_epsilon;
  for (std::size_t r = 0; r < B; ++r) {
    Action u, mu;
    for (std::size_t k = 0; k < kActionDim; ++k) {
      u[k] = batch.pre_squash[r * kActionDim + k];
      mu[k] = actor.out[r * kActionDim + k];
    }
    const double logp = gaussian_log_prob(u, mu, log_std);
    const double log_ratio = logp - batch.old_log_probs[r];
    const double ratio = std::exp(log_ratio);
    const double adv = batch.advantages[r];
    const double unclipped = ratio * adv;
    const double clipped = std::clamp(ratio, lo, hi) * adv;
    parts.policy -= std::min(unclipped, clipped) * inv_b;
    parts.approx_kl += ((ratio - 1.0) - log_ratio) * inv_b;
    if (std::abs(ratio - 1.0) > cfg.clip_epsilon) parts.clip_fraction += inv_b;

    const double dv = critic.out[r] - batch.returns[r];
    parts.value += dv * dv * inv_b;

    if (want_grad) {
      // d(-min(.))/d(logp): only the unclipped branch carries gradient.
      const double g_logp = unclipped <= clipped ? -adv * ratio * inv_b : 0.0;
      if (g_logp != 0.0) {
        for (std::size_t k = 0; k < kActionDim; ++k) {
          const double diff = u[k] - mu[k];
          d_mu[r * kActionDim + k] = g_logp * diff * inv_var[k];
          d_log_std[k] += g_logp * (diff * diff * inv_var[k] - 1.0);
        }
      }
      d_v[r] = 2.0 * cfg.value_coef * dv * inv_b;
    }
  }
  constexpr double kHalfLog2PiE = 1.4189385332046727418;
  for (std::size_t k = 0; k < kActionDim; ++k) parts.entropy += log_std[k] + kHalfLog2PiE;
  parts.total = parts.policy + cfg.value_coef * parts.value - cfg.entropy_coef * parts.entropy;

  if (want_grad) {
    if (grad.size() != params.size()) throw DimensionMismatch("ppo_loss: gradient size");
    std::fill(grad.begin(), grad.end(), 0.0);
    actor_backward(params, batch.obs, actor, d_mu, grad);
    critic_backward(params, batch.obs, critic, d_v, grad);
    for (std::size_t k = 0; k < kActionDim; ++k) {
      grad[params.log_std_offset() + k] += d_log_std[k] - cfg.entropy_coef;
    }
  }
  return parts;
}

void Adam::step(std::span<double> params, std::span<const double> grad, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

UpdateStats ppo_update(PolicyParams& params, Adam& opt, const RolloutBuffer& buf,
                       const PpoConfig& cfg, Rng& rng, double lr) {
  const std::size_t n = buf.size();
  const std::size_t dim = buf.obs_dim;
  std::vector<double> adv = buf.advantages;
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double stdev = std::sqrt(var / static_cast<double>(n));
  for (double& a : adv) a = (a - mean) / (stdev + 1e-8);

  const std::size_t mb = std::min<std::size_t>(static_cast<std::size_t>(cfg.minibatch_size), n);
  std::vector<std::size_t> order(n);
  std::vector<double> obs(mb * dim), pre(mb * kActionDim), oldlp(mb), a_mb(mb), ret(mb);
  std::vector<double> grad(params.size());

  UpdateStats stats;
  int count = 0;
  for (int epoch = 0; epoch < cfg.epochs_per_batch; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng() % i);
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t start = 0; start + mb <= n; start += mb) {
      for (std::size_t r = 0; r < mb; ++r) {
        const std::size_t s = order[start + r];
        std::copy_n(buf.obs.begin() + static_cast<std::ptrdiff_t>(s * dim), dim,
                    obs.begin() + static_cast<std::ptrdiff_t>(r * dim));
        std::copy_n(buf.pre_squash.begin() + static_cast<std::ptrdiff_t>(s * kActionDim),
                    kActionDim, pre.begin() + static_cast<std::ptrdiff_t>(r * kActionDim));
        oldlp[r] = buf.log_probs[s];
        a_mb[r] = adv[s];
        ret[r] = buf.returns[s];
      }
      const LossBatch batch{mb, obs, pre, oldlp, a_mb, ret};
      const LossParts parts = ppo_loss(params, batch, cfg, grad);

      double norm2 = 0.0;
      for (double g : grad) norm2 += g * g;
      const double norm = std::sqrt(norm2);
      if (!std::isfinite(parts.total) || !std::isfinite(norm)) {
        throw NonFiniteLoss("non-finite PPO loss (policy=" + std::to_string(parts.policy) +
                            ", value=" + std::to_string(parts.value) +
                            ", grad_norm=" + std::to_string(norm) + ")");
      }
      if (norm > cfg.max_grad_norm) {
        const double s = cfg.max_grad_norm / norm;
        for (double& g : grad) g *= s;
      }
      opt.step(params.data(), grad, lr);

      stats.policy_loss += parts.policy;
      stats.value_loss += parts.value;
      stats.entropy += parts.entropy;
      stats.approx_kl += parts.approx_kl;
      stats.clip_fraction += parts.clip_fraction;
      stats.grad_norm += norm;
      ++count;
    }
  }
  if (count > 0) {
    const double c = count;
    stats.policy_loss /= c;
    stats.value_loss /= c;
    stats.entropy /= c;
    stats.approx_kl /= c;
    stats.clip_fraction /= c;
    stats.grad_norm /= c;
  }
  if (!params.all_finite()) throw NonFiniteLoss("parameters became non-finite after update");
  return stats;
}

Action hover_action(const EnvConfig& env) {
  const PhysicalParams& p = env.physics;
  const double thrust = p.total_mass() / p.quad_mass;
  return {2.0 * thrust / p.twr_max - 1.0, 0.0, 0.0, 0.0};
}

TrainResult train(const EnvConfig& env_cfg, const PpoConfig& cfg, std::uint64_t seed,
                  const TrainCallbacks& callbacks) {
  cfg.validate();
  env_cfg.validate();
  const std::size_t N = static_cast<std::size_t>(cfg.n_envs);
  const std::size_t T = static_cast<std::size_t>(cfg.rollout_length);

  BatchEnv envs(env_cfg, N, stream_seed(seed, 0));
  const std::size_t dim = envs.obs_dim();

  Rng init_rng(stream_seed(seed, 1));
  Rng shuffle_rng(stream_seed(seed, 2));
  std::vector<Rng> action_rngs;
  action_rngs.reserve(N);
  for (std::size_t i = 0; i < N; ++i) action_rngs.emplace_back(stream_seed(seed ^ 0xac710eULL, i));

  TrainResult result;
  result.params = init_policy(dim, static_cast<std::size_t>(cfg.hidden), init_rng,
                              hover_action(env_cfg), cfg.initial_log_std);
  PolicyParams& params = result.params;
  Adam opt(params.size());

  RolloutBuffer buf(T, N, dim);
  MlpCache actor, critic, boot;
  std::vector<double> actions(N * kActionDim);
  std::vector<double> obs = envs.reset();

  std::vector<double> ep_return(N, 0.0), ep_speed_sum(N, 0.0), ep_speed_max(N, 0.0);
  std::vector<int> ep_len(N, 0);
  std::vector<double> final_obs;
  // Running variance of the per-env discounted return (Welford).
  std::vector<double> disc_return(N, 0.0);
  double ret_count = 0.0, ret_mean = 0.0, ret_m2 = 0.0;
  std::vector<std::size_t> truncated_envs;

  long long timesteps = 0;
  int iteration = 0;
  // total_timesteps is an upper bound: only whole iterations that fit (at least one).
  const long long batch = cfg.batch_size();
  while (iteration == 0 || timesteps + batch <= cfg.total_timesteps) {
    ++iteration;
    double ret_sum = 0.0, vel_sum = 0.0, vel_max = 0.0;
    int episodes = 0, successes = 0;

    for (std::size_t t = 0; t < T; ++t) {
      actor_forward(params, obs, N, actor);
      critic_forward(params, obs, N, critic);
      Action log_std;
      std::copy_n(params.log_std().begin(), kActionDim, log_std.begin());
      std::copy(obs.begin(), obs.end(),
                buf.obs.begin() + static_cast<std::ptrdiff_t>(t * N * dim));
      for (std::size_t e = 0; e < N; ++e) {
        Action mu;
        std::copy_n(actor.out.begin() + static_cast<std::ptrdiff_t>(e * kActionDim), kActionDim,
                    mu.begin());
        const ActionSample s = sample_from(mu, log_std, action_rngs[e]);
        const std::size_t i = t * N + e;
        std::copy_n(s.pre_squash.begin(), kActionDim,
                    buf.pre_squash.begin() + static_cast<std::ptrdiff_t>(i * kActionDim));
        std::copy_n(s.action.begin(), kActionDim,
                    actions.begin() + static_cast<std::ptrdiff_t>(e * kActionDim));
        buf.log_probs[i] = s.gaussian_log_prob;
        buf.values[i] = critic.out[e];
      }

      envs.step(actions);
      obs = envs.observations();

      final_obs.clear();
      truncated_envs.clear();
      for (std::size_t e = 0; e < N; ++e) {
        const std::size_t i = t * N + e;
        const RewardBreakdown& r = envs.rewards()[e];
        const StepInfo& info = envs.infos()[e];
        buf.rewards[i] = r.total;
        const bool term = envs.terminated()[e], trunc = envs.truncated()[e];
        buf.dones[i] = term || trunc;
        if (cfg.normalize_rewards) {
          disc_return[e] = cfg.gamma * disc_return[e] + r.total;
          ret_count += 1.0;
          const double d = disc_return[e] - ret_mean;
          ret_mean += d / ret_count;
          ret_m2 += d * (disc_return[e] - ret_mean);
          if (term || trunc) disc_return[e] = 0.0;
        }

        ep_return[e] += r.total;
        const double speed = info.quad_vel.norm();
        ep_speed_sum[e] += speed;
        ep_speed_max[e] = std::max(ep_speed_max[e], speed);
        ++ep_len[e];
        if (trunc) {
          truncated_envs.push_back(e);
          final_obs.insert(final_obs.end(), info.final_observation.begin(),
                           info.final_observation.end());
        }
        if (term || trunc) {
          ret_sum += ep_return[e];
          vel_sum += ep_speed_sum[e] / ep_len[e];
          vel_max = std::max(vel_max, ep_speed_max[e]);
          ++episodes;
          successes += info.success ? 1 : 0;
          ep_return[e] = ep_speed_sum[e] = ep_speed_max[e] = 0.0;
          ep_len[e] = 0;
        }
      }
      if (cfg.normalize_rewards && ret_count > 1.0) {
        const double scale = 1.0 / std::sqrt(ret_m2 / ret_count + 1e-8);
        for (std::size_t e = 0; e < N; ++e) buf.rewards[t * N + e] *= scale;
      }
      // Time-limit truncation: bootstrap from the value of the final observation.
      if (!truncated_envs.empty()) {
        critic_forward(params, final_obs, truncated_envs.size(), boot);
        for (std::size_t k = 0; k < truncated_envs.size(); ++k) {
          buf.rewards[t * N + truncated_envs[k]] += cfg.gamma * boot.out[k];
        }
      }
    }
    critic_forward(params, obs, N, critic);
    std::copy_n(critic.out.begin(), N, buf.last_values.begin());
    compute_gae(buf, cfg);
    timesteps += static_cast<long long>(T * N);

    const double frac = std::min(1.0, static_cast<double>(timesteps) /
                                          static_cast<double>(cfg.total_timesteps));
    const double lr = cfg.anneal_lr ? cfg.learning_rate * std::max(1.0 - frac, 0.05)
                                    : cfg.learning_rate;
    IterationMetrics m;
    const PolicyParams before = params;
    try {
      m.update = ppo_update(params, opt, buf, cfg, shuffle_rng, lr);
    } catch (const NonFiniteLoss&) {
      if (callbacks.on_failure) callbacks.on_failure(before);
      throw;
    }
    m.iteration = iteration;
    m.timesteps = timesteps;
    m.episodes = episodes;
    m.mean_reward = episodes ? ret_sum / episodes : 0.0;
    m.success_rate = episodes ? static_cast<double>(successes) / episodes : 0.0;
    m.mean_vel = episodes ? vel_sum / episodes : 0.0;
    m.max_vel = vel_max;
    result.curve.push_back(m);
    if (callbacks.on_iteration) callbacks.on_iteration(m, params);
  }
  return result;
}

}  // namespace slung
