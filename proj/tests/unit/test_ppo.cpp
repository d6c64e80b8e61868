#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "../support/reference.hpp"
#include "slung/errors.hpp"
#include "slung/ppo.hpp"

using namespace slung;

TEST(Gae, MatchesBruteForce) {
  Rng rng(1);
  for (const double lambda : {0.0, 0.5, 0.95, 1.0}) {
    const std::size_t T = 40, N = 3;
    RolloutBuffer b(T, N, 1);
    for (std::size_t i = 0; i < T * N; ++i) {
      b.rewards[i] = rng.normal();
      b.values[i] = rng.normal();
      b.dones[i] = rng.uniform(0.0, 1.0) < 0.1;
    }
    for (double& v : b.last_values) v = rng.normal();
    PpoConfig cfg;
    cfg.gae_lambda = lambda;
    compute_gae(b, cfg);
    for (std::size_t e = 0; e < N; ++e) {
      std::vector<double> r(T), v(T);
      std::vector<int> d(T);
      for (std::size_t t = 0; t < T; ++t) {
        r[t] = b.rewards[t * N + e];
        v[t] = b.values[t * N + e];
        d[t] = b.dones[t * N + e];
      }
      const auto want = slung::testing::brute_force_gae(r, v, b.last_values[e], d, cfg.gamma, lambda);
      for (std::size_t t = 0; t < T; ++t) {
        EXPECT_NEAR(b.advantages[t * N + e], want[t], 1e-10);
        EXPECT_NEAR(b.returns[t * N + e], want[t] + v[t], 1e-10);
      }
    }
  }
}

TEST(Gae, LambdaOneGivesDiscountedReturn) {
  const std::size_t T = 6;
  RolloutBuffer b(T, 1, 1);
  for (std::size_t t = 0; t < T; ++t) b.rewards[t] = 1.0;
  b.last_values[0] = 0.0;
  PpoConfig cfg;
  cfg.gamma = 0.5;
  cfg.gae_lambda = 1.0;
  compute_gae(b, cfg);
  EXPECT_NEAR(b.returns[0], 2.0 * (1 - std::pow(0.5, 6)), 1e-15);
}

namespace {

struct Fixture {
  PolicyParams params;
  RolloutBuffer buf;
};

Fixture make_buffer(double adv_sign, std::uint64_t seed) {
  Rng rng(seed);
  Fixture f;
  f.params = init_policy(24, 16, rng, Action{}, std::log(0.5));
  f.buf = RolloutBuffer(64, 4, 24);
  for (double& x : f.buf.obs) x = rng.normal();
  for (std::size_t i = 0; i < f.buf.size(); ++i) {
    const PolicyOutput out =
        policy_forward(f.params, std::span<const double>(f.buf.obs).subspan(i * 24, 24));
    const ActionSample s = sample_from(out.mean_pre, out.log_std, rng);
    std::copy(s.pre_squash.begin(), s.pre_squash.end(), f.buf.pre_squash.begin() + i * 4);
    f.buf.log_probs[i] = s.gaussian_log_prob;
    f.buf.values[i] = out.value;
    // Reward the first action component being positive.
    f.buf.advantages[i] = adv_sign * (s.pre_squash[0] > out.mean_pre[0] ? 1.0 : -1.0);
    f.buf.returns[i] = out.value;
  }
  return f;
}

double mean_first_action(const PolicyParams& p, const RolloutBuffer& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    s += policy_forward(p, std::span<const double>(b.obs).subspan(i * 24, 24)).mean_pre[0];
  }
  return s / static_cast<double>(b.size());
}

}  // namespace

TEST(PpoUpdate, PositiveAdvantageRaisesLikelihood) {
  for (const double sign : {1.0, -1.0}) {
    Fixture f = make_buffer(sign, 3);
    const double before = mean_first_action(f.params, f.buf);
    PpoConfig cfg;
    cfg.minibatch_size = 64;
    cfg.learning_rate = 1e-3;
    Adam opt(f.params.size());
    Rng rng(4);
    ppo_update(f.params, opt, f.buf, cfg, rng, cfg.learning_rate);
    const double after = mean_first_action(f.params, f.buf);
    EXPECT_GT(sign * (after - before), 0.0) << "sign " << sign;
  }
}

TEST(PpoUpdate, ZeroAdvantageLeavesActorMeanUnchanged) {
  Fixture f = make_buffer(0.0, 5);
  PpoConfig cfg;
  cfg.entropy_coef = 0.0;
  std::vector<double> grad(f.params.size());
  const LossBatch batch{f.buf.size(), f.buf.obs, f.buf.pre_squash, f.buf.log_probs,
                        f.buf.advantages, f.buf.returns};
  const LossParts parts = ppo_loss(f.params, batch, cfg, grad);
  EXPECT_EQ(parts.policy, 0.0);
  EXPECT_NEAR(parts.value, 0.0, 1e-24);
  for (std::size_t i = 0; i < f.params.log_std_offset() + 4; ++i) EXPECT_EQ(grad[i], 0.0);
}

TEST(PpoLoss, ClippingStopsGradient) {
  Fixture f = make_buffer(1.0, 6);
  PpoConfig cfg;
  cfg.entropy_coef = 0.0;
  cfg.value_coef = 0.0;
  // Old policy far less likely than the current one: ratio >> 1 + eps, positive advantages.
  std::vector<double> old = f.buf.log_probs, adv(f.buf.size(), 1.0);
  for (double& l : old) l -= 5.0;
  const LossBatch batch{f.buf.size(), f.buf.obs, f.buf.pre_squash, old, adv, f.buf.returns};
  std::vector<double> grad(f.params.size());
  const LossParts parts = ppo_loss(f.params, batch, cfg, grad);
  EXPECT_NEAR(parts.policy, -(1.0 + cfg.clip_epsilon), 1e-12);
  EXPECT_EQ(parts.clip_fraction, 1.0);
  for (std::size_t i = 0; i < f.params.log_std_offset() + 4; ++i) EXPECT_EQ(grad[i], 0.0);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  Adam opt(3);
  std::vector<double> p{1.0, 1.0, 1.0};
  const std::vector<double> g{0.5, -2.0, 1e-3};
  opt.step(p, g, 0.1);
  EXPECT_NEAR(p[0], 0.9, 1e-7);
  EXPECT_NEAR(p[1], 1.1, 1e-7);
  EXPECT_NEAR(p[2], 0.9, 1e-4);
}

TEST(PpoUpdate, NonFiniteLossThrows) {
  Fixture f = make_buffer(1.0, 7);
  f.buf.returns[3] = NAN;
  PpoConfig cfg;
  Adam opt(f.params.size());
  Rng rng(1);
  EXPECT_THROW(ppo_update(f.params, opt, f.buf, cfg, rng, 1e-3), NonFiniteLoss);
}

TEST(PpoConfig, Validation) {
  PpoConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = PpoConfig{};
  c.minibatch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, DeterministicForSeed) {
  EnvConfig env;
  env.track = make_preset("hop");
  PpoConfig cfg;
  cfg.n_envs = 4;
  cfg.rollout_length = 32;
  cfg.minibatch_size = 64;
  cfg.hidden = 16;
  cfg.total_timesteps = 4 * 32 * 3;
  const TrainResult a = train(env, cfg, 11), b = train(env, cfg, 11), c = train(env, cfg, 12);
  EXPECT_EQ(a.params.data(), b.params.data());
  EXPECT_NE(a.params.data(), c.params.data());
  ASSERT_EQ(a.curve.size(), 3u);
  EXPECT_EQ(a.curve.back().timesteps, 384);
  EXPECT_EQ(a.curve.back().mean_reward, b.curve.back().mean_reward);
}

TEST(Train, CallbacksSeeEveryIteration) {
  EnvConfig env;
  env.track = make_preset("hop");
  PpoConfig cfg;
  cfg.n_envs = 2;
  cfg.rollout_length = 16;
  cfg.minibatch_size = 16;
  cfg.hidden = 8;
  cfg.total_timesteps = 2 * 16 * 4;
  int calls = 0;
  TrainCallbacks cb;
  cb.on_iteration = [&](const IterationMetrics& m, const PolicyParams&) {
    EXPECT_EQ(m.iteration, ++calls);
  };
  train(env, cfg, 1, cb);
  EXPECT_EQ(calls, 4);
}
