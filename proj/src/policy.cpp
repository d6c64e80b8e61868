#include "slung/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "slung/errors.hpp"
#include "slung/simd/kernels.hpp"

namespace slung {

PolicyParams::PolicyParams(std::size_t obs_dim, std::size_t hidden)
    : obs_dim_(obs_dim), hidden_(hidden) {
  if (obs_dim == 0 || hidden == 0) throw ConfigError("policy: dimensions must be >= 1");
  std::size_t off = 0;
  auto layer = [&](std::size_t in, std::size_t out) {
    Layer l{in, out, off, off + in * out};
    off += in * out + out;
    return l;
  };
  actor_ = {layer(obs_dim, hidden), layer(hidden, hidden), layer(hidden, kActionDim)};
  log_std_ = off;
  off += kActionDim;
  critic_ = {layer(obs_dim, hidden), layer(hidden, hidden), layer(hidden, 1)};
  data_.assign(off, 0.0);
}

PolicyParams PolicyParams::quantized() const {
  PolicyParams q = *this;
  for (double& v : q.data_) v = static_cast<double>(static_cast<float>(v));
  return q;
}

bool PolicyParams::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

PolicyParams init_policy(std::size_t obs_dim, std::size_t hidden, Rng& rng,
                         const Action& initial_mean, double initial_log_std) {
  PolicyParams p(obs_dim, hidden);
  auto& d = p.data();
  auto fill = [&](const PolicyParams::Layer& l, double gain) {
    const double scale = gain / std::sqrt(static_cast<double>(l.in));
    for (std::size_t i = 0; i < l.in * l.out; ++i) d[l.w + i] = scale * rng.normal();
  };
  const auto& a = p.actor_layers();
  fill(a[0], std::sqrt(2.0));
  fill(a[1], std::sqrt(2.0));
  fill(a[2], 0.01);
  for (std::size_t k = 0; k < kActionDim; ++k) {
    d[a[2].b + k] = std::atanh(std::clamp(initial_mean[k], -0.999, 0.999));
    d[p.log_std_offset() + k] = initial_log_std;
  }
  const auto& c = p.critic_layers();
  fill(c[0], std::sqrt(2.0));
  fill(c[1], std::sqrt(2.0));
  fill(c[2], 1.0);
  return p;
}

namespace {

void mlp_forward(const std::vector<double>& d, const std::array<PolicyParams::Layer, 3>& L,
                 std::span<const double> obs, std::size_t rows, MlpCache& c) {
  const auto& k = simd::kernels();
  c.rows = rows;
  c.h1.resize(rows * L[0].out);
  c.h2.resize(rows * L[1].out);
  c.out.resize(rows * L[2].out);
  k.linear_forward(obs.data(), d.data() + L[0].w, d.data() + L[0].b, c.h1.data(), rows,
                   L[0].in, L[0].out);
  k.tanh_inplace(c.h1.data(), c.h1.size());
  k.linear_forward(c.h1.data(), d.data() + L[1].w, d.data() + L[1].b, c.h2.data(), rows,
                   L[1].in, L[1].out);
  k.tanh_inplace(c.h2.data(), c.h2.size());
  k.linear_forward(c.h2.data(), d.data() + L[2].w, d.data() + L[2].b, c.out.data(), rows,
                   L[2].in, L[2].out);
}

void mlp_backward(const std::vector<double>& d, const std::array<PolicyParams::Layer, 3>& L,
                  std::span<const double> obs, MlpCache& c, std::span<double> d_out,
                  std::span<double> grad) {
  const auto& k = simd::kernels();
  const std::size_t rows = c.rows;
  std::vector<double> g2(rows * L[1].out);
  std::vector<double> g1(rows * L[0].out);

  k.linear_backward_params(d_out.data(), c.h2.data(), grad.data() + L[2].w, grad.data() + L[2].b,
                           rows, L[2].in, L[2].out);
  k.linear_backward_input(d_out.data(), d.data() + L[2].w, g2.data(), rows, L[2].in, L[2].out);
  k.tanh_backward(c.h2.data(), g2.data(), g2.size());

  k.linear_backward_params(g2.data(), c.h1.data(), grad.data() + L[1].w, grad.data() + L[1].b,
                           rows, L[1].in, L[1].out);
  k.linear_backward_input(g2.data(), d.data() + L[1].w, g1.data(), rows, L[1].in, L[1].out);
  k.tanh_backward(c.h1.data(), g1.data(), g1.size());

  k.linear_backward_params(g1.data(), obs.data(), grad.data() + L[0].w, grad.data() + L[0].b,
                           rows, L[0].in, L[0].out);
}

void check_batch(const PolicyParams& p, std::span<const double> obs, std::size_t rows) {
  if (obs.size() != rows * p.obs_dim()) {
    throw DimensionMismatch("policy expects " + std::to_string(p.obs_dim()) +
                            " features per row, got " + std::to_string(obs.size()) + " for " +
                            std::to_string(rows) + " rows");
  }
}

}  // namespace

void actor_forward(const PolicyParams& p, std::span<const double> obs, std::size_t rows,
                   MlpCache& cache) {
  check_batch(p, obs, rows);
  mlp_forward(p.data(), p.actor_layers(), obs, rows, cache);
}

void critic_forward(const PolicyParams& p, std::span<const double> obs, std::size_t rows,
                    MlpCache& cache) {
  check_batch(p, obs, rows);
  mlp_forward(p.data(), p.critic_layers(), obs, rows, cache);
}

void actor_backward(const PolicyParams& p, std::span<const double> obs, MlpCache& cache,
                    std::span<double> d_out, std::span<double> grad) {
  mlp_backward(p.data(), p.actor_layers(), obs, cache, d_out, grad);
}

void critic_backward(const PolicyParams& p, std::span<const double> obs, MlpCache& cache,
                     std::span<double> d_out, std::span<double> grad) {
  mlp_backward(p.data(), p.critic_layers(), obs, cache, d_out, grad);
}

PolicyOutput policy_forward(const PolicyParams& params, std::span<const double> obs) {
  if (obs.size() != params.obs_dim()) {
    throw DimensionMismatch("observation has " + std::to_string(obs.size()) +
                            " features, policy expects " + std::to_string(params.obs_dim()));
  }
  thread_local MlpCache actor, critic;
  actor_forward(params, obs, 1, actor);
  critic_forward(params, obs, 1, critic);
  PolicyOutput out;
  const auto ls = params.log_std();
  for (std::size_t k = 0; k < kActionDim; ++k) {
    out.mean_pre[k] = actor.out[k];
    out.mean[k] = std::tanh(actor.out[k]);
    out.log_std[k] = ls[k];
  }
  out.value = critic.out[0];
  return out;
}

double gaussian_log_prob(const Action& u, const Action& mean_pre, const Action& log_std) {
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  double lp = 0.0;
  for (std::size_t k = 0; k < kActionDim; ++k) {
    const double z = (u[k] - mean_pre[k]) * std::exp(-log_std[k]);
    lp += -0.5 * z * z - log_std[k] - kHalfLog2Pi;
  }
  return lp;
}

double tanh_log_jacobian(const Action& u) {
  // log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
  double s = 0.0;
  for (double v : u) {
    const double m = -2.0 * v;
    const double softplus = m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
    s += 2.0 * (std::numbers::ln2 - v - softplus);
  }
  return s;
}

ActionSample sample_from(const Action& mean_pre, const Action& log_std, Rng& rng) {
  ActionSample s;
  for (std::size_t k = 0; k < kActionDim; ++k) {
    s.pre_squash[k] = mean_pre[k] + std::exp(log_std[k]) * rng.normal();
    s.action[k] = std::clamp(std::tanh(s.pre_squash[k]), -1.0, 1.0);
  }
  s.gaussian_log_prob = gaussian_log_prob(s.pre_squash, mean_pre, log_std);
  s.log_prob = s.gaussian_log_prob - tanh_log_jacobian(s.pre_squash);
  return s;
}

ActionSample sample_action(const PolicyParams& params, std::span<const double> obs, Rng& rng) {
  const PolicyOutput out = policy_forward(params, obs);
  return sample_from(out.mean_pre, out.log_std, rng);
}

}  // namespace slung
