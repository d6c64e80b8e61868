#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "slung/env.hpp"
#include "slung/rng.hpp"

namespace slung {

// Actor obs -> H -> H -> 4 (tanh hidden, linear head squashed by tanh) with a
// state-independent log-std, and a critic obs -> H -> H -> 1.
//
// All parameters live in one flat vector. Order (also the checkpoint order):
//   actor:  W1[H x obs] b1[H] W2[H x H] b2[H] W3[4 x H] b3[4] log_std[4]
//   critic: W1[H x obs] b1[H] W2[H x H] b2[H] W3[1 x H] b3[1]
// Weights are row-major out x in.
class PolicyParams {
 public:
  struct Layer {
    std::size_t in, out, w, b;  // dims and offsets into data()
  };

  PolicyParams() = default;
  PolicyParams(std::size_t obs_dim, std::size_t hidden);

  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t size() const { return data_.size(); }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  const std::array<Layer, 3>& actor_layers() const { return actor_; }
  const std::array<Layer, 3>& critic_layers() const { return critic_; }
  std::size_t log_std_offset() const { return log_std_; }

  std::span<double> log_std() { return {data_.data() + log_std_, kActionDim}; }
  std::span<const double> log_std() const { return {data_.data() + log_std_, kActionDim}; }

  // Same layout, parameters rounded to float32 (the checkpoint precision).
  PolicyParams quantized() const;

  bool all_finite() const;

 private:
  std::size_t obs_dim_ = 0;
  std::size_t hidden_ = 0;
  std::array<Layer, 3> actor_{};
  std::array<Layer, 3> critic_{};
  std::size_t log_std_ = 0;
  std::vector<double> data_;
};

// Scaled-Gaussian init; the actor head starts near zero with its thrust bias
// set so that the initial mean action equals `initial_mean`.
PolicyParams init_policy(std::size_t obs_dim, std::size_t hidden, Rng& rng,
                         const Action& initial_mean, double initial_log_std);

struct PolicyOutput {
  Action mean{};      // tanh-squashed, in (-1, 1)
  Action mean_pre{};  // pre-squash mean
  Action log_std{};
  double value = 0.0;
};

// Throws DimensionMismatch when obs size differs from params.obs_dim().
PolicyOutput policy_forward(const PolicyParams& params, std::span<const double> obs);

// Intermediate activations of a batched MLP pass.
struct MlpCache {
  std::size_t rows = 0;
  std::vector<double> h1, h2, out;
};

// Batched actor: out = pre-squash means (rows x 4).
void actor_forward(const PolicyParams& p, std::span<const double> obs, std::size_t rows,
                   MlpCache& cache);
// Batched critic: out = values (rows x 1).
void critic_forward(const PolicyParams& p, std::span<const double> obs, std::size_t rows,
                    MlpCache& cache);

// Accumulate parameter gradients into grad (same layout as p) given
// d(loss)/d(out) for a cached forward pass. d_out is consumed as scratch.
void actor_backward(const PolicyParams& p, std::span<const double> obs, MlpCache& cache,
                    std::span<double> d_out, std::span<double> grad);
void critic_backward(const PolicyParams& p, std::span<const double> obs, MlpCache& cache,
                     std::span<double> d_out, std::span<double> grad);

struct ActionSample {
  Action action{};     // tanh(pre_squash), clamped to [-1, 1]
  Action pre_squash{};
  double log_prob = 0.0;           // with tanh change-of-variables correction
  double gaussian_log_prob = 0.0;  // density of pre_squash only
};

double gaussian_log_prob(const Action& u, const Action& mean_pre, const Action& log_std);
// log |d tanh(u)/du| summed over dims, in a form that is stable for large |u|.
double tanh_log_jacobian(const Action& u);

ActionSample sample_from(const Action& mean_pre, const Action& log_std, Rng& rng);
ActionSample sample_action(const PolicyParams& params, std::span<const double> obs, Rng& rng);

}  // namespace slung
