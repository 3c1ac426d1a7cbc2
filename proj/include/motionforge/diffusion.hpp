#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "motionforge/latent_codec.hpp"
#include "motionforge/tensor.hpp"

namespace motionforge {

inline constexpr int kDefaultTimesteps = 1000;
inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;

/// Variance-preserving DDPM schedule. Steps are 1-based; t = 0 is the clean
/// endpoint with alpha = 1 and sigma = 0.
class Schedule {
 public:
  Schedule(int steps = kDefaultTimesteps, double beta_start = kDefaultBetaStart, double beta_end = kDefaultBetaEnd);

  int steps() const { return steps_; }
  double beta_start() const { return beta_start_; }
  double beta_end() const { return beta_end_; }
  double beta(int t) const;
  double alpha_bar(int t) const;
  /// sqrt(alpha_bar_t)
  double alpha(int t) const;
  /// sqrt(1 - alpha_bar_t)
  double sigma(int t) const;

 private:
  void check(int t) const;

  int steps_;
  double beta_start_;
  double beta_end_;
  std::vector<double> beta_;       // index t, beta_[0] unused
  std::vector<double> alpha_bar_;  // index t, alpha_bar_[0] = 1
};

/// Linear beta ramp from beta_start to beta_end over `steps` steps.
Schedule build_schedule(int steps = kDefaultTimesteps, double beta_start = kDefaultBetaStart,
                        double beta_end = kDefaultBetaEnd);

Tensor3 forward_diffuse(const Tensor3& z0, int t, const Tensor3& noise, const Schedule& schedule);
Tensor3 v_target(const Tensor3& z0, const Tensor3& noise, int t, const Schedule& schedule);
/// z0_hat = alpha_t * z_t - sigma_t * v_hat
Tensor3 decode_v(const Tensor3& z_t, const Tensor3& v_hat, int t, const Schedule& schedule);
/// Deterministic (eta = 0) DDIM update from t to t_prev < t.
Tensor3 ddim_step(const Tensor3& z_t, const Tensor3& v_hat, int t, int t_prev,
                  const Schedule& schedule);

/// Uniform-stride timestep grid over [1, T], largest first. steps = 1 gives {T}.
std::vector<int> sampling_timesteps(int total_steps, int sample_steps);

/// Standard Gaussian tensor drawn from counters of (seed, stream).
Tensor3 gaussian_tensor(Shape3 shape, std::uint64_t seed, std::uint64_t stream);

/// v-prediction callback: (stacked input, timestep) -> v_hat in flow-latent shape.
using VPredictor = std::function<Tensor3(const Tensor3& stacked_input, int t)>;

/// Runs the reverse process from a seeded Gaussian z_T. One step is a single
/// decode_v at t = T; more steps run the DDIM chain on sampling_timesteps().
LatentTensor sample(const VPredictor& predictor, const ConditionSet& conditions, Shape3 flow_latent,
                    int steps, std::uint64_t seed, const Schedule& schedule);

}  // namespace motionforge
