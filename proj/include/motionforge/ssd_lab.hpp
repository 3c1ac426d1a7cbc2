#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "motionforge/diffusion.hpp"
#include "motionforge/pipeline.hpp"

namespace motionforge::ssd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Toy denoiser theta: x_t -> y_{0|t}, with its Jacobian.
struct ToyDenoiser {
  std::function<Vec(const Vec&)> value;
  std::function<Mat(const Vec&)> jacobian;

  static ToyDenoiser affine(Mat a, Vec b);
  /// x -> A x + b + k * tanh(x), elementwise tanh.
  static ToyDenoiser tanh_affine(Mat a, Vec b, double k);
};

/// Scheduler re-noising coefficients for one chain level. `identity`
/// returns y_{0|t} unchanged; otherwise a deterministic DDIM step
///   y_{t-1} = a_prev * y0 + s_prev * (x_t - a_t * y0) / s_t.
struct SchedulerStep {
  bool identity = true;
  double a_t = 1.0;
  double s_t = 0.0;
  double a_prev = 1.0;
  double s_prev = 0.0;
};

/// p = s ∘ theta. Chain levels run T, T-1, ..., 1; level j maps x_j to y_{j-1}.
class CompositeMap {
 public:
  /// Identity scheduler at every level.
  explicit CompositeMap(ToyDenoiser theta);
  /// DDIM scheduler on the `levels`-step sampling grid of `schedule`.
  CompositeMap(ToyDenoiser theta, const Schedule& schedule, int levels);

  Vec apply(int level, const Vec& x) const;
  Mat jacobian(int level, const Vec& x) const;

 private:
  SchedulerStep step(int level) const;

  ToyDenoiser theta_;
  std::vector<SchedulerStep> steps_;  // empty: identity everywhere
};

/// One application of p at `level`.
Vec p_map(const CompositeMap& p, int level, const Vec& x);

struct SSDTrace {
  int levels = 0;
  std::vector<Vec> uncorrected;  // y_T, ..., y_0
  std::vector<Vec> corrected;    // x̂_T, ..., x̂_0
  std::vector<Vec> deltas;       // applied corrections, Δ_{T-1}, ..., Δ_1
  std::optional<Vec> terminal_delta;  // Δ_0 when supplied
  std::vector<Mat> jacobians;    // ∇p at x̂_1, ..., x̂_{T-1} (ascending level)
  Vec pred_1;
  Vec pred_2;
  Vec empirical_error;    // pred_2 - pred_1
  Vec first_order_error;  // Σ Δ_i Π ∇p(x_j)
};

/// pred_1 = p(... p(p(x_T)) ...), T applications.
SSDTrace run_uncorrected(const CompositeMap& p, const Vec& x_T, int levels);

/// pred_2: after each of the first T-1 applications the state is shifted by
/// the next correction, Δ_{T-1} first. `terminal` (Δ_0) is added to the final
/// output when given; without it T = 1 reproduces pred_1 exactly. Also fills
/// pred_1, the Jacobians along the corrected chain and both error vectors.
SSDTrace run_corrected(const CompositeMap& p, const Vec& x_T, const std::vector<Vec>& deltas, int levels,
                       const std::optional<Vec>& terminal = std::nullopt);

/// Δ_0 + Σ_{i=1}^{T-1} ∇p(x_1) ⋯ ∇p(x_i) Δ_i, with deltas ordered Δ_{T-1}..Δ_1
/// and jacobians ordered ∇p(x_1)..∇p(x_{T-1}).
Vec first_order_error(const std::vector<Vec>& deltas, const std::vector<Mat>& jacobians,
                      const std::optional<Vec>& terminal = std::nullopt);

struct ScalingResult {
  std::vector<double> epsilons;
  std::vector<double> residuals;  // ‖empirical - first order‖ per ε
  std::optional<double> slope;    // log-log slope; empty when every residual is 0
};

/// Scales the base corrections by each ε and fits log residual against log ε.
ScalingResult residual_scaling_test(const CompositeMap& p, const Vec& x_T, const std::vector<Vec>& base,
                                    int levels, const std::vector<double>& epsilons);

struct SweepRow {
  int steps = 0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double flow_epe = 0.0;
  std::size_t samples = 0;
};

/// Runs one-step and multi-step inference over the records and averages
/// PSNR (infinities counted as 99 dB), SSIM and EPE against flow_gt.
/// Record i uses sample_seed(seed, i) at every step count.
std::vector<SweepRow> steps_sweep(const MotionModel& model, const std::vector<SampleRecord>& records,
                                  const std::vector<int>& steps_list, std::uint64_t seed, int threads = 0);

}  // namespace motionforge::ssd
