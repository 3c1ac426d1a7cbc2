#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "motionforge/denoiser.hpp"
#include "motionforge/losses.hpp"
#include "motionforge/training.hpp"

namespace motionforge {

struct GradientCheckReport {
  std::size_t checked = 0;
  std::size_t failures = 0;
  std::size_t refined = 0;  // passed only with the step shrunk 100x
  double max_rel_error = 0.0;
  std::string worst_block;
  std::size_t worst_index = 0;
};

/// Small self-contained loss instance for finite-difference checks.
struct GradientInstance {
  Schedule schedule;
  std::unique_ptr<PerceptualProxy> proxy;
  LossConfig weights;
  double gamma = 4.0;
  DenoiserModel model;
  TrainingExample example;
  int t = 400;
  Tensor3 noise;

  LossContext context() const { return LossContext{schedule, *proxy, weights, gamma, 2}; }
};

/// 8x8 stitched-rectangling sample, a seeded model (N = 2) and all three
/// loss terms at the 1 : 1 : 0.01 weighting.
GradientInstance make_gradient_instance(std::uint64_t seed, int size = 8, int hidden = 8);

/// Compares the analytic gradient of the total loss with central differences
/// (step h) for every parameter. Relative error is
/// |a - n| / max(|a|, |n|, 1e-8). A parameter that fails at h is probed once
/// more at h / 100 and counted in `refined` if that passes.
GradientCheckReport check_gradients(const DenoiserModel& model, const TrainingExample& example, int t,
                                    const Tensor3& noise, const LossContext& ctx, double h = 1e-4,
                                    double tolerance = 1e-3);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  /// Writes a NaN into the first conv weight of the gradient-check model.
  bool corrupt_weights = false;
  int threads = 0;
};

/// Runs every built-in oracle: warp, normalization, codec, channel
/// adaptation, v-decode, gradients, SSD oracles, metrics, file formats and
/// training determinism.
std::vector<CheckResult> run_oracle_suite(const VerifyOptions& options);

}  // namespace motionforge
