#pragma once

#include <cstdint>
#include <vector>

#include "motionforge/denoiser.hpp"
#include "motionforge/field_core.hpp"
#include "motionforge/tensor.hpp"

namespace motionforge {

/// Root-mean-square distance over all elements: the "‖·‖₂" of every loss term.
double rms_distance(const Tensor3& a, const Tensor3& b);

/// d rms_distance(a, b) / d a, written into `grad` scaled by `scale`.
/// Zero when the distance is zero.
void rms_distance_grad(const Tensor3& a, const Tensor3& b, double scale, Tensor3& grad);

struct LossConfig {
  double w_diff = 1.0;
  double w_cond = 1.0;
  double w_pct = 0.01;

  /// Throws InvalidParameter unless all weights are >= 0 and one is > 0.
  void validate() const;
};

struct LossParts {
  double diff = 0.0;
  double cond = 0.0;
  double pct = 0.0;
};

double total_loss(const LossParts& parts, const LossConfig& config);

/// Reconstruction term between the decoded flow latent and its target.
double loss_diff(const Tensor3& z0_hat, const Tensor3& z0);

/// One (ground truth, condition) pair. `fill` is the warp border value:
/// 1 for images, 0 for masks.
struct ConditionPair {
  Tensor3 target;
  Tensor3 source;
  double fill = kImageFill;
};

/// RMS over every element of every pair of target - warp(source, flow).
double loss_cond(const std::vector<ConditionPair>& pairs, const Tensor3& flow);
double loss_cond(const ImageTensor& c_gt, const ImageTensor& c, const FlowField& flow);

/// Frozen, randomly initialised three-level strided conv pyramid (tanh
/// activations) standing in for a pretrained feature network.
class PerceptualProxy {
 public:
  struct Cache {
    std::vector<Tensor3> inputs;  // input to each level
    std::vector<Tensor3> pre;     // pre-activation of each level
  };

  explicit PerceptualProxy(std::uint64_t seed = 0x5eed, int in_channels = 3, int width = 8);

  std::vector<Tensor3> features(const Tensor3& image, Cache* cache = nullptr) const;
  /// d loss / d image given d loss / d features per level.
  Tensor3 backward(const Cache& cache, const std::vector<Tensor3>& grad_features) const;

  static constexpr int kLevels = 3;
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::vector<ConvWeights> levels_;
};

/// Sum over pyramid levels of the RMS feature distance between the ground
/// truth and the warped condition image.
double loss_pct(const ImageTensor& i_gt, const ImageTensor& i_cond, const FlowField& flow,
                const PerceptualProxy& proxy);
double loss_pct(const Tensor3& i_gt, const Tensor3& i_cond, const Tensor3& flow,
                const PerceptualProxy& proxy);

}  // namespace motionforge
