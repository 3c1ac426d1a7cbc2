#pragma once

#include <vector>

#include "motionforge/tensor.hpp"

namespace motionforge {

inline constexpr int kDefaultLatentFactor = 2;

/// Output of the space-to-depth codec: C*s^2 channels at (H/s, W/s).
class LatentTensor {
 public:
  LatentTensor() = default;
  explicit LatentTensor(Tensor3 values) : values_(std::move(values)) {}
  const Tensor3& tensor() const { return values_; }
  Tensor3& tensor() { return values_; }
  int channels() const { return values_.channels(); }
  int height() const { return values_.height(); }
  int width() const { return values_.width(); }

  bool operator==(const LatentTensor&) const = default;

 private:
  Tensor3 values_;
};

/// Ordered condition latents (image, mask, ...). All blocks share their shape.
class ConditionSet {
 public:
  explicit ConditionSet(std::vector<LatentTensor> blocks);
  std::size_t count() const { return blocks_.size(); }
  const std::vector<LatentTensor>& blocks() const { return blocks_; }
  const Shape3& block_shape() const { return blocks_.front().tensor().shape(); }

 private:
  std::vector<LatentTensor> blocks_;
};

/// Lossless space-to-depth. Output channel c*s*s + dy*s + dx holds input
/// channel c at pixel (y*s + dy, x*s + dx).
LatentTensor encode(const Tensor3& x, int factor = kDefaultLatentFactor);
Tensor3 decode(const LatentTensor& z, int factor = kDefaultLatentFactor);

/// Channel concatenation: condition blocks in order, noisy flow latent last.
Tensor3 stack_input(const ConditionSet& conditions, const LatentTensor& noisy_flow);

}  // namespace motionforge
