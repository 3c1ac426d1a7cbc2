#pragma once

#include "motionforge/tensor.hpp"

namespace motionforge {

/// Fill value for image samples that land outside the source (white margins).
inline constexpr double kImageFill = 1.0;
/// Fill value for mask samples outside the source (margins are invalid).
inline constexpr double kMaskFill = 0.0;
inline constexpr double kDefaultGamma = 64.0;
inline constexpr double kDefaultMaskThreshold = 0.5;

/// Float image with 1 or 3 channels, all values finite and within [0, 1].
class ImageTensor {
 public:
  ImageTensor() = default;
  /// Validates channel count and range; throws InvalidParameter otherwise.
  explicit ImageTensor(Tensor3 pixels);
  /// Clamps into [0, 1] instead of rejecting. Non-finite values still throw.
  static ImageTensor clamped(Tensor3 pixels);
  static ImageTensor filled(int channels, int height, int width, double value);

  const Tensor3& tensor() const { return pixels_; }
  int channels() const { return pixels_.channels(); }
  int height() const { return pixels_.height(); }
  int width() const { return pixels_.width(); }
  double at(int c, int y, int x) const { return pixels_.at(c, y, x); }

  bool operator==(const ImageTensor&) const = default;

 private:
  Tensor3 pixels_;
};

/// Single-channel validity mask: 1 = valid content, 0 = margin.
class Mask {
 public:
  Mask() = default;
  explicit Mask(Tensor3 values);
  static Mask ones(int height, int width);
  static Mask zeros(int height, int width);

  const Tensor3& tensor() const { return values_; }
  int height() const { return values_.height(); }
  int width() const { return values_.width(); }
  double at(int y, int x) const { return values_.at(0, y, x); }
  bool is_margin(int y, int x) const { return values_.at(0, y, x) < 0.5; }

  /// The mask replicated to three channels, as fed to the latent codec.
  Tensor3 as_rgb() const;

  bool operator==(const Mask&) const = default;

 private:
  Tensor3 values_;
};

/// Per-pixel displacement (u, v) in pixel units, stored as a 2-channel tensor.
/// Invariant: finite and |u|, |v| <= 2 * max(H, W).
class FlowField {
 public:
  FlowField() = default;
  explicit FlowField(Tensor3 uv);
  FlowField(int height, int width);
  static FlowField constant(int height, int width, double u, double v);
  /// Clips each component to the sanity bound before validating.
  static FlowField clamped(Tensor3 uv);

  const Tensor3& tensor() const { return uv_; }
  int height() const { return uv_.height(); }
  int width() const { return uv_.width(); }
  double u(int y, int x) const { return uv_.at(0, y, x); }
  double v(int y, int x) const { return uv_.at(1, y, x); }
  double bound() const;

  bool operator==(const FlowField&) const = default;

 private:
  Tensor3 uv_;
};

/// Flow divided by γ; dimensionless.
class NormalizedFlow {
 public:
  NormalizedFlow() = default;
  explicit NormalizedFlow(Tensor3 uv);
  const Tensor3& tensor() const { return uv_; }
  int height() const { return uv_.height(); }
  int width() const { return uv_.width(); }

  bool operator==(const NormalizedFlow&) const = default;

 private:
  Tensor3 uv_;
};

/// Normalized flow with an appended all-ones channel.
class HomogeneousFlow {
 public:
  HomogeneousFlow() = default;
  /// Accepts any 3-channel tensor; decoded predictions need not carry an exact ones channel.
  explicit HomogeneousFlow(Tensor3 channels);
  const Tensor3& tensor() const { return channels_; }

 private:
  Tensor3 channels_;
};

NormalizedFlow normalize_flow(const FlowField& flow, double gamma);
FlowField denormalize_flow(const NormalizedFlow& flow, double gamma);
HomogeneousFlow to_homogeneous(const NormalizedFlow& flow);
/// Keeps the first two channels; the third is discarded whatever its value.
NormalizedFlow from_homogeneous(const HomogeneousFlow& flow);

/// Backward bilinear warp: out(x, y) samples `image` at (x + u, y + v).
/// Out-of-range taps read white.
ImageTensor warp(const ImageTensor& image, const FlowField& flow);

/// Warps with fill 0 and thresholds at `threshold` (>= → 1).
Mask warp_mask(const Mask& mask, const FlowField& flow, double threshold = kDefaultMaskThreshold);

namespace detail {

/// Untyped backward warp of any channel count; `flow` is a 2-channel tensor.
Tensor3 warp_tensor(const Tensor3& source, const Tensor3& flow, double fill);

/// Reverse-mode pass of warp_tensor. Accumulates into `grad_flow` (2 channels)
/// and, when non-null, into `grad_source`. At integer sample positions the
/// right-sided derivative is used.
void warp_tensor_backward(const Tensor3& source, const Tensor3& flow, double fill,
                          const Tensor3& grad_out, Tensor3& grad_flow, Tensor3* grad_source);

}  // namespace detail

}  // namespace motionforge
