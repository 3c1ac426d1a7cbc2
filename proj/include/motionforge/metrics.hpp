#pragma once

#include <limits>
#include <optional>

#include "motionforge/field_core.hpp"

namespace motionforge {

inline constexpr double kPsnrCsvSentinel = 99.0;

/// 10 log10(1 / MSE) for unit dynamic range; +inf when the images match.
double psnr(const ImageTensor& a, const ImageTensor& b);
double psnr(const Tensor3& a, const Tensor3& b);

/// Value written to CSV for a PSNR: infinities become 99 dB.
double psnr_for_csv(double psnr_db);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean local SSIM over every valid window position and channel, with a
/// Gaussian window.
double ssim(const ImageTensor& a, const ImageTensor& b, const SsimOptions& options = {});
double ssim(const Tensor3& a, const Tensor3& b, const SsimOptions& options = {});

/// Mean Euclidean endpoint error in pixels.
double flow_epe(const FlowField& predicted, const FlowField& truth);

/// Per-pixel mean absolute channel difference, divided by its maximum.
/// Identical inputs give an all-zero map.
ImageTensor heatmap(const ImageTensor& a, const ImageTensor& b);

struct MetricReport {
  double psnr_db = std::numeric_limits<double>::infinity();
  double ssim = 1.0;
  std::optional<double> flow_epe;
  std::size_t samples = 0;
};

}  // namespace motionforge
