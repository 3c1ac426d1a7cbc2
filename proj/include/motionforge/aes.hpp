#pragma once

#include <cstdint>
#include <vector>

#include "motionforge/field_core.hpp"
#include "motionforge/pipeline.hpp"

namespace motionforge {

/// 0 on a `band`-pixel border, 1 inside.
Mask edge_mask(int height, int width, int band);

/// Elementwise product: margin wherever either input is margin.
Mask aes_mask(const Mask& warped, const Mask& edge);

/// K fused candidates and their M_aes masks.
struct EnsembleSet {
  std::vector<ImageTensor> members;
  std::vector<Mask> masks;
};

/// Pixels flagged as margin by any member mask.
Mask union_margin(const std::vector<Mask>& masks);

/// Per pixel and channel: minimum across members where any member marks a
/// margin, otherwise the median (mean of the central pair for even K).
ImageTensor ensemble(const EnsembleSet& set);

/// Mean value over the pixels that `margin` flags as margin; 0 when there are none.
double margin_whiteness(const ImageTensor& image, const Mask& margin);

struct EnsembleOutcome {
  ImageTensor fused;
  EnsembleSet set;
  Mask margin;  // union of member margins
  double psnr_db = 0.0;
  double ssim = 0.0;
  double fused_whiteness = 0.0;
  std::vector<double> member_whiteness;  // over the same union margin
};

/// Fuses already computed member predictions.
EnsembleOutcome fuse_predictions(const SampleRecord& record, const std::vector<Prediction>& members,
                                 int edge_band);

/// Runs K one-step inferences with the given seeds, builds M_aes for each
/// from its warped mask and the edge band, fuses and scores against I_gt.
/// SIR records only.
void require_maskable(const SampleRecord& record);

EnsembleOutcome ensemble_eval(const MotionModel& model, const SampleRecord& record,
                              const std::vector<std::uint64_t>& seeds, int edge_band, int steps = 1);

}  // namespace motionforge
