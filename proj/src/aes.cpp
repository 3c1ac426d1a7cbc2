#include "motionforge/aes.hpp"

#include <algorithm>

#include "motionforge/errors.hpp"
#include "motionforge/metrics.hpp"

namespace motionforge {

Mask edge_mask(int height, int width, int band) {
  if (height < 1 || width < 1) {
    throw InvalidParameter("edge_mask needs positive dimensions");
  }
  if (band < 0 || 2 * band >= std::min(height, width)) {
    throw InvalidParameter("edge band must satisfy 0 <= b < min(H, W) / 2");
  }
  Tensor3 values(1, height, width, 0.0);
  for (int y = band; y < height - band; ++y) {
    for (int x = band; x < width - band; ++x) {
      values.at(0, y, x) = 1.0;
    }
  }
  return Mask(std::move(values));
}

Mask aes_mask(const Mask& warped, const Mask& edge) {
  require_same_shape(warped.tensor(), edge.tensor(), "aes_mask");
  Tensor3 out = warped.tensor();
  const auto e = edge.tensor().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] *= e[i];
  }
  return Mask(std::move(out));
}

Mask union_margin(const std::vector<Mask>& masks) {
  if (masks.empty()) {
    throw InvalidParameter("union_margin needs at least one mask");
  }
  Mask out = Mask::zeros(masks.front().height(), masks.front().width());
  Tensor3 flags(1, out.height(), out.width(), 0.0);
  for (const auto& m : masks) {
    require_same_shape(m.tensor(), flags, "union_margin");
    for (int y = 0; y < flags.height(); ++y) {
      for (int x = 0; x < flags.width(); ++x) {
        if (m.is_margin(y, x)) flags.at(0, y, x) = 1.0;
      }
    }
  }
  // 0 = margin, following the mask convention.
  for (double& v : flags.data()) v = 1.0 - v;
  return Mask(std::move(flags));
}

ImageTensor ensemble(const EnsembleSet& set) {
  if (set.members.empty()) {
    throw InvalidParameter("ensemble needs K >= 1 members");
  }
  if (set.masks.size() != set.members.size()) {
    throw ShapeMismatch("ensemble needs one mask per member");
  }
  const Tensor3& first = set.members.front().tensor();
  for (std::size_t k = 0; k < set.members.size(); ++k) {
    require_same_shape(set.members[k].tensor(), first, "ensemble member");
    if (set.masks[k].height() != first.height() || set.masks[k].width() != first.width()) {
      throw ShapeMismatch("ensemble mask does not match member dimensions");
    }
  }
  const Mask margin = union_margin(set.masks);
  const std::size_t k = set.members.size();
  Tensor3 out(first.shape());
  std::vector<double> values(k);
  for (int c = 0; c < first.channels(); ++c) {
    for (int y = 0; y < first.height(); ++y) {
      for (int x = 0; x < first.width(); ++x) {
        for (std::size_t m = 0; m < k; ++m) {
          values[m] = set.members[m].at(c, y, x);
        }
        std::sort(values.begin(), values.end());
        double v;
        if (margin.is_margin(y, x)) {
          v = values.front();
        } else if (k % 2 == 1) {
          v = values[k / 2];
        } else {
          v = 0.5 * (values[k / 2 - 1] + values[k / 2]);
        }
        out.at(c, y, x) = v;
      }
    }
  }
  return ImageTensor(std::move(out));
}

double margin_whiteness(const ImageTensor& image, const Mask& margin) {
  if (image.height() != margin.height() || image.width() != margin.width()) {
    throw ShapeMismatch("margin_whiteness: mask does not match image");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      if (!margin.is_margin(y, x)) continue;
      for (int c = 0; c < image.channels(); ++c) {
        sum += image.at(c, y, x);
        ++count;
      }
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

void require_maskable(const SampleRecord& record) {
  if (record.task != Task::sir) {
    throw InvalidParameter("AES applies to stitched image rectangling only; RSC has no margin mask");
  }
}

EnsembleOutcome fuse_predictions(const SampleRecord& record, const std::vector<Prediction>& members,
                                 int edge_band) {
  require_maskable(record);
  if (members.empty()) {
    throw InvalidParameter("ensemble needs K >= 1 members");
  }
  const Mask edge = edge_mask(record.image_gt.height(), record.image_gt.width(), edge_band);
  EnsembleOutcome out;
  for (const auto& pred : members) {
    out.set.masks.push_back(aes_mask(pred.warped_mask, edge));
    out.set.members.push_back(pred.warped);
  }
  out.fused = ensemble(out.set);
  out.margin = union_margin(out.set.masks);
  out.psnr_db = psnr(out.fused, record.image_gt);
  out.ssim = ssim(out.fused, record.image_gt);
  out.fused_whiteness = margin_whiteness(out.fused, out.margin);
  for (const auto& m : out.set.members) {
    out.member_whiteness.push_back(margin_whiteness(m, out.margin));
  }
  return out;
}

EnsembleOutcome ensemble_eval(const MotionModel& model, const SampleRecord& record,
                              const std::vector<std::uint64_t>& seeds, int edge_band, int steps) {
  require_maskable(record);
  if (seeds.empty()) {
    throw InvalidParameter("ensemble_eval needs K >= 1 seeds");
  }
  std::vector<Prediction> members;
  for (std::uint64_t seed : seeds) {
    members.push_back(predict(model, record, steps, seed));
  }
  return fuse_predictions(record, members, edge_band);
}

}  // namespace motionforge
