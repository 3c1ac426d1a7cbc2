#include "motionforge/field_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "motionforge/errors.hpp"

namespace motionforge {

namespace {

void require_finite(const Tensor3& t, const char* what) {
  if (!t.all_finite()) {
    throw InvalidParameter(std::string(what) + " contains non-finite values");
  }
}

void require_gamma(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw InvalidParameter("flow normalization factor must be positive and finite, got " +
                           std::to_string(gamma));
  }
}

struct BilinearTaps {
  int x0;
  int y0;
  double fx;
  double fy;
};

BilinearTaps taps_at(double sx, double sy) {
  const double flx = std::floor(sx);
  const double fly = std::floor(sy);
  return {static_cast<int>(flx), static_cast<int>(fly), sx - flx, sy - fly};
}

bool flow_out_of_int_range(double sx, double sy) {
  return !(std::abs(sx) < 1e9 && std::abs(sy) < 1e9);
}

}  // namespace

// ---------------------------------------------------------------- ImageTensor

ImageTensor::ImageTensor(Tensor3 pixels) : pixels_(std::move(pixels)) {
  if (pixels_.channels() != 1 && pixels_.channels() != 3) {
    throw InvalidParameter("image must have 1 or 3 channels, got " +
                           std::to_string(pixels_.channels()));
  }
  for (double v : pixels_.data()) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw InvalidParameter("image value outside [0, 1]: " + std::to_string(v));
    }
  }
}

ImageTensor ImageTensor::clamped(Tensor3 pixels) {
  require_finite(pixels, "image");
  for (double& v : pixels.data()) {
    v = std::clamp(v, 0.0, 1.0);
  }
  return ImageTensor(std::move(pixels));
}

ImageTensor ImageTensor::filled(int channels, int height, int width, double value) {
  return ImageTensor(Tensor3(channels, height, width, value));
}

// ----------------------------------------------------------------------- Mask

Mask::Mask(Tensor3 values) : values_(std::move(values)) {
  if (values_.channels() != 1) {
    throw InvalidParameter("mask must have exactly one channel");
  }
  for (double v : values_.data()) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw InvalidParameter("mask value outside [0, 1]");
    }
  }
}

Mask Mask::ones(int height, int width) { return Mask(Tensor3(1, height, width, 1.0)); }
Mask Mask::zeros(int height, int width) { return Mask(Tensor3(1, height, width, 0.0)); }

Tensor3 Mask::as_rgb() const {
  Tensor3 out(3, height(), width());
  for (int c = 0; c < 3; ++c) {
    std::ranges::copy(values_.channel(0), out.channel(c).begin());
  }
  return out;
}

// ------------------------------------------------------------------ FlowField

FlowField::FlowField(Tensor3 uv) : uv_(std::move(uv)) {
  if (uv_.channels() != 2) {
    throw InvalidParameter("flow field must have 2 channels");
  }
  require_finite(uv_, "flow field");
  const double limit = bound();
  for (double v : uv_.data()) {
    if (std::abs(v) > limit) {
      throw InvalidParameter("flow displacement " + std::to_string(v) + " exceeds sanity bound " +
                             std::to_string(limit));
    }
  }
}

FlowField::FlowField(int height, int width) : FlowField(Tensor3(2, height, width)) {}

FlowField FlowField::constant(int height, int width, double u, double v) {
  Tensor3 uv(2, height, width);
  std::ranges::fill(uv.channel(0), u);
  std::ranges::fill(uv.channel(1), v);
  return FlowField(std::move(uv));
}

FlowField FlowField::clamped(Tensor3 uv) {
  require_finite(uv, "flow field");
  const double limit = 2.0 * std::max(uv.height(), uv.width());
  for (double& v : uv.data()) {
    v = std::clamp(v, -limit, limit);
  }
  return FlowField(std::move(uv));
}

double FlowField::bound() const { return 2.0 * std::max(uv_.height(), uv_.width()); }

// ----------------------------------------------------------- normalized flows

NormalizedFlow::NormalizedFlow(Tensor3 uv) : uv_(std::move(uv)) {
  if (uv_.channels() != 2) {
    throw InvalidParameter("normalized flow must have 2 channels");
  }
  require_finite(uv_, "normalized flow");
}

HomogeneousFlow::HomogeneousFlow(Tensor3 channels) : channels_(std::move(channels)) {
  if (channels_.channels() != 3) {
    throw InvalidParameter("homogeneous flow must have 3 channels");
  }
}

NormalizedFlow normalize_flow(const FlowField& flow, double gamma) {
  require_gamma(gamma);
  Tensor3 out = flow.tensor();
  for (double& v : out.data()) {
    v /= gamma;
  }
  return NormalizedFlow(std::move(out));
}

FlowField denormalize_flow(const NormalizedFlow& flow, double gamma) {
  require_gamma(gamma);
  Tensor3 out = flow.tensor();
  for (double& v : out.data()) {
    v *= gamma;
  }
  return FlowField(std::move(out));
}

HomogeneousFlow to_homogeneous(const NormalizedFlow& flow) {
  const Tensor3& f = flow.tensor();
  Tensor3 out(3, f.height(), f.width(), 1.0);
  std::ranges::copy(f.channel(0), out.channel(0).begin());
  std::ranges::copy(f.channel(1), out.channel(1).begin());
  return HomogeneousFlow(std::move(out));
}

NormalizedFlow from_homogeneous(const HomogeneousFlow& flow) {
  const Tensor3& h = flow.tensor();
  Tensor3 out(2, h.height(), h.width());
  std::ranges::copy(h.channel(0), out.channel(0).begin());
  std::ranges::copy(h.channel(1), out.channel(1).begin());
  return NormalizedFlow(std::move(out));
}

// ---------------------------------------------------------------------- warps

namespace detail {

Tensor3 warp_tensor(const Tensor3& source, const Tensor3& flow, double fill) {
  if (flow.channels() != 2 || flow.height() != source.height() || flow.width() != source.width()) {
    throw ShapeMismatch("warp: flow " + std::to_string(flow.height()) + "x" +
                        std::to_string(flow.width()) + " does not match image " +
                        std::to_string(source.height()) + "x" + std::to_string(source.width()));
  }
  const int h = source.height();
  const int w = source.width();
  Tensor3 out(source.shape());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double sx = x + flow.at(0, y, x);
      const double sy = y + flow.at(1, y, x);
      if (flow_out_of_int_range(sx, sy)) {
        for (int c = 0; c < source.channels(); ++c) {
          out.at(c, y, x) = fill;
        }
        continue;
      }
      const auto [x0, y0, fx, fy] = taps_at(sx, sy);
      const bool in_x0 = x0 >= 0 && x0 < w;
      const bool in_x1 = x0 + 1 >= 0 && x0 + 1 < w;
      const bool in_y0 = y0 >= 0 && y0 < h;
      const bool in_y1 = y0 + 1 >= 0 && y0 + 1 < h;
      const double w00 = (1.0 - fx) * (1.0 - fy);
      const double w10 = fx * (1.0 - fy);
      const double w01 = (1.0 - fx) * fy;
      const double w11 = fx * fy;
      for (int c = 0; c < source.channels(); ++c) {
        const double a = in_x0 && in_y0 ? source.at(c, y0, x0) : fill;
        const double b = in_x1 && in_y0 ? source.at(c, y0, x0 + 1) : fill;
        const double d = in_x0 && in_y1 ? source.at(c, y0 + 1, x0) : fill;
        const double e = in_x1 && in_y1 ? source.at(c, y0 + 1, x0 + 1) : fill;
        out.at(c, y, x) = w00 * a + w10 * b + w01 * d + w11 * e;
      }
    }
  }
  return out;
}

void warp_tensor_backward(const Tensor3& source, const Tensor3& flow, double fill,
                          const Tensor3& grad_out, Tensor3& grad_flow, Tensor3* grad_source) {
  require_same_shape(source, grad_out, "warp backward");
  require_same_shape(flow, grad_flow, "warp backward flow gradient");
  if (grad_source != nullptr) {
    require_same_shape(source, *grad_source, "warp backward source gradient");
  }
  const int h = source.height();
  const int w = source.width();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double sx = x + flow.at(0, y, x);
      const double sy = y + flow.at(1, y, x);
      if (flow_out_of_int_range(sx, sy)) {
        continue;
      }
      const auto [x0, y0, fx, fy] = taps_at(sx, sy);
      const bool in_x0 = x0 >= 0 && x0 < w;
      const bool in_x1 = x0 + 1 >= 0 && x0 + 1 < w;
      const bool in_y0 = y0 >= 0 && y0 < h;
      const bool in_y1 = y0 + 1 >= 0 && y0 + 1 < h;
      double du = 0.0;
      double dv = 0.0;
      for (int c = 0; c < source.channels(); ++c) {
        const double g = grad_out.at(c, y, x);
        if (g == 0.0) {
          continue;
        }
        const double a = in_x0 && in_y0 ? source.at(c, y0, x0) : fill;
        const double b = in_x1 && in_y0 ? source.at(c, y0, x0 + 1) : fill;
        const double d = in_x0 && in_y1 ? source.at(c, y0 + 1, x0) : fill;
        const double e = in_x1 && in_y1 ? source.at(c, y0 + 1, x0 + 1) : fill;
        du += g * ((1.0 - fy) * (b - a) + fy * (e - d));
        dv += g * ((1.0 - fx) * (d - a) + fx * (e - b));
        if (grad_source != nullptr) {
          if (in_x0 && in_y0) grad_source->at(c, y0, x0) += g * (1.0 - fx) * (1.0 - fy);
          if (in_x1 && in_y0) grad_source->at(c, y0, x0 + 1) += g * fx * (1.0 - fy);
          if (in_x0 && in_y1) grad_source->at(c, y0 + 1, x0) += g * (1.0 - fx) * fy;
          if (in_x1 && in_y1) grad_source->at(c, y0 + 1, x0 + 1) += g * fx * fy;
        }
      }
      grad_flow.at(0, y, x) += du;
      grad_flow.at(1, y, x) += dv;
    }
  }
}

}  // namespace detail

ImageTensor warp(const ImageTensor& image, const FlowField& flow) {
  return ImageTensor::clamped(detail::warp_tensor(image.tensor(), flow.tensor(), kImageFill));
}

Mask warp_mask(const Mask& mask, const FlowField& flow, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw InvalidParameter("mask threshold must lie in (0, 1)");
  }
  Tensor3 warped = detail::warp_tensor(mask.tensor(), flow.tensor(), kMaskFill);
  for (double& v : warped.data()) {
    v = v >= threshold ? 1.0 : 0.0;
  }
  return Mask(std::move(warped));
}

}  // namespace motionforge
