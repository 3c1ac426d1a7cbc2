#include "motionforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "motionforge/errors.hpp"

namespace motionforge {

double psnr(const Tensor3& a, const Tensor3& b) {
  require_same_shape(a, b, "psnr");
  double sum = 0.0;
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(av.size());
  if (mse == 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return 10.0 * std::log10(1.0 / mse);
}

double psnr(const ImageTensor& a, const ImageTensor& b) { return psnr(a.tensor(), b.tensor()); }

double psnr_for_csv(double psnr_db) { return std::isinf(psnr_db) ? kPsnrCsvSentinel : psnr_db; }

namespace {

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(size);
  const double c = 0.5 * (size - 1);
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    k[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) {
    v /= sum;
  }
  return k;
}

// Separable "valid" filtering of one plane.
std::vector<double> filter_valid(std::span<const double> plane, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = h - n + 1;
  const int ow = w - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        s += k[i] * plane[static_cast<std::size_t>(y) * w + x + i];
      }
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      }
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

double ssim(const Tensor3& a, const Tensor3& b, const SsimOptions& opt) {
  require_same_shape(a, b, "ssim");
  if (a.height() < opt.window || a.width() < opt.window) {
    throw InvalidParameter("ssim: image smaller than the " + std::to_string(opt.window) + "-px window");
  }
  if (a == b) {
    return 1.0;
  }
  const auto k = gaussian_kernel(opt.window, opt.sigma);
  const double c1 = (opt.k1 * opt.dynamic_range) * (opt.k1 * opt.dynamic_range);
  const double c2 = (opt.k2 * opt.dynamic_range) * (opt.k2 * opt.dynamic_range);
  const int h = a.height();
  const int w = a.width();
  double total = 0.0;
  std::size_t count = 0;
  std::vector<double> aa(static_cast<std::size_t>(h) * w);
  std::vector<double> bb(aa.size());
  std::vector<double> ab(aa.size());
  for (int c = 0; c < a.channels(); ++c) {
    auto pa = a.channel(c);
    auto pb = b.channel(c);
    for (std::size_t i = 0; i < aa.size(); ++i) {
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter_valid(pa, h, w, k);
    const auto mu_b = filter_valid(pb, h, w, k);
    const auto e_aa = filter_valid(aa, h, w, k);
    const auto e_bb = filter_valid(bb, h, w, k);
    const auto e_ab = filter_valid(ab, h, w, k);
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
      const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
      const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2);
      total += num / den;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double ssim(const ImageTensor& a, const ImageTensor& b, const SsimOptions& options) {
  return ssim(a.tensor(), b.tensor(), options);
}

double flow_epe(const FlowField& predicted, const FlowField& truth) {
  require_same_shape(predicted.tensor(), truth.tensor(), "flow_epe");
  double sum = 0.0;
  const int h = truth.height();
  const int w = truth.width();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      sum += std::hypot(predicted.u(y, x) - truth.u(y, x), predicted.v(y, x) - truth.v(y, x));
    }
  }
  return sum / (static_cast<double>(h) * w);
}

ImageTensor heatmap(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a.tensor(), b.tensor(), "heatmap");
  Tensor3 out(1, a.height(), a.width());
  double peak = 0.0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      double s = 0.0;
      for (int c = 0; c < a.channels(); ++c) {
        s += std::abs(a.at(c, y, x) - b.at(c, y, x));
      }
      s /= a.channels();
      out.at(0, y, x) = s;
      peak = std::max(peak, s);
    }
  }
  if (peak > 0.0) {
    out *= 1.0 / peak;
  }
  return ImageTensor::clamped(std::move(out));
}

}  // namespace motionforge
