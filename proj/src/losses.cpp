#include "motionforge/losses.hpp"

#include <cmath>

#include "motionforge/errors.hpp"
#include "motionforge/rng.hpp"

namespace motionforge {

double rms_distance(const Tensor3& a, const Tensor3& b) {
  require_same_shape(a, b, "rms distance");
  if (a.size() == 0) {
    return 0.0;
  }
  double sum = 0.0;
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(av.size()));
}

void rms_distance_grad(const Tensor3& a, const Tensor3& b, double scale, Tensor3& grad) {
  require_same_shape(a, b, "rms gradient");
  if (grad.shape() != a.shape()) {
    grad = Tensor3(a.shape());
  }
  const double r = rms_distance(a, b);
  if (r == 0.0) {
    grad.fill(0.0);
    return;
  }
  const double k = scale / (static_cast<double>(a.size()) * r);
  auto g = grad.data();
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = k * (av[i] - bv[i]);
  }
}

void LossConfig::validate() const {
  if (w_diff < 0.0 || w_cond < 0.0 || w_pct < 0.0 || !std::isfinite(w_diff) ||
      !std::isfinite(w_cond) || !std::isfinite(w_pct)) {
    throw InvalidParameter("loss weights must be finite and non-negative");
  }
  if (w_diff == 0.0 && w_cond == 0.0 && w_pct == 0.0) {
    throw InvalidParameter("at least one loss weight must be positive");
  }
}

double total_loss(const LossParts& parts, const LossConfig& config) {
  return config.w_diff * parts.diff + config.w_cond * parts.cond + config.w_pct * parts.pct;
}

double loss_diff(const Tensor3& z0_hat, const Tensor3& z0) { return rms_distance(z0_hat, z0); }

double loss_cond(const std::vector<ConditionPair>& pairs, const Tensor3& flow) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& p : pairs) {
    require_same_shape(p.target, p.source, "condition loss");
    const Tensor3 warped = detail::warp_tensor(p.source, flow, p.fill);
    auto tv = p.target.data();
    auto wv = warped.data();
    for (std::size_t i = 0; i < tv.size(); ++i) {
      const double d = tv[i] - wv[i];
      sum += d * d;
    }
    count += tv.size();
  }
  return count == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(count));
}

double loss_cond(const ImageTensor& c_gt, const ImageTensor& c, const FlowField& flow) {
  return loss_cond({ConditionPair{c_gt.tensor(), c.tensor(), kImageFill}}, flow.tensor());
}

// ------------------------------------------------------------ PerceptualProxy

PerceptualProxy::PerceptualProxy(std::uint64_t seed, int in_channels, int width) : seed_(seed) {
  RngStream rng(seed, 0x70637470ULL);
  int channels = in_channels;
  for (int level = 0; level < kLevels; ++level) {
    ConvWeights w{width, channels, 3, {}, {}};
    w.weight.resize(static_cast<std::size_t>(width) * channels * 9);
    const double scale = std::sqrt(1.0 / (channels * 9));
    for (double& v : w.weight) {
      v = scale * rng.normal();
    }
    w.bias.resize(width);
    for (double& v : w.bias) {
      v = 0.1 * rng.normal();
    }
    levels_.push_back(std::move(w));
    channels = width;
  }
}

std::vector<Tensor3> PerceptualProxy::features(const Tensor3& image, Cache* cache) const {
  std::vector<Tensor3> out;
  Tensor3 x = image;
  if (cache != nullptr) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  for (const auto& level : levels_) {
    if (x.height() < 1 || x.width() < 1) {
      throw InvalidParameter("image too small for the perceptual pyramid");
    }
    Tensor3 pre;
    detail::conv2d_forward(x, level.weight, level.bias, level.out_channels, 3, 2, pre);
    Tensor3 act = pre;
    for (double& v : act.data()) {
      v = std::tanh(v);
    }
    if (cache != nullptr) {
      cache->inputs.push_back(x);
      cache->pre.push_back(pre);
    }
    out.push_back(act);
    x = std::move(act);
  }
  return out;
}

Tensor3 PerceptualProxy::backward(const Cache& cache, const std::vector<Tensor3>& grad_features) const {
  Tensor3 carry;  // gradient w.r.t. the activation of the current level
  for (int level = kLevels - 1; level >= 0; --level) {
    Tensor3 g = grad_features[level];
    if (!carry.empty()) {
      g += carry;
    }
    auto pre = cache.pre[level].data();
    auto gv = g.data();
    for (std::size_t i = 0; i < gv.size(); ++i) {
      const double th = std::tanh(pre[i]);
      gv[i] *= 1.0 - th * th;
    }
    const auto& w = levels_[level];
    Tensor3 g_in(cache.inputs[level].shape());
    std::vector<double> gw(w.weight.size());
    std::vector<double> gb(w.bias.size());
    detail::conv2d_backward(cache.inputs[level], w.weight, g, 3, 2, &g_in, gw, gb);
    carry = std::move(g_in);
  }
  return carry;
}

double loss_pct(const Tensor3& i_gt, const Tensor3& i_cond, const Tensor3& flow,
                const PerceptualProxy& proxy) {
  require_same_shape(i_gt, i_cond, "perceptual loss");
  const Tensor3 warped = detail::warp_tensor(i_cond, flow, kImageFill);
  const auto fa = proxy.features(i_gt);
  const auto fb = proxy.features(warped);
  double sum = 0.0;
  for (std::size_t l = 0; l < fa.size(); ++l) {
    sum += rms_distance(fa[l], fb[l]);
  }
  return sum;
}

double loss_pct(const ImageTensor& i_gt, const ImageTensor& i_cond, const FlowField& flow,
                const PerceptualProxy& proxy) {
  return loss_pct(i_gt.tensor(), i_cond.tensor(), flow.tensor(), proxy);
}

}  // namespace motionforge
