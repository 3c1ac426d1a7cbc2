#include "motionforge/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "motionforge/errors.hpp"
#include "motionforge/rng.hpp"

namespace motionforge {

namespace detail {

namespace {

int conv_out_dim(int in, int kernel, int stride) {
  const int pad = kernel / 2;
  return (in + 2 * pad - kernel) / stride + 1;
}

}  // namespace

void conv2d_forward(const Tensor3& input, std::span<const double> weight,
                    std::span<const double> bias, int out_channels, int kernel, int stride,
                    Tensor3& out) {
  const int in_ch = input.channels();
  const int ih = input.height();
  const int iw = input.width();
  const int oh = conv_out_dim(ih, kernel, stride);
  const int ow = conv_out_dim(iw, kernel, stride);
  const int pad = kernel / 2;
  if (weight.size() != static_cast<std::size_t>(out_channels) * in_ch * kernel * kernel) {
    throw ShapeMismatch("conv2d: weight size does not match input channels");
  }
  if (out.shape() != Shape3{out_channels, oh, ow}) {
    out = Tensor3(out_channels, oh, ow);
  }
  for (int oc = 0; oc < out_channels; ++oc) {
    auto plane = out.channel(oc);
    std::ranges::fill(plane, bias.empty() ? 0.0 : bias[oc]);
    for (int ic = 0; ic < in_ch; ++ic) {
      auto src = input.channel(ic);
      for (int ky = 0; ky < kernel; ++ky) {
        for (int kx = 0; kx < kernel; ++kx) {
          const double w = weight[((static_cast<std::size_t>(oc) * in_ch + ic) * kernel + ky) * kernel + kx];
          if (w == 0.0) {
            continue;
          }
          const int ox_lo = std::max(0, (pad - kx + stride - 1) / stride);
          const int ox_hi = std::min(ow, (iw + pad - kx + stride - 1) / stride);
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= ih) {
              continue;
            }
            double* dst = plane.data() + static_cast<std::size_t>(oy) * ow;
            const double* row = src.data() + static_cast<std::size_t>(iy) * iw + (kx - pad);
            if (stride == 1) {
              for (int ox = ox_lo; ox < ox_hi; ++ox) {
                dst[ox] += w * row[ox];
              }
            } else {
              for (int ox = ox_lo; ox < ox_hi; ++ox) {
                dst[ox] += w * row[ox * stride];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward(const Tensor3& input, std::span<const double> weight, const Tensor3& grad_out,
                     int kernel, int stride, Tensor3* grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias) {
  const int in_ch = input.channels();
  const int ih = input.height();
  const int iw = input.width();
  const int out_channels = grad_out.channels();
  const int oh = grad_out.height();
  const int ow = grad_out.width();
  const int pad = kernel / 2;
  for (int oc = 0; oc < out_channels; ++oc) {
    auto g = grad_out.channel(oc);
    if (!grad_bias.empty()) {
      double sum = 0.0;
      for (double v : g) {
        sum += v;
      }
      grad_bias[oc] += sum;
    }
    for (int ic = 0; ic < in_ch; ++ic) {
      auto src = input.channel(ic);
      double* gin = grad_input != nullptr ? grad_input->channel(ic).data() : nullptr;
      for (int ky = 0; ky < kernel; ++ky) {
        for (int kx = 0; kx < kernel; ++kx) {
          const std::size_t widx = ((static_cast<std::size_t>(oc) * in_ch + ic) * kernel + ky) * kernel + kx;
          const double w = weight[widx];
          const int ox_lo = std::max(0, (pad - kx + stride - 1) / stride);
          const int ox_hi = std::min(ow, (iw + pad - kx + stride - 1) / stride);
          double gw = 0.0;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= ih) {
              continue;
            }
            const double* grow = g.data() + static_cast<std::size_t>(oy) * ow;
            const std::size_t base = static_cast<std::size_t>(iy) * iw + (kx - pad);
            const double* row = src.data() + base;
            double* grow_in = gin != nullptr ? gin + base : nullptr;
            if (stride == 1) {
              for (int ox = ox_lo; ox < ox_hi; ++ox) {
                gw += grow[ox] * row[ox];
              }
              if (grow_in != nullptr) {
                for (int ox = ox_lo; ox < ox_hi; ++ox) {
                  grow_in[ox] += w * grow[ox];
                }
              }
            } else {
              for (int ox = ox_lo; ox < ox_hi; ++ox) {
                gw += grow[ox] * row[ox * stride];
              }
              if (grow_in != nullptr) {
                for (int ox = ox_lo; ox < ox_hi; ++ox) {
                  grow_in[ox * stride] += w * grow[ox];
                }
              }
            }
          }
          grad_weight[widx] += gw;
        }
      }
    }
  }
}

}  // namespace detail

ConvWeights adapt_first_layer(const ConvWeights& layer, int conditions) {
  if (conditions < 1) {
    throw InvalidParameter("channel adaptation needs N >= 1");
  }
  const int groups = conditions + 1;
  const double scale = 1.0 / groups;
  const int k2 = layer.kernel * layer.kernel;
  ConvWeights out;
  out.out_channels = layer.out_channels;
  out.in_channels = layer.in_channels * groups;
  out.kernel = layer.kernel;
  out.bias = layer.bias;
  out.weight.resize(static_cast<std::size_t>(out.out_channels) * out.in_channels * k2);
  for (int oc = 0; oc < layer.out_channels; ++oc) {
    for (int g = 0; g < groups; ++g) {
      for (int ic = 0; ic < layer.in_channels; ++ic) {
        for (int k = 0; k < k2; ++k) {
          const std::size_t src = (static_cast<std::size_t>(oc) * layer.in_channels + ic) * k2 + k;
          const std::size_t dst =
              (static_cast<std::size_t>(oc) * out.in_channels + g * layer.in_channels + ic) * k2 + k;
          out.weight[dst] = layer.weight[src] * scale;
        }
      }
    }
  }
  return out;
}

Tensor3 conv2d(const Tensor3& input, const ConvWeights& layer, int stride) {
  if (input.channels() != layer.in_channels) {
    throw ShapeMismatch("conv2d: input has " + std::to_string(input.channels()) +
                        " channels, layer expects " + std::to_string(layer.in_channels));
  }
  Tensor3 out;
  detail::conv2d_forward(input, layer.weight, layer.bias, layer.out_channels, layer.kernel, stride, out);
  return out;
}

// ------------------------------------------------------------ DenoiserModel

std::size_t ParameterBlock::size() const {
  std::size_t n = 1;
  for (int d : dims) {
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

DenoiserModel::DenoiserModel(const DenoiserConfig& config)
    : config_(config), schedule_(config.timesteps, config.beta_start, config.beta_end) {
  if (config.conditions < 1 || config.latent_channels < 1 || config.hidden < 1 ||
      config.time_features < 2 || config.time_features % 2 != 0 || config.timesteps < 1) {
    throw InvalidParameter("invalid denoiser configuration");
  }
  const int h = config.hidden;
  add_block("conv_in.weight", {h, config.input_channels(), 3, 3});
  add_block("conv_in.bias", {h});
  add_block("time.weight", {h, config.time_features});
  add_block("down.weight", {h, h, 3, 3});
  add_block("down.bias", {h});
  add_block("mid.weight", {h, h, 3, 3});
  add_block("mid.bias", {h});
  add_block("up.weight", {h, h, 3, 3});
  add_block("up.bias", {h});
  add_block("out.weight", {config.latent_channels, h, 1, 1});
  add_block("out.bias", {config.latent_channels});
  add_block("out.gain", {config.latent_channels, 3});
  add_block("out.skip", {config.latent_channels, 3});
}

void DenoiserModel::add_block(const std::string& name, std::vector<int> dims) {
  ParameterBlock b{name, params_.size(), std::move(dims)};
  params_.resize(params_.size() + b.size(), 0.0);
  layout_.push_back(std::move(b));
}

const ParameterBlock& DenoiserModel::find(const std::string& name) const {
  for (const auto& b : layout_) {
    if (b.name == name) {
      return b;
    }
  }
  throw InvalidParameter("unknown parameter block " + name);
}

std::span<double> DenoiserModel::block(const std::string& name) {
  const auto& b = find(name);
  return std::span<double>(params_).subspan(b.offset, b.size());
}

std::span<const double> DenoiserModel::block(const std::string& name) const {
  const auto& b = find(name);
  return std::span<const double>(params_).subspan(b.offset, b.size());
}

ConvWeights DenoiserModel::layer(const std::string& prefix) const {
  const auto& wb = find(prefix + ".weight");
  auto w = block(prefix + ".weight");
  auto b = block(prefix + ".bias");
  return ConvWeights{wb.dims[0], wb.dims[1], wb.dims[2], {w.begin(), w.end()}, {b.begin(), b.end()}};
}

void DenoiserModel::set_layer(const std::string& prefix, const ConvWeights& weights) {
  auto w = block(prefix + ".weight");
  auto b = block(prefix + ".bias");
  if (w.size() != weights.weight.size() || b.size() != weights.bias.size()) {
    throw ShapeMismatch("set_layer: weights do not fit block " + prefix);
  }
  std::ranges::copy(weights.weight, w.begin());
  std::ranges::copy(weights.bias, b.begin());
}

DenoiserModel DenoiserModel::create(const DenoiserConfig& config, std::uint64_t seed) {
  DenoiserModel model(config);
  RngStream rng(seed, 0x6d6f64656cULL);
  auto he = [&](std::span<double> w, int fan_in) {
    const double scale = std::sqrt(2.0 / fan_in);
    for (double& v : w) {
      v = scale * rng.normal();
    }
  };

  // First layer as if built for the flow latent alone, then widened.
  ConvWeights base{config.hidden, config.latent_channels, 3, {}, {}};
  base.weight.resize(static_cast<std::size_t>(config.hidden) * config.latent_channels * 9);
  base.bias.assign(config.hidden, 0.0);
  he(base.weight, config.latent_channels * 9);
  model.set_layer("conv_in", adapt_first_layer(base, config.conditions));

  for (double& v : model.block("time.weight")) {
    v = 0.5 * rng.normal();
  }
  he(model.block("down.weight"), config.hidden * 9);
  he(model.block("mid.weight"), config.hidden * 9);
  he(model.block("up.weight"), config.hidden * 9);
  auto out_w = model.block("out.weight");
  for (double& v : out_w) {
    v = 0.1 * std::sqrt(1.0 / config.hidden) * rng.normal();
  }
  auto gain = model.block("out.gain");
  auto skip = model.block("out.skip");
  for (int c = 0; c < config.latent_channels; ++c) {
    gain[3 * c] = -1.0;
    gain[3 * c + 2] = -1.0;
    skip[3 * c + 1] = 1.0;
  }
  // Checkpoints hold float32; start on that grid so a reload is exact.
  for (double& v : model.params_) {
    v = static_cast<double>(static_cast<float>(v));
  }
  return model;
}

std::vector<double> DenoiserModel::time_features(int t) const {
  const double tau = static_cast<double>(t) / config_.timesteps;
  std::vector<double> phi(config_.time_features);
  for (int k = 0; k < config_.time_features / 2; ++k) {
    const double omega = 0.5 * std::numbers::pi * std::pow(2.0, k);
    phi[2 * k] = std::sin(omega * tau);
    phi[2 * k + 1] = std::cos(omega * tau);
  }
  return phi;
}

std::array<double, 3> DenoiserModel::modulation_basis(int t) const {
  const double a = schedule_.alpha(t);
  const double s = schedule_.sigma(t);
  return {1.0, a / s, 1.0 / s};
}

void DenoiserModel::require_input(const Tensor3& input) const {
  if (input.channels() != config_.input_channels()) {
    throw ShapeMismatch("denoiser expects " + std::to_string(config_.input_channels()) +
                        " input channels, got " + std::to_string(input.channels()));
  }
  if (input.height() % 2 != 0 || input.width() % 2 != 0 || input.height() < 2 || input.width() < 2) {
    throw ShapeMismatch("denoiser needs even latent dimensions");
  }
}

namespace {

void relu_into(const Tensor3& a, Tensor3& h) {
  h = a;
  for (double& v : h.data()) {
    v = std::max(v, 0.0);  // keeps NaN visible
  }
}

void relu_backward(const Tensor3& a, Tensor3& grad) {
  auto g = grad.data();
  auto av = a.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(av[i] > 0.0)) {
      g[i] = 0.0;
    }
  }
}

Tensor3 upsample2(const Tensor3& x) {
  Tensor3 out(x.channels(), x.height() * 2, x.width() * 2);
  for (int c = 0; c < x.channels(); ++c) {
    for (int y = 0; y < out.height(); ++y) {
      for (int xx = 0; xx < out.width(); ++xx) {
        out.at(c, y, xx) = x.at(c, y / 2, xx / 2);
      }
    }
  }
  return out;
}

Tensor3 upsample2_backward(const Tensor3& grad, int h, int w) {
  Tensor3 out(grad.channels(), h, w);
  for (int c = 0; c < grad.channels(); ++c) {
    for (int y = 0; y < grad.height(); ++y) {
      for (int xx = 0; xx < grad.width(); ++xx) {
        out.at(c, y / 2, xx / 2) += grad.at(c, y, xx);
      }
    }
  }
  return out;
}

}  // namespace

Tensor3 DenoiserModel::forward(const Tensor3& input, int t, Cache* cache) const {
  require_input(input);
  if (t < 1 || t > config_.timesteps) {
    throw InvalidParameter("denoiser timestep " + std::to_string(t) + " outside [1, T]");
  }
  const int h = config_.hidden;
  Cache local;
  Cache& c = cache != nullptr ? *cache : local;
  c.input = input;
  c.t = t;

  detail::conv2d_forward(input, block("conv_in.weight"), block("conv_in.bias"), h, 3, 1, c.a1);
  {
    const auto phi = time_features(t);
    auto tw = block("time.weight");
    for (int o = 0; o < h; ++o) {
      double tb = 0.0;
      for (int k = 0; k < config_.time_features; ++k) {
        tb += tw[static_cast<std::size_t>(o) * config_.time_features + k] * phi[k];
      }
      for (double& v : c.a1.channel(o)) {
        v += tb;
      }
    }
  }
  relu_into(c.a1, c.h1);
  detail::conv2d_forward(c.h1, block("down.weight"), block("down.bias"), h, 3, 2, c.a2);
  relu_into(c.a2, c.h2);
  detail::conv2d_forward(c.h2, block("mid.weight"), block("mid.bias"), h, 3, 1, c.a3);
  relu_into(c.a3, c.h3);
  c.u = upsample2(c.h3);
  c.u += c.h1;
  detail::conv2d_forward(c.u, block("up.weight"), block("up.bias"), h, 3, 1, c.a4);
  relu_into(c.a4, c.h4);
  detail::conv2d_forward(c.h4, block("out.weight"), block("out.bias"), config_.latent_channels, 1, 1, c.f);

  // Per-channel time-dependent gain on the conv output plus a linear skip
  // from the noisy flow latent.
  const auto psi = modulation_basis(t);
  const auto gain = block("out.gain");
  const auto skip = block("out.skip");
  const int lat = config_.latent_channels;
  const int noisy = config_.conditions * lat;
  Tensor3 out(c.f.shape());
  for (int ch = 0; ch < lat; ++ch) {
    double g = 1.0;
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
      g += gain[3 * ch + k] * psi[k];
      s += skip[3 * ch + k] * psi[k];
    }
    auto o = out.channel(ch);
    auto f = c.f.channel(ch);
    auto z = input.channel(noisy + ch);
    for (std::size_t i = 0; i < o.size(); ++i) {
      o[i] = g * f[i] + s * z[i];
    }
  }
  return out;
}

void DenoiserModel::backward(const Cache& c, const Tensor3& grad_output, std::span<double> grad) const {
  if (grad.size() != params_.size()) {
    throw ShapeMismatch("gradient buffer does not match parameter count");
  }
  auto gblock = [&](const std::string& name) {
    const auto& b = find(name);
    return grad.subspan(b.offset, b.size());
  };

  const auto psi = modulation_basis(c.t);
  const int lat = config_.latent_channels;
  const int noisy = config_.conditions * lat;
  const auto gain = block("out.gain");
  auto ggain = gblock("out.gain");
  auto gskip = gblock("out.skip");
  Tensor3 g_f(c.f.shape());
  for (int ch = 0; ch < lat; ++ch) {
    double g = 1.0;
    for (int k = 0; k < 3; ++k) {
      g += gain[3 * ch + k] * psi[k];
    }
    const auto go = grad_output.channel(ch);
    const auto f = c.f.channel(ch);
    const auto z = c.input.channel(noisy + ch);
    auto gf = g_f.channel(ch);
    double sum_f = 0.0;
    double sum_z = 0.0;
    for (std::size_t i = 0; i < go.size(); ++i) {
      gf[i] = g * go[i];
      sum_f += go[i] * f[i];
      sum_z += go[i] * z[i];
    }
    for (int k = 0; k < 3; ++k) {
      ggain[3 * ch + k] += sum_f * psi[k];
      gskip[3 * ch + k] += sum_z * psi[k];
    }
  }

  Tensor3 g_h4(c.h4.shape());
  detail::conv2d_backward(c.h4, block("out.weight"), g_f, 1, 1, &g_h4, gblock("out.weight"),
                          gblock("out.bias"));
  relu_backward(c.a4, g_h4);
  Tensor3 g_u(c.u.shape());
  detail::conv2d_backward(c.u, block("up.weight"), g_h4, 3, 1, &g_u, gblock("up.weight"), gblock("up.bias"));
  Tensor3 g_h3 = upsample2_backward(g_u, c.h3.height(), c.h3.width());
  relu_backward(c.a3, g_h3);
  Tensor3 g_h2(c.h2.shape());
  detail::conv2d_backward(c.h2, block("mid.weight"), g_h3, 3, 1, &g_h2, gblock("mid.weight"),
                          gblock("mid.bias"));
  relu_backward(c.a2, g_h2);
  Tensor3 g_h1 = g_u;  // skip path
  detail::conv2d_backward(c.h1, block("down.weight"), g_h2, 3, 2, &g_h1, gblock("down.weight"),
                          gblock("down.bias"));
  relu_backward(c.a1, g_h1);

  const auto phi = time_features(c.t);
  auto gtime = gblock("time.weight");
  for (int o = 0; o < config_.hidden; ++o) {
    double sum = 0.0;
    for (double v : g_h1.channel(o)) {
      sum += v;
    }
    for (int k = 0; k < config_.time_features; ++k) {
      gtime[static_cast<std::size_t>(o) * config_.time_features + k] += sum * phi[k];
    }
  }
  detail::conv2d_backward(c.input, block("conv_in.weight"), g_h1, 3, 1, nullptr, gblock("conv_in.weight"),
                          gblock("conv_in.bias"));
}

}  // namespace motionforge
