#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "motionforge/denoiser.hpp"
#include "motionforge/errors.hpp"
#include "motionforge/rng.hpp"

using namespace motionforge;

namespace {

Tensor3 random_tensor(Shape3 shape, std::uint64_t seed) { return gaussian_tensor(shape, seed, 99); }

// Plain nested-loop convolution, independent of the library kernels.
Tensor3 naive_conv(const Tensor3& in, const ConvWeights& w, int stride) {
  const int pad = w.kernel / 2;
  const int oh = (in.height() + 2 * pad - w.kernel) / stride + 1;
  const int ow = (in.width() + 2 * pad - w.kernel) / stride + 1;
  Tensor3 out(w.out_channels, oh, ow);
  for (int o = 0; o < w.out_channels; ++o)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double acc = w.bias[o];
        for (int i = 0; i < w.in_channels; ++i)
          for (int ky = 0; ky < w.kernel; ++ky)
            for (int kx = 0; kx < w.kernel; ++kx) {
              const int sy = y * stride + ky - pad;
              const int sx = x * stride + kx - pad;
              if (sy < 0 || sx < 0 || sy >= in.height() || sx >= in.width()) continue;
              acc += w.weight[((static_cast<std::size_t>(o) * w.in_channels + i) * w.kernel + ky) * w.kernel + kx] *
                     in.at(i, sy, sx);
            }
        out.at(o, y, x) = acc;
      }
  return out;
}

Tensor3 relu(Tensor3 t) {
  for (double& v : t.data()) v = v > 0.0 ? v : 0.0;
  return t;
}

Tensor3 reference_forward(const DenoiserModel& m, const Tensor3& input, int t) {
  const auto& cfg = m.config();
  Tensor3 a1 = naive_conv(input, m.layer("conv_in"), 1);
  const auto phi = m.time_features(t);
  const auto tw = m.block("time.weight");
  for (int o = 0; o < cfg.hidden; ++o) {
    double tb = 0.0;
    for (int k = 0; k < cfg.time_features; ++k) tb += tw[o * cfg.time_features + k] * phi[k];
    for (double& v : a1.channel(o)) v += tb;
  }
  const Tensor3 h1 = relu(a1);
  const Tensor3 h2 = relu(naive_conv(h1, m.layer("down"), 2));
  const Tensor3 h3 = relu(naive_conv(h2, m.layer("mid"), 1));
  Tensor3 u(h1.shape());
  for (int c = 0; c < u.channels(); ++c)
    for (int y = 0; y < u.height(); ++y)
      for (int x = 0; x < u.width(); ++x) u.at(c, y, x) = h3.at(c, y / 2, x / 2) + h1.at(c, y, x);
  const Tensor3 h4 = relu(naive_conv(u, m.layer("up"), 1));
  const Tensor3 f = naive_conv(h4, m.layer("out"), 1);

  const Schedule s(cfg.timesteps, cfg.beta_start, cfg.beta_end);
  const double psi[3] = {1.0, s.alpha(t) / s.sigma(t), 1.0 / s.sigma(t)};
  Tensor3 out(f.shape());
  for (int c = 0; c < cfg.latent_channels; ++c) {
    double g = 1.0, k = 0.0;
    for (int j = 0; j < 3; ++j) {
      g += m.block("out.gain")[3 * c + j] * psi[j];
      k += m.block("out.skip")[3 * c + j] * psi[j];
    }
    for (int y = 0; y < f.height(); ++y)
      for (int x = 0; x < f.width(); ++x)
        out.at(c, y, x) = g * f.at(c, y, x) + k * input.at(cfg.conditions * cfg.latent_channels + c, y, x);
  }
  return out;
}

DenoiserModel perturbed_model(int conditions, int hidden, std::uint64_t seed) {
  DenoiserConfig cfg;
  cfg.conditions = conditions;
  cfg.hidden = hidden;
  DenoiserModel m = DenoiserModel::create(cfg, seed);
  RngStream rng(seed, 7);
  for (double& v : m.parameters()) v += 0.05 * rng.normal();
  return m;
}

}  // namespace

TEST_CASE("channel adaptation preserves the response to replicated inputs") {
  for (int n : {1, 2, 3}) {
    ConvWeights base{5, 4, 3, {}, {}};
    RngStream rng(static_cast<std::uint64_t>(n), 0);
    for (int i = 0; i < 5 * 4 * 9; ++i) base.weight.push_back(rng.normal());
    for (int i = 0; i < 5; ++i) base.bias.push_back(rng.normal());
    const ConvWeights wide = adapt_first_layer(base, n);
    CHECK(wide.in_channels == 4 * (n + 1));
    CHECK(wide.out_channels == 5);
    CHECK(wide.bias == base.bias);

    const Tensor3 x = random_tensor({4, 6, 6}, 3);
    Tensor3 rep(4 * (n + 1), 6, 6);
    for (int g = 0; g <= n; ++g)
      for (int c = 0; c < 4; ++c)
        std::ranges::copy(x.channel(c), rep.channel(g * 4 + c).begin());
    const Tensor3 expect = conv2d(x, base);
    const Tensor3 got = conv2d(rep, wide);
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i)
      worst = std::max(worst, std::abs(got.data()[i] - expect.data()[i]) /
                                  std::max(std::abs(expect.data()[i]), 1e-12));
    CHECK(worst < 1e-6);
  }
  CHECK_THROWS_AS(adapt_first_layer(ConvWeights{1, 1, 1, {1.0}, {0.0}}, 0), InvalidParameter);
}

TEST_CASE("conv2d agrees with the nested-loop oracle") {
  RngStream rng(4, 4);
  for (int k : {1, 3})
    for (int stride : {1, 2}) {
      ConvWeights w{3, 2, k, {}, {}};
      for (int i = 0; i < 3 * 2 * k * k; ++i) w.weight.push_back(rng.normal());
      for (int i = 0; i < 3; ++i) w.bias.push_back(rng.normal());
      const Tensor3 x = random_tensor({2, 6, 8}, 10 + k + stride);
      const Tensor3 a = conv2d(x, w, stride);
      const Tensor3 b = naive_conv(x, w, stride);
      REQUIRE(a.shape() == b.shape());
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-12));
    }
}

TEST_CASE("forward agrees with an independent implementation") {
  for (int n : {1, 2}) {
    const DenoiserModel m = perturbed_model(n, 6, 5);
    const Tensor3 in = random_tensor({12 * (n + 1), 4, 6}, 6);
    for (int t : {1, 250, 1000}) {
      const Tensor3 a = m.forward(in, t);
      const Tensor3 b = reference_forward(m, in, t);
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-10));
    }
  }
}

TEST_CASE("initial modulation decodes to the conv output") {
  DenoiserConfig cfg;
  cfg.conditions = 2;
  cfg.hidden = 4;
  const DenoiserModel m = DenoiserModel::create(cfg, 1);
  const Schedule s = build_schedule();
  const Tensor3 in = random_tensor({36, 4, 4}, 2);
  DenoiserModel::Cache cache;
  for (int t : {3, 500, 1000}) {
    const Tensor3 v = m.forward(in, t, &cache);
    Tensor3 zt(12, 4, 4);
    std::copy(in.data().begin() + 24 * 16, in.data().end(), zt.data().begin());
    const Tensor3 z0 = decode_v(zt, v, t, s);
    for (std::size_t i = 0; i < z0.size(); ++i)
      CHECK(z0.data()[i] == doctest::Approx(cache.f.data()[i]).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("zero weights leave only the output bias") {
  DenoiserConfig cfg;
  cfg.hidden = 4;
  DenoiserModel m(cfg);
  for (double& v : m.parameters()) v = 0.0;
  auto bias = m.block("out.bias");
  for (int c = 0; c < 12; ++c) bias[c] = 0.1 * c;
  // With zero gain coefficients g = 1 and s = 0.
  const Tensor3 out = m.forward(random_tensor({24, 4, 4}, 3), 100);
  for (int c = 0; c < 12; ++c)
    for (double v : out.channel(c)) CHECK(v == doctest::Approx(0.1 * c));
}

TEST_CASE("parameter layout") {
  DenoiserConfig cfg;
  cfg.conditions = 2;
  cfg.hidden = 8;
  const DenoiserModel m = DenoiserModel::create(cfg, 0);
  std::size_t total = 0;
  for (const auto& b : m.layout()) {
    CHECK(b.offset == total);
    total += b.size();
  }
  CHECK(total == m.parameters().size());
  CHECK(m.block("conv_in.weight").size() == 8u * 36 * 9);
  CHECK(m.block("out.gain").size() == 36u);
  CHECK_THROWS_AS(m.block("nope"), InvalidParameter);
  for (double v : m.parameters()) CHECK(v == static_cast<double>(static_cast<float>(v)));
  CHECK(DenoiserModel::create(cfg, 0).parameters().size() == m.parameters().size());
  const auto p0 = DenoiserModel::create(cfg, 0);
  const auto p1 = DenoiserModel::create(cfg, 1);
  CHECK(std::vector<double>(p0.parameters().begin(), p0.parameters().end()) !=
        std::vector<double>(p1.parameters().begin(), p1.parameters().end()));
}

TEST_CASE("backward matches central differences") {
  const DenoiserModel base = perturbed_model(1, 4, 8);
  const Tensor3 in = random_tensor({24, 4, 4}, 9);
  const Tensor3 w = random_tensor({12, 4, 4}, 10);
  const int t = 321;
  auto objective = [&](const DenoiserModel& m) {
    const Tensor3 out = m.forward(in, t);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out.data()[i] * w.data()[i];
    return s;
  };
  DenoiserModel::Cache cache;
  base.forward(in, t, &cache);
  std::vector<double> grad(base.parameters().size(), 0.0);
  base.backward(cache, w, grad);

  DenoiserModel probe = base;
  const double h = 1e-5;
  int failures = 0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double keep = probe.parameters()[i];
    probe.parameters()[i] = keep + h;
    const double up = objective(probe);
    probe.parameters()[i] = keep - h;
    const double down = objective(probe);
    probe.parameters()[i] = keep;
    const double num = (up - down) / (2 * h);
    const double rel = std::abs(num - grad[i]) / std::max({std::abs(num), std::abs(grad[i]), 1e-6});
    if (rel > 1e-4) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("input validation") {
  DenoiserConfig cfg;
  cfg.hidden = 4;
  const DenoiserModel m = DenoiserModel::create(cfg, 0);
  CHECK_THROWS_AS(m.forward(Tensor3(36, 4, 4), 10), ShapeMismatch);
  CHECK_THROWS_AS(m.forward(Tensor3(24, 3, 4), 10), ShapeMismatch);
  CHECK_THROWS_AS(m.forward(Tensor3(24, 4, 4), 0), InvalidParameter);
  CHECK_THROWS_AS(m.forward(Tensor3(24, 4, 4), 1001), InvalidParameter);
  DenoiserConfig bad;
  bad.hidden = 0;
  CHECK_THROWS_AS(DenoiserModel{bad}, InvalidParameter);
}

TEST_CASE("non-finite weights propagate") {
  DenoiserConfig cfg;
  cfg.hidden = 4;
  DenoiserModel m = DenoiserModel::create(cfg, 0);
  m.block("conv_in.weight")[0] = std::nan("");
  CHECK_FALSE(m.forward(random_tensor({24, 4, 4}, 1), 10).all_finite());
}
