#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "motionforge/errors.hpp"
#include "motionforge/ssd_lab.hpp"

using namespace motionforge;
using namespace motionforge::ssd;

namespace {

Mat contraction() {
  Mat a(2, 2);
  a << 0.8, 0.3, -0.2, 0.9;
  return a;
}

Vec vec2(double x, double y) {
  Vec v(2);
  v << x, y;
  return v;
}

std::vector<Vec> ramp_deltas(int levels, double scale) {
  std::vector<Vec> d;
  for (int i = levels - 1; i >= 1; --i) d.push_back(scale * vec2(0.1 * i, -0.05 * i + 0.02));
  return d;
}

}  // namespace

TEST_CASE("p_map with identity scheduler evaluates the toy map") {
  const Mat a = contraction();
  const Vec b = vec2(0.5, -1.0);
  const CompositeMap p(ToyDenoiser::affine(a, b));
  const Vec x = vec2(2.0, 3.0);
  CHECK((p_map(p, 1, x) - (a * x + b)).norm() < 1e-15);
  CHECK((p.jacobian(4, x) - a).norm() == 0.0);

  const CompositeMap q(ToyDenoiser::tanh_affine(a, b, 0.7));
  const Vec y = p_map(q, 3, x);
  CHECK(y(0) == doctest::Approx(0.8 * 2 + 0.3 * 3 + 0.5 + 0.7 * std::tanh(2.0)));
  CHECK(y(1) == doctest::Approx(-0.2 * 2 + 0.9 * 3 - 1.0 + 0.7 * std::tanh(3.0)));
  const Mat j = q.jacobian(3, x);
  CHECK(j(0, 0) == doctest::Approx(0.8 + 0.7 * (1 - std::pow(std::tanh(2.0), 2))));
  CHECK(j(1, 0) == doctest::Approx(-0.2));
}

TEST_CASE("DDIM scheduler map and Jacobian") {
  const Schedule s = build_schedule();
  const Mat a = contraction();
  const Vec b = vec2(0.1, 0.2);
  const CompositeMap p(ToyDenoiser::tanh_affine(a, b, 0.5), s, 4);
  const Vec x = vec2(0.4, -0.3);
  // Level 4 maps t = 1000 to t_prev = 750; level 1 lands on t = 0.
  const Vec y0 = a * x + b + 0.5 * x.array().tanh().matrix();
  const double at = s.alpha(1000), st = s.sigma(1000), ap = s.alpha(750), sp = s.sigma(750);
  const Vec expect = ap * y0 + sp * (x - at * y0) / st;
  CHECK((p.apply(4, x) - expect).norm() < 1e-12);
  CHECK((p.apply(1, x) - (a * x + b + 0.5 * x.array().tanh().matrix())).norm() < 1e-12);

  const double h = 1e-6;
  for (int level = 1; level <= 4; ++level) {
    const Mat j = p.jacobian(level, x);
    for (int c = 0; c < 2; ++c) {
      Vec e = Vec::Zero(2);
      e(c) = h;
      const Vec col = (p.apply(level, x + e) - p.apply(level, x - e)) / (2 * h);
      CHECK((j.col(c) - col).norm() < 1e-7);
    }
  }
}

TEST_CASE("uncorrected chain") {
  const Mat a = contraction();
  const Vec b = vec2(0.5, -1.0);
  const CompositeMap p(ToyDenoiser::affine(a, b));
  const Vec x = vec2(1.0, 2.0);
  CHECK((run_uncorrected(p, x, 1).pred_1 - (a * x + b)).norm() < 1e-15);
  const SSDTrace t3 = run_uncorrected(p, x, 3);
  const Mat i = Mat::Identity(2, 2);
  const Vec oracle = a * a * a * x + (a * a + a + i) * b;
  CHECK((t3.pred_1 - oracle).norm() < 1e-12);
  CHECK(t3.uncorrected.size() == 4);
  CHECK_THROWS_AS(run_uncorrected(p, x, 0), InvalidParameter);
}

TEST_CASE("corrected chain against the matrix oracle") {
  const Mat a = contraction();
  const Vec b = vec2(0.5, -1.0);
  const CompositeMap p(ToyDenoiser::affine(a, b));
  const Vec x = vec2(1.0, 2.0);
  const std::vector<Vec> d{vec2(0.1, 0.2), vec2(-0.3, 0.05)};  // Δ_2, Δ_1
  const Vec d0 = vec2(0.01, -0.02);
  const SSDTrace tr = run_corrected(p, x, d, 3, d0);
  // pred_2 = p(p(p(x) + Δ_2) + Δ_1) + Δ_0
  const Vec manual = a * (a * (a * x + b + d[0]) + b + d[1]) + b + d0;
  CHECK((tr.pred_2 - manual).norm() < 1e-12);
  const Vec diff = tr.pred_2 - tr.pred_1;
  CHECK((diff - (d0 + a * d[1] + a * a * d[0])).norm() < 1e-12);
  CHECK((tr.first_order_error - diff).norm() < 1e-12);
  CHECK(tr.jacobians.size() == 2);

  const SSDTrace zero = run_corrected(p, x, {Vec::Zero(2), Vec::Zero(2)}, 3);
  CHECK(zero.pred_2 == zero.pred_1);
  CHECK(zero.first_order_error.norm() == 0.0);

  CHECK_THROWS_AS(run_corrected(p, x, {vec2(1, 1)}, 3), InvalidParameter);
  CHECK_THROWS_AS(run_corrected(p, x, {}, 0), InvalidParameter);
}

TEST_CASE("one step has no accumulated error") {
  const CompositeMap p(ToyDenoiser::tanh_affine(contraction(), vec2(0.3, 0.1), 2.0));
  const SSDTrace tr = run_corrected(p, vec2(0.7, -0.4), {}, 1);
  CHECK(tr.empirical_error.norm() == 0.0);
  CHECK(tr.pred_2 == tr.pred_1);
  CHECK(tr.first_order_error.norm() == 0.0);
  CHECK(first_order_error({}, {}).size() == 0);
}

TEST_CASE("affine chains match the first-order sum for every length") {
  const Schedule s = build_schedule();
  for (int levels = 1; levels <= 16; ++levels) {
    for (bool ddim : {false, true}) {
      const ToyDenoiser theta = ToyDenoiser::affine(contraction(), vec2(0.2, -0.4));
      const CompositeMap p = ddim ? CompositeMap(theta, s, levels) : CompositeMap(theta);
      const SSDTrace tr = run_corrected(p, vec2(1.5, -0.5), ramp_deltas(levels, 1.0), levels, vec2(0.03, 0.01));
      CHECK((tr.empirical_error - tr.first_order_error).norm() < 1e-10);
    }
  }
}

TEST_CASE("first-order residual is second order in the correction size") {
  const CompositeMap p(ToyDenoiser::tanh_affine(contraction(), vec2(0.2, -0.1), 0.8));
  const ScalingResult r = residual_scaling_test(p, vec2(0.6, -0.9), ramp_deltas(6, 1.0), 6, {1e-1, 1e-2, 1e-3});
  REQUIRE(r.slope.has_value());
  CHECK(*r.slope >= 1.8);
  CHECK(*r.slope < 2.2);

  const CompositeMap lin(ToyDenoiser::affine(contraction(), vec2(0.2, -0.1)));
  const ScalingResult flat = residual_scaling_test(lin, vec2(0.6, -0.9), ramp_deltas(6, 1.0), 6, {1e-1, 1e-2});
  for (double v : flat.residuals) CHECK(v < 1e-14);

  std::vector<Vec> zeros(5, Vec::Zero(2));
  const ScalingResult none = residual_scaling_test(p, vec2(0.6, -0.9), zeros, 6, {1e-1, 1e-2});
  CHECK_FALSE(none.slope.has_value());
  for (double v : none.residuals) CHECK(v == 0.0);

  CHECK_THROWS_AS(residual_scaling_test(p, vec2(0, 0), ramp_deltas(6, 1.0), 6, {1e-2, 1e-1}), InvalidParameter);
  CHECK_THROWS_AS(residual_scaling_test(p, vec2(0, 0), ramp_deltas(6, 1.0), 6, {1e-2}), InvalidParameter);
}

TEST_CASE("steps sweep on an empty set") {
  MotionModel m;
  CHECK_THROWS_AS(steps_sweep(m, {}, {1}, 0), EmptyDataset);
}
