#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "motionforge/errors.hpp"
#include "motionforge/metrics.hpp"
#include "motionforge/diffusion.hpp"

using namespace motionforge;

namespace {

ImageTensor random_image(std::uint64_t seed, int c, int h, int w) {
  Tensor3 t = gaussian_tensor({c, h, w}, seed, 1);
  for (double& v : t.data()) v = 0.5 + 0.45 * std::tanh(v);
  return ImageTensor(t);
}

}  // namespace

TEST_CASE("psnr") {
  const ImageTensor a = random_image(1, 3, 16, 16);
  CHECK(std::isinf(psnr(a, a)));
  CHECK(psnr_for_csv(psnr(a, a)) == 99.0);
  CHECK(psnr_for_csv(31.5) == 31.5);

  const ImageTensor x = ImageTensor::filled(3, 8, 8, 0.3);
  const ImageTensor y = ImageTensor::filled(3, 8, 8, 0.4);
  CHECK(std::abs(psnr(x, y) - 20.0) <= 1e-9);

  const ImageTensor b = random_image(2, 3, 16, 16);
  double mse = 0.0;
  for (std::size_t i = 0; i < a.tensor().size(); ++i) mse += std::pow(a.tensor().data()[i] - b.tensor().data()[i], 2);
  mse /= static_cast<double>(a.tensor().size());
  CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-12));
  CHECK(psnr(a, b) == psnr(b, a));
  CHECK(psnr(x, ImageTensor::filled(3, 8, 8, 0.5)) < psnr(x, y));
  CHECK_THROWS_AS(psnr(a, random_image(1, 3, 16, 15)), ShapeMismatch);
}

TEST_CASE("ssim") {
  const ImageTensor a = random_image(3, 3, 24, 24);
  CHECK(ssim(a, a) == 1.0);
  const ImageTensor b = random_image(4, 3, 24, 24);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  CHECK(ssim(a, b) < 1.0);

  // Inverted checkerboard: negative structure correlation.
  Tensor3 board(1, 16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) board.at(0, y, x) = ((x / 2 + y / 2) % 2) ? 1.0 : 0.0;
  Tensor3 inv = board;
  for (double& v : inv.data()) v = 1.0 - v;
  CHECK(ssim(ImageTensor(board), ImageTensor(inv)) < 0.0);

  // Flat images: only the luminance term is left.
  const double c1 = 1e-4;
  const double expect = (2 * 0.25 * 0.75 + c1) / (0.25 * 0.25 + 0.75 * 0.75 + c1);
  CHECK(ssim(ImageTensor::filled(1, 12, 12, 0.25), ImageTensor::filled(1, 12, 12, 0.75)) ==
        doctest::Approx(expect).epsilon(1e-9));

  CHECK_THROWS_AS(ssim(random_image(1, 1, 10, 10), random_image(2, 1, 10, 10)), InvalidParameter);
}

TEST_CASE("flow endpoint error") {
  const FlowField f(gaussian_tensor({2, 8, 8}, 5, 0));
  CHECK(flow_epe(f, f) == 0.0);
  Tensor3 shifted = f.tensor();
  for (double& v : shifted.channel(0)) v += 3.0;
  for (double& v : shifted.channel(1)) v += 4.0;
  CHECK(flow_epe(FlowField(shifted), f) == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(flow_epe(FlowField::constant(4, 4, 3, 4), FlowField(4, 4)) == 5.0);

  const FlowField g(gaussian_tensor({2, 8, 8}, 6, 0));
  const FlowField h(gaussian_tensor({2, 8, 8}, 7, 0));
  double sum = 0.0;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) sum += std::sqrt(std::pow(g.u(y, x) - h.u(y, x), 2) + std::pow(g.v(y, x) - h.v(y, x), 2));
  CHECK(flow_epe(g, h) == doctest::Approx(sum / 64.0).epsilon(1e-12));
  CHECK(flow_epe(g, h) == flow_epe(h, g));
  CHECK(flow_epe(g, h) <= flow_epe(g, f) + flow_epe(f, h));
  CHECK_THROWS_AS(flow_epe(g, FlowField(8, 7)), ShapeMismatch);
}

TEST_CASE("heatmap") {
  const ImageTensor a = random_image(8, 3, 6, 6);
  const ImageTensor same = heatmap(a, a);
  for (double v : same.tensor().data()) CHECK(v == 0.0);

  Tensor3 t = a.tensor();
  t.at(1, 2, 3) = 1.0 - t.at(1, 2, 3);
  const ImageTensor one = heatmap(a, ImageTensor(t));
  CHECK(one.channels() == 1);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) CHECK(one.at(0, y, x) == ((y == 2 && x == 3) ? 1.0 : 0.0));

  const ImageTensor b = random_image(9, 3, 6, 6);
  const ImageTensor hm = heatmap(a, b);
  std::vector<double> d(36);
  double mx = 0.0;
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) {
      double s = 0.0;
      for (int c = 0; c < 3; ++c) s += std::abs(a.at(c, y, x) - b.at(c, y, x));
      d[y * 6 + x] = s / 3.0;
      mx = std::max(mx, s / 3.0);
    }
  for (int i = 0; i < 36; ++i) CHECK(hm.tensor().data()[i] == doctest::Approx(d[i] / mx).epsilon(1e-12));
}
