#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "motionforge/errors.hpp"
#include "motionforge/synthgen.hpp"
#include "motionforge/tensor_io.hpp"

using namespace motionforge;
namespace fs = std::filesystem;

TEST_CASE("base images") {
  const ImageTensor checker = gen_base_image(1, BaseKind::checker, 32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const double expect = ((x / 8 + y / 8) % 2 == 0) ? checker.at(0, 0, 0) : 1.0 - checker.at(0, 0, 0);
      CHECK(checker.at(0, y, x) == expect);
      CHECK((checker.at(0, y, x) == 0.0 || checker.at(0, y, x) == 1.0));
    }
  for (BaseKind kind : {BaseKind::checker, BaseKind::lines, BaseKind::smooth_noise, BaseKind::shapes}) {
    CHECK(gen_base_image(5, kind, 16, 24) == gen_base_image(5, kind, 16, 24));
    CHECK(parse_base_kind(base_kind_name(kind)) == kind);
  }
  const ImageTensor noise = gen_base_image(3, BaseKind::smooth_noise, 64, 64);
  double lo = 1.0, hi = 0.0;
  for (double v : noise.tensor().data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo <= 0.1);
  CHECK(hi >= 0.9);
  CHECK_THROWS_AS(gen_base_image(1, BaseKind::lines, 1, 8), InvalidParameter);
  CHECK_THROWS_AS(parse_base_kind("plaid"), InvalidParameter);
  CHECK_THROWS_AS(parse_task("xyz"), InvalidParameter);
  CHECK(parse_task("rsc") == Task::rsc);
}

TEST_CASE("SIR samples") {
  const SampleRecord zero = gen_sir_sample(4, 32, 32, 0.0);
  CHECK(zero.image_cond == zero.image_gt);
  CHECK(zero.mask == Mask::ones(32, 32));
  CHECK(zero.flow_gt == FlowField(32, 32));

  double prev = 0.0;
  for (double mag : {1.0, 3.0, 6.0}) {
    const SampleRecord r = gen_sir_sample(4, 64, 64, mag, 16.0);
    CHECK(reconstruction_error(r) < 0.02);
    const double frac = margin_fraction(r.mask);
    CHECK(frac > prev);
    prev = frac;
    CHECK(r.flow_pseudo == r.flow_gt);
    CHECK(r.task == Task::sir);
  }
  CHECK(gen_sir_sample(9, 32, 32, 2.0) .image_cond == gen_sir_sample(9, 32, 32, 2.0).image_cond);
  CHECK_THROWS_AS(gen_sir_sample(1, 32, 32, 9.0, 16.0), InvalidParameter);
}

TEST_CASE("RSC samples") {
  const SampleRecord id = gen_rsc_sample(2, 16, 16, 0.0, 0.0);
  CHECK(id.image_cond == id.image_gt);
  CHECK(id.flow_gt == FlowField(16, 16));

  const SampleRecord shift = gen_rsc_sample(2, 16, 16, 2.0, 0.0);
  CHECK(shift.flow_gt == FlowField::constant(16, 16, -2.0, 0.0));
  CHECK(shift.mask == Mask::ones(16, 16));
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 14; ++x)
      for (int c = 0; c < 3; ++c) CHECK(shift.image_cond.at(c, y, x) == shift.image_gt.at(c, y, x + 2));
  CHECK(reconstruction_error(shift) < 0.02);

  // A vertical line becomes slanted: row y moves by b * y.
  const SampleRecord skew = gen_rsc_sample(3, 16, 16, 0.0, 0.5, 16.0);
  for (int y = 0; y < 16; y += 2)
    for (int x = 0; x + y / 2 < 16; ++x)
      CHECK(skew.image_cond.at(0, y, x) == skew.image_gt.at(0, y, x + y / 2));
  CHECK(reconstruction_error(skew) < 0.02);
  CHECK_THROWS_AS(gen_rsc_sample(1, 16, 16, 10.0, 1.0, 16.0), InvalidParameter);
}

TEST_CASE("pseudo label perturbation") {
  const FlowField gt = gen_sir_sample(5, 64, 64, 4.0, 16.0).flow_gt;
  CHECK(perturb_pseudo_flow(gt, 0.0, 1) == gt);
  const FlowField p = perturb_pseudo_flow(gt, 2.0, 1);
  double sq = 0.0;
  for (std::size_t i = 0; i < gt.tensor().size(); ++i) sq += std::pow(p.tensor().data()[i] - gt.tensor().data()[i], 2);
  CHECK(std::sqrt(sq / static_cast<double>(gt.tensor().size())) == doctest::Approx(2.0).epsilon(0.1));
  CHECK(perturb_pseudo_flow(gt, 2.0, 1) == p);
  CHECK(perturb_pseudo_flow(gt, 2.0, 2) != p);
  CHECK_THROWS_AS(perturb_pseudo_flow(gt, -1.0, 1), InvalidParameter);
}

TEST_CASE("datasets") {
  DatasetSpec spec;
  spec.count = 4;
  spec.seed = 3;
  spec.height = 64;
  spec.width = 64;
  spec.magnitude = 3.0;
  spec.noise_scale = 1.0;
  const auto a = generate_dataset(spec, 1);
  const auto b = generate_dataset(spec, 4);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image_cond == b[i].image_cond);
    CHECK(a[i].flow_pseudo == b[i].flow_pseudo);
    CHECK(a[i].flow_pseudo != a[i].flow_gt);
    CHECK(reconstruction_error(a[i]) < 0.02);
  }
  CHECK(a[0].seed != a[1].seed);

  const fs::path dir = fs::temp_directory_path() / ("mf_ds_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  write_dataset(a, dir);
  const auto back = read_dataset(dir);
  REQUIRE(back.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(back[i].flow_gt == a[i].flow_gt);
    CHECK(back[i].flow_pseudo == a[i].flow_pseudo);
    CHECK(back[i].mask == a[i].mask);
    CHECK(back[i].seed == a[i].seed);
    CHECK(back[i].task == a[i].task);
    for (std::size_t k = 0; k < a[i].image_gt.tensor().size(); ++k)
      CHECK(std::abs(back[i].image_gt.tensor().data()[k] - a[i].image_gt.tensor().data()[k]) <= 1.0 / 255.0);
  }
  fs::remove_all(dir);
  fs::create_directories(dir);
  CHECK_THROWS_AS(read_dataset(dir), EmptyDataset);
  fs::remove_all(dir);
  CHECK_THROWS_AS(read_dataset(dir), IoError);

  DatasetSpec rsc = spec;
  rsc.task = Task::rsc;
  for (const auto& r : generate_dataset(rsc)) CHECK(r.mask == Mask::ones(64, 64));
}
