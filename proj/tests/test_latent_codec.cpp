#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "motionforge/errors.hpp"
#include "motionforge/latent_codec.hpp"
#include "motionforge/rng.hpp"

using namespace motionforge;

namespace {

Tensor3 random_tensor(int c, int h, int w, std::uint64_t seed) {
  RngStream rng(seed, 0);
  Tensor3 t(c, h, w);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

}  // namespace

TEST_CASE("encode shapes and index layout") {
  const LatentTensor z = encode(Tensor3(3, 256, 256), 2);
  CHECK(z.channels() == 12);
  CHECK(z.height() == 128);
  CHECK(z.width() == 128);

  const Tensor3 x = random_tensor(3, 6, 4, 1);
  const LatentTensor e = encode(x, 2);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 3; ++y)
      for (int xx = 0; xx < 2; ++xx)
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            CHECK(e.tensor().at((c * 2 + dy) * 2 + dx, y, xx) == x.at(c, 2 * y + dy, 2 * xx + dx));
}

TEST_CASE("codec roundtrip is bit exact") {
  for (int s : {1, 2, 4}) {
    const Tensor3 x = random_tensor(3, 8, 12, static_cast<std::uint64_t>(s));
    CHECK(decode(encode(x, s), s) == x);
    const LatentTensor z(random_tensor(3 * s * s, 2, 3, 40 + s));
    CHECK(encode(decode(z, s), s) == z);
  }
}

TEST_CASE("constant image stays constant") {
  const LatentTensor z = encode(Tensor3(3, 4, 4, 0.25), 2);
  for (double v : z.tensor().data()) CHECK(v == 0.25);
  const Tensor3 x = decode(LatentTensor(Tensor3(12, 2, 2, 0.75)), 2);
  for (double v : x.data()) CHECK(v == 0.75);
}

TEST_CASE("codec errors") {
  CHECK_THROWS_AS(encode(Tensor3(3, 5, 4), 2), InvalidParameter);
  CHECK_THROWS_AS(decode(LatentTensor(Tensor3(10, 2, 2)), 2), InvalidParameter);
  CHECK_THROWS_AS(encode(Tensor3(3, 4, 4), 0), InvalidParameter);
}

TEST_CASE("stack_input orders conditions before the noisy latent") {
  const LatentTensor a(random_tensor(12, 2, 2, 1));
  const LatentTensor b(random_tensor(12, 2, 2, 2));
  const LatentTensor z(random_tensor(12, 2, 2, 3));
  const Tensor3 s2 = stack_input(ConditionSet({a, b}), z);
  CHECK(s2.channels() == 36);
  CHECK(stack_input(ConditionSet({a}), z).channels() == 24);
  for (int c = 0; c < 12; ++c) {
    for (int i = 0; i < 4; ++i) {
      CHECK(s2.channel(c)[i] == a.tensor().channel(c)[i]);
      CHECK(s2.channel(12 + c)[i] == b.tensor().channel(c)[i]);
      CHECK(s2.channel(24 + c)[i] == z.tensor().channel(c)[i]);
    }
  }
  const Tensor3 swapped = stack_input(ConditionSet({b, a}), z);
  CHECK(swapped != s2);
  for (int c = 0; c < 12; ++c) CHECK(swapped.channel(c)[0] == b.tensor().channel(c)[0]);

  CHECK_THROWS_AS(ConditionSet({}), InvalidParameter);
  CHECK_THROWS_AS(ConditionSet({a, LatentTensor(Tensor3(12, 3, 2))}), ShapeMismatch);
  CHECK_THROWS_AS(stack_input(ConditionSet({a}), LatentTensor(Tensor3(12, 3, 3))), ShapeMismatch);
}
