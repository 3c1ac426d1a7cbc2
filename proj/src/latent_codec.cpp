#include "motionforge/latent_codec.hpp"

#include <algorithm>
#include <string>

#include "motionforge/errors.hpp"

namespace motionforge {

ConditionSet::ConditionSet(std::vector<LatentTensor> blocks) : blocks_(std::move(blocks)) {
  if (blocks_.empty()) {
    throw InvalidParameter("condition set needs at least one block");
  }
  for (const auto& b : blocks_) {
    if (b.tensor().shape() != blocks_.front().tensor().shape()) {
      throw ShapeMismatch("condition blocks must share their shape");
    }
  }
}

LatentTensor encode(const Tensor3& x, int factor) {
  if (factor < 1) {
    throw InvalidParameter("latent factor must be >= 1");
  }
  if (x.height() % factor != 0 || x.width() % factor != 0) {
    throw InvalidParameter("encode: " + std::to_string(x.height()) + "x" + std::to_string(x.width()) +
                           " is not divisible by factor " + std::to_string(factor));
  }
  const int s = factor;
  Tensor3 z(x.channels() * s * s, x.height() / s, x.width() / s);
  for (int c = 0; c < x.channels(); ++c) {
    for (int dy = 0; dy < s; ++dy) {
      for (int dx = 0; dx < s; ++dx) {
        const int zc = (c * s + dy) * s + dx;
        for (int y = 0; y < z.height(); ++y) {
          for (int xx = 0; xx < z.width(); ++xx) {
            z.at(zc, y, xx) = x.at(c, y * s + dy, xx * s + dx);
          }
        }
      }
    }
  }
  return LatentTensor(std::move(z));
}

Tensor3 decode(const LatentTensor& latent, int factor) {
  if (factor < 1) {
    throw InvalidParameter("latent factor must be >= 1");
  }
  const Tensor3& z = latent.tensor();
  const int s = factor;
  if (z.channels() % (s * s) != 0) {
    throw InvalidParameter("decode: channel count " + std::to_string(z.channels()) +
                           " is not divisible by " + std::to_string(s * s));
  }
  Tensor3 x(z.channels() / (s * s), z.height() * s, z.width() * s);
  for (int c = 0; c < x.channels(); ++c) {
    for (int dy = 0; dy < s; ++dy) {
      for (int dx = 0; dx < s; ++dx) {
        const int zc = (c * s + dy) * s + dx;
        for (int y = 0; y < z.height(); ++y) {
          for (int xx = 0; xx < z.width(); ++xx) {
            x.at(c, y * s + dy, xx * s + dx) = z.at(zc, y, xx);
          }
        }
      }
    }
  }
  return x;
}

Tensor3 stack_input(const ConditionSet& conditions, const LatentTensor& noisy_flow) {
  const Shape3& cs = conditions.block_shape();
  const Shape3& fs = noisy_flow.tensor().shape();
  if (cs.height != fs.height || cs.width != fs.width) {
    throw ShapeMismatch("stack_input: condition and flow latents differ spatially");
  }
  const int total = static_cast<int>(conditions.count()) * cs.channels + fs.channels;
  Tensor3 out(total, fs.height, fs.width);
  auto dst = out.data().begin();
  for (const auto& block : conditions.blocks()) {
    dst = std::ranges::copy(block.tensor().data(), dst).out;
  }
  std::ranges::copy(noisy_flow.tensor().data(), dst);
  return out;
}

}  // namespace motionforge
