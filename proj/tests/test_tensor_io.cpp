#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <unistd.h>
#include <filesystem>

#include "motionforge/errors.hpp"
#include "motionforge/rng.hpp"
#include "motionforge/tensor_io.hpp"

using namespace motionforge;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("mf_io_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Tensor3 random_tensor(int c, int h, int w, std::uint64_t seed, double lo, double hi, bool to_float = false) {
  RngStream rng(seed, 0);
  Tensor3 t(c, h, w);
  for (double& v : t.data()) {
    v = rng.uniform(lo, hi);
    if (to_float) v = static_cast<float>(v);
  }
  return t;
}

float read_f32(const std::vector<std::uint8_t>& b, std::size_t off) {
  float f;
  std::memcpy(&f, b.data() + off, 4);
  return f;
}

}  // namespace

TEST_CASE(".flo layout") {
  Tensor3 uv(2, 2, 3);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x) {
      uv.at(0, y, x) = x + 2 * y;
      uv.at(1, y, x) = -(x + 2 * y) - 0.5;
    }
  const auto bytes = encode_flo(FlowField(uv));
  REQUIRE(bytes.size() == 12 + 2 * 2 * 3 * 4);
  CHECK(read_f32(bytes, 0) == 202021.25f);
  std::int32_t w, h;
  std::memcpy(&w, bytes.data() + 4, 4);
  std::memcpy(&h, bytes.data() + 8, 4);
  CHECK(w == 3);
  CHECK(h == 2);
  // Row-major, interleaved (u, v).
  CHECK(read_f32(bytes, 12 + 8 * 4) == 3.0f);      // (y=1, x=1) u
  CHECK(read_f32(bytes, 12 + 8 * 4 + 4) == -3.5f);  // (y=1, x=1) v
}

TEST_CASE(".flo roundtrip is bit exact") {
  TempDir dir;
  const FlowField f(random_tensor(2, 9, 13, 4, -20.0, 20.0, true));
  write_flo(dir.path / "a.flo", f);
  const FlowField back = read_flo(dir.path / "a.flo");
  CHECK(back == f);
  CHECK(encode_flo(back) == read_file_bytes(dir.path / "a.flo"));
}

TEST_CASE(".flo rejects corrupt input") {
  auto bytes = encode_flo(FlowField(2, 2));
  auto bad_magic = bytes;
  bad_magic[0] ^= 0xff;
  CHECK_THROWS_AS(decode_flo(bad_magic), IoError);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_flo(truncated), IoError);
  CHECK_THROWS_AS(read_flo("/nonexistent/x.flo"), IoError);
}

TEST_CASE("STMT roundtrip and header") {
  RawTensor t{{2, 3, 4}, {}};
  RngStream rng(1, 1);
  for (int i = 0; i < 24; ++i) t.values.push_back(static_cast<float>(rng.normal()));
  const auto bytes = encode_stmt(t);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "STMT");
  std::uint32_t version, ndim;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&ndim, bytes.data() + 8, 4);
  CHECK(version == 1);
  CHECK(ndim == 3);
  CHECK(bytes.size() == 12 + 3 * 4 + 24 * 4);
  CHECK(decode_stmt(bytes) == t);

  TempDir dir;
  write_stmt(dir.path / "t.stmt", t);
  CHECK(read_stmt(dir.path / "t.stmt") == t);

  const Tensor3 x = random_tensor(3, 4, 5, 2, -1.0, 1.0, true);
  CHECK(from_raw(to_raw(x)) == x);
}

TEST_CASE("STMT rejects corrupt input") {
  auto bytes = encode_stmt(RawTensor{{4}, {1, 2, 3, 4}});
  auto v2 = bytes;
  v2[4] = 2;
  CHECK_THROWS_AS(decode_stmt(v2), IoError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_stmt(magic), IoError);
  bytes.resize(bytes.size() - 2);
  CHECK_THROWS_AS(decode_stmt(bytes), IoError);
  CHECK_THROWS_AS(from_raw(RawTensor{{4}, {1, 2, 3, 4}}), IoError);
}

TEST_CASE("PNG quantization rounds half up") {
  CHECK(quantize_u8(0.0) == 0);
  CHECK(quantize_u8(1.0) == 255);
  CHECK(quantize_u8(0.5) == 128);  // 127.5 rounds up
  CHECK(quantize_u8(0.2) == 51);
}

TEST_CASE("PNG roundtrip within one level") {
  TempDir dir;
  const ImageTensor rgb(random_tensor(3, 7, 5, 3, 0.0, 1.0));
  write_png(dir.path / "rgb.png", rgb);
  const ImageTensor back = read_image_png(dir.path / "rgb.png");
  REQUIRE(back.channels() == 3);
  for (std::size_t i = 0; i < rgb.tensor().size(); ++i)
    CHECK(std::abs(back.tensor().data()[i] - rgb.tensor().data()[i]) <= 0.5 / 255.0 + 1e-12);

  Tensor3 m(1, 4, 4, 1.0);
  m.at(0, 1, 2) = 0.0;
  write_png(dir.path / "mask.png", Mask(m));
  CHECK(read_mask_png(dir.path / "mask.png") == Mask(m));
  CHECK_THROWS_AS(read_mask_png(dir.path / "rgb.png"), IoError);

  // Quantized values survive a second pass unchanged.
  write_png(dir.path / "again.png", back);
  CHECK(read_image_png(dir.path / "again.png") == back);
}

TEST_CASE("PNG errors") {
  TempDir dir;
  write_file_bytes(dir.path / "junk.png", {1, 2, 3, 4});
  CHECK_THROWS_AS(read_png(dir.path / "junk.png"), IoError);
  CHECK_THROWS_AS(read_png(dir.path / "missing.png"), IoError);
}
