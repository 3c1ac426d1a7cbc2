#include "motionforge/tensor_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

#include "motionforge/errors.hpp"

namespace motionforge {

namespace {

static_assert(std::endian::native == std::endian::little,
              "tensor_io assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, const char* what) : bytes_(bytes), what_(what) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) {
      throw IoError(std::string(what_) + ": truncated data");
    }
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  const char* what_;
  std::size_t pos_ = 0;
};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

// ------------------------------------------------------------------------ flo

std::vector<std::uint8_t> encode_flo(const FlowField& flow) {
  std::vector<std::uint8_t> out;
  out.reserve(12 + 8 * static_cast<std::size_t>(flow.height()) * flow.width());
  put(out, kFloMagic);
  put(out, static_cast<std::int32_t>(flow.width()));
  put(out, static_cast<std::int32_t>(flow.height()));
  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      put(out, static_cast<float>(flow.u(y, x)));
      put(out, static_cast<float>(flow.v(y, x)));
    }
  }
  return out;
}

FlowField decode_flo(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes, ".flo");
  if (in.get<float>() != kFloMagic) {
    throw IoError(".flo: bad magic");
  }
  const auto width = in.get<std::int32_t>();
  const auto height = in.get<std::int32_t>();
  if (width <= 0 || height <= 0 || width > (1 << 16) || height > (1 << 16)) {
    throw IoError(".flo: implausible dimensions");
  }
  if (in.remaining() != 8ULL * static_cast<std::size_t>(width) * height) {
    throw IoError(".flo: payload size does not match header");
  }
  Tensor3 uv(2, height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      uv.at(0, y, x) = in.get<float>();
      uv.at(1, y, x) = in.get<float>();
    }
  }
  try {
    return FlowField(std::move(uv));
  } catch (const InvalidParameter& e) {
    throw IoError(std::string(".flo: ") + e.what());
  }
}

void write_flo(const std::filesystem::path& path, const FlowField& flow) {
  write_file_bytes(path, encode_flo(flow));
}

FlowField read_flo(const std::filesystem::path& path) { return decode_flo(read_file_bytes(path)); }

// ----------------------------------------------------------------------- STMT

std::size_t RawTensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) {
    n *= d;
  }
  return n;
}

std::vector<std::uint8_t> encode_stmt(const RawTensor& tensor) {
  if (tensor.element_count() != tensor.values.size()) {
    throw ShapeMismatch("STMT: dims do not match value count");
  }
  std::vector<std::uint8_t> out = {'S', 'T', 'M', 'T'};
  put(out, kStmtVersion);
  put(out, static_cast<std::uint32_t>(tensor.dims.size()));
  for (auto d : tensor.dims) {
    put(out, d);
  }
  for (float v : tensor.values) {
    put(out, v);
  }
  return out;
}

RawTensor decode_stmt(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "STMT", 4) != 0) {
    throw IoError("STMT: bad magic");
  }
  std::vector<std::uint8_t> rest(bytes.begin() + 4, bytes.end());
  Reader in(rest, "STMT");
  if (in.get<std::uint32_t>() != kStmtVersion) {
    throw IoError("STMT: unsupported version");
  }
  const auto ndim = in.get<std::uint32_t>();
  if (ndim > 8) {
    throw IoError("STMT: too many dimensions");
  }
  RawTensor t;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    t.dims.push_back(in.get<std::uint32_t>());
  }
  const std::size_t count = t.element_count();
  if (in.remaining() != 4 * count) {
    throw IoError("STMT: payload size does not match header");
  }
  t.values.resize(count);
  for (auto& v : t.values) {
    v = in.get<float>();
  }
  return t;
}

void write_stmt(const std::filesystem::path& path, const RawTensor& tensor) {
  write_file_bytes(path, encode_stmt(tensor));
}

RawTensor read_stmt(const std::filesystem::path& path) { return decode_stmt(read_file_bytes(path)); }

RawTensor to_raw(const Tensor3& t) {
  RawTensor raw;
  raw.dims = {static_cast<std::uint32_t>(t.channels()), static_cast<std::uint32_t>(t.height()),
              static_cast<std::uint32_t>(t.width())};
  raw.values.reserve(t.size());
  for (double v : t.data()) {
    raw.values.push_back(static_cast<float>(v));
  }
  return raw;
}

Tensor3 from_raw(const RawTensor& raw) {
  if (raw.dims.size() != 3) {
    throw IoError("STMT: expected a rank-3 tensor");
  }
  std::vector<double> values(raw.values.begin(), raw.values.end());
  return Tensor3(Shape3{static_cast<int>(raw.dims[0]), static_cast<int>(raw.dims[1]),
                        static_cast<int>(raw.dims[2])},
                 std::move(values));
}

// ------------------------------------------------------------------------ PNG

std::uint8_t quantize_u8(double v) {
  const double scaled = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(scaled);
}

void write_png(const std::filesystem::path& path, const Tensor3& pixels) {
  const int channels = pixels.channels();
  if (channels != 1 && channels != 3) {
    throw InvalidParameter("PNG output needs 1 or 3 channels");
  }
  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) {
    throw IoError("cannot write " + path.string());
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  std::vector<std::uint8_t> row(static_cast<std::size_t>(pixels.width()) * channels);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed for " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, pixels.width(), pixels.height(), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < pixels.height(); ++y) {
    for (int x = 0; x < pixels.width(); ++x) {
      for (int c = 0; c < channels; ++c) {
        row[static_cast<std::size_t>(x) * channels + c] = quantize_u8(pixels.at(c, y, x));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor3 read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) {
    throw IoError("cannot open " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<std::uint8_t> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  buffer.resize(static_cast<std::size_t>(width) * height * channels);
  rows.resize(height);
  for (int y = 0; y < height; ++y) {
    rows[y] = buffer.data() + static_cast<std::size_t>(y) * width * channels;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor3 out(channels, height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        out.at(c, y, x) = buffer[(static_cast<std::size_t>(y) * width + x) * channels + c] / 255.0;
      }
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const ImageTensor& image) {
  write_png(path, image.tensor());
}

void write_png(const std::filesystem::path& path, const Mask& mask) { write_png(path, mask.tensor()); }

ImageTensor read_image_png(const std::filesystem::path& path) {
  Tensor3 t = read_png(path);
  if (t.channels() != 1 && t.channels() != 3) {
    throw IoError("unsupported PNG channel count in " + path.string());
  }
  return ImageTensor(std::move(t));
}

Mask read_mask_png(const std::filesystem::path& path) {
  Tensor3 t = read_png(path);
  if (t.channels() != 1) {
    throw IoError("mask PNG must be grayscale: " + path.string());
  }
  return Mask(std::move(t));
}

}  // namespace motionforge
