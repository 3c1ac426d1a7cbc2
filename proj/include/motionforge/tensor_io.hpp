#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "motionforge/field_core.hpp"
#include "motionforge/tensor.hpp"

namespace motionforge {

/// Middlebury .flo: float32 magic 202021.25, int32 width, int32 height, then
/// row-major interleaved (u, v) float32, all little-endian.
inline constexpr float kFloMagic = 202021.25f;

void write_flo(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flo(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_flo(const FlowField& flow);
FlowField decode_flo(const std::vector<std::uint8_t>& bytes);

/// Raw tensor container: "STMT", u32 version = 1, u32 ndim, ndim x u32 dims,
/// float32 little-endian payload.
struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t element_count() const;
  bool operator==(const RawTensor&) const = default;
};

inline constexpr std::uint32_t kStmtVersion = 1;

std::vector<std::uint8_t> encode_stmt(const RawTensor& tensor);
RawTensor decode_stmt(const std::vector<std::uint8_t>& bytes);
void write_stmt(const std::filesystem::path& path, const RawTensor& tensor);
RawTensor read_stmt(const std::filesystem::path& path);

/// Tensor3 <-> RawTensor with dims (C, H, W); values are narrowed to float32.
RawTensor to_raw(const Tensor3& t);
Tensor3 from_raw(const RawTensor& raw);

/// 8-bit PNG. Values map to round-half-up(v * 255). 1-channel tensors are
/// written as grayscale, 3-channel as RGB.
void write_png(const std::filesystem::path& path, const Tensor3& pixels);
Tensor3 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageTensor& image);
void write_png(const std::filesystem::path& path, const Mask& mask);
ImageTensor read_image_png(const std::filesystem::path& path);
Mask read_mask_png(const std::filesystem::path& path);

std::uint8_t quantize_u8(double v);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace motionforge
