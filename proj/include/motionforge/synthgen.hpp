#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "motionforge/field_core.hpp"

namespace motionforge {

enum class Task { sir, rsc };

std::string task_name(Task task);
Task parse_task(const std::string& name);

enum class BaseKind { checker, lines, smooth_noise, shapes };

std::string base_kind_name(BaseKind kind);
BaseKind parse_base_kind(const std::string& name);

/// One synthetic (I_gt, I_cond, M) triple with its flows.
/// flow_gt maps I_cond toward I_gt: warp(I_cond, flow_gt) ≈ I_gt.
struct SampleRecord {
  ImageTensor image_gt;
  ImageTensor image_cond;
  Mask mask;
  FlowField flow_gt;
  FlowField flow_pseudo;
  Task task = Task::sir;
  std::uint64_t seed = 0;
  double magnitude = 0.0;
  double noise_scale = 0.0;
};

/// Zero-mean band-limited random field (sum of random cosines with at most
/// `max_cycles` periods across the image), one per channel.
Tensor3 smooth_field(std::uint64_t seed, std::uint64_t stream, int channels, int height, int width,
                     int max_cycles);

/// Procedural 3-channel image. Checker uses 8-px blocks of 0 and 1.
ImageTensor gen_base_image(std::uint64_t seed, BaseKind kind, int height, int width);

/// Stitched-image-rectangling style sample: a smooth outward-biased
/// displacement D shrinks the content so white irregular margins appear;
/// flow_gt is D's inverse by fixed-point iteration.
SampleRecord gen_sir_sample(std::uint64_t seed, int height, int width, double magnitude,
                            double gamma = kDefaultGamma);

/// Rolling-shutter style sample: row-dependent horizontal shift a + b*row.
SampleRecord gen_rsc_sample(std::uint64_t seed, int height, int width, double a, double b,
                            double gamma = kDefaultGamma);

/// Adds a smooth low-frequency noise field with RMS exactly `noise_scale` px.
FlowField perturb_pseudo_flow(const FlowField& flow_gt, double noise_scale, std::uint64_t seed);

/// Pixels whose round trip warp(I_cond, flow_gt) only touches clean content.
Mask reconstruction_support(const SampleRecord& record);

/// Mean |warp(I_cond, flow_gt) - I_gt| over reconstruction_support().
double reconstruction_error(const SampleRecord& record);

/// Fraction of margin pixels in the record's mask.
double margin_fraction(const Mask& mask);

struct DatasetSpec {
  Task task = Task::sir;
  int count = 1;
  std::uint64_t seed = 0;
  int height = 64;
  int width = 64;
  double magnitude = 6.0;  // SIR max displacement, or RSC bound on |a| + |b|*H
  double noise_scale = 0.0;
  double gamma = 16.0;
};

/// Deterministic dataset; record i uses seed mix(spec.seed, i).
std::vector<SampleRecord> generate_dataset(const DatasetSpec& spec, int threads = 0);

/// One directory per sample: gt.png, cond.png, mask.png, flow_gt.flo,
/// flow_pseudo.flo, meta.txt.
void write_dataset(const std::vector<SampleRecord>& records, const std::filesystem::path& dir);
std::vector<SampleRecord> read_dataset(const std::filesystem::path& dir);

/// Sample directories (those holding meta.txt) in read order.
std::vector<std::filesystem::path> list_samples(const std::filesystem::path& dir);

}  // namespace motionforge
