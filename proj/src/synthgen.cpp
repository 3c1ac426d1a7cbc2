#include "motionforge/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "motionforge/errors.hpp"
#include "motionforge/parallel.hpp"
#include "motionforge/rng.hpp"
#include "motionforge/tensor_io.hpp"

namespace motionforge {

namespace fs = std::filesystem;

std::string task_name(Task task) { return task == Task::sir ? "sir" : "rsc"; }

Task parse_task(const std::string& name) {
  if (name == "sir") return Task::sir;
  if (name == "rsc") return Task::rsc;
  throw InvalidParameter("unknown task '" + name + "' (expected sir or rsc)");
}

std::string base_kind_name(BaseKind kind) {
  switch (kind) {
    case BaseKind::checker: return "checker";
    case BaseKind::lines: return "lines";
    case BaseKind::smooth_noise: return "smooth-noise";
    case BaseKind::shapes: return "shapes";
  }
  return "unknown";
}

BaseKind parse_base_kind(const std::string& name) {
  if (name == "checker") return BaseKind::checker;
  if (name == "lines") return BaseKind::lines;
  if (name == "smooth-noise") return BaseKind::smooth_noise;
  if (name == "shapes") return BaseKind::shapes;
  throw InvalidParameter("unknown image kind '" + name + "'");
}

namespace {

void require_dims(int height, int width) {
  if (height < 2 || width < 2) {
    throw InvalidParameter("image dimensions must be at least 2x2");
  }
}

double bilinear_clamped(const Tensor3& t, int c, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(t.width() - 1));
  y = std::clamp(y, 0.0, static_cast<double>(t.height() - 1));
  const int x0 = std::min(static_cast<int>(std::floor(x)), t.width() - 2 < 0 ? 0 : t.width() - 2);
  const int y0 = std::min(static_cast<int>(std::floor(y)), t.height() - 2 < 0 ? 0 : t.height() - 2);
  const double fx = x - x0;
  const double fy = y - y0;
  const int x1 = std::min(x0 + 1, t.width() - 1);
  const int y1 = std::min(y0 + 1, t.height() - 1);
  return (1 - fx) * (1 - fy) * t.at(c, y0, x0) + fx * (1 - fy) * t.at(c, y0, x1) +
         (1 - fx) * fy * t.at(c, y1, x0) + fx * fy * t.at(c, y1, x1);
}

void normalize_range(std::span<double> plane, double lo, double hi) {
  const auto [mn, mx] = std::ranges::minmax(plane);
  const double span = mx - mn;
  for (double& v : plane) {
    v = span > 0.0 ? lo + (hi - lo) * (v - mn) / span : 0.5 * (lo + hi);
  }
}

// Coverage of a soft edge: 1 inside (signed distance < 0), 0 outside, with a
// smoothstep transition a few pixels wide so resampling stays accurate.
double coverage(double signed_distance) {
  constexpr double kRamp = 5.0;
  const double t = std::clamp(0.5 - signed_distance / kRamp, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

Tensor3 erode(const Tensor3& mask, int radius) {
  Tensor3 out = mask;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      double m = 1.0;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const int yy = y + dy;
          const int xx = x + dx;
          const double v = (yy < 0 || yy >= mask.height() || xx < 0 || xx >= mask.width())
                               ? 0.0
                               : mask.at(0, yy, xx);
          m = std::min(m, v);
        }
      }
      out.at(0, y, x) = m;
    }
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Tensor3 smooth_field(std::uint64_t seed, std::uint64_t stream, int channels, int height, int width,
                     int max_cycles) {
  if (max_cycles < 1) {
    throw InvalidParameter("smooth_field needs max_cycles >= 1");
  }
  Tensor3 out(channels, height, width);
  RngStream rng(seed, 0x736d6f6f74680000ULL ^ stream);
  const int components = 4 * max_cycles + 4;
  for (int c = 0; c < channels; ++c) {
    for (int k = 0; k < components; ++k) {
      int kx = 0;
      int ky = 0;
      while (kx == 0 && ky == 0) {
        kx = static_cast<int>(rng.below(2 * max_cycles + 1)) - max_cycles;
        ky = static_cast<int>(rng.below(2 * max_cycles + 1)) - max_cycles;
      }
      const double amp = rng.normal() / std::hypot(kx, ky);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          out.at(c, y, x) += amp * std::cos(2.0 * std::numbers::pi *
                                                (kx * static_cast<double>(x) / width +
                                                 ky * static_cast<double>(y) / height) +
                                            phase);
        }
      }
    }
  }
  return out;
}

ImageTensor gen_base_image(std::uint64_t seed, BaseKind kind, int height, int width) {
  require_dims(height, width);
  Tensor3 img(3, height, width);
  RngStream rng(seed, 0x696d616765ULL);
  switch (kind) {
    case BaseKind::checker: {
      for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < height; ++y) {
          for (int x = 0; x < width; ++x) {
            img.at(c, y, x) = ((x / 8 + y / 8) % 2 == 0) ? 0.0 : 1.0;
          }
        }
      }
      break;
    }
    case BaseKind::smooth_noise: {
      img = smooth_field(seed, 1, 3, height, width, 4);
      for (int c = 0; c < 3; ++c) {
        normalize_range(img.channel(c), 0.05, 0.95);
      }
      break;
    }
    case BaseKind::lines: {
      Tensor3 bg = smooth_field(seed, 2, 3, height, width, 2);
      for (int c = 0; c < 3; ++c) {
        normalize_range(bg.channel(c), 0.65, 0.9);
      }
      img = bg;
      const int count = 6 + static_cast<int>(rng.below(5));
      for (int i = 0; i < count; ++i) {
        // Mostly axis-aligned structure with a few oblique lines.
        const double angle = i % 3 == 2 ? rng.uniform(0.0, std::numbers::pi)
                                        : (i % 2 == 0 ? 0.0 : 0.5 * std::numbers::pi) +
                                              rng.uniform(-0.08, 0.08);
        const double nx = -std::sin(angle);
        const double ny = std::cos(angle);
        const double px = rng.uniform(0.1, 0.9) * width;
        const double py = rng.uniform(0.1, 0.9) * height;
        const double half = rng.uniform(0.8, 1.8);
        const double color[3] = {rng.uniform(0.0, 0.35), rng.uniform(0.0, 0.35), rng.uniform(0.0, 0.35)};
        for (int y = 0; y < height; ++y) {
          for (int x = 0; x < width; ++x) {
            const double d = std::abs((x - px) * nx + (y - py) * ny);
            const double a = coverage(d - half);
            for (int c = 0; c < 3; ++c) {
              img.at(c, y, x) = (1 - a) * img.at(c, y, x) + a * color[c];
            }
          }
        }
      }
      break;
    }
    case BaseKind::shapes: {
      Tensor3 bg = smooth_field(seed, 3, 3, height, width, 2);
      for (int c = 0; c < 3; ++c) {
        normalize_range(bg.channel(c), 0.3, 0.7);
      }
      img = bg;
      const int count = 4 + static_cast<int>(rng.below(4));
      const double scale = std::min(height, width);
      for (int i = 0; i < count; ++i) {
        const bool circle = rng.uniform() < 0.5;
        const double cx = rng.uniform(0.1, 0.9) * width;
        const double cy = rng.uniform(0.1, 0.9) * height;
        const double rx = rng.uniform(0.06, 0.2) * scale;
        const double ry = circle ? rx : rng.uniform(0.06, 0.2) * scale;
        const double color[3] = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
        for (int y = 0; y < height; ++y) {
          for (int x = 0; x < width; ++x) {
            const double dx = x - cx;
            const double dy = y - cy;
            const double sd = circle ? std::hypot(dx, dy) - rx
                                     : std::max(std::abs(dx) - rx, std::abs(dy) - ry);
            const double a = coverage(sd);
            for (int c = 0; c < 3; ++c) {
              img.at(c, y, x) = (1 - a) * img.at(c, y, x) + a * color[c];
            }
          }
        }
      }
      break;
    }
  }
  return ImageTensor::clamped(std::move(img));
}

namespace {

BaseKind sample_kind(std::uint64_t seed) {
  static constexpr BaseKind kinds[] = {BaseKind::shapes, BaseKind::lines, BaseKind::smooth_noise};
  return kinds[CounterRng(seed, 0x6b696e64ULL).bits(0) % 3];
}

// Outward-biased displacement with per-side strengths and a smooth wobble.
Tensor3 sir_displacement(std::uint64_t seed, int height, int width, double magnitude) {
  Tensor3 d(2, height, width);
  if (magnitude == 0.0) {
    return d;
  }
  RngStream rng(seed, 0x6469737000ULL);
  const double left = rng.uniform(0.3, 1.0);
  const double right = rng.uniform(0.3, 1.0);
  const double top = rng.uniform(0.3, 1.0);
  const double bottom = rng.uniform(0.3, 1.0);
  const Tensor3 wobble = smooth_field(seed, 4, 2, height, width, 2);
  const Tensor3 drift = smooth_field(seed, 5, 2, height, width, 2);
  double wobble_max = 1e-12;
  double drift_max = 1e-12;
  for (double v : wobble.data()) wobble_max = std::max(wobble_max, std::abs(v));
  for (double v : drift.data()) drift_max = std::max(drift_max, std::abs(v));
  const double cx = 0.5 * (width - 1);
  const double cy = 0.5 * (height - 1);
  double peak = 0.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double rx = (x - cx) / cx;
      const double ry = (y - cy) / cy;
      const double ex = rx * (rx < 0 ? left : right) * (1.0 + 0.4 * wobble.at(0, y, x) / wobble_max);
      const double ey = ry * (ry < 0 ? top : bottom) * (1.0 + 0.4 * wobble.at(1, y, x) / wobble_max);
      d.at(0, y, x) = 0.75 * ex + 0.25 * drift.at(0, y, x) / drift_max;
      d.at(1, y, x) = 0.75 * ey + 0.25 * drift.at(1, y, x) / drift_max;
      peak = std::max(peak, std::hypot(d.at(0, y, x), d.at(1, y, x)));
    }
  }
  d *= magnitude / peak;
  return d;
}

// Fixed-point inverse: F(q) = -D(q + F(q)), bilinear lookups into D.
Tensor3 invert_displacement(const Tensor3& d, int iterations, double tolerance) {
  Tensor3 f = d;
  f *= -1.0;
  for (int it = 0; it < iterations; ++it) {
    Tensor3 next(f.shape());
    for (int y = 0; y < d.height(); ++y) {
      for (int x = 0; x < d.width(); ++x) {
        const double sx = x + f.at(0, y, x);
        const double sy = y + f.at(1, y, x);
        next.at(0, y, x) = -bilinear_clamped(d, 0, sx, sy);
        next.at(1, y, x) = -bilinear_clamped(d, 1, sx, sy);
      }
    }
    f = std::move(next);
  }
  double residual = 0.0;
  for (int y = 0; y < d.height(); ++y) {
    for (int x = 0; x < d.width(); ++x) {
      const double sx = x + f.at(0, y, x);
      const double sy = y + f.at(1, y, x);
      residual = std::max(residual, std::abs(f.at(0, y, x) + bilinear_clamped(d, 0, sx, sy)));
      residual = std::max(residual, std::abs(f.at(1, y, x) + bilinear_clamped(d, 1, sx, sy)));
    }
  }
  if (!(residual <= tolerance)) {
    throw InvalidParameter("flow inversion did not converge (residual " + std::to_string(residual) +
                           " px); warp magnitude too large");
  }
  return f;
}

}  // namespace

namespace {

// Flows are stored as float32 .flo files; generating them on that grid keeps
// a dataset written to disk identical to the in-memory one.
FlowField float32_flow(Tensor3 uv) {
  for (double& v : uv.data()) {
    v = static_cast<double>(static_cast<float>(v));
  }
  return FlowField(std::move(uv));
}

}  // namespace

SampleRecord gen_sir_sample(std::uint64_t seed, int height, int width, double magnitude, double gamma) {
  require_dims(height, width);
  if (!(magnitude >= 0.0) || magnitude > gamma / 2.0) {
    throw InvalidParameter("SIR warp magnitude must lie in [0, gamma/2]");
  }
  SampleRecord rec;
  rec.task = Task::sir;
  rec.seed = seed;
  rec.magnitude = magnitude;
  rec.image_gt = gen_base_image(mix64(seed ^ 0x1ULL), sample_kind(seed), height, width);
  const Tensor3 d = sir_displacement(seed, height, width, magnitude);
  rec.image_cond = ImageTensor::clamped(detail::warp_tensor(rec.image_gt.tensor(), d, kImageFill));
  rec.mask = warp_mask(Mask::ones(height, width), FlowField(d));
  rec.flow_gt = float32_flow(invert_displacement(d, 8, 0.05));
  rec.flow_pseudo = rec.flow_gt;
  return rec;
}

SampleRecord gen_rsc_sample(std::uint64_t seed, int height, int width, double a, double b, double gamma) {
  require_dims(height, width);
  if (!std::isfinite(a) || !std::isfinite(b) || std::abs(a) + std::abs(b) * height > gamma) {
    throw InvalidParameter("rolling-shutter displacement exceeds |a| + |b|*H <= gamma");
  }
  SampleRecord rec;
  rec.task = Task::rsc;
  rec.seed = seed;
  rec.magnitude = std::abs(a) + std::abs(b) * height;
  rec.image_gt = gen_base_image(mix64(seed ^ 0x1ULL), sample_kind(seed), height, width);
  Tensor3 d(2, height, width);
  Tensor3 f(2, height, width);
  for (int y = 0; y < height; ++y) {
    const double u = a + b * y;
    for (int x = 0; x < width; ++x) {
      d.at(0, y, x) = u;
      f.at(0, y, x) = -u;
    }
  }
  rec.image_cond = ImageTensor::clamped(detail::warp_tensor(rec.image_gt.tensor(), d, kImageFill));
  rec.mask = Mask::ones(height, width);
  rec.flow_gt = float32_flow(std::move(f));
  rec.flow_pseudo = rec.flow_gt;
  return rec;
}

FlowField perturb_pseudo_flow(const FlowField& flow_gt, double noise_scale, std::uint64_t seed) {
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    throw InvalidParameter("noise scale must be finite and non-negative");
  }
  if (noise_scale == 0.0) {
    return flow_gt;
  }
  Tensor3 noise = smooth_field(seed, 0x70736575ULL, 2, flow_gt.height(), flow_gt.width(), 3);
  double sum = 0.0;
  for (double v : noise.data()) {
    sum += v * v;
  }
  const double rms = std::sqrt(sum / static_cast<double>(noise.size()));
  noise *= noise_scale / rms;
  noise += flow_gt.tensor();
  return float32_flow(FlowField::clamped(std::move(noise)).tensor());
}

Mask reconstruction_support(const SampleRecord& record) {
  const int h = record.image_gt.height();
  const int w = record.image_gt.width();
  Tensor3 content;
  if (record.task == Task::sir) {
    content = record.mask.tensor();
  } else {
    Tensor3 d = record.flow_gt.tensor();
    d *= -1.0;
    content = detail::warp_tensor(Tensor3(1, h, w, 1.0), d, 0.0);
    for (double& v : content.data()) {
      v = v >= 1.0 - 1e-9 ? 1.0 : 0.0;
    }
  }
  const Tensor3 eroded = erode(content, 2);
  Tensor3 support = detail::warp_tensor(eroded, record.flow_gt.tensor(), 0.0);
  for (double& v : support.data()) {
    v = v >= 1.0 - 1e-9 ? 1.0 : 0.0;
  }
  return Mask(std::move(support));
}

double reconstruction_error(const SampleRecord& record) {
  const Mask support = reconstruction_support(record);
  const ImageTensor back = warp(record.image_cond, record.flow_gt);
  double sum = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < back.channels(); ++c) {
    for (int y = 0; y < back.height(); ++y) {
      for (int x = 0; x < back.width(); ++x) {
        if (support.at(y, x) > 0.5) {
          sum += std::abs(back.at(c, y, x) - record.image_gt.at(c, y, x));
          ++count;
        }
      }
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

double margin_fraction(const Mask& mask) {
  std::size_t margins = 0;
  for (double v : mask.tensor().data()) {
    if (v < 0.5) ++margins;
  }
  return static_cast<double>(margins) / static_cast<double>(mask.tensor().size());
}

std::vector<SampleRecord> generate_dataset(const DatasetSpec& spec, int threads) {
  if (spec.count < 0) {
    throw InvalidParameter("dataset count must be non-negative");
  }
  std::vector<SampleRecord> records(spec.count);
  parallel_for(
      static_cast<std::size_t>(spec.count),
      [&](std::size_t i) {
        const std::uint64_t seed = mix64(spec.seed * 0x100000001b3ULL + i);
        RngStream rng(seed, 0x7061726dULL);
        SampleRecord rec;
        if (spec.task == Task::sir) {
          const double mag = rng.uniform(0.5, 1.0) * spec.magnitude;
          rec = gen_sir_sample(seed, spec.height, spec.width, mag, spec.gamma);
        } else {
          const double a = rng.uniform(-0.5, 0.5) * spec.magnitude;
          const double b = rng.uniform(-0.5, 0.5) * spec.magnitude / spec.height;
          rec = gen_rsc_sample(seed, spec.height, spec.width, a, b, spec.gamma);
        }
        rec.noise_scale = spec.noise_scale;
        rec.flow_pseudo = perturb_pseudo_flow(rec.flow_gt, spec.noise_scale, mix64(seed ^ 0x2ULL));
        records[i] = std::move(rec);
      },
      threads);
  return records;
}

void write_dataset(const std::vector<SampleRecord>& records, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create " + dir.string() + ": " + ec.message());
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    char name[32];
    std::snprintf(name, sizeof name, "sample_%05zu", i);
    const fs::path sample_dir = dir / name;
    fs::create_directories(sample_dir, ec);
    if (ec) {
      throw IoError("cannot create " + sample_dir.string());
    }
    write_png(sample_dir / "gt.png", r.image_gt);
    write_png(sample_dir / "cond.png", r.image_cond);
    write_png(sample_dir / "mask.png", r.mask);
    write_flo(sample_dir / "flow_gt.flo", r.flow_gt);
    write_flo(sample_dir / "flow_pseudo.flo", r.flow_pseudo);
    std::ofstream meta(sample_dir / "meta.txt");
    meta << "task=" << task_name(r.task) << "\n"
         << "seed=" << r.seed << "\n"
         << "magnitude=" << format_double(r.magnitude) << "\n"
         << "noise_scale=" << format_double(r.noise_scale) << "\n";
    if (!meta) {
      throw IoError("cannot write " + (sample_dir / "meta.txt").string());
    }
  }
}

std::vector<fs::path> list_samples(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw IoError("dataset directory not found: " + dir.string());
  }
  std::vector<fs::path> samples;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.txt")) {
      samples.push_back(entry.path());
    }
  }
  if (samples.empty()) {
    throw EmptyDataset("no samples in " + dir.string());
  }
  std::ranges::sort(samples);
  return samples;
}

std::vector<SampleRecord> read_dataset(const fs::path& dir) {
  const std::vector<fs::path> samples = list_samples(dir);
  std::vector<SampleRecord> records;
  records.reserve(samples.size());
  for (const auto& sample_dir : samples) {
    std::map<std::string, std::string> meta;
    std::ifstream in(sample_dir / "meta.txt");
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) {
        meta[line.substr(0, eq)] = line.substr(eq + 1);
      }
    }
    for (const char* key : {"task", "seed", "magnitude", "noise_scale"}) {
      if (!meta.contains(key)) {
        throw IoError(sample_dir.string() + "/meta.txt lacks key " + key);
      }
    }
    SampleRecord r;
    try {
      r.task = parse_task(meta["task"]);
      r.seed = std::stoull(meta["seed"]);
      r.magnitude = std::stod(meta["magnitude"]);
      r.noise_scale = std::stod(meta["noise_scale"]);
    } catch (const std::exception& e) {
      throw IoError("corrupt meta.txt in " + sample_dir.string() + ": " + e.what());
    }
    r.image_gt = read_image_png(sample_dir / "gt.png");
    r.image_cond = read_image_png(sample_dir / "cond.png");
    r.mask = read_mask_png(sample_dir / "mask.png");
    r.flow_gt = read_flo(sample_dir / "flow_gt.flo");
    r.flow_pseudo = read_flo(sample_dir / "flow_pseudo.flo");
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace motionforge
