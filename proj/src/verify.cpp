#include "motionforge/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <sstream>

#include "motionforge/errors.hpp"
#include "motionforge/field_core.hpp"
#include "motionforge/latent_codec.hpp"
#include "motionforge/metrics.hpp"
#include "motionforge/pipeline.hpp"
#include "motionforge/rng.hpp"
#include "motionforge/ssd_lab.hpp"
#include "motionforge/synthgen.hpp"
#include "motionforge/tensor_io.hpp"

namespace motionforge {

namespace {

Tensor3 random_tensor(Shape3 shape, RngStream& rng, double lo, double hi) {
  Tensor3 t(shape);
  for (double& v : t.data()) {
    v = rng.uniform(lo, hi);
  }
  return t;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

}  // namespace

GradientInstance make_gradient_instance(std::uint64_t seed, int size, int hidden) {
  const double gamma = 4.0;
  SampleRecord rec = gen_sir_sample(seed, size, size, 0.75, gamma);
  rec.flow_pseudo = perturb_pseudo_flow(rec.flow_gt, 0.5, seed + 1);
  TrainingExample example = make_training_example(rec, gamma, 2);

  DenoiserConfig cfg;
  cfg.conditions = 2;
  cfg.hidden = hidden;
  DenoiserModel model = DenoiserModel::create(cfg, seed);
  // Move every parameter off its initial value so no block sits at zero.
  RngStream rng(seed, 0x67726164ULL);
  for (double& w : model.parameters()) {
    w += 0.05 * rng.normal();
  }
  Tensor3 noise = gaussian_tensor(example.flow_latent.shape(), seed, 0x6e6f6973ULL);
  return GradientInstance{build_schedule(),        std::make_unique<PerceptualProxy>(),
                          LossConfig{1.0, 1.0, 0.01}, gamma,
                          std::move(model),         std::move(example),
                          400,                      std::move(noise)};
}

GradientCheckReport check_gradients(const DenoiserModel& model, const TrainingExample& example, int t,
                                    const Tensor3& noise, const LossContext& ctx, double h,
                                    double tolerance) {
  std::vector<double> analytic(model.parameters().size(), 0.0);
  evaluate_example(model, example, t, noise, ctx, analytic);

  DenoiserModel probe = model;
  auto params = probe.parameters();
  auto loss_at = [&]() { return total_loss(evaluate_example(probe, example, t, noise, ctx), ctx.weights); };

  auto relative_error = [&](std::size_t k, double step) {
    const double w = params[k];
    params[k] = w + step;
    const double up = loss_at();
    params[k] = w - step;
    const double down = loss_at();
    params[k] = w;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[k];
    const double scale = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / scale;
    return std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
  };

  GradientCheckReport report;
  for (const auto& block : probe.layout()) {
    for (std::size_t j = 0; j < block.size(); ++j) {
      const std::size_t k = block.offset + j;
      double rel = relative_error(k, h);
      if (!(rel < tolerance) && std::isfinite(rel)) {
        // The probe may straddle a bilinear cell boundary, where the loss is
        // only piecewise smooth. A wrong analytic value fails at any step.
        const double fine = relative_error(k, h * 1e-2);
        if (fine < tolerance) {
          ++report.refined;
          rel = fine;
        }
      }
      ++report.checked;
      if (!(rel < tolerance)) {
        ++report.failures;
      }
      if (!(rel <= report.max_rel_error)) {
        report.max_rel_error = rel;
        report.worst_block = block.name;
        report.worst_index = j;
      }
    }
  }
  return report;
}

namespace {

using Check = std::function<std::string(bool&)>;

CheckResult timed(const std::string& name, const Check& body) {
  CheckResult r;
  r.name = name;
  const auto start = std::chrono::steady_clock::now();
  try {
    r.detail = body(r.passed);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::string check_warp(std::uint64_t seed, bool& ok) {
  RngStream rng(seed, 1);
  const ImageTensor img(random_tensor({3, 12, 10}, rng, 0.0, 1.0));
  ok = warp(img, FlowField(12, 10)) == img;
  // Integer shifts against direct index lookups on interior pixels.
  for (int du = -2; du <= 2 && ok; ++du) {
    for (int dv = -2; dv <= 2 && ok; ++dv) {
      const ImageTensor out = warp(img, FlowField::constant(12, 10, du, dv));
      for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < 12; ++y) {
          for (int x = 0; x < 10; ++x) {
            const int sx = x + du;
            const int sy = y + dv;
            const bool inside = sx >= 0 && sx < 10 && sy >= 0 && sy < 12;
            const double expect = inside ? img.at(c, sy, sx) : kImageFill;
            if (out.at(c, y, x) != expect) ok = false;
          }
        }
      }
    }
  }
  return ok ? "identity and 25 integer shifts exact" : "warp disagrees with index oracle";
}

std::string check_normalization(std::uint64_t seed, bool& ok) {
  RngStream rng(seed, 2);
  ok = true;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const FlowField f(random_tensor({2, 6, 7}, rng, -12.0, 12.0));
    const double gamma = rng.uniform(0.5, 100.0);
    const FlowField back = denormalize_flow(normalize_flow(f, gamma), gamma);
    const NormalizedFlow n = normalize_flow(f, gamma);
    if (!(from_homogeneous(to_homogeneous(n)) == n)) ok = false;
    for (std::size_t k = 0; k < f.tensor().size(); ++k) {
      const double a = f.tensor().data()[k];
      const double err = std::abs(back.tensor().data()[k] - a) / std::max(std::abs(a), 1e-300);
      worst = std::max(worst, err);
    }
  }
  if (worst > 4.0 * std::numeric_limits<double>::epsilon()) ok = false;
  return "max relative roundtrip error " + fmt(worst);
}

std::string check_codec(std::uint64_t seed, bool& ok) {
  RngStream rng(seed, 3);
  const Tensor3 x = random_tensor({3, 8, 6}, rng, -1.0, 1.0);
  ok = decode(encode(x, 2), 2) == x && encode(x, 2).channels() == 12;
  return ok ? "space-to-depth roundtrip exact" : "codec roundtrip mismatch";
}

std::string check_adaptation(std::uint64_t seed, bool& ok) {
  RngStream rng(seed, 4);
  ok = true;
  double worst = 0.0;
  for (int n = 1; n <= 3; ++n) {
    ConvWeights base{5, 4, 3, {}, {}};
    base.weight.resize(5 * 4 * 9);
    base.bias.resize(5);
    for (double& w : base.weight) w = rng.normal();
    for (double& b : base.bias) b = rng.normal();
    const Tensor3 x = random_tensor({4, 6, 6}, rng, -1.0, 1.0);
    Tensor3 stacked(4 * (n + 1), 6, 6);
    for (int g = 0; g <= n; ++g) {
      for (int c = 0; c < 4; ++c) {
        std::ranges::copy(x.channel(c), stacked.channel(g * 4 + c).begin());
      }
    }
    const Tensor3 ref = conv2d(x, base);
    const Tensor3 got = conv2d(stacked, adapt_first_layer(base, n));
    for (std::size_t k = 0; k < ref.size(); ++k) {
      const double r = ref.data()[k];
      worst = std::max(worst, std::abs(got.data()[k] - r) / std::max(std::abs(r), 1e-12));
    }
  }
  ok = worst < 1e-6;
  return "max relative error " + fmt(worst);
}

std::string check_vdecode(std::uint64_t seed, bool& ok) {
  RngStream rng(seed, 5);
  const Schedule sched = build_schedule();
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Tensor3 z0 = random_tensor({12, 4, 4}, rng, -2.0, 2.0);
    const Tensor3 eps = gaussian_tensor({12, 4, 4}, seed, 100 + i);
    const int t = 1 + static_cast<int>(rng.below(sched.steps()));
    const Tensor3 back = decode_v(forward_diffuse(z0, t, eps, sched), v_target(z0, eps, t, sched), t, sched);
    for (std::size_t k = 0; k < z0.size(); ++k) {
      worst = std::max(worst, std::abs(back.data()[k] - z0.data()[k]));
    }
  }
  ok = worst < 1e-6;
  return "max abs error " + fmt(worst);
}

std::string check_gradient(std::uint64_t seed, bool corrupt, bool& ok) {
  GradientInstance inst = make_gradient_instance(seed);
  if (corrupt) {
    inst.model.block("conv_in.weight")[0] = std::numeric_limits<double>::quiet_NaN();
  }
  const GradientCheckReport r =
      check_gradients(inst.model, inst.example, inst.t, inst.noise, inst.context());
  ok = r.failures == 0;
  return std::to_string(r.checked) + " weights, " + std::to_string(r.failures) + " over 1e-3, worst " +
         fmt(r.max_rel_error) + " (" + r.worst_block + "), " + std::to_string(r.refined) +
         " re-probed across a warp kink";
}

std::string check_ssd_linear(std::uint64_t seed, bool& ok) {
  RngStream rng(seed, 6);
  ok = true;
  double worst = 0.0;
  for (int levels = 1; levels <= 16; ++levels) {
    ssd::Mat a(2, 2);
    a << rng.uniform(-0.9, 0.9), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.9, 0.9);
    ssd::Vec b(2);
    b << rng.normal(), rng.normal();
    const ssd::CompositeMap p(ssd::ToyDenoiser::affine(a, b));
    ssd::Vec x(2);
    x << rng.normal(), rng.normal();
    std::vector<ssd::Vec> deltas;
    for (int i = 0; i + 1 < levels; ++i) {
      ssd::Vec d(2);
      d << rng.normal(), rng.normal();
      deltas.push_back(d);
    }
    ssd::Vec terminal(2);
    terminal << rng.normal(), rng.normal();
    const auto trace = ssd::run_corrected(p, x, deltas, levels, terminal);
    worst = std::max(worst, (trace.empirical_error - trace.first_order_error).norm());
    if (levels == 1) {
      const auto plain = ssd::run_corrected(p, x, {}, 1);
      if (plain.empirical_error.norm() != 0.0) ok = false;
    }
  }
  if (worst > 1e-10) ok = false;
  return "max |empirical - first order| " + fmt(worst) + " over T = 1..16";
}

std::string check_ssd_scaling(std::uint64_t seed, bool& ok) {
  RngStream rng(seed, 7);
  ssd::Mat a(2, 2);
  a << 0.6, 0.2, -0.1, 0.5;
  ssd::Vec b(2);
  b << 0.1, -0.2;
  const ssd::CompositeMap p(ssd::ToyDenoiser::tanh_affine(a, b, 0.4));
  ssd::Vec x(2);
  x << 0.7, -0.3;
  std::vector<ssd::Vec> base;
  for (int i = 0; i < 7; ++i) {
    ssd::Vec d(2);
    d << rng.normal(), rng.normal();
    base.push_back(d);
  }
  const auto r = ssd::residual_scaling_test(p, x, base, 8, {1e-1, 1e-2, 1e-3});
  ok = r.slope && *r.slope >= 1.8;
  return r.slope ? "log-log slope " + fmt(*r.slope) : "residuals identically zero";
}

std::string check_metrics(std::uint64_t seed, bool& ok) {
  RngStream rng(seed, 8);
  const ImageTensor x(random_tensor({3, 16, 16}, rng, 0.0, 0.9));
  Tensor3 shifted = x.tensor();
  for (double& v : shifted.data()) v += 0.1;
  const double p = psnr(x, ImageTensor(shifted));
  const double e = flow_epe(FlowField::constant(5, 5, 3.0, 4.0), FlowField(5, 5));
  ok = ssim(x, x) == 1.0 && std::abs(p - 20.0) < 1e-9 && e == 5.0 && std::isinf(psnr(x, x));
  return "ssim(x,x)=" + fmt(ssim(x, x)) + " psnr(0.1)=" + fmt(p) + " epe(3,4)=" + fmt(e);
}

std::string check_formats(std::uint64_t seed, bool& ok) {
  RngStream rng(seed, 9);
  const FlowField f(random_tensor({2, 5, 7}, rng, -9.0, 9.0));
  // .flo stores float32, so compare against the float-rounded field.
  Tensor3 rounded = f.tensor();
  for (double& v : rounded.data()) v = static_cast<float>(v);
  const auto flo_bytes = encode_flo(FlowField(rounded));
  const bool flo_ok = decode_flo(flo_bytes) == FlowField(rounded) && encode_flo(decode_flo(flo_bytes)) == flo_bytes;
  RawTensor raw{{2, 3, 4}, {}};
  for (int i = 0; i < 24; ++i) raw.values.push_back(static_cast<float>(rng.normal()));
  const auto stmt_bytes = encode_stmt(raw);
  const bool stmt_ok = decode_stmt(stmt_bytes) == raw && encode_stmt(decode_stmt(stmt_bytes)) == stmt_bytes;

  const auto dir = std::filesystem::temp_directory_path() /
                   ("motionforge_verify_" + std::to_string(mix64(seed ^ 0x706e67ULL)));
  std::filesystem::create_directories(dir);
  const ImageTensor img(random_tensor({3, 9, 11}, rng, 0.0, 1.0));
  write_png(dir / "img.png", img);
  const ImageTensor back = read_image_png(dir / "img.png");
  double worst = 0.0;
  for (std::size_t k = 0; k < img.tensor().size(); ++k) {
    worst = std::max(worst, std::abs(back.tensor().data()[k] - img.tensor().data()[k]));
  }
  std::filesystem::remove_all(dir);
  const bool png_ok = worst <= 1.0 / 255.0;
  ok = flo_ok && stmt_ok && png_ok;
  return std::string("flo ") + (flo_ok ? "exact" : "MISMATCH") + ", stmt " + (stmt_ok ? "exact" : "MISMATCH") +
         ", png max error " + fmt(worst * 255.0) + "/255";
}

std::string check_training_determinism(std::uint64_t seed, int threads, bool& ok) {
  DatasetSpec spec;
  spec.count = 6;
  spec.seed = seed;
  spec.height = 16;
  spec.width = 16;
  spec.magnitude = 2.0;
  spec.noise_scale = 0.5;
  spec.gamma = 8.0;
  const auto records = generate_dataset(spec, 1);
  std::vector<TrainingExample> data;
  for (const auto& r : records) data.push_back(make_training_example(r, spec.gamma, 2));
  const Schedule sched = build_schedule();
  const PerceptualProxy proxy;
  const LossContext ctx{sched, proxy, LossConfig{}, spec.gamma, 2};
  DenoiserConfig cfg;
  cfg.conditions = 2;
  cfg.hidden = 4;
  TrainOptions opt;
  opt.epochs = 2;
  opt.batch_size = 3;
  opt.seed = seed;
  auto run = [&](int workers) {
    DenoiserModel m = DenoiserModel::create(cfg, seed);
    TrainState st;
    TrainOptions o = opt;
    o.threads = workers;
    const auto curve = train(m, data, ctx, o, st);
    std::vector<double> out(m.parameters().begin(), m.parameters().end());
    for (const auto& rec : curve) out.push_back(rec.total);
    return out;
  };
  const auto serial = run(1);
  const auto parallel = run(std::max(2, threads));
  ok = serial == parallel;
  return ok ? "serial and parallel runs bit-identical" : "serial and parallel runs differ";
}

}  // namespace

std::vector<CheckResult> run_oracle_suite(const VerifyOptions& options) {
  const std::uint64_t s = options.seed;
  std::vector<CheckResult> results;
  results.push_back(timed("warp_identity_and_shift", [&](bool& ok) { return check_warp(s, ok); }));
  results.push_back(timed("flow_normalization_roundtrip", [&](bool& ok) { return check_normalization(s, ok); }));
  results.push_back(timed("latent_codec_roundtrip", [&](bool& ok) { return check_codec(s, ok); }));
  results.push_back(timed("first_layer_adaptation", [&](bool& ok) { return check_adaptation(s, ok); }));
  results.push_back(timed("v_decode_consistency", [&](bool& ok) { return check_vdecode(s, ok); }));
  results.push_back(timed("loss_gradients_vs_finite_differences",
                          [&](bool& ok) { return check_gradient(s, options.corrupt_weights, ok); }));
  results.push_back(timed("ssd_affine_error_sum", [&](bool& ok) { return check_ssd_linear(s, ok); }));
  results.push_back(timed("ssd_first_order_scaling", [&](bool& ok) { return check_ssd_scaling(s, ok); }));
  results.push_back(timed("metric_sanity", [&](bool& ok) { return check_metrics(s, ok); }));
  results.push_back(timed("file_format_roundtrips", [&](bool& ok) { return check_formats(s, ok); }));
  results.push_back(timed("training_determinism",
                          [&](bool& ok) { return check_training_determinism(s, options.threads, ok); }));
  return results;
}

}  // namespace motionforge
