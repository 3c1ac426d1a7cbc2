#include "motionforge/ssd_lab.hpp"

#include <cmath>
#include <string>

#include "motionforge/errors.hpp"
#include "motionforge/metrics.hpp"
#include "motionforge/parallel.hpp"
#include "motionforge/rng.hpp"

namespace motionforge::ssd {

ToyDenoiser ToyDenoiser::affine(Mat a, Vec b) {
  if (a.rows() != a.cols() || a.rows() != b.size()) {
    throw ShapeMismatch("affine toy denoiser needs a square matrix matching the offset");
  }
  ToyDenoiser d;
  d.value = [a, b](const Vec& x) -> Vec { return a * x + b; };
  d.jacobian = [a](const Vec&) -> Mat { return a; };
  return d;
}

ToyDenoiser ToyDenoiser::tanh_affine(Mat a, Vec b, double k) {
  if (a.rows() != a.cols() || a.rows() != b.size()) {
    throw ShapeMismatch("toy denoiser needs a square matrix matching the offset");
  }
  ToyDenoiser d;
  d.value = [a, b, k](const Vec& x) -> Vec { return a * x + b + k * x.array().tanh().matrix(); };
  d.jacobian = [a, k](const Vec& x) -> Mat {
    const Eigen::ArrayXd th = x.array().tanh();
    Mat j = a;
    j.diagonal().array() += k * (1.0 - th * th);
    return j;
  };
  return d;
}

CompositeMap::CompositeMap(ToyDenoiser theta) : theta_(std::move(theta)) {}

CompositeMap::CompositeMap(ToyDenoiser theta, const Schedule& schedule, int levels)
    : theta_(std::move(theta)) {
  const auto grid = sampling_timesteps(schedule.steps(), levels);
  // steps_[j - 1] drives level j; grid[0] is the highest timestep (level T).
  steps_.resize(levels);
  for (int j = 1; j <= levels; ++j) {
    const int t = grid[levels - j];
    const int t_prev = j == 1 ? 0 : grid[levels - j + 1];
    steps_[j - 1] = SchedulerStep{false, schedule.alpha(t), schedule.sigma(t), schedule.alpha(t_prev),
                                  schedule.sigma(t_prev)};
  }
}

SchedulerStep CompositeMap::step(int level) const {
  if (level < 1) {
    throw InvalidParameter("chain level must be >= 1");
  }
  if (steps_.empty()) {
    return SchedulerStep{};
  }
  if (level > static_cast<int>(steps_.size())) {
    throw InvalidParameter("chain level " + std::to_string(level) + " beyond the scheduler grid");
  }
  return steps_[level - 1];
}

Vec CompositeMap::apply(int level, const Vec& x) const {
  const SchedulerStep s = step(level);
  const Vec y0 = theta_.value(x);
  if (s.identity) {
    return y0;
  }
  return s.a_prev * y0 + s.s_prev * (x - s.a_t * y0) / s.s_t;
}

Mat CompositeMap::jacobian(int level, const Vec& x) const {
  const SchedulerStep s = step(level);
  const Mat j = theta_.jacobian(x);
  if (s.identity) {
    return j;
  }
  const Mat eye = Mat::Identity(x.size(), x.size());
  return s.a_prev * j + (s.s_prev / s.s_t) * (eye - s.a_t * j);
}

Vec p_map(const CompositeMap& p, int level, const Vec& x) { return p.apply(level, x); }

SSDTrace run_uncorrected(const CompositeMap& p, const Vec& x_T, int levels) {
  if (levels < 1) {
    throw InvalidParameter("SSD chains need T >= 1");
  }
  SSDTrace trace;
  trace.levels = levels;
  trace.uncorrected.push_back(x_T);
  Vec y = x_T;
  for (int j = levels; j >= 1; --j) {
    y = p.apply(j, y);
    trace.uncorrected.push_back(y);
  }
  trace.pred_1 = y;
  return trace;
}

Vec first_order_error(const std::vector<Vec>& deltas, const std::vector<Mat>& jacobians,
                      const std::optional<Vec>& terminal) {
  if (deltas.size() != jacobians.size()) {
    throw ShapeMismatch("first_order_error: need one Jacobian per intermediate correction");
  }
  long dim = terminal ? terminal->size() : (deltas.empty() ? 0 : deltas.front().size());
  Vec err = terminal ? *terminal : Vec::Zero(dim);
  if (deltas.empty()) {
    return err;
  }
  Mat product = Mat::Identity(dim, dim);
  const std::size_t n = deltas.size();  // T - 1
  for (std::size_t i = 1; i <= n; ++i) {
    const Mat& j = jacobians[i - 1];
    const Vec& delta = deltas[n - i];  // Δ_i; deltas run Δ_{T-1} .. Δ_1
    if (j.rows() != dim || j.cols() != dim || delta.size() != dim) {
      throw ShapeMismatch("first_order_error: dimension mismatch");
    }
    product = product * j;
    err += product * delta;
  }
  return err;
}

SSDTrace run_corrected(const CompositeMap& p, const Vec& x_T, const std::vector<Vec>& deltas, int levels,
                       const std::optional<Vec>& terminal) {
  SSDTrace trace = run_uncorrected(p, x_T, levels);
  if (static_cast<int>(deltas.size()) != levels - 1) {
    throw InvalidParameter("run_corrected: expected " + std::to_string(levels - 1) + " corrections, got " +
                           std::to_string(deltas.size()));
  }
  for (const auto& d : deltas) {
    if (d.size() != x_T.size()) {
      throw ShapeMismatch("run_corrected: correction dimension mismatch");
    }
  }
  trace.deltas = deltas;
  trace.terminal_delta = terminal;
  trace.corrected.push_back(x_T);
  trace.jacobians.assign(levels > 1 ? levels - 1 : 0, Mat());
  Vec x = x_T;
  for (int j = levels; j >= 1; --j) {
    if (j < levels) {
      trace.jacobians[j - 1] = p.jacobian(j, x);
    }
    x = p.apply(j, x);
    if (j > 1) {
      x += deltas[levels - j];  // Δ_{j-1}
    } else if (terminal) {
      x += *terminal;
    }
    trace.corrected.push_back(x);
  }
  trace.pred_2 = x;
  trace.empirical_error = trace.pred_2 - trace.pred_1;
  trace.first_order_error = first_order_error(trace.deltas, trace.jacobians, terminal);
  return trace;
}

ScalingResult residual_scaling_test(const CompositeMap& p, const Vec& x_T, const std::vector<Vec>& base,
                                    int levels, const std::vector<double>& epsilons) {
  if (epsilons.size() < 2) {
    throw InvalidParameter("residual scaling needs at least two epsilons");
  }
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] > 0.0) || (i > 0 && !(epsilons[i] < epsilons[i - 1]))) {
      throw InvalidParameter("epsilons must be positive and strictly decreasing");
    }
  }
  ScalingResult result;
  result.epsilons = epsilons;
  for (double eps : epsilons) {
    std::vector<Vec> scaled;
    for (const auto& d : base) {
      scaled.push_back(eps * d);
    }
    const SSDTrace trace = run_corrected(p, x_T, scaled, levels);
    result.residuals.push_back((trace.empirical_error - trace.first_order_error).norm());
  }
  std::size_t zeros = 0;
  for (double r : result.residuals) {
    if (r == 0.0) ++zeros;
  }
  if (zeros == result.residuals.size()) {
    return result;
  }
  if (zeros > 0) {
    throw InvalidParameter("degenerate residual fit: some residuals are exactly zero");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(epsilons.size());
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    const double lx = std::log(epsilons[i]);
    const double ly = std::log(result.residuals[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  result.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return result;
}

std::vector<SweepRow> steps_sweep(const MotionModel& model, const std::vector<SampleRecord>& records,
                                  const std::vector<int>& steps_list, std::uint64_t seed, int threads) {
  if (records.empty()) {
    throw EmptyDataset("steps sweep needs at least one record");
  }
  const std::size_t n = records.size();
  const std::size_t jobs = steps_list.size() * n;
  std::vector<double> psnrs(jobs), ssims(jobs), epes(jobs);
  parallel_for(
      jobs,
      [&](std::size_t job) {
        const std::size_t s = job / n;
        const std::size_t i = job % n;
        const Prediction pred = predict(model, records[i], steps_list[s], sample_seed(seed, i));
        psnrs[job] = psnr_for_csv(psnr(pred.warped, records[i].image_gt));
        ssims[job] = ssim(pred.warped, records[i].image_gt);
        epes[job] = flow_epe(pred.flow, records[i].flow_gt);
      },
      threads);
  std::vector<SweepRow> rows;
  for (std::size_t s = 0; s < steps_list.size(); ++s) {
    SweepRow row{steps_list[s], 0.0, 0.0, 0.0, n};
    for (std::size_t i = 0; i < n; ++i) {
      row.psnr_db += psnrs[s * n + i];
      row.ssim += ssims[s * n + i];
      row.flow_epe += epes[s * n + i];
    }
    row.psnr_db /= static_cast<double>(n);
    row.ssim /= static_cast<double>(n);
    row.flow_epe /= static_cast<double>(n);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace motionforge::ssd
