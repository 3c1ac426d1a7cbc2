#include "motionforge/diffusion.hpp"

#include <cmath>
#include <string>

#include "motionforge/errors.hpp"
#include "motionforge/rng.hpp"

namespace motionforge {

Schedule::Schedule(int steps, double beta_start, double beta_end)
    : steps_(steps), beta_start_(beta_start), beta_end_(beta_end) {
  if (steps < 1) {
    throw InvalidParameter("schedule needs at least one step");
  }
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw InvalidParameter("schedule needs 0 < beta_start <= beta_end < 1");
  }
  beta_.assign(steps + 1, 0.0);
  alpha_bar_.assign(steps + 1, 1.0);
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
    beta_[t] = beta_start + frac * (beta_end - beta_start);
    alpha_bar_[t] = alpha_bar_[t - 1] * (1.0 - beta_[t]);
  }
}

void Schedule::check(int t) const {
  if (t < 0 || t > steps_) {
    throw InvalidParameter("timestep " + std::to_string(t) + " outside [0, " +
                           std::to_string(steps_) + "]");
  }
}

double Schedule::beta(int t) const {
  if (t < 1 || t > steps_) {
    throw InvalidParameter("beta is defined on [1, T] only");
  }
  return beta_[t];
}

double Schedule::alpha_bar(int t) const {
  check(t);
  return alpha_bar_[t];
}

double Schedule::alpha(int t) const {
  check(t);
  return std::sqrt(alpha_bar_[t]);
}

double Schedule::sigma(int t) const {
  check(t);
  return std::sqrt(1.0 - alpha_bar_[t]);
}

Schedule build_schedule(int steps, double beta_start, double beta_end) {
  return Schedule(steps, beta_start, beta_end);
}

namespace {

void require_step(int t, const Schedule& schedule) {
  if (t < 1 || t > schedule.steps()) {
    throw InvalidParameter("timestep " + std::to_string(t) + " outside [1, " +
                           std::to_string(schedule.steps()) + "]");
  }
}

}  // namespace

Tensor3 forward_diffuse(const Tensor3& z0, int t, const Tensor3& noise, const Schedule& schedule) {
  require_step(t, schedule);
  return axpby(schedule.alpha(t), z0, schedule.sigma(t), noise);
}

Tensor3 v_target(const Tensor3& z0, const Tensor3& noise, int t, const Schedule& schedule) {
  require_step(t, schedule);
  return axpby(schedule.alpha(t), noise, -schedule.sigma(t), z0);
}

Tensor3 decode_v(const Tensor3& z_t, const Tensor3& v_hat, int t, const Schedule& schedule) {
  require_step(t, schedule);
  return axpby(schedule.alpha(t), z_t, -schedule.sigma(t), v_hat);
}

Tensor3 ddim_step(const Tensor3& z_t, const Tensor3& v_hat, int t, int t_prev,
                  const Schedule& schedule) {
  require_step(t, schedule);
  if (t_prev < 0 || t_prev >= t) {
    throw InvalidParameter("ddim_step needs 0 <= t_prev < t");
  }
  Tensor3 z0_hat = decode_v(z_t, v_hat, t, schedule);
  if (t_prev == 0) {
    return z0_hat;
  }
  const double a = schedule.alpha(t);
  const double s = schedule.sigma(t);
  const double a_prev = schedule.alpha(t_prev);
  const double s_prev = schedule.sigma(t_prev);
  Tensor3 out(z_t.shape());
  auto o = out.data();
  auto zt = z_t.data();
  auto x0 = z0_hat.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double eps_hat = (zt[i] - a * x0[i]) / s;
    o[i] = a_prev * x0[i] + s_prev * eps_hat;
  }
  return out;
}

std::vector<int> sampling_timesteps(int total_steps, int sample_steps) {
  if (sample_steps < 1 || sample_steps > total_steps) {
    throw InvalidParameter("sampling steps must lie in [1, T]");
  }
  std::vector<int> grid;
  grid.reserve(sample_steps);
  const double stride = static_cast<double>(total_steps) / sample_steps;
  for (int k = 0; k < sample_steps; ++k) {
    grid.push_back(static_cast<int>(std::lround(total_steps - k * stride)));
  }
  return grid;
}

Tensor3 gaussian_tensor(Shape3 shape, std::uint64_t seed, std::uint64_t stream) {
  const CounterRng rng(seed, stream);
  Tensor3 out(shape);
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = rng.normal(i);
  }
  return out;
}

LatentTensor sample(const VPredictor& predictor, const ConditionSet& conditions, Shape3 flow_latent,
                    int steps, std::uint64_t seed, const Schedule& schedule) {
  if (steps < 1) {
    throw InvalidParameter("sample needs at least one step");
  }
  const std::vector<int> grid = sampling_timesteps(schedule.steps(), steps);
  Tensor3 z = gaussian_tensor(flow_latent, seed, 0);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const int t = grid[k];
    const int t_prev = k + 1 < grid.size() ? grid[k + 1] : 0;
    const Tensor3 input = stack_input(conditions, LatentTensor(z));
    const Tensor3 v_hat = predictor(input, t);
    require_same_shape(v_hat, z, "predictor output");
    z = ddim_step(z, v_hat, t, t_prev, schedule);
  }
  return LatentTensor(std::move(z));
}

}  // namespace motionforge
