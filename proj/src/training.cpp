#include "motionforge/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "motionforge/errors.hpp"
#include "motionforge/parallel.hpp"
#include "motionforge/rng.hpp"

namespace motionforge {

Tensor3 latent_to_flow(const Tensor3& z0_hat, double gamma, int factor) {
  const Tensor3 homogeneous = decode(LatentTensor(z0_hat), factor);
  if (homogeneous.channels() != 3) {
    throw ShapeMismatch("flow latent does not decode to a homogeneous flow");
  }
  Tensor3 flow(2, homogeneous.height(), homogeneous.width());
  for (int c = 0; c < 2; ++c) {
    auto src = homogeneous.channel(c);
    auto dst = flow.channel(c);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = src[i] * gamma;
    }
  }
  return flow;
}

namespace {

// Adjoint of latent_to_flow.
Tensor3 flow_grad_to_latent(const Tensor3& grad_flow, double gamma, int factor) {
  Tensor3 homogeneous(3, grad_flow.height(), grad_flow.width());
  for (int c = 0; c < 2; ++c) {
    auto src = grad_flow.channel(c);
    auto dst = homogeneous.channel(c);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = src[i] * gamma;
    }
  }
  return encode(homogeneous, factor).tensor();
}

}  // namespace

LossParts evaluate_example(const DenoiserModel& model, const TrainingExample& example, int t,
                           const Tensor3& noise, const LossContext& ctx, std::span<double> grad,
                           double grad_scale) {
  const Schedule& sched = ctx.schedule;
  const double sigma = sched.sigma(t);
  const Tensor3 z_t = forward_diffuse(example.flow_latent, t, noise, sched);
  const Tensor3 input = stack_input(example.conditions, LatentTensor(z_t));

  DenoiserModel::Cache cache;
  const Tensor3 v_hat = model.forward(input, t, grad.empty() ? nullptr : &cache);
  const Tensor3 z0_hat = decode_v(z_t, v_hat, t, sched);

  LossParts parts;
  parts.diff = loss_diff(z0_hat, example.flow_latent);

  const Tensor3 flow = latent_to_flow(z0_hat, ctx.gamma, ctx.latent_factor);

  // Condition term: one RMS over every element of every pair.
  std::vector<Tensor3> warped;
  warped.reserve(example.condition_pairs.size());
  double cond_sum = 0.0;
  std::size_t cond_count = 0;
  for (const auto& pair : example.condition_pairs) {
    warped.push_back(detail::warp_tensor(pair.source, flow, pair.fill));
    auto tv = pair.target.data();
    auto wv = warped.back().data();
    for (std::size_t i = 0; i < tv.size(); ++i) {
      const double d = wv[i] - tv[i];
      cond_sum += d * d;
    }
    cond_count += tv.size();
  }
  parts.cond = cond_count == 0 ? 0.0 : std::sqrt(cond_sum / static_cast<double>(cond_count));

  const Tensor3 warped_image = detail::warp_tensor(example.image_cond, flow, kImageFill);
  PerceptualProxy::Cache pct_cache;
  const auto feat_gt = ctx.proxy.features(example.image_gt);
  const auto feat_warp = ctx.proxy.features(warped_image, &pct_cache);
  for (std::size_t l = 0; l < feat_gt.size(); ++l) {
    parts.pct += rms_distance(feat_warp[l], feat_gt[l]);
  }

  if (grad.empty()) {
    return parts;
  }

  const LossConfig& w = ctx.weights;
  Tensor3 g_z0(z0_hat.shape());
  if (w.w_diff > 0.0) {
    rms_distance_grad(z0_hat, example.flow_latent, w.w_diff, g_z0);
  }
  Tensor3 g_flow(flow.shape());
  bool flow_touched = false;
  if (w.w_cond > 0.0 && parts.cond > 0.0) {
    const double k = w.w_cond / (static_cast<double>(cond_count) * parts.cond);
    for (std::size_t p = 0; p < example.condition_pairs.size(); ++p) {
      const auto& pair = example.condition_pairs[p];
      Tensor3 g_warp(pair.target.shape());
      auto g = g_warp.data();
      auto tv = pair.target.data();
      auto wv = warped[p].data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = k * (wv[i] - tv[i]);
      }
      detail::warp_tensor_backward(pair.source, flow, pair.fill, g_warp, g_flow, nullptr);
    }
    flow_touched = true;
  }
  if (w.w_pct > 0.0) {
    std::vector<Tensor3> g_feat(feat_gt.size());
    for (std::size_t l = 0; l < feat_gt.size(); ++l) {
      rms_distance_grad(feat_warp[l], feat_gt[l], w.w_pct, g_feat[l]);
    }
    const Tensor3 g_img = ctx.proxy.backward(pct_cache, g_feat);
    detail::warp_tensor_backward(example.image_cond, flow, kImageFill, g_img, g_flow, nullptr);
    flow_touched = true;
  }
  if (flow_touched) {
    g_z0 += flow_grad_to_latent(g_flow, ctx.gamma, ctx.latent_factor);
  }

  // z0_hat = alpha * z_t - sigma * v_hat
  g_z0 *= -sigma * grad_scale;
  model.backward(cache, g_z0, grad);
  return parts;
}

GradientResult gradients(const DenoiserModel& model, std::span<const BatchItem> batch,
                         const LossContext& ctx, int threads) {
  if (batch.empty()) {
    throw InvalidParameter("gradient evaluation needs a non-empty batch");
  }
  const std::size_t n = batch.size();
  const std::size_t p = model.parameters().size();
  std::vector<std::vector<double>> per_item(n, std::vector<double>(p, 0.0));
  std::vector<LossParts> parts(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        parts[i] = evaluate_example(model, *batch[i].example, batch[i].t, batch[i].noise, ctx,
                                    per_item[i], 1.0);
      },
      threads);

  GradientResult result;
  result.grad.assign(p, 0.0);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < p; ++k) {
      result.grad[k] += per_item[i][k];
    }
    result.parts.diff += parts[i].diff;
    result.parts.cond += parts[i].cond;
    result.parts.pct += parts[i].pct;
  }
  for (double& g : result.grad) {
    g *= inv;
  }
  result.parts.diff *= inv;
  result.parts.cond *= inv;
  result.parts.pct *= inv;
  result.total = total_loss(result.parts, ctx.weights);
  if (!std::isfinite(result.total)) {
    std::ostringstream msg;
    msg << "non-finite loss (diff=" << result.parts.diff << ", cond=" << result.parts.cond
        << ", pct=" << result.parts.pct << ")";
    throw DivergenceError(msg.str());
  }
  return result;
}

void round_to_float(std::span<double> values) {
  for (double& v : values) {
    v = static_cast<double>(static_cast<float>(v));
  }
}

int steps_per_epoch(std::size_t dataset_size, int batch_size) {
  return static_cast<int>((dataset_size + static_cast<std::size_t>(batch_size) - 1) /
                          static_cast<std::size_t>(batch_size));
}

namespace {

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, long long epoch) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  RngStream rng(CounterRng(seed, 0x7065726dULL).fork(static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.below(i)]);
  }
  return perm;
}

}  // namespace

std::vector<LossRecord> train(DenoiserModel& model, const std::vector<TrainingExample>& dataset,
                              const LossContext& ctx, const TrainOptions& options, TrainState& state,
                              const std::function<void(const LossRecord&)>& on_step) {
  if (dataset.empty()) {
    throw EmptyDataset("training needs a non-empty dataset");
  }
  if (options.batch_size < 1 || options.epochs < 0 || options.learning_rate < 0.0 ||
      options.momentum < 0.0 || options.momentum >= 1.0) {
    throw InvalidParameter("invalid training options");
  }
  ctx.weights.validate();
  auto params = model.parameters();
  if (state.velocity.empty()) {
    state.velocity.assign(params.size(), 0.0);
  }
  if (state.velocity.size() != params.size()) {
    throw ShapeMismatch("optimizer state does not match the model");
  }

  const int spe = steps_per_epoch(dataset.size(), options.batch_size);
  const long long total_steps = static_cast<long long>(spe) * options.epochs;
  const Shape3 latent_shape = dataset.front().flow_latent.shape();
  const int timesteps = ctx.schedule.steps();

  std::vector<LossRecord> history;
  long long cached_epoch = -1;
  std::vector<std::size_t> perm;
  for (long long step = state.step; step < total_steps; ++step) {
    const long long epoch = step / spe;
    const long long pos = step % spe;
    if (epoch != cached_epoch) {
      perm = epoch_permutation(dataset.size(), options.seed, epoch);
      cached_epoch = epoch;
    }
    const std::size_t begin = static_cast<std::size_t>(pos) * options.batch_size;
    const std::size_t end = std::min(dataset.size(), begin + options.batch_size);

    std::vector<BatchItem> batch;
    const CounterRng step_rng = CounterRng(options.seed, 0x73746570ULL).fork(static_cast<std::uint64_t>(step));
    for (std::size_t b = begin; b < end; ++b) {
      const std::uint64_t slot = b - begin;
      const int t = 1 + static_cast<int>(step_rng.uniform(slot) * timesteps) % timesteps;
      const std::uint64_t noise_stream = step_rng.fork(slot + 1).key();
      batch.push_back({&dataset[perm[b]], t, gaussian_tensor(latent_shape, options.seed, noise_stream)});
    }

    GradientResult g;
    try {
      g = gradients(model, batch, ctx, options.threads);
    } catch (const DivergenceError& e) {
      throw DivergenceError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }

    for (std::size_t k = 0; k < params.size(); ++k) {
      state.velocity[k] = options.momentum * state.velocity[k] + g.grad[k];
      params[k] -= options.learning_rate * state.velocity[k];
    }
    round_to_float(params);
    round_to_float(state.velocity);
    state.step = step + 1;

    LossRecord rec{step, g.total, g.parts};
    history.push_back(rec);
    if (on_step) {
      on_step(rec);
    }
  }
  return history;
}

}  // namespace motionforge
