#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "motionforge/denoiser.hpp"
#include "motionforge/diffusion.hpp"
#include "motionforge/latent_codec.hpp"
#include "motionforge/losses.hpp"

namespace motionforge {

/// One training pair, already encoded: condition latents, the flow latent
/// target z^(f') (built from the pseudo label), and the pixel-space pairs
/// the condition and perceptual terms compare against.
struct TrainingExample {
  ConditionSet conditions;
  Tensor3 flow_latent;
  std::vector<ConditionPair> condition_pairs;
  Tensor3 image_gt;
  Tensor3 image_cond;
};

/// Everything a loss evaluation needs besides the model and the example.
struct LossContext {
  const Schedule& schedule;
  const PerceptualProxy& proxy;
  LossConfig weights;
  double gamma = 64.0;
  int latent_factor = 2;
};

/// Maps a decoded flow latent (12 x h x w) to the denormalized pixel flow
/// (2 x H x W): decode, keep channels 0-1, multiply by gamma.
Tensor3 latent_to_flow(const Tensor3& z0_hat, double gamma, int factor);

/// Evaluates all three loss terms at timestep t with the given noise.
/// When `grad` is non-empty, accumulates grad_scale * d(total)/d(params).
/// Only terms with positive weight contribute gradients.
LossParts evaluate_example(const DenoiserModel& model, const TrainingExample& example, int t,
                           const Tensor3& noise, const LossContext& ctx, std::span<double> grad = {},
                           double grad_scale = 1.0);

struct BatchItem {
  const TrainingExample* example;
  int t;
  Tensor3 noise;
};

struct GradientResult {
  std::vector<double> grad;  // mean over the batch
  LossParts parts;           // mean over the batch
  double total = 0.0;
};

/// Batch-mean loss and its exact gradient. Items are evaluated in parallel
/// and reduced in item order. Throws DivergenceError on a non-finite loss.
GradientResult gradients(const DenoiserModel& model, std::span<const BatchItem> batch,
                         const LossContext& ctx, int threads = 0);

struct TrainOptions {
  int epochs = 1;
  int batch_size = 4;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  int threads = 0;
};

/// Optimizer state carried across runs so a resumed run continues the exact
/// same trajectory.
struct TrainState {
  std::vector<double> velocity;
  long long step = 0;
};

struct LossRecord {
  long long step = 0;
  double total = 0.0;
  LossParts parts;
};

int steps_per_epoch(std::size_t dataset_size, int batch_size);

/// SGD with momentum. Step k draws its batch from the epoch permutation and
/// its timesteps and noise from counters keyed by (seed, k), so the loss
/// curve depends only on (seed, data, options). Parameters and velocity are
/// held at float32 precision so checkpoints resume exactly.
std::vector<LossRecord> train(DenoiserModel& model, const std::vector<TrainingExample>& dataset,
                              const LossContext& ctx, const TrainOptions& options, TrainState& state,
                              const std::function<void(const LossRecord&)>& on_step = {});

/// Rounds every value to the nearest float32.
void round_to_float(std::span<double> values);

}  // namespace motionforge
