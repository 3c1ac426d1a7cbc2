#pragma once

#include <cstdint>
#include <vector>

#include "motionforge/denoiser.hpp"
#include "motionforge/diffusion.hpp"
#include "motionforge/synthgen.hpp"
#include "motionforge/training.hpp"

namespace motionforge {

/// Model plus the settings needed to run it end to end.
struct MotionModel {
  DenoiserModel denoiser;
  Schedule schedule = build_schedule();
  double gamma = kDefaultGamma;
  int latent_factor = kDefaultLatentFactor;
  Task task = Task::sir;
};

/// Number of condition elements: 2 for SIR (image, mask), 1 for RSC (image).
int condition_count(Task task);

/// Encoded conditions for a record: [cond image] or [cond image, mask as RGB].
ConditionSet encode_conditions(const SampleRecord& record, int factor);

/// z^(f') for a flow: normalize, add the ones channel, encode.
LatentTensor encode_flow(const FlowField& flow, double gamma, int factor);

/// Predicted pixel flow from a decoded flow latent.
FlowField decode_flow(const LatentTensor& z0_hat, double gamma, int factor);

/// Training pair built from the pseudo label; the condition term compares
/// (I_gt, I_cond) and, for SIR, (all-ones, M) with zero border fill.
TrainingExample make_training_example(const SampleRecord& record, double gamma, int factor);

struct Prediction {
  FlowField flow;
  ImageTensor warped;
  Mask warped_mask;
};

/// Noise seed for dataset sample `index`; shared by inference, sweeps and
/// ensemble member 0.
std::uint64_t sample_seed(std::uint64_t seed, std::size_t index);
/// Seed of ensemble member `member` (member 0 equals sample_seed).
std::uint64_t member_seed(std::uint64_t seed, std::size_t index, std::size_t member);

/// Samples z0 with `steps` reverse steps from seed, decodes the flow and
/// warps the condition image and mask.
Prediction predict(const MotionModel& model, const SampleRecord& record, int steps, std::uint64_t seed);

}  // namespace motionforge
