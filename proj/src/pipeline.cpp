#include "motionforge/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "motionforge/errors.hpp"
#include "motionforge/rng.hpp"

namespace motionforge {

int condition_count(Task task) { return task == Task::sir ? 2 : 1; }

ConditionSet encode_conditions(const SampleRecord& record, int factor) {
  std::vector<LatentTensor> blocks;
  blocks.push_back(encode(record.image_cond.tensor(), factor));
  if (record.task == Task::sir) {
    blocks.push_back(encode(record.mask.as_rgb(), factor));
  }
  return ConditionSet(std::move(blocks));
}

LatentTensor encode_flow(const FlowField& flow, double gamma, int factor) {
  return encode(to_homogeneous(normalize_flow(flow, gamma)).tensor(), factor);
}

FlowField decode_flow(const LatentTensor& z0_hat, double gamma, int factor) {
  const HomogeneousFlow homogeneous(decode(z0_hat, factor));
  const NormalizedFlow f = from_homogeneous(homogeneous);
  // Clip to the flow sanity bound before scaling back to pixels.
  Tensor3 clipped = f.tensor();
  const double limit = 2.0 * std::max(clipped.height(), clipped.width()) / gamma;
  for (double& v : clipped.data()) {
    v = std::clamp(v, -limit, limit);
  }
  return denormalize_flow(NormalizedFlow(std::move(clipped)), gamma);
}

TrainingExample make_training_example(const SampleRecord& record, double gamma, int factor) {
  std::vector<ConditionPair> pairs;
  pairs.push_back({record.image_gt.tensor(), record.image_cond.tensor(), kImageFill});
  if (record.task == Task::sir) {
    pairs.push_back({Tensor3(1, record.mask.height(), record.mask.width(), 1.0), record.mask.tensor(),
                     kMaskFill});
  }
  return TrainingExample{encode_conditions(record, factor),
                         encode_flow(record.flow_pseudo, gamma, factor).tensor(), std::move(pairs),
                         record.image_gt.tensor(), record.image_cond.tensor()};
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) {
  return mix64(seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(index));
}

std::uint64_t member_seed(std::uint64_t seed, std::size_t index, std::size_t member) {
  const std::uint64_t base = sample_seed(seed, index);
  return member == 0 ? base : mix64(base ^ (0xd1b54a32d192ed03ULL * static_cast<std::uint64_t>(member)));
}

Prediction predict(const MotionModel& model, const SampleRecord& record, int steps, std::uint64_t seed) {
  if (condition_count(record.task) != model.denoiser.config().conditions) {
    throw InvalidParameter("model was trained for " + task_name(model.task) + " conditions");
  }
  const ConditionSet conditions = encode_conditions(record, model.latent_factor);
  const Shape3 latent{model.denoiser.config().latent_channels, conditions.block_shape().height,
                      conditions.block_shape().width};
  const VPredictor predictor = [&](const Tensor3& input, int t) { return model.denoiser.forward(input, t); };
  const LatentTensor z0 = sample(predictor, conditions, latent, steps, seed, model.schedule);
  Prediction out;
  out.flow = decode_flow(z0, model.gamma, model.latent_factor);
  out.warped = warp(record.image_cond, out.flow);
  out.warped_mask = warp_mask(record.mask, out.flow);
  return out;
}

}  // namespace motionforge
