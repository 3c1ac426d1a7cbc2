#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "motionforge/diffusion.hpp"
#include "motionforge/tensor.hpp"

namespace motionforge {

/// Weights of one convolution: weight is (out, in, k, k), bias is (out).
struct ConvWeights {
  int out_channels = 0;
  int in_channels = 0;
  int kernel = 1;
  std::vector<double> weight;
  std::vector<double> bias;
};

/// Widens a first layer to accept N condition groups plus the flow group.
/// The input-channel block is replicated N+1 times and every weight is
/// scaled by 1/(N+1), so identical groups reproduce the original response.
ConvWeights adapt_first_layer(const ConvWeights& layer, int conditions);

/// Same-padded 2-D convolution (pad = k/2).
Tensor3 conv2d(const Tensor3& input, const ConvWeights& layer, int stride = 1);

struct DenoiserConfig {
  int conditions = 1;        // N
  int latent_channels = 12;  // c_lat
  int hidden = 16;
  int time_features = 8;
  int timesteps = kDefaultTimesteps;  // T
  double beta_start = kDefaultBetaStart;
  double beta_end = kDefaultBetaEnd;

  int input_channels() const { return (conditions + 1) * latent_channels; }
  bool operator==(const DenoiserConfig&) const = default;
};

struct ParameterBlock {
  std::string name;
  std::size_t offset = 0;
  std::vector<int> dims;
  std::size_t size() const;
};

/// Small v-predictor:
///   conv3x3 (+ timestep bias) -> ReLU -> conv3x3/2 -> ReLU -> conv3x3 -> ReLU
///   -> nearest x2 (+ skip) -> conv3x3 -> ReLU -> conv1x1 = f
/// then per latent channel v = g(t) * f + s(t) * z_t, where z_t is the noisy
/// flow group of the input, g = 1 + G psi(t), s = S psi(t) and
/// psi(t) = (1, alpha_t / sigma_t, 1 / sigma_t). G and S are learned.
/// All trainable values live in one flat vector.
class DenoiserModel {
 public:
  struct Cache {
    Tensor3 input;
    int t = 0;
    Tensor3 a1, h1, a2, h2, a3, h3, u, a4, h4, f;
  };

  DenoiserModel() = default;
  explicit DenoiserModel(const DenoiserConfig& config);

  /// He-style initialisation. The first layer is drawn for a single latent
  /// group and widened with adapt_first_layer. Gain and skip start at
  /// g = -1/sigma, s = alpha/sigma, so the decoded estimate alpha z_t - sigma v
  /// initially equals the conv output f.
  static DenoiserModel create(const DenoiserConfig& config, std::uint64_t seed);

  const DenoiserConfig& config() const { return config_; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  const std::vector<ParameterBlock>& layout() const { return layout_; }
  std::span<double> block(const std::string& name);
  std::span<const double> block(const std::string& name) const;

  ConvWeights layer(const std::string& prefix) const;
  void set_layer(const std::string& prefix, const ConvWeights& weights);

  /// Fixed timestep features fed to the learned time projection.
  std::vector<double> time_features(int t) const;
  /// Schedule-derived basis for the output gain and skip: (1, alpha/sigma, 1/sigma).
  std::array<double, 3> modulation_basis(int t) const;

  Tensor3 forward(const Tensor3& stacked_input, int t, Cache* cache = nullptr) const;

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  void backward(const Cache& cache, const Tensor3& grad_output, std::span<double> grad) const;

 private:
  void add_block(const std::string& name, std::vector<int> dims);
  const ParameterBlock& find(const std::string& name) const;
  void require_input(const Tensor3& input) const;

  DenoiserConfig config_;
  Schedule schedule_;
  std::vector<ParameterBlock> layout_;
  std::vector<double> params_;
};

namespace detail {

void conv2d_forward(const Tensor3& input, std::span<const double> weight,
                    std::span<const double> bias, int out_channels, int kernel, int stride,
                    Tensor3& out);

void conv2d_backward(const Tensor3& input, std::span<const double> weight, const Tensor3& grad_out,
                     int kernel, int stride, Tensor3* grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias);

}  // namespace detail

}  // namespace motionforge
