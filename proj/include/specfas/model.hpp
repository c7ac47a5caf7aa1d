#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "specfas/tensor.hpp"

namespace specfas {

struct ModelConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t in_channels = 33;
  std::size_t kernel_size = 3;
  // Output channels of the central-difference block and the two plain conv
  // blocks; every block has stride 2.
  std::vector<std::size_t> channels{16, 32, 64};
  std::size_t attention_maps = 4;
  std::size_t proj_dim = 128;
  double theta = 0.7;
  std::uint64_t seed = 0;

  std::size_t feature_dim() const { return attention_maps * channels.back(); }
  void validate() const;
};

struct ModelParams {
  Tensor spectral_weights;  // [in_channels]
  Tensor cdc_kernel;        // [k, k, in_channels, c1]
  Tensor cdc_bias;          // [c1]
  Tensor conv2_kernel;      // [k, k, c1, c2]
  Tensor conv2_bias;
  Tensor conv3_kernel;      // [k, k, c2, c3]
  Tensor conv3_bias;
  Tensor attention_kernel;  // [1, 1, c3, a]
  Tensor attention_bias;    // [a]
  Tensor classifier_weight; // [a * c3, 2]
  Tensor classifier_bias;   // [2]
  Tensor projector_weight;  // [a * c3, proj_dim]
  Tensor projector_bias;    // [proj_dim]

  // Seeded He-normal initialisation; spectral weights start at one and
  // biases at zero. All tensors require grad.
  static ModelParams init(const ModelConfig& cfg);

  // Handles in a fixed order. They alias the parameters, so writes through
  // mutable_data() update the model.
  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> tensors() const;
  // Slot by name; throws std::out_of_range for unknown names.
  Tensor& at(const std::string& name);
  ModelParams clone() const;
  void zero_grad();
};

struct ModelOutput {
  Tensor logits;    // [N, 2]
  Tensor z;         // [N, proj_dim], unit rows
  Tensor features;  // [N, a * c3]
};

// out[..., c] = weights[c] * x[..., c]
Tensor spectral_weight_layer(const Tensor& x, const Tensor& weights);

/// Central difference convolution with "same" padding:
///   conv(x, k) - theta * x_centre * sum_{spatial taps}(k)
/// The kernel must have odd spatial size.
Tensor cdc_conv(const Tensor& x, const Tensor& kernel, double theta, std::size_t stride = 1);

// Spatial softmax attention maps [N, a, hf * wf] from 1x1 conv logits.
Tensor attention_maps(const Tensor& features, const Tensor& kernel, const Tensor& bias);

/// Attention pooling: pooled_m = sum_{i,j} A_m(i,j) f(i,j,:), concatenated
/// over the a maps -> [N, a * cf].
Tensor mat_lite_forward(const Tensor& features, const Tensor& kernel, const Tensor& bias);

// Spectral weighting -> CDC block -> conv blocks -> attention pooling ->
// classifier logits and normalised projection.
ModelOutput model_forward(const Tensor& x, const ModelParams& params, const ModelConfig& cfg);

// Probability of the Fake class for every row, no graph recorded.
std::vector<double> fake_scores(const Tensor& x, const ModelParams& params, const ModelConfig& cfg);

// ---------------------------------------------------------------------------
// Checkpoints: a text header (hyperparameters and tensor shapes) followed by
// one float64 SPFS record per parameter.

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::map<std::string, std::string> hyperparameters;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const ModelConfig& cfg,
                     const std::map<std::string, std::string>& hyperparameters = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace specfas
