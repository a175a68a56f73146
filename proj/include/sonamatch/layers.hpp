#pragma once

#include <cstdint>
#include <vector>

#include "sonamatch/rng.hpp"
#include "sonamatch/tensor.hpp"

namespace sonamatch {

// Learnable parameters of one layer plus its optimizer state. Convolutions
// store weights as (filters, in_channels, k, k); dense layers as
// (out_features, in_features). Optimizer moments mirror the parameter
// shapes and start at zero.
struct LayerParams {
  Tensor weights;
  Tensor bias;
  Tensor m_weights, v_weights;
  Tensor m_bias, v_bias;
  std::uint64_t adam_steps = 0;

  static LayerParams conv(std::size_t filters, std::size_t in_channels,
                          std::size_t kernel);
  static LayerParams dense(std::size_t out_features, std::size_t in_features);
};

struct LayerGrads {
  Tensor weights;
  Tensor bias;
};

struct AdamConfig {
  double learning_rate = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

enum class Mode { Train, Infer };

// Probabilities are clipped into [kProbClip, 1 - kProbClip] inside the
// cross-entropy losses so a saturated output cannot produce log(0).
inline constexpr double kProbClip = 1e-7;

// ---- convolution ----
// Valid cross-correlation, stride 1, no padding: output is
// (filters, H - k + 1, W - k + 1).
Tensor conv2d(const Tensor& input, const LayerParams& params);

struct ConvGradResult {
  Tensor input_grad;
  LayerGrads param_grads;
};
ConvGradResult conv2d_grad(const Tensor& input, const LayerParams& params,
                           const Tensor& upstream);

// ---- max pooling ----
// 2x2 windows, stride 2, floor semantics: a trailing odd row/column is
// dropped. argmax stores the flat input index that won each window; on a
// tie the first element in row-major scan order wins.
struct PoolResult {
  Tensor output;
  std::vector<std::uint32_t> argmax;
};
PoolResult maxpool2x2(const Tensor& input);
Tensor maxpool2x2_grad(const Tensor& input, const PoolResult& pooled,
                       const Tensor& upstream);

// ---- dense ----
Tensor dense(const Tensor& input, const LayerParams& params);

struct DenseGradResult {
  Tensor input_grad;
  LayerGrads param_grads;
};
DenseGradResult dense_grad(const Tensor& input, const LayerParams& params,
                           const Tensor& upstream);

// ---- activations ----
Tensor relu(const Tensor& input);
Tensor relu_grad(const Tensor& pre_activation, const Tensor& upstream);

Tensor sigmoid(const Tensor& input);
// Takes the forward *output*, which determines the derivative directly.
Tensor sigmoid_grad(const Tensor& output, const Tensor& upstream);

Tensor softmax(const Tensor& input);
Tensor softmax_grad(const Tensor& output, const Tensor& upstream);

// ---- losses ----
// target must be exactly one-hot (entries 0 or 1, summing to 1).
double categorical_cross_entropy(const Tensor& predicted, const Tensor& target);
Tensor categorical_cross_entropy_grad(const Tensor& predicted,
                                      const Tensor& target);

// label must be 0 or 1.
double binary_cross_entropy(double p, int label);
double binary_cross_entropy_grad(double p, int label);

// ---- dropout ----
// Train mode zeroes each element with probability `rate` and scales the
// survivors by 1/(1-rate), so the expected value matches infer mode.
// Infer mode returns the input unchanged.
struct DropoutResult {
  Tensor output;
  std::vector<std::uint8_t> kept;
};
DropoutResult dropout_train(const Tensor& input, double rate, Rng& rng);
Tensor dropout(const Tensor& input, double rate, Mode mode, Rng& rng);
Tensor dropout_grad(const DropoutResult& forward, double rate,
                    const Tensor& upstream);

// ---- optimizer ----
// One bias-corrected adaptive-moment update, applied in place.
void adam_step(LayerParams& params, const LayerGrads& grads,
               const AdamConfig& config);

}  // namespace sonamatch
