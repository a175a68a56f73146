#include "sonamatch/layers.hpp"

#include <algorithm>
#include <cmath>

#include "sonamatch/errors.hpp"

namespace sonamatch {

LayerParams LayerParams::conv(std::size_t filters, std::size_t in_channels,
                              std::size_t kernel) {
  LayerParams p;
  p.weights = Tensor::zeros({filters, in_channels, kernel, kernel});
  p.bias = Tensor::zeros({filters});
  p.m_weights = Tensor::zeros(p.weights.shape);
  p.v_weights = Tensor::zeros(p.weights.shape);
  p.m_bias = Tensor::zeros(p.bias.shape);
  p.v_bias = Tensor::zeros(p.bias.shape);
  return p;
}

LayerParams LayerParams::dense(std::size_t out_features,
                               std::size_t in_features) {
  LayerParams p;
  p.weights = Tensor::zeros({out_features, in_features});
  p.bias = Tensor::zeros({out_features});
  p.m_weights = Tensor::zeros(p.weights.shape);
  p.v_weights = Tensor::zeros(p.weights.shape);
  p.m_bias = Tensor::zeros(p.bias.shape);
  p.v_bias = Tensor::zeros(p.bias.shape);
  return p;
}

namespace {

struct ConvDims {
  std::size_t F, C, K, H, W, Ho, Wo;
};

ConvDims conv_dims(const Tensor& input, const LayerParams& params,
                   const char* who) {
  require_rank(input, 3, std::string(who) + " input");
  if (params.weights.rank() != 4) {
    throw ShapeError(std::string(who) + ": weights must be rank 4, got " +
                     shape_string(params.weights.shape));
  }
  ConvDims d;
  d.F = params.weights.shape[0];
  d.C = params.weights.shape[1];
  d.K = params.weights.shape[2];
  d.H = input.shape[1];
  d.W = input.shape[2];
  if (input.shape[0] != d.C) {
    throw ShapeError(std::string(who) + ": input has " +
                     std::to_string(input.shape[0]) + " channels, weights expect " +
                     std::to_string(d.C));
  }
  if (d.H < d.K || d.W < d.K) {
    throw ShapeError(std::string(who) + ": input " + shape_string(input.shape) +
                     " is smaller than the " + std::to_string(d.K) + "x" +
                     std::to_string(d.K) + " kernel");
  }
  d.Ho = d.H - d.K + 1;
  d.Wo = d.W - d.K + 1;
  return d;
}

// Register-blocked correlation kernel: all K*K taps sit in registers and
// the tap loops unroll inside the vectorized output loop, so each output
// row is loaded and stored once per channel instead of once per tap.
// `acc += tap * row` with a compile-time K is what lets the compiler emit
// dense fused multiply-adds here; the generic-K path below keeps the
// simpler tap-outer ordering.
template <std::size_t K>
void correlate_rows(const double* in, std::size_t H, std::size_t W,
                    const double* taps, double* out, std::size_t Ho,
                    std::size_t Wo) {
  double t[K * K];
  for (std::size_t i = 0; i < K * K; ++i) t[i] = taps[i];
  (void)H;
  for (std::size_t ho = 0; ho < Ho; ++ho) {
    double* op = out + ho * Wo;
    const double* ip = in + ho * W;
    for (std::size_t wo = 0; wo < Wo; ++wo) {
      double acc = op[wo];
      for (std::size_t kh = 0; kh < K; ++kh) {
        const double* row = ip + kh * W + wo;
        for (std::size_t kw = 0; kw < K; ++kw) acc += t[kh * K + kw] * row[kw];
      }
      op[wo] = acc;
    }
  }
}

void correlate_rows_generic(const double* in, std::size_t W,
                            const double* taps, std::size_t K, double* out,
                            std::size_t Ho, std::size_t Wo) {
  for (std::size_t kh = 0; kh < K; ++kh) {
    for (std::size_t kw = 0; kw < K; ++kw) {
      const double wv = taps[kh * K + kw];
      for (std::size_t ho = 0; ho < Ho; ++ho) {
        const double* ip = in + (ho + kh) * W + kw;
        double* op = out + ho * Wo;
        for (std::size_t wo = 0; wo < Wo; ++wo) op[wo] += wv * ip[wo];
      }
    }
  }
}

void correlate_plane(const double* in, std::size_t H, std::size_t W,
                     const double* taps, std::size_t K, double* out,
                     std::size_t Ho, std::size_t Wo) {
  switch (K) {
    case 5: correlate_rows<5>(in, H, W, taps, out, Ho, Wo); break;
    case 3: correlate_rows<3>(in, H, W, taps, out, Ho, Wo); break;
    default: correlate_rows_generic(in, W, taps, K, out, Ho, Wo); break;
  }
}

}  // namespace

// Valid correlation in a channel-blocked order; on this codebase the
// direct kernel outruns an im2col + GEMM formulation, so there is no
// BLAS dependency.
Tensor conv2d(const Tensor& input, const LayerParams& params) {
  const ConvDims d = conv_dims(input, params, "conv2d");
  Tensor out = Tensor::zeros({d.F, d.Ho, d.Wo});

  const double* in = input.data.data();
  const double* w = params.weights.data.data();
  double* ob = out.data.data();

  for (std::size_t f = 0; f < d.F; ++f) {
    const double bias = params.bias[f];
    double* plane = ob + f * d.Ho * d.Wo;
    std::fill(plane, plane + d.Ho * d.Wo, bias);
  }
  for (std::size_t f = 0; f < d.F; ++f) {
    double* ofp = ob + f * d.Ho * d.Wo;
    for (std::size_t c = 0; c < d.C; ++c) {
      correlate_plane(in + c * d.H * d.W, d.H, d.W,
                      w + (f * d.C + c) * d.K * d.K, d.K, ofp, d.Ho, d.Wo);
    }
  }
  return out;
}

namespace {

// Tap gradients for one (filter, channel) pair in a single pass over the
// upstream plane: K*K accumulators stay live across the vectorized inner
// loop instead of the plane being re-read once per tap.
template <std::size_t K>
void tap_grads(const double* in, std::size_t W, const double* up,
               std::size_t Ho, std::size_t Wo, double* gw) {
  double acc[K * K] = {};
  for (std::size_t ho = 0; ho < Ho; ++ho) {
    const double* upr = up + ho * Wo;
    const double* ip = in + ho * W;
    for (std::size_t wo = 0; wo < Wo; ++wo) {
      const double u = upr[wo];
      for (std::size_t kh = 0; kh < K; ++kh) {
        const double* row = ip + kh * W + wo;
        for (std::size_t kw = 0; kw < K; ++kw) acc[kh * K + kw] += u * row[kw];
      }
    }
  }
  for (std::size_t i = 0; i < K * K; ++i) gw[i] = acc[i];
}

void tap_grads_generic(const double* in, std::size_t W, const double* up,
                       std::size_t K, std::size_t Ho, std::size_t Wo,
                       double* gw) {
  for (std::size_t kh = 0; kh < K; ++kh) {
    for (std::size_t kw = 0; kw < K; ++kw) {
      double acc = 0.0;
      for (std::size_t ho = 0; ho < Ho; ++ho) {
        const double* ip = in + (ho + kh) * W + kw;
        const double* upr = up + ho * Wo;
        for (std::size_t wo = 0; wo < Wo; ++wo) acc += upr[wo] * ip[wo];
      }
      gw[kh * K + kw] = acc;
    }
  }
}

}  // namespace

ConvGradResult conv2d_grad(const Tensor& input, const LayerParams& params,
                           const Tensor& upstream) {
  const ConvDims d = conv_dims(input, params, "conv2d_grad");
  require_shape(upstream, {d.F, d.Ho, d.Wo}, "conv2d_grad upstream");

  ConvGradResult r;
  r.input_grad = Tensor::zeros(input.shape);
  r.param_grads.weights = Tensor::zeros(params.weights.shape);
  r.param_grads.bias = Tensor::zeros(params.bias.shape);

  const double* in = input.data.data();
  const double* up = upstream.data.data();
  const double* w = params.weights.data.data();
  double* gi = r.input_grad.data.data();
  double* gw = r.param_grads.weights.data.data();

  for (std::size_t f = 0; f < d.F; ++f) {
    const double* ufp = up + f * d.Ho * d.Wo;
    double acc = 0.0;
    for (std::size_t i = 0; i < d.Ho * d.Wo; ++i) acc += ufp[i];
    r.param_grads.bias[f] = acc;
  }

  for (std::size_t f = 0; f < d.F; ++f) {
    const double* ufp = up + f * d.Ho * d.Wo;
    for (std::size_t c = 0; c < d.C; ++c) {
      const double* icp = in + c * d.H * d.W;
      double* gwfc = gw + (f * d.C + c) * d.K * d.K;
      switch (d.K) {
        case 5: tap_grads<5>(icp, d.W, ufp, d.Ho, d.Wo, gwfc); break;
        case 3: tap_grads<3>(icp, d.W, ufp, d.Ho, d.Wo, gwfc); break;
        default: tap_grads_generic(icp, d.W, ufp, d.K, d.Ho, d.Wo, gwfc);
      }
    }
  }

  // The input gradient is itself a valid correlation: the upstream plane
  // zero-padded by K-1 on every side, correlated with the 180-degree
  // rotated taps, lands exactly on the input shape. That reuses the
  // register-blocked kernel instead of a scatter with boundary tests.
  const std::size_t pad = d.K - 1;
  const std::size_t Ph = d.Ho + 2 * pad, Pw = d.Wo + 2 * pad;
  std::vector<double> padded(Ph * Pw, 0.0);
  std::vector<double> rotated(d.K * d.K);
  for (std::size_t f = 0; f < d.F; ++f) {
    const double* ufp = up + f * d.Ho * d.Wo;
    for (std::size_t ho = 0; ho < d.Ho; ++ho) {
      std::copy(ufp + ho * d.Wo, ufp + (ho + 1) * d.Wo,
                padded.data() + (ho + pad) * Pw + pad);
    }
    for (std::size_t c = 0; c < d.C; ++c) {
      const double* wfc = w + (f * d.C + c) * d.K * d.K;
      for (std::size_t kh = 0; kh < d.K; ++kh) {
        for (std::size_t kw = 0; kw < d.K; ++kw) {
          rotated[kh * d.K + kw] = wfc[(d.K - 1 - kh) * d.K + (d.K - 1 - kw)];
        }
      }
      correlate_plane(padded.data(), Ph, Pw, rotated.data(), d.K,
                      gi + c * d.H * d.W, d.H, d.W);
    }
  }
  return r;
}

PoolResult maxpool2x2(const Tensor& input) {
  require_rank(input, 3, "maxpool2x2 input");
  const std::size_t C = input.shape[0], H = input.shape[1], W = input.shape[2];
  if (H < 2 || W < 2) {
    throw ShapeError("maxpool2x2: input " + shape_string(input.shape) +
                     " has no full 2x2 window");
  }
  const std::size_t Ho = H / 2, Wo = W / 2;
  PoolResult r;
  r.output = Tensor::zeros({C, Ho, Wo});
  r.argmax.resize(C * Ho * Wo);

  const double* in = input.data.data();
  double* out = r.output.data.data();
  std::uint32_t* am = r.argmax.data();
  for (std::size_t c = 0; c < C; ++c) {
    const double* icp = in + c * H * W;
    for (std::size_t i = 0; i < Ho; ++i) {
      const double* r0 = icp + (2 * i) * W;
      const double* r1 = icp + (2 * i + 1) * W;
      for (std::size_t j = 0; j < Wo; ++j) {
        const std::size_t col = 2 * j;
        // Strict > keeps the first maximum in scan order on ties.
        std::size_t best = col;
        const double* brow = r0;
        double bv = r0[col];
        if (r0[col + 1] > bv) { bv = r0[col + 1]; best = col + 1; }
        if (r1[col] > bv) { bv = r1[col]; best = col; brow = r1; }
        if (r1[col + 1] > bv) { bv = r1[col + 1]; best = col + 1; brow = r1; }
        const std::size_t flat =
            c * H * W + (2 * i + (brow == r1 ? 1 : 0)) * W + best;
        *out++ = bv;
        *am++ = static_cast<std::uint32_t>(flat);
      }
    }
  }
  return r;
}

Tensor maxpool2x2_grad(const Tensor& input, const PoolResult& pooled,
                       const Tensor& upstream) {
  require_shape(upstream, pooled.output.shape, "maxpool2x2_grad upstream");
  if (pooled.argmax.size() != pooled.output.numel()) {
    throw ShapeError("maxpool2x2_grad: argmax does not match pooled output");
  }
  Tensor gi = Tensor::zeros(input.shape);
  for (std::size_t i = 0; i < pooled.argmax.size(); ++i) {
    gi[pooled.argmax[i]] += upstream[i];
  }
  return gi;
}

Tensor dense(const Tensor& input, const LayerParams& params) {
  require_rank(input, 1, "dense input");
  const std::size_t M = params.weights.shape[0], N = params.weights.shape[1];
  if (params.weights.rank() != 2 || input.shape[0] != N) {
    throw ShapeError("dense: input " + shape_string(input.shape) +
                     " does not match weights " +
                     shape_string(params.weights.shape));
  }
  Tensor out = Tensor::zeros({M});
  const double* x = input.data.data();
  const double* w = params.weights.data.data();
  for (std::size_t o = 0; o < M; ++o) {
    const double* row = w + o * N;
    double acc = params.bias[o];
    for (std::size_t i = 0; i < N; ++i) acc += row[i] * x[i];
    out[o] = acc;
  }
  return out;
}

DenseGradResult dense_grad(const Tensor& input, const LayerParams& params,
                           const Tensor& upstream) {
  require_rank(input, 1, "dense_grad input");
  const std::size_t M = params.weights.shape[0], N = params.weights.shape[1];
  if (input.shape[0] != N) {
    throw ShapeError("dense_grad: input " + shape_string(input.shape) +
                     " does not match weights " +
                     shape_string(params.weights.shape));
  }
  require_shape(upstream, {M}, "dense_grad upstream");

  DenseGradResult r;
  r.input_grad = Tensor::zeros({N});
  r.param_grads.weights = Tensor::zeros(params.weights.shape);
  r.param_grads.bias = upstream;

  const double* x = input.data.data();
  const double* w = params.weights.data.data();
  double* gw = r.param_grads.weights.data.data();
  double* gx = r.input_grad.data.data();
  for (std::size_t o = 0; o < M; ++o) {
    const double u = upstream[o];
    const double* row = w + o * N;
    double* grow = gw + o * N;
    for (std::size_t i = 0; i < N; ++i) {
      grow[i] = u * x[i];
      gx[i] += u * row[i];
    }
  }
  return r;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_grad(const Tensor& pre_activation, const Tensor& upstream) {
  require_shape(upstream, pre_activation.shape, "relu_grad upstream");
  Tensor g = upstream;
  for (std::size_t i = 0; i < g.numel(); ++i) {
    if (pre_activation[i] <= 0.0) g[i] = 0.0;
  }
  return g;
}

Tensor sigmoid(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data) {
    // Branch on sign so neither exponential can overflow.
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  return out;
}

Tensor sigmoid_grad(const Tensor& output, const Tensor& upstream) {
  require_shape(upstream, output.shape, "sigmoid_grad upstream");
  Tensor g = upstream;
  for (std::size_t i = 0; i < g.numel(); ++i) {
    g[i] *= output[i] * (1.0 - output[i]);
  }
  return g;
}

Tensor softmax(const Tensor& input) {
  require_rank(input, 1, "softmax input");
  if (input.numel() == 0) throw ShapeError("softmax: empty input");
  Tensor out = input;
  const double peak = *std::max_element(out.data.begin(), out.data.end());
  double sum = 0.0;
  for (double& v : out.data) {
    v = std::exp(v - peak);
    sum += v;
  }
  for (double& v : out.data) v /= sum;
  return out;
}

Tensor softmax_grad(const Tensor& output, const Tensor& upstream) {
  require_shape(upstream, output.shape, "softmax_grad upstream");
  double dot = 0.0;
  for (std::size_t i = 0; i < output.numel(); ++i) dot += upstream[i] * output[i];
  Tensor g = output;
  for (std::size_t i = 0; i < g.numel(); ++i) {
    g[i] = output[i] * (upstream[i] - dot);
  }
  return g;
}

namespace {

void require_one_hot(const Tensor& target) {
  std::size_t ones = 0;
  for (double v : target.data) {
    if (v == 1.0) {
      ++ones;
    } else if (v != 0.0) {
      throw InputError("cross entropy target must be one-hot, found entry " +
                       std::to_string(v));
    }
  }
  if (ones != 1) {
    throw InputError("cross entropy target must contain exactly one 1, found " +
                     std::to_string(ones));
  }
}

void require_probability_vector(const Tensor& p) {
  for (double v : p.data) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw InputError("predicted distribution entry " + std::to_string(v) +
                       " is outside [0, 1]");
    }
  }
}

double clip_prob(double p) {
  return std::clamp(p, kProbClip, 1.0 - kProbClip);
}

}  // namespace

double categorical_cross_entropy(const Tensor& predicted, const Tensor& target) {
  require_rank(predicted, 1, "categorical_cross_entropy predicted");
  require_shape(target, predicted.shape, "categorical_cross_entropy target");
  require_probability_vector(predicted);
  require_one_hot(target);
  double loss = 0.0;
  for (std::size_t i = 0; i < predicted.numel(); ++i) {
    if (target[i] == 1.0) loss -= std::log(clip_prob(predicted[i]));
  }
  return loss;
}

Tensor categorical_cross_entropy_grad(const Tensor& predicted,
                                      const Tensor& target) {
  require_rank(predicted, 1, "categorical_cross_entropy predicted");
  require_shape(target, predicted.shape, "categorical_cross_entropy target");
  require_probability_vector(predicted);
  require_one_hot(target);
  Tensor g = Tensor::zeros(predicted.shape);
  for (std::size_t i = 0; i < predicted.numel(); ++i) {
    // The clip makes the loss flat outside (clip, 1-clip); the gradient
    // there is genuinely zero.
    if (target[i] == 1.0 && predicted[i] > kProbClip &&
        predicted[i] < 1.0 - kProbClip) {
      g[i] = -1.0 / predicted[i];
    }
  }
  return g;
}

namespace {

void require_binary_inputs(double p, int label, const char* who) {
  if (label != 0 && label != 1) {
    throw InputError(std::string(who) + ": label must be 0 or 1, got " +
                     std::to_string(label));
  }
  if (!(p >= 0.0 && p <= 1.0)) {
    throw InputError(std::string(who) + ": probability " + std::to_string(p) +
                     " is outside [0, 1]");
  }
}

}  // namespace

double binary_cross_entropy(double p, int label) {
  require_binary_inputs(p, label, "binary_cross_entropy");
  const double pc = clip_prob(p);
  return label == 1 ? -std::log(pc) : -std::log(1.0 - pc);
}

double binary_cross_entropy_grad(double p, int label) {
  require_binary_inputs(p, label, "binary_cross_entropy_grad");
  if (p <= kProbClip || p >= 1.0 - kProbClip) return 0.0;
  return label == 1 ? -1.0 / p : 1.0 / (1.0 - p);
}

DropoutResult dropout_train(const Tensor& input, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " +
                      std::to_string(rate));
  }
  DropoutResult r;
  r.output = input;
  r.kept.assign(input.numel(), 1);
  if (rate == 0.0) return r;
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < input.numel(); ++i) {
    if (rng.uniform01() < rate) {
      r.output[i] = 0.0;
      r.kept[i] = 0;
    } else {
      r.output[i] *= scale;
    }
  }
  return r;
}

Tensor dropout(const Tensor& input, double rate, Mode mode, Rng& rng) {
  if (mode == Mode::Infer) {
    if (!(rate >= 0.0 && rate < 1.0)) {
      throw ConfigError("dropout rate must lie in [0, 1), got " +
                        std::to_string(rate));
    }
    return input;
  }
  return dropout_train(input, rate, rng).output;
}

Tensor dropout_grad(const DropoutResult& forward, double rate,
                    const Tensor& upstream) {
  if (forward.kept.size() != upstream.numel()) {
    throw ShapeError("dropout_grad: upstream " + shape_string(upstream.shape) +
                     " does not match forward mask of " +
                     std::to_string(forward.kept.size()) + " elements");
  }
  const double scale = 1.0 / (1.0 - rate);
  Tensor g = upstream;
  for (std::size_t i = 0; i < g.numel(); ++i) {
    g[i] = forward.kept[i] ? g[i] * scale : 0.0;
  }
  return g;
}

namespace {

void adam_update(Tensor& param, Tensor& m, Tensor& v, const Tensor& grad,
                 const AdamConfig& cfg, double bc1, double bc2,
                 const char* what) {
  if (!param.same_shape(grad)) {
    throw ShapeError(std::string("adam_step: ") + what + " gradient " +
                     shape_string(grad.shape) + " does not match parameters " +
                     shape_string(param.shape));
  }
  for (std::size_t i = 0; i < param.numel(); ++i) {
    const double g = grad[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    param[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

}  // namespace

void adam_step(LayerParams& params, const LayerGrads& grads,
               const AdamConfig& config) {
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0) ||
      !(config.beta2 >= 0.0 && config.beta2 < 1.0) ||
      !(config.epsilon > 0.0) || !(config.learning_rate > 0.0)) {
    throw ConfigError("adam_step: invalid optimizer configuration");
  }
  params.adam_steps += 1;
  const double t = static_cast<double>(params.adam_steps);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  adam_update(params.weights, params.m_weights, params.v_weights, grads.weights,
              config, bc1, bc2, "weight");
  adam_update(params.bias, params.m_bias, params.v_bias, grads.bias, config,
              bc1, bc2, "bias");
}

}  // namespace sonamatch
