#include "sonamatch/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "sonamatch/dataset_io.hpp"
#include "sonamatch/errors.hpp"

namespace sonamatch {

namespace {

constexpr std::size_t kKernel = 5;

void glorot_init(LayerParams& p, std::size_t fan_in, std::size_t fan_out,
                 Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& w : p.weights.data) w = rng.uniform(-bound, bound);
}

void require_patch(const Tensor& p, const char* what) {
  require_shape(p, {kPatchSize, kPatchSize}, what);
  if (!p.all_finite()) {
    throw InputError(std::string(what) + ": patch contains non-finite values");
  }
}

Tensor stack_pair(const Tensor& a, const Tensor& b) {
  Tensor s = Tensor::zeros({2, kPatchSize, kPatchSize});
  std::copy(a.data.begin(), a.data.end(), s.data.begin());
  std::copy(b.data.begin(), b.data.end(), s.data.begin() + a.numel());
  return s;
}

Tensor as_single_channel(const Tensor& patch) {
  Tensor t = patch;
  t.shape = {1, kPatchSize, kPatchSize};
  return t;
}

Tensor flatten(Tensor t) {
  t.shape = {t.numel()};
  return t;
}

// ---- forward caches ----

struct TrunkCache {
  std::vector<Tensor> conv_in;
  std::vector<Tensor> conv_pre;
  std::vector<Tensor> relu_out;
  std::vector<PoolResult> pools;
};

Tensor run_trunk(const std::vector<LayerParams>& convs, Tensor input,
                 TrunkCache* cache) {
  Tensor cur = std::move(input);
  for (const LayerParams& conv : convs) {
    if (cache) cache->conv_in.push_back(cur);
    Tensor pre = conv2d(cur, conv);
    Tensor act = relu(pre);
    PoolResult pooled = maxpool2x2(act);
    cur = pooled.output;
    if (cache) {
      cache->conv_pre.push_back(std::move(pre));
      cache->relu_out.push_back(std::move(act));
      cache->pools.push_back(std::move(pooled));
    }
  }
  return flatten(std::move(cur));
}

enum class Act { Relu, Sigmoid };

// One hidden dense step: dense, activation, dropout (train only).
struct FcStep {
  Tensor input;
  Tensor pre;
  Tensor act;
  DropoutResult drop;
  bool dropped = false;
};

Tensor run_fc_step(const LayerParams& layer, Tensor input, Act act_kind,
                   double dropout_rate, Rng* rng, FcStep* cache) {
  Tensor pre = dense(input, layer);
  Tensor act = act_kind == Act::Relu ? relu(pre) : sigmoid(pre);
  const bool dropped = dropout_rate > 0.0 && rng != nullptr;
  DropoutResult drop;
  Tensor out;
  if (dropped) {
    drop = dropout_train(act, dropout_rate, *rng);
    out = drop.output;
  } else {
    out = act;
  }
  if (cache) {
    cache->input = std::move(input);
    cache->pre = std::move(pre);
    cache->act = std::move(act);
    cache->drop = std::move(drop);
    cache->dropped = dropped;
  }
  return out;
}

void add_into(LayerGrads& accum, const LayerGrads& g) {
  for (std::size_t i = 0; i < accum.weights.numel(); ++i)
    accum.weights[i] += g.weights[i];
  for (std::size_t i = 0; i < accum.bias.numel(); ++i)
    accum.bias[i] += g.bias[i];
}

Tensor fc_step_backward(const LayerParams& layer, const FcStep& cache,
                        Act act_kind, double dropout_rate, Tensor upstream,
                        LayerGrads& accum) {
  Tensor d = std::move(upstream);
  if (cache.dropped) d = dropout_grad(cache.drop, dropout_rate, d);
  d = act_kind == Act::Relu ? relu_grad(cache.pre, d)
                            : sigmoid_grad(cache.act, d);
  DenseGradResult g = dense_grad(cache.input, layer, d);
  add_into(accum, g.param_grads);
  return std::move(g.input_grad);
}

// Backward through the conv trunk; `upstream` arrives flat and is
// reshaped to the last pooled map. Returns the gradient at the trunk
// input. `accum` must span the conv layers in order.
Tensor trunk_backward(const std::vector<LayerParams>& convs,
                      const TrunkCache& cache, Tensor upstream_flat,
                      LayerGrads* accum) {
  Tensor d = Tensor::from(cache.pools.back().output.shape,
                          std::move(upstream_flat.data));
  for (std::size_t i = convs.size(); i-- > 0;) {
    d = maxpool2x2_grad(cache.relu_out[i], cache.pools[i], d);
    d = relu_grad(cache.conv_pre[i], d);
    ConvGradResult g = conv2d_grad(cache.conv_in[i], convs[i], d);
    add_into(accum[i], g.param_grads);
    d = std::move(g.input_grad);
  }
  return d;
}

struct ForwardCaches {
  TrunkCache trunk_a;
  TrunkCache trunk_b;            // Siamese right branch
  std::vector<FcStep> fc_a;      // hidden fc steps (TwoChannel trunk or branch a)
  std::vector<FcStep> fc_b;      // branch b (Siamese)
  FcStep head_hidden;            // Siamese decision hidden step
  Tensor head_in;                // input of the final dense layer
};

Tensor forward_logits(const Network& net, const Tensor& a, const Tensor& b,
                      double dropout_rate, Rng* rng, ForwardCaches* c) {
  const bool keep = c != nullptr;

  if (net.spec.architecture == Architecture::TwoChannel) {
    Tensor cur = run_trunk(net.conv_stack, stack_pair(a, b),
                           keep ? &c->trunk_a : nullptr);
    if (keep) c->fc_a.resize(net.fc_stack.size());
    for (std::size_t i = 0; i < net.fc_stack.size(); ++i) {
      cur = run_fc_step(net.fc_stack[i], std::move(cur), Act::Relu,
                        dropout_rate, rng, keep ? &c->fc_a[i] : nullptr);
    }
    if (keep) c->head_in = cur;
    return dense(cur, net.head_stack.back());
  }

  // Siamese: the single shared branch embeds both patches, left first;
  // the decision head sees the embeddings concatenated in that order.
  auto branch = [&](const Tensor& patch, TrunkCache* tc,
                    std::vector<FcStep>* steps) {
    Tensor cur = run_trunk(net.conv_stack, as_single_channel(patch), tc);
    if (steps) steps->resize(net.fc_stack.size());
    for (std::size_t i = 0; i < net.fc_stack.size(); ++i) {
      const Act act = i + 1 == net.fc_stack.size() ? Act::Sigmoid : Act::Relu;
      cur = run_fc_step(net.fc_stack[i], std::move(cur), act, dropout_rate,
                        rng, steps ? &(*steps)[i] : nullptr);
    }
    return cur;
  };
  Tensor fa = branch(a, keep ? &c->trunk_a : nullptr, keep ? &c->fc_a : nullptr);
  Tensor fb = branch(b, keep ? &c->trunk_b : nullptr, keep ? &c->fc_b : nullptr);

  Tensor joined = Tensor::zeros({fa.numel() + fb.numel()});
  std::copy(fa.data.begin(), fa.data.end(), joined.data.begin());
  std::copy(fb.data.begin(), fb.data.end(), joined.data.begin() + fa.numel());

  Tensor cur = run_fc_step(net.head_stack[0], std::move(joined), Act::Relu,
                           dropout_rate, rng, keep ? &c->head_hidden : nullptr);
  if (keep) c->head_in = cur;
  return dense(cur, net.head_stack.back());
}

Tensor head_activation_from_logits(const Network& net, const Tensor& logits) {
  return net.spec.head == Head::Class ? softmax(logits) : sigmoid(logits);
}

double p_match_from_activation(const Network& net, const Tensor& act) {
  return net.spec.head == Head::Class ? act[1] : act[0];
}

void check_forward_args(const Network& net, const Tensor& a, const Tensor& b,
                        double dropout_rate, bool need_rng, Rng* rng) {
  require_patch(a, "patch a");
  require_patch(b, "patch b");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " +
                      std::to_string(dropout_rate));
  }
  if (need_rng && dropout_rate > 0.0 && rng == nullptr) {
    throw ConfigError("dropout in train mode needs a random source");
  }
  if (net.conv_stack.empty() || net.head_stack.empty()) {
    throw ConfigError("network has no layers; build it first");
  }
}

std::vector<LayerGrads> zero_grads_like(const Network& net) {
  std::vector<LayerGrads> grads;
  for (const LayerParams* layer : parameter_layers(net)) {
    grads.push_back({Tensor::zeros(layer->weights.shape),
                     Tensor::zeros(layer->bias.shape)});
  }
  return grads;
}

Tensor strip_channel(Tensor t) {
  // {1, H, W} -> {H, W}
  t.shape = {t.shape[1], t.shape[2]};
  return t;
}

}  // namespace

std::string NetworkSpec::name() const {
  std::string s =
      architecture == Architecture::TwoChannel ? "two-chan" : "siamese";
  s += head == Head::Class ? "-class" : "-score";
  return s;
}

NetworkSpec NetworkSpec::parse(const std::string& name) {
  for (Architecture a : {Architecture::TwoChannel, Architecture::Siamese}) {
    for (Head h : {Head::Class, Head::Score}) {
      NetworkSpec spec{a, h};
      if (spec.name() == name) return spec;
    }
  }
  throw ConfigError("unknown architecture \"" + name +
                    "\" (expected two-chan-class, two-chan-score, "
                    "siamese-class or siamese-score)");
}

Network build_network(const NetworkSpec& spec, std::uint64_t seed) {
  Network net;
  net.spec = spec;
  const std::size_t out_units = spec.head == Head::Class ? 2 : 1;
  if (spec.architecture == Architecture::TwoChannel) {
    net.conv_stack.push_back(LayerParams::conv(16, 2, kKernel));
    net.conv_stack.push_back(LayerParams::conv(32, 16, kKernel));
    net.conv_stack.push_back(LayerParams::conv(32, 32, kKernel));
    net.conv_stack.push_back(LayerParams::conv(16, 32, kKernel));
    net.fc_stack.push_back(LayerParams::dense(64, 64));
    net.fc_stack.push_back(LayerParams::dense(32, 64));
    net.head_stack.push_back(LayerParams::dense(out_units, 32));
  } else {
    net.conv_stack.push_back(LayerParams::conv(16, 1, kKernel));
    net.conv_stack.push_back(LayerParams::conv(32, 16, kKernel));
    net.conv_stack.push_back(LayerParams::conv(64, 32, kKernel));
    net.conv_stack.push_back(LayerParams::conv(32, 64, kKernel));
    net.fc_stack.push_back(LayerParams::dense(96, 128));
    net.fc_stack.push_back(LayerParams::dense(96, 96));
    net.head_stack.push_back(LayerParams::dense(64, 192));
    net.head_stack.push_back(LayerParams::dense(out_units, 64));
  }

  Rng rng(seed);
  for (LayerParams* layer : parameter_layers(net)) {
    const auto& ws = layer->weights.shape;
    if (ws.size() == 4) {
      glorot_init(*layer, ws[1] * ws[2] * ws[3], ws[0] * ws[2] * ws[3], rng);
    } else {
      glorot_init(*layer, ws[1], ws[0], rng);
    }
  }
  return net;
}

std::size_t parameter_count(const Network& net) {
  std::size_t n = 0;
  for (const LayerParams* layer : parameter_layers(net)) {
    n += layer->weights.numel() + layer->bias.numel();
  }
  return n;
}

std::vector<const LayerParams*> parameter_layers(const Network& net) {
  std::vector<const LayerParams*> out;
  for (const auto& l : net.conv_stack) out.push_back(&l);
  for (const auto& l : net.fc_stack) out.push_back(&l);
  for (const auto& l : net.head_stack) out.push_back(&l);
  return out;
}

std::vector<LayerParams*> parameter_layers(Network& net) {
  std::vector<LayerParams*> out;
  for (auto& l : net.conv_stack) out.push_back(&l);
  for (auto& l : net.fc_stack) out.push_back(&l);
  for (auto& l : net.head_stack) out.push_back(&l);
  return out;
}

MatchOutput forward_pair(const Network& net, const Tensor& a, const Tensor& b,
                         Mode mode, double dropout_rate, Rng* rng) {
  return forward_pair_detail(net, a, b, mode, dropout_rate, rng).output;
}

PairForward forward_pair_detail(const Network& net, const Tensor& a,
                                const Tensor& b, Mode mode,
                                double dropout_rate, Rng* rng) {
  check_forward_args(net, a, b, dropout_rate, mode == Mode::Train, rng);
  const double rate = mode == Mode::Train ? dropout_rate : 0.0;
  Rng* use_rng = mode == Mode::Train ? rng : nullptr;
  Tensor logits = forward_logits(net, a, b, rate, use_rng, nullptr);
  PairForward f;
  f.head_activation = head_activation_from_logits(net, logits);
  f.output.p_match = p_match_from_activation(net, f.head_activation);
  return f;
}

Tensor siamese_branch_features(const Network& net, const Tensor& patch) {
  if (net.spec.architecture != Architecture::Siamese) {
    throw ConfigError("siamese_branch_features: network " + net.spec.name() +
                      " has no shared branch");
  }
  require_patch(patch, "branch patch");
  Tensor cur = run_trunk(net.conv_stack, as_single_channel(patch), nullptr);
  for (std::size_t i = 0; i < net.fc_stack.size(); ++i) {
    const Act act = i + 1 == net.fc_stack.size() ? Act::Sigmoid : Act::Relu;
    cur = run_fc_step(net.fc_stack[i], std::move(cur), act, 0.0, nullptr,
                      nullptr);
  }
  return cur;
}

PairGradients pair_loss_gradients(const Network& net, const Tensor& a,
                                  const Tensor& b, int label,
                                  double dropout_rate, Rng* dropout_rng) {
  check_forward_args(net, a, b, dropout_rate, true, dropout_rng);
  if (label != 0 && label != 1) {
    throw InputError("pair label must be 0 or 1, got " + std::to_string(label));
  }

  ForwardCaches c;
  Tensor logits = forward_logits(net, a, b, dropout_rate, dropout_rng, &c);
  Tensor act = head_activation_from_logits(net, logits);

  PairGradients out;
  out.p_match = p_match_from_activation(net, act);
  out.layers = zero_grads_like(net);

  // Cross entropy fused with the output activation: for the softmax head
  // d/dlogits = act - onehot, for the sigmoid head p - label. This stays
  // exact even when the probability saturates.
  Tensor dhead;
  if (net.spec.head == Head::Class) {
    Tensor onehot =
        Tensor::from({2}, {label == 0 ? 1.0 : 0.0, label == 1 ? 1.0 : 0.0});
    out.loss = categorical_cross_entropy(act, onehot);
    dhead = Tensor::from({2}, {act[0] - onehot[0], act[1] - onehot[1]});
  } else {
    out.loss = binary_cross_entropy(out.p_match, label);
    dhead = Tensor::from({1}, {out.p_match - static_cast<double>(label)});
  }

  const std::size_t n_conv = net.conv_stack.size();
  const std::size_t n_fc = net.fc_stack.size();
  LayerGrads* conv_slots = out.layers.data();
  LayerGrads* fc_slots = out.layers.data() + n_conv;
  LayerGrads* head_slots = out.layers.data() + n_conv + n_fc;

  // Final dense layer of the head.
  {
    DenseGradResult g = dense_grad(c.head_in, net.head_stack.back(), dhead);
    add_into(head_slots[net.head_stack.size() - 1], g.param_grads);
    dhead = std::move(g.input_grad);
  }

  if (net.spec.architecture == Architecture::TwoChannel) {
    Tensor d = std::move(dhead);
    for (std::size_t i = n_fc; i-- > 0;) {
      d = fc_step_backward(net.fc_stack[i], c.fc_a[i], Act::Relu, dropout_rate,
                           std::move(d), fc_slots[i]);
    }
    Tensor dstack = trunk_backward(net.conv_stack, c.trunk_a, std::move(d),
                                   conv_slots);
    out.grad_a = Tensor::zeros({kPatchSize, kPatchSize});
    out.grad_b = Tensor::zeros({kPatchSize, kPatchSize});
    const std::size_t plane = kPatchSize * kPatchSize;
    std::copy(dstack.data.begin(), dstack.data.begin() + plane,
              out.grad_a.data.begin());
    std::copy(dstack.data.begin() + plane, dstack.data.end(),
              out.grad_b.data.begin());
    return out;
  }

  // Siamese decision hidden step, then both branch applications; the
  // shared branch collects the sum of left and right contributions.
  Tensor djoined = fc_step_backward(net.head_stack[0], c.head_hidden,
                                    Act::Relu, dropout_rate, std::move(dhead),
                                    head_slots[0]);
  const std::size_t half = djoined.numel() / 2;
  Tensor da = Tensor::zeros({half});
  Tensor db = Tensor::zeros({half});
  std::copy(djoined.data.begin(), djoined.data.begin() + half,
            da.data.begin());
  std::copy(djoined.data.begin() + half, djoined.data.end(), db.data.begin());

  auto branch_backward = [&](const TrunkCache& tc,
                             const std::vector<FcStep>& steps, Tensor d) {
    for (std::size_t i = n_fc; i-- > 0;) {
      const Act act = i + 1 == n_fc ? Act::Sigmoid : Act::Relu;
      d = fc_step_backward(net.fc_stack[i], steps[i], act, dropout_rate,
                           std::move(d), fc_slots[i]);
    }
    return strip_channel(
        trunk_backward(net.conv_stack, tc, std::move(d), conv_slots));
  };
  out.grad_a = branch_backward(c.trunk_a, c.fc_a, std::move(da));
  out.grad_b = branch_backward(c.trunk_b, c.fc_b, std::move(db));
  return out;
}

std::vector<PairSample> augment_symmetric(const std::vector<PairSample>& pairs) {
  std::vector<PairSample> out;
  out.reserve(pairs.size() * 2);
  out = pairs;
  for (const PairSample& p : pairs) {
    out.push_back({p.patch_b, p.patch_a, p.label, p.kind});
  }
  return out;
}

namespace {

void check_train_config(const TrainConfig& cfg,
                        const std::vector<PairSample>* validation) {
  if (!(cfg.learning_rate > 0.0)) {
    throw ConfigError("train: learning rate must be positive");
  }
  if (cfg.batch_size == 0) throw ConfigError("train: batch size must be >= 1");
  if (cfg.epochs == 0) throw ConfigError("train: epochs must be >= 1");
  if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0)) {
    throw ConfigError("train: dropout rate must lie in [0, 1)");
  }
  if (cfg.stop_at_loss < 0.0) {
    throw ConfigError("train: stop_at_loss must be non-negative");
  }
  if (cfg.early_stop_patience > 0 && validation == nullptr) {
    throw ConfigError("train: early stopping needs validation pairs");
  }
}

void check_pair_list(const std::vector<PairSample>& pairs, const char* what) {
  if (pairs.empty()) {
    throw InputError(std::string("train: ") + what + " pair list is empty");
  }
  for (const PairSample& p : pairs) {
    if (!p.patch_a || !p.patch_b) {
      throw InputError(std::string("train: ") + what +
                       " pair has a missing patch");
    }
    if (p.label != 0 && p.label != 1) {
      throw InputError(std::string("train: ") + what + " pair label " +
                       std::to_string(p.label) + " is not 0 or 1");
    }
  }
}

}  // namespace

double mean_pair_loss(const Network& net, const std::vector<PairSample>& pairs) {
  check_pair_list(pairs, "evaluation");
  double sum = 0.0;
  for (const PairSample& p : pairs) {
    const double prob =
        forward_pair(net, *p.patch_a, *p.patch_b, Mode::Infer).p_match;
    sum += binary_cross_entropy(prob, p.label);
  }
  return sum / static_cast<double>(pairs.size());
}

TrainResult train(Network& net, const std::vector<PairSample>& pairs,
                  const TrainConfig& cfg,
                  const std::vector<PairSample>* validation) {
  check_train_config(cfg, validation);
  check_pair_list(pairs, "training");
  if (validation) check_pair_list(*validation, "validation");

  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;

  std::vector<LayerParams*> layers = parameter_layers(net);
  std::vector<LayerGrads> accum = zero_grads_like(net);

  TrainResult res;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t epochs_since_best = 0;
  const std::size_t n = pairs.size();

  std::vector<std::size_t> order(n);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng(Rng::derive(Rng::derive(cfg.seed, 1), e));
    for (std::size_t i = n - 1; i > 0; --i) {
      std::swap(order[i], order[shuffle_rng.index(i + 1)]);
    }

    const std::uint64_t epoch_seed = Rng::derive(Rng::derive(cfg.seed, 2), e);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      for (LayerGrads& g : accum) {
        std::fill(g.weights.data.begin(), g.weights.data.end(), 0.0);
        std::fill(g.bias.data.begin(), g.bias.data.end(), 0.0);
      }
      for (std::size_t k = 0; k < count; ++k) {
        const PairSample& s = pairs[order[start + k]];
        Rng drop_rng(Rng::derive(epoch_seed, start + k));
        PairGradients g = pair_loss_gradients(net, *s.patch_a, *s.patch_b,
                                              s.label, cfg.dropout_rate,
                                              &drop_rng);
        loss_sum += g.loss;
        for (std::size_t i = 0; i < accum.size(); ++i) {
          add_into(accum[i], g.layers[i]);
        }
      }
      // Inverse-time decay: the configured rate is the value of the first
      // step and each later step t runs at rate / t. The optimizer alone
      // does not tame a 0.1-sized initial rate on these nets; this
      // schedule does, and it is the standard stochastic-approximation
      // form of rate decay.
      ++res.optimizer_steps;
      adam.learning_rate =
          cfg.learning_rate / static_cast<double>(res.optimizer_steps);
      const double inv = 1.0 / static_cast<double>(count);
      for (std::size_t i = 0; i < accum.size(); ++i) {
        for (double& v : accum[i].weights.data) v *= inv;
        for (double& v : accum[i].bias.data) v *= inv;
        adam_step(*layers[i], accum[i], adam);
      }
    }

    EpochStats st;
    st.train_loss = loss_sum / static_cast<double>(n);
    if (validation) st.val_loss = mean_pair_loss(net, *validation);
    res.history.push_back(st);

    if (cfg.stop_at_loss > 0.0 && st.train_loss <= cfg.stop_at_loss) break;
    if (cfg.early_stop_patience > 0 && st.val_loss) {
      if (*st.val_loss < best_val) {
        best_val = *st.val_loss;
        epochs_since_best = 0;
      } else if (++epochs_since_best >= cfg.early_stop_patience) {
        break;
      }
    }
  }
  return res;
}

// ---- checkpoints ----

namespace {

constexpr char kMagic[4] = {'S', 'M', 'C', 'P'};
constexpr std::uint32_t kFormatVersion = 1;

void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void append_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  append_u64(out, bits);
}

std::uint64_t fnv1a(const char* data, std::size_t size) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

struct ByteReader {
  const std::string& bytes;
  std::size_t offset = 0;

  void need(std::size_t count, const char* what) const {
    if (offset + count > bytes.size()) {
      throw FormatError("checkpoint truncated at offset " +
                        std::to_string(bytes.size()) + " while reading " +
                        what + " (offset " + std::to_string(offset) + ")");
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= std::uint32_t(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
    }
    offset += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= std::uint64_t(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
    }
    offset += 8;
    return v;
  }
  double f64(const char* what) {
    const std::uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
};

}  // namespace

void save_network(const Network& net, const std::string& path) {
  std::string bytes;
  bytes.append(kMagic, 4);
  append_u32(bytes, kFormatVersion);
  append_u32(bytes, net.spec.architecture == Architecture::TwoChannel ? 0 : 1);
  append_u32(bytes, net.spec.head == Head::Class ? 0 : 1);
  append_u64(bytes, parameter_count(net));
  for (const LayerParams* layer : parameter_layers(net)) {
    for (double v : layer->weights.data) append_f64(bytes, v);
    for (double v : layer->bias.data) append_f64(bytes, v);
  }
  append_u64(bytes, fnv1a(bytes.data(), bytes.size()));
  atomic_write_file(path, bytes);
}

Network load_network(const std::string& path) {
  const std::string bytes = read_file(path);
  ByteReader r{bytes};

  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a checkpoint: bad magic at offset 0 in " + path);
  }
  r.offset = 4;
  const std::uint32_t version = r.u32("format version");
  if (version != kFormatVersion) {
    throw FormatError("unsupported checkpoint format version " +
                      std::to_string(version) + " at offset 4 in " + path);
  }
  const std::uint32_t arch_code = r.u32("architecture code");
  const std::uint32_t head_code = r.u32("head code");
  if (arch_code > 1 || head_code > 1) {
    throw ConfigError("checkpoint declares unknown architecture/head codes " +
                      std::to_string(arch_code) + "/" +
                      std::to_string(head_code) + " in " + path);
  }
  NetworkSpec spec;
  spec.architecture = arch_code == 0 ? Architecture::TwoChannel
                                     : Architecture::Siamese;
  spec.head = head_code == 0 ? Head::Class : Head::Score;

  Network net = build_network(spec, 0);
  const std::uint64_t declared = r.u64("parameter count");
  const std::uint64_t expected = parameter_count(net);
  if (declared != expected) {
    throw ConfigError("checkpoint for " + spec.name() + " declares " +
                      std::to_string(declared) + " parameters, expected " +
                      std::to_string(expected));
  }

  for (LayerParams* layer : parameter_layers(net)) {
    for (double& v : layer->weights.data) v = r.f64("weights");
    for (double& v : layer->bias.data) v = r.f64("bias");
    std::fill(layer->m_weights.data.begin(), layer->m_weights.data.end(), 0.0);
    std::fill(layer->v_weights.data.begin(), layer->v_weights.data.end(), 0.0);
    layer->adam_steps = 0;
  }

  const std::size_t checksum_offset = r.offset;
  const std::uint64_t stored = r.u64("checksum");
  if (r.offset != bytes.size()) {
    throw FormatError("checkpoint has " +
                      std::to_string(bytes.size() - r.offset) +
                      " unexpected trailing bytes at offset " +
                      std::to_string(r.offset) + " in " + path);
  }
  const std::uint64_t computed = fnv1a(bytes.data(), checksum_offset);
  if (stored != computed) {
    throw FormatError("checkpoint checksum mismatch at offset " +
                      std::to_string(checksum_offset) + " in " + path);
  }
  for (const LayerParams* layer : parameter_layers(net)) {
    if (!layer->weights.all_finite() || !layer->bias.all_finite()) {
      throw FormatError("checkpoint contains non-finite parameters in " + path);
    }
  }
  return net;
}

FdResult gradient_check(Network& net, const Tensor& a, const Tensor& b,
                        int label, const NetCheckOptions& options) {
  Tensor pa = a;
  Tensor pb = b;
  const std::uint64_t mask_seed = Rng::derive(options.seed, 97);

  auto masked_rng = [&]() { return Rng(mask_seed); };
  auto loss_fn = [&]() {
    Rng r = masked_rng();
    Rng* rp = options.dropout_rate > 0.0 ? &r : nullptr;
    ForwardCaches* no_cache = nullptr;
    Tensor logits =
        forward_logits(net, pa, pb, options.dropout_rate, rp, no_cache);
    Tensor act = head_activation_from_logits(net, logits);
    if (net.spec.head == Head::Class) {
      Tensor onehot =
          Tensor::from({2}, {label == 0 ? 1.0 : 0.0, label == 1 ? 1.0 : 0.0});
      return categorical_cross_entropy(act, onehot);
    }
    return binary_cross_entropy(act[0], label);
  };

  Rng analytic_rng = masked_rng();
  PairGradients g = pair_loss_gradients(
      net, pa, pb, label, options.dropout_rate,
      options.dropout_rate > 0.0 ? &analytic_rng : nullptr);

  std::vector<LayerParams*> layers = parameter_layers(net);
  std::vector<FdBlock> blocks;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    blocks.push_back({"layer" + std::to_string(i) + ".weights",
                      layers[i]->weights.data.data(),
                      g.layers[i].weights.data.data(),
                      layers[i]->weights.numel()});
    blocks.push_back({"layer" + std::to_string(i) + ".bias",
                      layers[i]->bias.data.data(),
                      g.layers[i].bias.data.data(),
                      layers[i]->bias.numel()});
  }
  if (options.include_inputs) {
    blocks.push_back({"patch_a", pa.data.data(), g.grad_a.data.data(),
                      pa.numel()});
    blocks.push_back({"patch_b", pb.data.data(), g.grad_b.data.data(),
                      pb.numel()});
  }

  FdOptions fd;
  fd.epsilon = options.epsilon;
  fd.max_probes_per_block = options.probes_per_tensor;
  fd.probe_seed = Rng::derive(options.seed, 7);
  return finite_difference_check(loss_fn, std::move(blocks), fd);
}

}  // namespace sonamatch
