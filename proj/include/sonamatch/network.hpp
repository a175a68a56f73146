#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sonamatch/gradcheck.hpp"
#include "sonamatch/layers.hpp"
#include "sonamatch/pairgen.hpp"
#include "sonamatch/tensor.hpp"

namespace sonamatch {

inline constexpr std::size_t kPatchSize = 96;

// Two families of patch matchers. TwoChannel stacks the patches into one
// two-channel image and convolves them jointly; Siamese runs both patches
// through one shared-weight branch and compares the embeddings. Either
// ends in a Class head (two-way softmax) or a Score head (single sigmoid
// unit read directly as the match probability).
enum class Architecture { TwoChannel, Siamese };
enum class Head { Class, Score };

struct NetworkSpec {
  Architecture architecture = Architecture::TwoChannel;
  Head head = Head::Class;

  std::string name() const;
  static NetworkSpec parse(const std::string& name);
  bool operator==(const NetworkSpec&) const = default;
};

struct MatchOutput {
  double p_match = 0.0;
};

struct Network {
  NetworkSpec spec;
  // conv_stack is the full convolutional trunk for TwoChannel, or the one
  // shared branch for Siamese (weight sharing is structural: the branch
  // exists once and is applied to both patches).
  std::vector<LayerParams> conv_stack;
  std::vector<LayerParams> fc_stack;    // hidden dense layers before the head
  std::vector<LayerParams> head_stack;  // decision layers; last one is the output
};

// Fresh network with fan-scaled uniform weights and zero biases, drawn
// deterministically from the seed.
Network build_network(const NetworkSpec& spec, std::uint64_t seed);

std::size_t parameter_count(const Network& net);

// Every parameter layer in the fixed order used for initialization,
// checkpoints and gradient accumulation.
std::vector<const LayerParams*> parameter_layers(const Network& net);
std::vector<LayerParams*> parameter_layers(Network& net);

// Match probability for a pair of patches. Train mode applies dropout
// after every hidden dense layer and needs a random source; infer mode is
// deterministic and ignores it.
MatchOutput forward_pair(const Network& net, const Tensor& a, const Tensor& b,
                         Mode mode = Mode::Infer, double dropout_rate = 0.0,
                         Rng* rng = nullptr);

// Forward pass exposing the head's activation vector: the two-way
// distribution for a Class head, the single sigmoid unit for Score.
struct PairForward {
  MatchOutput output;
  Tensor head_activation;
};
PairForward forward_pair_detail(const Network& net, const Tensor& a,
                                const Tensor& b, Mode mode = Mode::Infer,
                                double dropout_rate = 0.0, Rng* rng = nullptr);

// Embedding of one patch through the shared branch of a Siamese network.
Tensor siamese_branch_features(const Network& net, const Tensor& patch);

// Loss and full gradients for one pair. The loss is cross entropy of the
// head's probability against the label; gradients cover every parameter
// layer (canonical order) and both input patches.
struct PairGradients {
  double loss = 0.0;
  double p_match = 0.0;
  std::vector<LayerGrads> layers;
  Tensor grad_a;
  Tensor grad_b;
};
PairGradients pair_loss_gradients(const Network& net, const Tensor& a,
                                  const Tensor& b, int label,
                                  double dropout_rate = 0.0,
                                  Rng* dropout_rng = nullptr);

// Append the reversed copy of every pair: for each (A, B) the result also
// holds (B, A) with the same label. Patch storage is shared, not copied.
std::vector<PairSample> augment_symmetric(const std::vector<PairSample>& pairs);

struct TrainConfig {
  // Initial rate; optimizer step t runs at learning_rate / t.
  double learning_rate = 0.1;
  std::size_t batch_size = 128;
  std::size_t epochs = 5;
  double dropout_rate = 0.5;
  std::uint64_t seed = 0;
  // Stop once the epoch's mean training loss reaches this value; 0 turns
  // the shortcut off.
  double stop_at_loss = 0.0;
  // Stop after this many epochs without improvement of the validation
  // loss; 0 turns early stopping off (requires validation pairs).
  std::size_t early_stop_patience = 0;
};

struct EpochStats {
  double train_loss = 0.0;
  std::optional<double> val_loss;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::size_t optimizer_steps = 0;
};

// Mini-batch training with adaptive-moment updates under inverse-time
// rate decay. Pairs are reshuffled every epoch; a trailing partial batch
// is still applied. Gradients are averaged over the batch. Deterministic
// for a given seed.
TrainResult train(Network& net, const std::vector<PairSample>& pairs,
                  const TrainConfig& cfg,
                  const std::vector<PairSample>* validation = nullptr);

// Mean infer-mode loss over a pair list.
double mean_pair_loss(const Network& net, const std::vector<PairSample>& pairs);

// Binary checkpoint containing the spec and all parameters, with a
// trailing checksum. Writes are atomic (temp file + rename).
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

// Finite-difference validation of pair_loss_gradients on one pair. With
// probes_per_tensor > 0 each parameter tensor is probed at that many
// stratified positions, which keeps the check tractable for full
// networks; 0 probes exhaustively. Dropout, when enabled, is made
// deterministic by replaying one fixed mask stream.
struct NetCheckOptions {
  double epsilon = 1e-3;
  std::size_t probes_per_tensor = 24;
  std::uint64_t seed = 0;
  bool include_inputs = true;
  double dropout_rate = 0.0;
};
FdResult gradient_check(Network& net, const Tensor& a, const Tensor& b,
                        int label, const NetCheckOptions& options = {});

}  // namespace sonamatch
