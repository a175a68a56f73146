// Acceptance suite: end-to-end checks of the patch-matching pipeline, one
// verdict line per check. Exits nonzero if any check fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "sonamatch/crosscorr.hpp"
#include "sonamatch/errors.hpp"
#include "sonamatch/evalkit.hpp"
#include "sonamatch/layers.hpp"
#include "sonamatch/network.hpp"
#include "sonamatch/pairgen.hpp"
#include "sonamatch/rng.hpp"
#include "sonamatch/synthgen.hpp"

using namespace sonamatch;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void report(int index, const char* title, bool pass, const std::string& detail,
            double elapsed) {
  std::printf("[%s] %d. %s: %s (%.1fs)\n", pass ? "PASS" : "FAIL", index,
              title, detail.c_str(), elapsed);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* format, ...) {
  va_list args;
  va_start(args, format);
  char buf[512];
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

// ---- 1. analytic gradients vs central finite differences ----

void check_gradients() {
  const auto start = Clock::now();
  const char* archs[] = {"two-chan-class", "two-chan-score", "siamese-class",
                         "siamese-score"};
  double worst = 0.0;
  std::string worst_arch = "none";
  for (int i = 0; i < 4; ++i) {
    Network net = build_network(NetworkSpec::parse(archs[i]), 900 + i);
    Rng rng(Rng::derive(42, i));
    Tensor a = Tensor::zeros({96, 96});
    Tensor b = Tensor::zeros({96, 96});
    for (double& v : a.data) v = rng.uniform01();
    for (double& v : b.data) v = rng.uniform01();
    NetCheckOptions options;
    options.epsilon = 1e-3;
    options.probes_per_tensor = 12;
    options.seed = 7 + i;
    const FdResult result = gradient_check(net, a, b, i % 2, options);
    if (result.max_rel_error > worst) {
      worst = result.max_rel_error;
      worst_arch = archs[i];
    }
  }
  const double elapsed = seconds_since(start);
  report(1, "gradient audit, all four architectures",
         worst < 1e-4 && elapsed < 120.0,
         fmt("max relative error %.3g (worst: %s), tolerance 1e-4, budget "
             "120s",
             worst, worst_arch.c_str()),
         elapsed);
}

// ---- 2. two-way softmax loss equals the binary loss ----

void check_loss_identity() {
  const auto start = Clock::now();
  Rng rng(1);
  double max_diff = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double p = rng.uniform01();
    const int y = static_cast<int>(rng.index(2));
    Tensor predicted = Tensor::zeros({2});
    predicted.data[0] = 1.0 - p;
    predicted.data[1] = p;
    Tensor target = Tensor::zeros({2});
    target.data[y] = 1.0;
    const double cce = categorical_cross_entropy(predicted, target);
    const double bce = binary_cross_entropy(p, y);
    max_diff = std::max(max_diff, std::abs(cce - bce));
  }
  report(2, "two-way softmax loss equals binary loss", max_diff < 1e-12,
         fmt("max |difference| %.3g over 100000 random (p, y), tolerance "
             "1e-12",
             max_diff),
         seconds_since(start));
}

// ---- 3. trapezoid AUC vs the pairwise ranking statistic ----

double mann_whitney(const std::vector<double>& scores,
                    const std::vector<int>& labels) {
  double wins = 0.0;
  std::size_t comparisons = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      if (scores[i] > scores[j]) wins += 1.0;
      if (scores[i] == scores[j]) wins += 0.5;
      ++comparisons;
    }
  }
  return wins / static_cast<double>(comparisons);
}

void check_auc_oracle() {
  const auto start = Clock::now();
  Rng rng(2);
  double max_diff = 0.0;
  for (int set = 0; set < 1000; ++set) {
    const std::size_t n = 2 + rng.index(199);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = rng.uniform01();
      // Every other set is quantized so tied scores are exercised.
      if (set % 2 == 1) s = std::floor(s * 8.0) / 8.0;
      scores[i] = s;
      labels[i] = static_cast<int>(rng.index(2));
    }
    labels[0] = 1;  // both classes must be present
    labels[n - 1] = 0;
    const double trapezoid = auc_from_roc(roc_curve(scores, labels));
    max_diff = std::max(max_diff, std::abs(trapezoid - mann_whitney(scores, labels)));
  }

  const std::vector<double> sep = {0.9, 0.9, 0.1, 0.1};
  const std::vector<int> sep_labels = {1, 1, 0, 0};
  const double perfect = auc_from_roc(roc_curve(sep, sep_labels));
  const std::vector<double> flat = {0.5, 0.5, 0.5, 0.5};
  const double constant = auc_from_roc(roc_curve(flat, sep_labels));

  report(3, "AUC equals the pairwise ranking statistic",
         max_diff < 1e-9 && perfect == 1.0 && constant == 0.5,
         fmt("max |difference| %.3g over 1000 score sets (sizes 2-200, with "
             "ties), perfect=%g, constant=%g",
             max_diff, perfect, constant),
         seconds_since(start));
}

// ---- 4. pair generation invariants on a synthetic dataset ----

using WindowKey = std::tuple<std::size_t, std::int64_t, std::int64_t,
                             std::int64_t, std::int64_t>;

WindowKey key_of(std::size_t image, const BoundingBox& w) {
  return {image, w.x, w.y, w.width, w.height};
}

// Class ids of the annotations whose crop window equals each object window
// referenced by the records.
std::vector<int> classes_touched(const Dataset& dataset,
                                 const GeneratedPairs& generated,
                                 std::size_t patch_size) {
  std::map<WindowKey, std::vector<int>> window_classes;
  for (std::size_t img = 0; img < dataset.size(); ++img) {
    const AnnotatedImage& ai = dataset[img];
    for (const Annotation& ann : ai.annotations) {
      const BoundingBox w =
          crop_window(ann.box, patch_size, ai.image.width, ai.image.height);
      window_classes[key_of(img, w)].push_back(ann.class_id);
    }
  }
  std::vector<int> classes;
  auto collect = [&](std::size_t image, const BoundingBox& w) {
    const auto it = window_classes.find(key_of(image, w));
    if (it != window_classes.end()) {
      classes.insert(classes.end(), it->second.begin(), it->second.end());
    }
  };
  for (const PairRecord& r : generated.matches) {
    collect(r.image_a, r.window_a);
    collect(r.image_b, r.window_b);
  }
  for (const PairRecord& r : generated.non_matches) {
    collect(r.image_a, r.window_a);
    if (r.kind == PairKind::ObjectObjectNonMatch) collect(r.image_b, r.window_b);
  }
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  return classes;
}

void check_pair_invariants() {
  const auto start = Clock::now();
  SynthConfig scfg;
  scfg.images = 120;
  scfg.seed = 1000;
  const Dataset dataset = generate_dataset(scfg);

  PairGenConfig pcfg;  // ten matches and five negatives of each kind
  Rng rng(Rng::derive(1000, 40));
  const GeneratedPairs generated = generate_pairs(dataset, pcfg, rng);

  const bool no_failures = generated.summary.background_failures == 0;
  const bool balanced =
      generated.matches.size() == generated.non_matches.size();

  std::size_t background_checked = 0;
  bool background_clear = true;
  for (const PairRecord& r : generated.non_matches) {
    if (r.kind != PairKind::ObjectBackgroundNonMatch) continue;
    ++background_checked;
    for (const Annotation& ann : dataset[r.image_b].annotations) {
      if (iou(r.window_b, ann.box) >= 0.1) background_clear = false;
    }
  }

  ClassSplitConfig split;
  split.train_classes = {0, 1, 2, 3, 4, 5};
  split.test_classes = {6, 7, 8};
  const auto [train_side, test_side] = split_disjoint_classes(dataset, split);
  Rng train_rng(Rng::derive(1000, 41));
  Rng test_rng(Rng::derive(1000, 42));
  const GeneratedPairs train_pairs = generate_pairs(train_side, pcfg, train_rng);
  const GeneratedPairs test_pairs = generate_pairs(test_side, pcfg, test_rng);
  const std::vector<int> train_classes =
      classes_touched(train_side, train_pairs, pcfg.patch_size);
  const std::vector<int> test_classes =
      classes_touched(test_side, test_pairs, pcfg.patch_size);
  std::vector<int> shared;
  std::set_intersection(train_classes.begin(), train_classes.end(),
                        test_classes.begin(), test_classes.end(),
                        std::back_inserter(shared));
  const bool split_ok = shared.empty() && !train_classes.empty() &&
                        !test_classes.empty();

  report(4, "pair generation invariants (120-image synthetic dataset)",
         no_failures && balanced && background_clear && split_ok,
         fmt("matches %zu vs non-matches %zu, background failures %zu, "
             "%zu background crops all under IoU 0.1, class overlap across "
             "split %zu",
             generated.matches.size(), generated.non_matches.size(),
             generated.summary.background_failures, background_checked,
             shared.size()),
         seconds_since(start));
}

// ---- 5. symmetric augmentation doubles and reverses ----

void check_augmentation() {
  const auto start = Clock::now();
  SynthConfig scfg;
  scfg.images = 12;
  scfg.seed = 55;
  const Dataset dataset = generate_dataset(scfg);
  PairGenConfig pcfg;
  pcfg.matches_per_object = 3;
  pcfg.negatives_per_kind = 1;  // a mixed, unbalanced-kind input list
  Rng rng(9);
  const GeneratedPairs generated = generate_pairs(dataset, pcfg, rng);
  std::vector<PairRecord> records = generated.matches;
  records.insert(records.end(), generated.non_matches.begin(),
                 generated.non_matches.end());
  const std::vector<PairSample> input =
      materialize_pairs(dataset, records, pcfg.patch_size);

  const std::vector<PairSample> output = augment_symmetric(input);
  bool ok = output.size() == 2 * input.size();
  for (std::size_t i = 0; ok && i < input.size(); ++i) {
    const PairSample& fwd = output[i];
    const PairSample& rev = output[input.size() + i];
    ok = fwd.patch_a == input[i].patch_a && fwd.patch_b == input[i].patch_b &&
         rev.patch_a == input[i].patch_b && rev.patch_b == input[i].patch_a &&
         rev.label == input[i].label && rev.kind == input[i].kind;
  }
  // Pointer identity already proves reversal; spot-check content anyway.
  for (std::size_t i = 0; ok && i < std::min<std::size_t>(5, input.size());
       ++i) {
    ok = output[input.size() + i].patch_a->data == input[i].patch_b->data;
  }
  report(5, "symmetric augmentation doubles and contains every reversal", ok,
         fmt("%zu pairs -> %zu, every appended pair is the exact reversal",
             input.size(), output.size()),
         seconds_since(start));
}

// ---- 6. overfit sanity on a small separable pair set ----

void check_overfit() {
  const auto start = Clock::now();
  // Two families with opposite contrast polarity: a bright square on a dark
  // field and its inverse. Mixing polarities keeps first-layer gradients
  // from sharing one sign across a batch, which the optimizer's large
  // first steps would otherwise turn into dead filters.
  Rng noise(3);
  auto make_patch = [&](double field, double square) {
    Tensor t = Tensor::full({96, 96}, field);
    for (int row = 30; row < 66; ++row) {
      for (int col = 30; col < 66; ++col) t.at(row, col) = square;
    }
    for (double& v : t.data) {
      v = std::clamp(v + 0.02 * (noise.uniform01() - 0.5), 0.0, 1.0);
    }
    return std::make_shared<const Tensor>(std::move(t));
  };
  std::vector<std::shared_ptr<const Tensor>> a, b;
  for (int i = 0; i < 8; ++i) {
    a.push_back(make_patch(0.1, 0.9));
    b.push_back(make_patch(0.9, 0.1));
  }
  std::vector<PairSample> pairs;
  for (int i = 0; i < 8; ++i) {
    pairs.push_back({a[i], a[(i + 1) % 8], 1, PairKind::ObjectObjectMatch});
    pairs.push_back({b[i], b[(i + 1) % 8], 1, PairKind::ObjectObjectMatch});
    pairs.push_back({a[i], b[i], 0, PairKind::ObjectObjectNonMatch});
    pairs.push_back({b[i], a[(i + 3) % 8], 0, PairKind::ObjectObjectNonMatch});
  }

  Network net = build_network(NetworkSpec::parse("two-chan-class"), 2026);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.batch_size = 32;  // full batch; each optimizer step sees every pair
  cfg.epochs = 300;
  cfg.dropout_rate = 0.0;
  cfg.seed = 5;
  cfg.stop_at_loss = 0.04;
  const TrainResult result = train(net, pairs, cfg);
  const double final_loss =
      result.history.empty() ? 1e9 : result.history.back().train_loss;
  const double elapsed = seconds_since(start);
  report(6, "overfit sanity: 32 separable pairs at rate 0.1",
         final_loss < 0.05 && result.optimizer_steps <= 300 && elapsed < 60.0,
         fmt("training loss %.5f after %zu optimizer steps (target < 0.05 "
             "within 300, budget 60s)",
             final_loss, result.optimizer_steps),
         elapsed);
}

// ---- 7. end-to-end scaled experiment ----

constexpr std::uint64_t kE2eDataSeed = 100;
constexpr std::uint64_t kE2eTrainSeed = 200;
constexpr std::uint64_t kE2eNetSeed = 300;

void check_end_to_end() {
  const auto start = Clock::now();
  SynthConfig scfg;
  scfg.images = 200;  // nine classes, three objects per image
  scfg.seed = kE2eDataSeed;
  const Dataset dataset = generate_dataset(scfg);

  ClassSplitConfig split;
  split.train_classes = {0, 1, 2, 3, 4, 5};
  split.test_classes = {6, 7, 8};
  const auto [train_side, test_side] = split_disjoint_classes(dataset, split);

  PairGenConfig pcfg;
  pcfg.matches_per_object = 4;
  pcfg.negatives_per_kind = 2;
  Rng pair_rng(Rng::derive(kE2eDataSeed, 77));
  const GeneratedPairs train_gen = generate_pairs(train_side, pcfg, pair_rng);
  const GeneratedPairs test_gen = generate_pairs(test_side, pcfg, pair_rng);

  auto materialize = [&](const Dataset& side, const GeneratedPairs& gen) {
    std::vector<PairRecord> records = gen.matches;
    records.insert(records.end(), gen.non_matches.begin(),
                   gen.non_matches.end());
    return materialize_pairs(side, records, pcfg.patch_size);
  };
  std::vector<PairSample> train_samples =
      augment_symmetric(materialize(train_side, train_gen));
  const std::vector<PairSample> test_samples =
      materialize(test_side, test_gen);

  Network net =
      build_network(NetworkSpec::parse("two-chan-class"), kE2eNetSeed);
  TrainConfig tcfg;  // rate 0.1, batch 128, 5 epochs, dropout 0.5
  tcfg.seed = kE2eTrainSeed;
  const TrainResult result = train(net, train_samples, tcfg);

  const std::vector<double> net_scores = score_pairs(
      [&](const Tensor& a, const Tensor& b) {
        return forward_pair(net, a, b).p_match;
      },
      test_samples);
  const EvalReport net_report = evaluate(net_scores, test_samples);

  std::vector<double> cc_scores;
  std::vector<PairSample> cc_scored;
  std::size_t cc_skipped = 0;
  for (const PairSample& s : test_samples) {
    try {
      cc_scores.push_back(cc_matcher(*s.patch_a, *s.patch_b));
      cc_scored.push_back(s);
    } catch (const DegenerateInputError&) {
      ++cc_skipped;
    }
  }
  const EvalReport cc_report = evaluate(cc_scores, cc_scored);
  const double elapsed = seconds_since(start);

  const double gap = net_report.auc - cc_report.auc;
  report(7, "end-to-end: train on six object classes, test on three unseen",
         net_report.auc >= 0.85 && gap >= 0.05 && elapsed <= 600.0,
         fmt("learned matcher AUC %.4f (floor 0.85), correlation baseline "
             "AUC %.4f (%zu degenerate pairs skipped), margin %.4f (floor "
             "0.05), %zu train pairs, %zu optimizer steps, budget 600s",
             net_report.auc, cc_report.auc, cc_skipped, gap,
             train_samples.size(), result.optimizer_steps),
         elapsed);

  // Same seeds, fresh state: the first training epoch must reproduce to
  // the bit, and so must the synthesized corpus.
  const auto det_start = Clock::now();
  const Dataset again = generate_dataset(scfg);
  bool deterministic = again.size() == dataset.size() &&
                       again[0].image.pixels == dataset[0].image.pixels;
  Network net2 =
      build_network(NetworkSpec::parse("two-chan-class"), kE2eNetSeed);
  TrainConfig one_epoch = tcfg;
  one_epoch.epochs = 1;
  const TrainResult replay = train(net2, train_samples, one_epoch);
  deterministic = deterministic && !result.history.empty() &&
                  !replay.history.empty() &&
                  replay.history[0].train_loss == result.history[0].train_loss;
  report(7, "end-to-end: rerun with the same seeds reproduces bit-identically",
         deterministic,
         fmt("regenerated corpus identical, replayed first-epoch loss "
             "%.17g == %.17g",
             replay.history.empty() ? -1.0 : replay.history[0].train_loss,
             result.history.empty() ? -1.0 : result.history[0].train_loss),
         seconds_since(det_start));
}

// ---- 8. checkpoint round-trip ----

void check_checkpoint_roundtrip() {
  const auto start = Clock::now();
  const fs::path dir =
      fs::temp_directory_path() / ("sonamatch-acceptance-" +
                                   std::to_string(::getpid()));
  fs::create_directories(dir);
  const char* archs[] = {"two-chan-class", "two-chan-score", "siamese-class",
                         "siamese-score"};
  bool ok = true;
  for (int i = 0; i < 4; ++i) {
    Network net = build_network(NetworkSpec::parse(archs[i]), 4000 + i);
    Rng rng(Rng::derive(8, i));
    Tensor a = Tensor::zeros({96, 96});
    Tensor b = Tensor::zeros({96, 96});
    for (double& v : a.data) v = rng.uniform01();
    for (double& v : b.data) v = rng.uniform01();
    const double before = forward_pair(net, a, b).p_match;
    const std::string path = (dir / (std::string(archs[i]) + ".ckpt")).string();
    save_network(net, path);
    const Network loaded = load_network(path);
    const double after = forward_pair(loaded, a, b).p_match;
    ok = ok && before == after &&
         parameter_count(net) == parameter_count(loaded);
  }
  fs::remove_all(dir);
  report(8, "checkpoint round-trip is bit-identical, all four architectures",
         ok, "save, load, forward reproduces the pre-save probability exactly",
         seconds_since(start));
}

// ---- 9. decision rule ----

void check_decision_rule() {
  const auto start = Clock::now();
  Rng rng(6);
  std::size_t agreements = 0;
  std::size_t total = 0;
  for (int i = 0; i < 1000000; ++i) {
    const double p = rng.uniform01();
    if (p == 0.5) continue;
    ++total;
    const int by_argmax = p > 1.0 - p ? 1 : 0;
    if (decide(p) == by_argmax) ++agreements;
  }
  const bool tie_is_non_match = decide(0.5) == 0;
  report(9, "hard decision agrees with argmax; exact tie is a non-match",
         agreements == total && tie_is_non_match,
         fmt("%zu/%zu random probabilities agree, decide(0.5)=%d", agreements,
             total, decide(0.5)),
         seconds_since(start));
}

}  // namespace

int main() {
  const auto start = Clock::now();
  check_gradients();
  check_loss_identity();
  check_auc_oracle();
  check_pair_invariants();
  check_augmentation();
  check_overfit();
  check_end_to_end();
  check_checkpoint_roundtrip();
  check_decision_rule();
  std::printf("%s: %d failure(s), %.1fs total\n",
              g_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED",
              g_failures, seconds_since(start));
  return g_failures == 0 ? 0 : 1;
}
