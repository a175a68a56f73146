#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "sonamatch/config.hpp"
#include "sonamatch/crosscorr.hpp"
#include "sonamatch/dataset_io.hpp"
#include "sonamatch/errors.hpp"
#include "sonamatch/evalkit.hpp"
#include "sonamatch/gradcheck.hpp"
#include "sonamatch/network.hpp"
#include "sonamatch/pairgen.hpp"
#include "sonamatch/rng.hpp"
#include "sonamatch/synthgen.hpp"

namespace fs = std::filesystem;
using namespace sonamatch;

namespace {

// Flags shared by every subcommand.
struct CommonFlags {
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path,
                  "Configuration file (section.key = value lines)");
  cmd->add_option("--seed", flags.seed, "Global random seed");
}

ConfigResolver make_resolver(const CommonFlags& flags) {
  if (flags.config_path) {
    return ConfigResolver(load_config_file(*flags.config_path));
  }
  return ConfigResolver(ConfigFile{});
}

std::uint64_t resolve_seed(ConfigResolver& resolver, const CommonFlags& flags) {
  return resolver.resolve_u64("run.seed", flags.seed, 0);
}

void write_effective_config(const std::string& out_dir,
                            const ConfigResolver& resolver) {
  atomic_write_file((fs::path(out_dir) / "effective_config.txt").string(),
                    resolver.render_effective());
}

std::string format_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<int> parse_class_list(const std::string& key,
                                  const std::string& text) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string tok =
        text.substr(pos, comma == std::string::npos ? std::string::npos
                                                    : comma - pos);
    pos = comma == std::string::npos ? text.size() + 1 : comma + 1;
    if (tok.empty()) {
      throw FormatError("setting " + key + ": empty class id in \"" + text +
                        "\"");
    }
    char* end = nullptr;
    const long v = std::strtol(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0') {
      throw FormatError("setting " + key + ": bad class id \"" + tok + "\"");
    }
    out.push_back(static_cast<int>(v));
  }
  return out;
}

// ---- synth ----

struct SynthFlags {
  CommonFlags common;
  std::string out_dir;
  std::optional<std::size_t> images;
};

int cmd_synth(const SynthFlags& flags) {
  ConfigResolver resolver = make_resolver(flags.common);
  const std::uint64_t seed = resolve_seed(resolver, flags.common);

  SynthConfig cfg;
  cfg.num_classes = resolver.resolve_int("synth.classes", std::nullopt, 9);
  cfg.images = resolver.resolve_size("synth.images", flags.images, 200);
  cfg.objects_per_image = resolver.resolve_size("synth.objects", std::nullopt, 3);
  cfg.width = resolver.resolve_size("synth.width", std::nullopt, 192);
  cfg.height = resolver.resolve_size("synth.height", std::nullopt, 192);
  cfg.speckle_strength =
      resolver.resolve_double("synth.speckle", std::nullopt, 0.25);
  cfg.gradient_strength =
      resolver.resolve_double("synth.gradient", std::nullopt, 0.25);
  cfg.rotation_jitter =
      resolver.resolve_double("synth.rotation", std::nullopt, 1.0);
  cfg.scale_min = resolver.resolve_double("synth.scale-min", std::nullopt, 11.0);
  cfg.scale_max = resolver.resolve_double("synth.scale-max", std::nullopt, 16.0);
  cfg.seed = seed;
  resolver.reject_unused({"run", "synth"});

  const Dataset dataset = generate_dataset(cfg);
  save_dataset(flags.out_dir, dataset);
  write_effective_config(flags.out_dir, resolver);

  std::size_t objects = 0;
  for (const AnnotatedImage& ai : dataset) objects += ai.annotations.size();
  std::printf("synth: images=%zu objects=%zu classes=%d out=%s\n",
              dataset.size(), objects, cfg.num_classes, flags.out_dir.c_str());
  return 0;
}

// ---- genpairs ----

struct GenPairsFlags {
  CommonFlags common;
  std::string dataset_dir;
  std::string out_dir;
  std::optional<std::string> split;
};

PairManifest to_manifest(const GeneratedPairs& generated,
                         const Dataset& dataset, std::size_t patch_size) {
  PairManifest m;
  m.patch_size = patch_size;
  auto push = [&](const PairRecord& r) {
    m.pairs.push_back({dataset[r.image_a].name, dataset[r.image_b].name,
                       r.window_a.x, r.window_a.y, r.window_b.x, r.window_b.y,
                       r.label, r.kind});
  };
  for (const PairRecord& r : generated.matches) push(r);
  for (const PairRecord& r : generated.non_matches) push(r);
  return m;
}

int cmd_genpairs(const GenPairsFlags& flags) {
  ConfigResolver resolver = make_resolver(flags.common);
  const std::uint64_t seed = resolve_seed(resolver, flags.common);

  PairGenConfig cfg;
  cfg.matches_per_object =
      resolver.resolve_size("pairs.matches-per-object", std::nullopt, 10);
  cfg.negatives_per_kind =
      resolver.resolve_size("pairs.negatives-per-kind", std::nullopt, 5);
  cfg.patch_size = resolver.resolve_size("pairs.patch-size", std::nullopt, 96);
  cfg.background_iou_limit =
      resolver.resolve_double("pairs.background-iou", std::nullopt, 0.1);
  cfg.attempt_limit = resolver.resolve_size("pairs.attempts", std::nullopt, 100);
  const std::string split =
      resolver.resolve_string("pairs.split", flags.split, "disjoint");

  const Dataset dataset = load_dataset(flags.dataset_dir);

  auto emit = [&](const char* tag, const Dataset& side, std::uint64_t stream,
                  const std::string& file) {
    Rng rng(Rng::derive(seed, stream));
    const GeneratedPairs generated = generate_pairs(side, cfg, rng);
    const std::string path = (fs::path(flags.out_dir) / file).string();
    write_pair_manifest(path, to_manifest(generated, side, cfg.patch_size));
    std::printf(
        "genpairs[%s]: objects=%zu matches=%zu non_matches=%zu "
        "background_failures=%zu out=%s\n",
        tag, generated.summary.objects, generated.matches.size(),
        generated.non_matches.size(), generated.summary.background_failures,
        path.c_str());
  };

  if (split == "none") {
    resolver.reject_unused({"run", "pairs"});
    emit("all", dataset, 40, "pairs.txt");
  } else if (split == "disjoint") {
    ClassSplitConfig split_cfg;
    split_cfg.train_classes = parse_class_list(
        "pairs.train-classes", resolver.resolve_string("pairs.train-classes",
                                                       std::nullopt,
                                                       "0,1,2,3,4,5"));
    split_cfg.test_classes = parse_class_list(
        "pairs.test-classes",
        resolver.resolve_string("pairs.test-classes", std::nullopt, "6,7,8"));
    resolver.reject_unused({"run", "pairs"});
    const auto [train, test] = split_disjoint_classes(dataset, split_cfg);
    emit("train", train, 40, "train_pairs.txt");
    emit("test", test, 41, "test_pairs.txt");
  } else if (split == "shared") {
    SharedSplitConfig split_cfg;
    split_cfg.test_fraction =
        resolver.resolve_double("pairs.test-fraction", std::nullopt, 1.0 / 3.0);
    split_cfg.seed = Rng::derive(seed, 5);
    resolver.reject_unused({"run", "pairs"});
    const auto [train, test] = split_shared_classes(dataset, split_cfg);
    emit("train", train, 40, "train_pairs.txt");
    emit("test", test, 41, "test_pairs.txt");
  } else {
    throw ConfigError("setting pairs.split: expected none, disjoint, or "
                      "shared, got '" +
                      split + "'");
  }
  write_effective_config(flags.out_dir, resolver);
  return 0;
}

// ---- train ----

struct TrainFlags {
  CommonFlags common;
  std::string dataset_dir;
  std::string pairs_path;
  std::string checkpoint_path;
  std::optional<std::string> out_dir;
  std::optional<std::string> arch;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
};

int cmd_train(const TrainFlags& flags) {
  ConfigResolver resolver = make_resolver(flags.common);
  const std::uint64_t seed = resolve_seed(resolver, flags.common);

  const std::string arch_name =
      resolver.resolve_string("train.arch", flags.arch, "two-chan-class");
  TrainConfig cfg;
  cfg.epochs = resolver.resolve_size("train.epochs", flags.epochs, 5);
  cfg.batch_size =
      resolver.resolve_size("train.batch-size", flags.batch_size, 128);
  cfg.learning_rate =
      resolver.resolve_double("train.lr", flags.learning_rate, 0.1);
  cfg.dropout_rate = resolver.resolve_double("train.dropout", std::nullopt, 0.5);
  cfg.stop_at_loss =
      resolver.resolve_double("train.stop-loss", std::nullopt, 0.0);
  cfg.seed = seed;
  const bool augment =
      resolver.resolve_int("train.augment", std::nullopt, 1) != 0;
  resolver.reject_unused({"run", "train"});

  const Dataset dataset = load_dataset(flags.dataset_dir);
  const PairManifest manifest = read_pair_manifest(flags.pairs_path);
  std::vector<PairSample> samples = manifest_to_samples(manifest, dataset);
  if (augment) samples = augment_symmetric(samples);

  Network net = build_network(NetworkSpec::parse(arch_name),
                              Rng::derive(seed, 1));
  const TrainResult result = train(net, samples, cfg);
  save_network(net, flags.checkpoint_path);

  const std::string out_dir =
      flags.out_dir.value_or(fs::path(flags.checkpoint_path)
                                 .parent_path()
                                 .string());
  std::string history = "epoch train_loss\n";
  for (std::size_t e = 0; e < result.history.size(); ++e) {
    history += std::to_string(e + 1) + " " +
               format_g(result.history[e].train_loss) + "\n";
  }
  atomic_write_file((fs::path(out_dir) / "loss_history.txt").string(), history);
  write_effective_config(out_dir, resolver);

  const double final_loss =
      result.history.empty() ? 0.0 : result.history.back().train_loss;
  std::printf("train: arch=%s pairs=%zu steps=%zu final_loss=%.6f "
              "checkpoint=%s\n",
              arch_name.c_str(), samples.size(), result.optimizer_steps,
              final_loss, flags.checkpoint_path.c_str());
  return 0;
}

// ---- eval ----

struct EvalFlags {
  CommonFlags common;
  std::string dataset_dir;
  std::string pairs_path;
  std::optional<std::string> checkpoint_path;
  std::string out_dir;
  std::optional<std::string> matcher;
};

int cmd_eval(const EvalFlags& flags) {
  ConfigResolver resolver = make_resolver(flags.common);
  resolve_seed(resolver, flags.common);

  const std::string matcher =
      resolver.resolve_string("eval.matcher", flags.matcher, "net");
  resolver.reject_unused({"run", "eval"});
  if (matcher != "net" && matcher != "cc") {
    throw ConfigError("setting eval.matcher: expected net or cc, got '" +
                      matcher + "'");
  }

  const Dataset dataset = load_dataset(flags.dataset_dir);
  const PairManifest manifest = read_pair_manifest(flags.pairs_path);
  const std::vector<PairSample> all_samples =
      manifest_to_samples(manifest, dataset);

  std::vector<double> scores;
  std::vector<PairSample> scored;
  std::size_t skipped = 0;
  std::string matcher_label = matcher;
  if (matcher == "net") {
    if (!flags.checkpoint_path) {
      throw ConfigError("eval: --checkpoint is required with the net matcher");
    }
    Network net = load_network(*flags.checkpoint_path);
    matcher_label = "net:" + net.spec.name();
    scores = score_pairs(
        [&](const Tensor& a, const Tensor& b) {
          return forward_pair(net, a, b).p_match;
        },
        all_samples);
    scored = all_samples;
  } else {
    // The closed-form matcher rejects flat patches; skip and count them so
    // the report stays honest about its denominator.
    for (const PairSample& s : all_samples) {
      try {
        const double p = cc_matcher(*s.patch_a, *s.patch_b);
        scores.push_back(p);
        scored.push_back(s);
      } catch (const DegenerateInputError&) {
        ++skipped;
      }
    }
    if (scored.empty()) {
      throw InputError("eval: every pair was degenerate for the cc matcher");
    }
  }

  const EvalReport report = evaluate(scores, scored);

  std::string text;
  text += "matcher " + matcher_label + "\n";
  text += "pairs " + std::to_string(report.pairs) + "\n";
  text += "skipped " + std::to_string(skipped) + "\n";
  text += "correct " + std::to_string(report.correct) + "\n";
  text += "accuracy " + format_g(report.accuracy) + "\n";
  text += "auc " + format_g(report.auc) + "\n";
  for (const KindAccuracy& k : report.by_kind) {
    text += "accuracy." + pair_kind_name(k.kind) + " " +
            format_g(k.accuracy) + " (" + std::to_string(k.correct) + "/" +
            std::to_string(k.total) + ")\n";
  }
  atomic_write_file((fs::path(flags.out_dir) / "report.txt").string(), text);
  export_roc((fs::path(flags.out_dir) / "roc.txt").string(), report.roc);
  write_effective_config(flags.out_dir, resolver);

  std::printf("eval: matcher=%s pairs=%zu skipped=%zu accuracy=%.4f "
              "auc=%.4f out=%s\n",
              matcher_label.c_str(), report.pairs, skipped, report.accuracy,
              report.auc, flags.out_dir.c_str());
  return 0;
}

// ---- gradcheck ----

struct GradCheckFlags {
  CommonFlags common;
  std::optional<std::string> arch;
  std::optional<std::string> out_dir;
};

int cmd_gradcheck(const GradCheckFlags& flags) {
  ConfigResolver resolver = make_resolver(flags.common);
  const std::uint64_t seed = resolve_seed(resolver, flags.common);

  NetCheckOptions options;
  options.epsilon =
      resolver.resolve_double("gradcheck.epsilon", std::nullopt, 1e-3);
  options.probes_per_tensor =
      resolver.resolve_size("gradcheck.probes", std::nullopt, 8);
  options.seed = seed;
  const double tolerance =
      resolver.resolve_double("gradcheck.tolerance", std::nullopt, 1e-4);
  resolver.reject_unused({"run", "gradcheck"});

  std::vector<std::string> archs;
  if (flags.arch) {
    archs.push_back(*flags.arch);
  } else {
    archs = {"two-chan-class", "two-chan-score", "siamese-class",
             "siamese-score"};
  }

  Rng patch_rng(Rng::derive(seed, 3));
  Tensor a = Tensor::zeros({96, 96});
  Tensor b = Tensor::zeros({96, 96});
  for (double& v : a.data) v = patch_rng.uniform01();
  for (double& v : b.data) v = patch_rng.uniform01();

  std::string text = "arch label max_rel_error probes\n";
  double worst = 0.0;
  for (const std::string& name : archs) {
    for (int label : {1, 0}) {
      Network net = build_network(NetworkSpec::parse(name),
                                  Rng::derive(seed, 17));
      const FdResult result = gradient_check(net, a, b, label, options);
      worst = std::max(worst, result.max_rel_error);
      text += name + " " + std::to_string(label) + " " +
              format_g(result.max_rel_error) + " " +
              std::to_string(result.probes) + "\n";
      std::printf("gradcheck: arch=%s label=%d max_rel_error=%.3g probes=%zu\n",
                  name.c_str(), label, result.max_rel_error, result.probes);
    }
  }
  if (flags.out_dir) {
    atomic_write_file((fs::path(*flags.out_dir) / "gradcheck.txt").string(),
                      text);
    write_effective_config(*flags.out_dir, resolver);
  }
  if (worst >= tolerance) {
    throw InputError("gradient check failed: max relative error " +
                     format_g(worst) + " is not below " + format_g(tolerance));
  }
  return 0;
}

int dispatch(int argc, char** argv) {
  CLI::App app{
      "Sonar patch matching pipeline: synthesize data, build pair sets, "
      "train and evaluate patch-matching networks."};
  app.require_subcommand(1);

  SynthFlags synth;
  CLI::App* synth_cmd =
      app.add_subcommand("synth", "Generate a synthetic annotated dataset");
  add_common(synth_cmd, synth.common);
  synth_cmd->add_option("--out", synth.out_dir, "Output dataset directory")
      ->required();
  synth_cmd->add_option("--images", synth.images, "Number of images");

  GenPairsFlags genpairs;
  CLI::App* genpairs_cmd = app.add_subcommand(
      "genpairs", "Generate matching/non-matching pair manifests");
  add_common(genpairs_cmd, genpairs.common);
  genpairs_cmd
      ->add_option("--dataset", genpairs.dataset_dir, "Dataset directory")
      ->required();
  genpairs_cmd->add_option("--out", genpairs.out_dir, "Output directory")
      ->required();
  genpairs_cmd->add_option("--split", genpairs.split,
                           "Class split: none, disjoint, or shared");

  TrainFlags train;
  CLI::App* train_cmd =
      app.add_subcommand("train", "Train a patch-matching network");
  add_common(train_cmd, train.common);
  train_cmd->add_option("--dataset", train.dataset_dir, "Dataset directory")
      ->required();
  train_cmd->add_option("--pairs", train.pairs_path, "Pair manifest")
      ->required();
  train_cmd
      ->add_option("--checkpoint", train.checkpoint_path,
                   "Where to write the trained checkpoint")
      ->required();
  train_cmd->add_option("--out", train.out_dir,
                        "Artifact directory (default: checkpoint's)");
  train_cmd->add_option("--arch", train.arch,
                        "two-chan-class|two-chan-score|siamese-class|"
                        "siamese-score");
  train_cmd->add_option("--epochs", train.epochs, "Training epochs");
  train_cmd->add_option("--batch-size", train.batch_size, "Mini-batch size");
  train_cmd->add_option("--lr", train.learning_rate, "Initial learning rate");

  EvalFlags eval;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Evaluate a matcher on a pair manifest");
  add_common(eval_cmd, eval.common);
  eval_cmd->add_option("--dataset", eval.dataset_dir, "Dataset directory")
      ->required();
  eval_cmd->add_option("--pairs", eval.pairs_path, "Pair manifest")
      ->required();
  eval_cmd->add_option("--checkpoint", eval.checkpoint_path,
                       "Trained checkpoint (net matcher)");
  eval_cmd->add_option("--out", eval.out_dir, "Report directory")->required();
  eval_cmd->add_option("--matcher", eval.matcher,
                       "net (checkpoint) or cc (correlation baseline)");

  GradCheckFlags gradcheck;
  CLI::App* gradcheck_cmd = app.add_subcommand(
      "gradcheck", "Finite-difference audit of the training gradients");
  add_common(gradcheck_cmd, gradcheck.common);
  gradcheck_cmd->add_option("--arch", gradcheck.arch,
                            "Check one architecture (default: all four)");
  gradcheck_cmd->add_option("--out", gradcheck.out_dir,
                            "Optional report directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  if (synth_cmd->parsed()) return cmd_synth(synth);
  if (genpairs_cmd->parsed()) return cmd_genpairs(genpairs);
  if (train_cmd->parsed()) return cmd_train(train);
  if (eval_cmd->parsed()) return cmd_eval(eval);
  if (gradcheck_cmd->parsed()) return cmd_gradcheck(gradcheck);
  std::cerr << "error: usage: no subcommand\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const IoError& e) {
    std::cerr << "error: io: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "error: format: " << e.what() << "\n";
    return 3;
  } catch (const SamplingError& e) {
    std::cerr << "error: sampling: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: input: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 4;
  }
}
