#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sonamatch/rng.hpp"
#include "sonamatch/tensor.hpp"

namespace sonamatch {

// Axis-aligned box in pixel coordinates, top-left origin.
struct BoundingBox {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t width = 0;
  std::int64_t height = 0;
};

// Intersection over union. Degenerate (non-positive area) boxes have zero
// overlap with everything.
double iou(const BoundingBox& a, const BoundingBox& b);

// Grayscale raster with intensities in [0, 1], row-major.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  double at(std::size_t row, std::size_t col) const {
    return pixels[row * width + col];
  }
  double& at(std::size_t row, std::size_t col) {
    return pixels[row * width + col];
  }
};

struct Annotation {
  BoundingBox box;
  int class_id = 0;
};

struct AnnotatedImage {
  std::string name;
  GrayImage image;
  std::vector<Annotation> annotations;
};

using Dataset = std::vector<AnnotatedImage>;

enum class PairKind {
  ObjectObjectMatch,
  ObjectObjectNonMatch,
  ObjectBackgroundNonMatch,
};

std::string pair_kind_name(PairKind kind);
PairKind pair_kind_from_name(const std::string& name);

// One training sample: two square patches and whether they show the same
// object class. Patches are shared immutably so symmetric augmentation and
// repeated crops of one object cost pointers, not pixels.
struct PairSample {
  std::shared_ptr<const Tensor> patch_a;
  std::shared_ptr<const Tensor> patch_b;
  int label = 0;
  PairKind kind = PairKind::ObjectObjectMatch;
};

// Provenance of one pair: which images and which crop windows. This is
// what the pair manifest stores; pixels are pulled out on demand.
struct PairRecord {
  std::size_t image_a = 0;
  std::size_t image_b = 0;
  BoundingBox window_a;
  BoundingBox window_b;
  int label = 0;
  PairKind kind = PairKind::ObjectObjectMatch;
};

struct PairGenConfig {
  std::size_t matches_per_object = 10;
  std::size_t negatives_per_kind = 5;
  std::size_t patch_size = 96;
  double background_iou_limit = 0.1;
  std::size_t attempt_limit = 100;
};

struct PairGenSummary {
  std::size_t objects = 0;
  std::size_t matches = 0;
  std::size_t cross_class = 0;
  std::size_t background = 0;
  // Objects whose background sampling ran out of attempts; their
  // background quota is missing from `background`, which is the only way
  // the two lists can end up unbalanced.
  std::size_t background_failures = 0;
};

struct GeneratedPairs {
  std::vector<PairRecord> matches;
  std::vector<PairRecord> non_matches;
  PairGenSummary summary;
};

// The square crop window of side `size` centred on `box`, clamped to stay
// inside an image of the given extent.
BoundingBox crop_window(const BoundingBox& box, std::size_t size,
                        std::size_t image_width, std::size_t image_height);

// Patch of side `size` centred on the annotated box.
Tensor crop_object(const GrayImage& image, const BoundingBox& box,
                   std::size_t size);

// Rejection-sample a window whose IoU with every given box stays below
// the limit; SamplingError once the attempt budget runs out.
BoundingBox sample_background_window(const GrayImage& image,
                                     const std::vector<Annotation>& annotations,
                                     std::size_t size, double iou_limit,
                                     std::size_t attempt_limit, Rng& rng);
Tensor sample_background(const GrayImage& image,
                         const std::vector<Annotation>& annotations,
                         std::size_t size, double iou_limit,
                         std::size_t attempt_limit, Rng& rng);

// For every annotated object: `matches_per_object` same-class pairs (the
// partner may be the object itself), `negatives_per_kind` pairs against a
// uniformly chosen different class, and `negatives_per_kind` pairs against
// background clutter from the object's own image. With the defaults this
// balances matches and non-matches one to one; any shortfall from failed
// background sampling is visible in the summary.
GeneratedPairs generate_pairs(const Dataset& dataset, const PairGenConfig& cfg,
                              Rng& rng);

// Pull pixel patches for records produced by generate_pairs. Identical
// windows share one tensor.
std::vector<PairSample> materialize_pairs(const Dataset& dataset,
                                          const std::vector<PairRecord>& records,
                                          std::size_t patch_size);

// Split along class identity: train keeps only annotations of the listed
// train classes, test only those of the test classes. The lists must not
// overlap. Classes in neither list are dropped from both sides.
struct ClassSplitConfig {
  std::vector<int> train_classes;
  std::vector<int> test_classes;
};
std::pair<Dataset, Dataset> split_disjoint_classes(const Dataset& dataset,
                                                   const ClassSplitConfig& cfg);

// Split at object level with every class present on both sides where its
// population allows: a class with n >= 2 objects sends
// max(1, min(n - 1, round(n * fraction))) of them to test; singletons
// stay in train.
struct SharedSplitConfig {
  double test_fraction = 1.0 / 3.0;
  std::uint64_t seed = 0;
};
std::pair<Dataset, Dataset> split_shared_classes(const Dataset& dataset,
                                                 const SharedSplitConfig& cfg);

}  // namespace sonamatch
