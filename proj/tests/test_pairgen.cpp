#include <doctest.h>

#include <map>
#include <set>

#include "sonamatch/errors.hpp"
#include "sonamatch/pairgen.hpp"
#include "sonamatch/rng.hpp"

using namespace sonamatch;

namespace {

GrayImage ramp_image(std::size_t w, std::size_t h) {
  GrayImage img;
  img.width = w;
  img.height = h;
  img.pixels.resize(w * h);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = static_cast<double>(i % 997) / 997.0;
  }
  return img;
}

AnnotatedImage image_with(std::size_t w, std::size_t h,
                          std::vector<Annotation> anns, const char* name) {
  AnnotatedImage ai;
  ai.name = name;
  ai.image = ramp_image(w, h);
  ai.annotations = std::move(anns);
  return ai;
}

// Two images, two small well-separated objects each, classes 0 and 1 on
// both images. Roomy enough that background sampling never fails.
Dataset two_class_dataset() {
  Dataset data;
  data.push_back(image_with(220, 220,
                            {{{20, 30, 10, 12}, 0}, {{150, 160, 12, 10}, 1}},
                            "img-a"));
  data.push_back(image_with(220, 220,
                            {{{40, 140, 11, 11}, 1}, {{160, 40, 9, 13}, 0}},
                            "img-b"));
  return data;
}

bool same_record(const PairRecord& a, const PairRecord& b) {
  return a.image_a == b.image_a && a.image_b == b.image_b &&
         a.window_a.x == b.window_a.x && a.window_a.y == b.window_a.y &&
         a.window_b.x == b.window_b.x && a.window_b.y == b.window_b.y &&
         a.label == b.label && a.kind == b.kind;
}

}  // namespace

TEST_SUITE("pairgen") {

TEST_CASE("iou matches hand-computed overlaps") {
  const BoundingBox unit{0, 0, 2, 2};
  CHECK(iou(unit, unit) == 1.0);
  CHECK(iou(unit, {5, 5, 2, 2}) == 0.0);
  CHECK(iou(unit, {2, 0, 2, 2}) == 0.0);  // edge-touching, no area
  // Overlap 1x2 = 2, union 4 + 4 - 2 = 6.
  CHECK(iou(unit, {1, 0, 2, 2}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  // Contained box: 2x2 inside 4x4.
  CHECK(iou({0, 0, 4, 4}, {1, 1, 2, 2}) ==
        doctest::Approx(0.25).epsilon(1e-12));
  // Degenerate boxes overlap nothing, not even themselves.
  const BoundingBox flat{3, 3, 0, 5};
  CHECK(iou(flat, flat) == 0.0);
  CHECK(iou(flat, unit) == 0.0);
}

TEST_CASE("crop windows centre on the box and clamp at borders") {
  // Centred: left = 50 + (4-96)/2 = 4, top = 60 + (6-96)/2 = 15.
  const BoundingBox w = crop_window({50, 60, 4, 6}, 96, 200, 200);
  CHECK(w.x == 4);
  CHECK(w.y == 15);
  CHECK(w.width == 96);
  CHECK(w.height == 96);

  // A corner box clamps to the image origin, a far box to the far edge.
  const BoundingBox origin = crop_window({0, 0, 8, 8}, 96, 200, 200);
  CHECK(origin.x == 0);
  CHECK(origin.y == 0);
  const BoundingBox far = crop_window({190, 195, 8, 4}, 96, 200, 200);
  CHECK(far.x == 200 - 96);
  CHECK(far.y == 200 - 96);

  // Window still inside for every box position along a sweep.
  for (std::int64_t x = 0; x <= 190; x += 10) {
    const BoundingBox s = crop_window({x, x, 10, 10}, 96, 200, 200);
    CHECK(s.x >= 0);
    CHECK(s.y >= 0);
    CHECK(s.x + s.width <= 200);
    CHECK(s.y + s.height <= 200);
  }

  CHECK_THROWS_AS(crop_window({0, 0, 5, 5}, 96, 95, 200), InputError);
}

TEST_CASE("crop_object copies the exact window pixels") {
  const GrayImage img = ramp_image(120, 110);
  const BoundingBox box{30, 40, 10, 8};
  const Tensor patch = crop_object(img, box, 96);
  const BoundingBox w = crop_window(box, 96, img.width, img.height);
  REQUIRE(patch.shape == std::vector<std::size_t>{96, 96});
  for (std::size_t r : {std::size_t(0), std::size_t(42), std::size_t(95)}) {
    for (std::size_t c : {std::size_t(0), std::size_t(17), std::size_t(95)}) {
      CHECK(patch.at(r, c) == img.at(std::size_t(w.y) + r, std::size_t(w.x) + c));
    }
  }
}

TEST_CASE("background sampling avoids annotations or reports failure") {
  const AnnotatedImage roomy = image_with(
      220, 220, {{{10, 10, 30, 30}, 0}, {{120, 130, 40, 40}, 1}}, "roomy");
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const BoundingBox w = sample_background_window(
        roomy.image, roomy.annotations, 96, 0.1, 100, rng);
    CHECK(w.width == 96);
    CHECK(w.x >= 0);
    CHECK(w.x + w.width <= 220);
    for (const Annotation& ann : roomy.annotations) {
      CHECK(iou(w, ann.box) < 0.1);
    }
  }

  // An annotation covering the whole image leaves no legal window.
  const AnnotatedImage crowded =
      image_with(96, 96, {{{0, 0, 96, 96}, 0}}, "crowded");
  Rng rng2(9);
  CHECK_THROWS_AS(sample_background_window(crowded.image, crowded.annotations,
                                           96, 0.1, 200, rng2),
                  SamplingError);
}

TEST_CASE("pair generation hits the configured ratios exactly") {
  const Dataset data = two_class_dataset();
  PairGenConfig cfg;
  cfg.matches_per_object = 10;
  cfg.negatives_per_kind = 5;
  Rng rng(31);
  const GeneratedPairs out = generate_pairs(data, cfg, rng);

  CHECK(out.summary.objects == 4);
  CHECK(out.summary.matches == 40);
  CHECK(out.summary.cross_class == 20);
  CHECK(out.summary.background == 20);
  CHECK(out.summary.background_failures == 0);
  CHECK(out.matches.size() == 40);
  CHECK(out.non_matches.size() == 40);  // balanced when nothing failed

  for (const PairRecord& r : out.matches) {
    CHECK(r.label == 1);
    CHECK(r.kind == PairKind::ObjectObjectMatch);
    CHECK(r.window_a.width == 96);
    CHECK(r.window_b.width == 96);
  }
  std::size_t cross = 0, background = 0;
  for (const PairRecord& r : out.non_matches) {
    CHECK(r.label == 0);
    if (r.kind == PairKind::ObjectObjectNonMatch) ++cross;
    if (r.kind == PairKind::ObjectBackgroundNonMatch) {
      ++background;
      // Clutter comes from the anchor's own image and keeps clear of
      // every annotation there.
      CHECK(r.image_a == r.image_b);
      for (const Annotation& ann : data[r.image_b].annotations) {
        CHECK(iou(r.window_b, ann.box) < 0.1);
      }
    }
  }
  CHECK(cross == 20);
  CHECK(background == 20);
}

TEST_CASE("pair generation is deterministic per seed") {
  const Dataset data = two_class_dataset();
  PairGenConfig cfg;
  Rng a(77), b(77), c(78);
  const GeneratedPairs first = generate_pairs(data, cfg, a);
  const GeneratedPairs second = generate_pairs(data, cfg, b);
  const GeneratedPairs third = generate_pairs(data, cfg, c);

  REQUIRE(first.matches.size() == second.matches.size());
  for (std::size_t i = 0; i < first.matches.size(); ++i) {
    CHECK(same_record(first.matches[i], second.matches[i]));
  }
  REQUIRE(first.non_matches.size() == second.non_matches.size());
  for (std::size_t i = 0; i < first.non_matches.size(); ++i) {
    CHECK(same_record(first.non_matches[i], second.non_matches[i]));
  }

  bool any_diff = first.matches.size() != third.matches.size();
  for (std::size_t i = 0; !any_diff && i < first.matches.size(); ++i) {
    any_diff = !same_record(first.matches[i], third.matches[i]);
  }
  CHECK(any_diff);
}

TEST_CASE("degenerate datasets and configs are rejected") {
  PairGenConfig cfg;
  Rng rng(1);

  Dataset empty;
  empty.push_back(image_with(220, 220, {}, "empty"));
  CHECK_THROWS_AS(generate_pairs(empty, cfg, rng), InputError);

  Dataset single;
  single.push_back(image_with(
      220, 220, {{{20, 20, 10, 10}, 4}, {{120, 120, 10, 10}, 4}}, "single"));
  CHECK_THROWS_AS(generate_pairs(single, cfg, rng), ConfigError);

  const Dataset data = two_class_dataset();
  PairGenConfig bad = cfg;
  bad.patch_size = 0;
  CHECK_THROWS_AS(generate_pairs(data, bad, rng), ConfigError);
  bad = cfg;
  bad.background_iou_limit = 0.0;
  CHECK_THROWS_AS(generate_pairs(data, bad, rng), ConfigError);
  bad = cfg;
  bad.attempt_limit = 0;
  CHECK_THROWS_AS(generate_pairs(data, bad, rng), ConfigError);
}

TEST_CASE("materialization shares identical windows and validates records") {
  const Dataset data = two_class_dataset();
  PairGenConfig cfg;
  Rng rng(5);
  const GeneratedPairs out = generate_pairs(data, cfg, rng);

  std::vector<PairRecord> records = out.matches;
  records.insert(records.end(), out.non_matches.begin(),
                 out.non_matches.end());
  const std::vector<PairSample> samples = materialize_pairs(data, records, 96);
  REQUIRE(samples.size() == records.size());

  // Every anchor window repeats across its pairs; the cache must hand
  // out one tensor per distinct window, not one per pair.
  std::set<const Tensor*> distinct;
  for (const PairSample& s : samples) {
    REQUIRE(s.patch_a->shape == std::vector<std::size_t>{96, 96});
    distinct.insert(s.patch_a.get());
    distinct.insert(s.patch_b.get());
  }
  CHECK(distinct.size() < records.size());

  // The first record anchors on the first annotated object; its patch
  // must equal a fresh crop of that object's box.
  const Tensor fresh =
      crop_object(data[0].image, data[0].annotations[0].box, 96);
  CHECK(samples[0].patch_a->data == fresh.data);

  PairRecord broken = out.matches[0];
  broken.image_a = 99;
  CHECK_THROWS_AS(materialize_pairs(data, {broken}, 96), InputError);
  broken = out.matches[0];
  broken.window_a.width = 95;
  CHECK_THROWS_AS(materialize_pairs(data, {broken}, 96), InputError);
  broken = out.matches[0];
  broken.window_a.x = 219 - 40;  // pushes the window past the right edge
  CHECK_THROWS_AS(materialize_pairs(data, {broken}, 96), InputError);
}

TEST_CASE("disjoint class split separates classes completely") {
  Dataset data = two_class_dataset();
  // Add a third class that neither side requests.
  data[0].annotations.push_back({{80, 80, 10, 10}, 2});

  ClassSplitConfig cfg;
  cfg.train_classes = {0};
  cfg.test_classes = {1};
  const auto [train, test] = split_disjoint_classes(data, cfg);
  REQUIRE(train.size() == data.size());
  REQUIRE(test.size() == data.size());

  std::set<int> train_classes, test_classes;
  std::size_t train_objects = 0, test_objects = 0;
  for (const AnnotatedImage& ai : train) {
    for (const Annotation& a : ai.annotations) {
      train_classes.insert(a.class_id);
      ++train_objects;
    }
  }
  for (const AnnotatedImage& ai : test) {
    for (const Annotation& a : ai.annotations) {
      test_classes.insert(a.class_id);
      ++test_objects;
    }
  }
  CHECK(train_classes == std::set<int>{0});
  CHECK(test_classes == std::set<int>{1});
  CHECK(train_objects == 2);
  CHECK(test_objects == 2);  // class 2 vanished from both sides

  ClassSplitConfig overlapping;
  overlapping.train_classes = {0, 1};
  overlapping.test_classes = {1};
  CHECK_THROWS_AS(split_disjoint_classes(data, overlapping), ConfigError);
  ClassSplitConfig hollow;
  hollow.train_classes = {};
  hollow.test_classes = {1};
  CHECK_THROWS_AS(split_disjoint_classes(data, hollow), ConfigError);
}

TEST_CASE("shared split keeps populous classes on both sides") {
  // Class 0: six objects. Class 1: two. Class 2: a singleton.
  Dataset data;
  data.push_back(image_with(220, 220,
                            {{{10, 10, 8, 8}, 0},
                             {{30, 30, 8, 8}, 0},
                             {{50, 50, 8, 8}, 0},
                             {{70, 70, 8, 8}, 1},
                             {{90, 90, 8, 8}, 2}},
                            "one"));
  data.push_back(image_with(220, 220,
                            {{{10, 10, 8, 8}, 0},
                             {{30, 30, 8, 8}, 0},
                             {{50, 50, 8, 8}, 0},
                             {{70, 70, 8, 8}, 1}},
                            "two"));

  SharedSplitConfig cfg;
  cfg.test_fraction = 1.0 / 3.0;
  cfg.seed = 4;
  const auto [train, test] = split_shared_classes(data, cfg);

  std::map<int, std::size_t> train_count, test_count;
  for (const AnnotatedImage& ai : train) {
    for (const Annotation& a : ai.annotations) ++train_count[a.class_id];
  }
  for (const AnnotatedImage& ai : test) {
    for (const Annotation& a : ai.annotations) ++test_count[a.class_id];
  }

  // Six objects at fraction 1/3 -> two to test; two objects -> one each;
  // the singleton stays in train.
  CHECK(train_count[0] == 4);
  CHECK(test_count[0] == 2);
  CHECK(train_count[1] == 1);
  CHECK(test_count[1] == 1);
  CHECK(train_count[2] == 1);
  CHECK(test_count.count(2) == 0);

  SharedSplitConfig bad;
  bad.test_fraction = 1.0;
  CHECK_THROWS_AS(split_shared_classes(data, bad), ConfigError);
}

}  // TEST_SUITE
