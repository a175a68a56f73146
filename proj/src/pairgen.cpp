#include "sonamatch/pairgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "sonamatch/errors.hpp"

namespace sonamatch {

double iou(const BoundingBox& a, const BoundingBox& b) {
  if (a.width <= 0 || a.height <= 0 || b.width <= 0 || b.height <= 0) {
    return 0.0;
  }
  const std::int64_t ix = std::max(a.x, b.x);
  const std::int64_t iy = std::max(a.y, b.y);
  const std::int64_t ix2 = std::min(a.x + a.width, b.x + b.width);
  const std::int64_t iy2 = std::min(a.y + a.height, b.y + b.height);
  if (ix2 <= ix || iy2 <= iy) return 0.0;
  const double inter =
      static_cast<double>(ix2 - ix) * static_cast<double>(iy2 - iy);
  const double total = static_cast<double>(a.width) * a.height +
                       static_cast<double>(b.width) * b.height - inter;
  return inter / total;
}

std::string pair_kind_name(PairKind kind) {
  switch (kind) {
    case PairKind::ObjectObjectMatch: return "obj_obj_match";
    case PairKind::ObjectObjectNonMatch: return "obj_obj_nonmatch";
    case PairKind::ObjectBackgroundNonMatch: return "obj_bg_nonmatch";
  }
  throw InputError("unknown pair kind value");
}

PairKind pair_kind_from_name(const std::string& name) {
  if (name == "obj_obj_match") return PairKind::ObjectObjectMatch;
  if (name == "obj_obj_nonmatch") return PairKind::ObjectObjectNonMatch;
  if (name == "obj_bg_nonmatch") return PairKind::ObjectBackgroundNonMatch;
  throw InputError("unknown pair kind \"" + name + "\"");
}

BoundingBox crop_window(const BoundingBox& box, std::size_t size,
                        std::size_t image_width, std::size_t image_height) {
  if (image_width < size || image_height < size) {
    throw InputError("crop_window: image " + std::to_string(image_width) +
                     "x" + std::to_string(image_height) +
                     " is smaller than the " + std::to_string(size) +
                     " pixel window");
  }
  // Centre the window on the box centre (rounding down), then clamp.
  std::int64_t left =
      box.x + (box.width - static_cast<std::int64_t>(size)) / 2;
  std::int64_t top =
      box.y + (box.height - static_cast<std::int64_t>(size)) / 2;
  left = std::clamp<std::int64_t>(
      left, 0, static_cast<std::int64_t>(image_width - size));
  top = std::clamp<std::int64_t>(
      top, 0, static_cast<std::int64_t>(image_height - size));
  return {left, top, static_cast<std::int64_t>(size),
          static_cast<std::int64_t>(size)};
}

namespace {

Tensor extract_window(const GrayImage& image, const BoundingBox& window) {
  Tensor patch =
      Tensor::zeros({std::size_t(window.height), std::size_t(window.width)});
  for (std::int64_t r = 0; r < window.height; ++r) {
    const double* src = image.pixels.data() +
                        std::size_t(window.y + r) * image.width + window.x;
    std::copy(src, src + window.width,
              patch.data.begin() + std::size_t(r) * window.width);
  }
  return patch;
}

}  // namespace

Tensor crop_object(const GrayImage& image, const BoundingBox& box,
                   std::size_t size) {
  return extract_window(image, crop_window(box, size, image.width, image.height));
}

BoundingBox sample_background_window(const GrayImage& image,
                                     const std::vector<Annotation>& annotations,
                                     std::size_t size, double iou_limit,
                                     std::size_t attempt_limit, Rng& rng) {
  if (image.width < size || image.height < size) {
    throw InputError("sample_background_window: image " +
                     std::to_string(image.width) + "x" +
                     std::to_string(image.height) +
                     " is smaller than the window");
  }
  const std::size_t max_x = image.width - size;
  const std::size_t max_y = image.height - size;
  for (std::size_t attempt = 0; attempt < attempt_limit; ++attempt) {
    BoundingBox cand{static_cast<std::int64_t>(rng.index(max_x + 1)),
                     static_cast<std::int64_t>(rng.index(max_y + 1)),
                     static_cast<std::int64_t>(size),
                     static_cast<std::int64_t>(size)};
    bool clear = true;
    for (const Annotation& ann : annotations) {
      if (iou(cand, ann.box) >= iou_limit) {
        clear = false;
        break;
      }
    }
    if (clear) return cand;
  }
  throw SamplingError("no background window with overlap below " +
                      std::to_string(iou_limit) + " found in " +
                      std::to_string(attempt_limit) + " attempts");
}

Tensor sample_background(const GrayImage& image,
                         const std::vector<Annotation>& annotations,
                         std::size_t size, double iou_limit,
                         std::size_t attempt_limit, Rng& rng) {
  return extract_window(image,
                        sample_background_window(image, annotations, size,
                                                 iou_limit, attempt_limit, rng));
}

namespace {

struct ObjectRef {
  std::size_t image = 0;
  std::size_t annotation = 0;
  int class_id = 0;
};

void check_pairgen_config(const PairGenConfig& cfg) {
  if (cfg.patch_size == 0) {
    throw ConfigError("generate_pairs: patch size must be positive");
  }
  if (!(cfg.background_iou_limit > 0.0 && cfg.background_iou_limit <= 1.0)) {
    throw ConfigError("generate_pairs: background IoU limit must lie in (0, 1]");
  }
  if (cfg.attempt_limit == 0) {
    throw ConfigError("generate_pairs: attempt limit must be positive");
  }
}

}  // namespace

GeneratedPairs generate_pairs(const Dataset& dataset, const PairGenConfig& cfg,
                              Rng& rng) {
  check_pairgen_config(cfg);

  std::vector<ObjectRef> objects;
  std::map<int, std::vector<std::size_t>> by_class;  // class -> object indices
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t j = 0; j < dataset[i].annotations.size(); ++j) {
      by_class[dataset[i].annotations[j].class_id].push_back(objects.size());
      objects.push_back({i, j, dataset[i].annotations[j].class_id});
    }
  }
  if (objects.empty()) {
    throw InputError("generate_pairs: dataset has no annotated objects");
  }
  if (by_class.size() < 2) {
    throw ConfigError("generate_pairs: need at least 2 object classes for "
                      "cross-class pairs, found " +
                      std::to_string(by_class.size()));
  }
  std::vector<int> class_ids;
  for (const auto& [cid, members] : by_class) class_ids.push_back(cid);

  GeneratedPairs out;
  out.summary.objects = objects.size();

  auto window_of = [&](const ObjectRef& o) {
    const AnnotatedImage& ai = dataset[o.image];
    return crop_window(ai.annotations[o.annotation].box, cfg.patch_size,
                       ai.image.width, ai.image.height);
  };

  for (const ObjectRef& anchor : objects) {
    const BoundingBox anchor_window = window_of(anchor);

    // Same-class partners; the anchor itself is a legal draw.
    const std::vector<std::size_t>& same = by_class[anchor.class_id];
    for (std::size_t k = 0; k < cfg.matches_per_object; ++k) {
      const ObjectRef& partner = objects[same[rng.index(same.size())]];
      out.matches.push_back({anchor.image, partner.image, anchor_window,
                             window_of(partner), 1,
                             PairKind::ObjectObjectMatch});
      ++out.summary.matches;
    }

    // Partners from one uniformly drawn other class.
    for (std::size_t k = 0; k < cfg.negatives_per_kind; ++k) {
      int other_class = anchor.class_id;
      while (other_class == anchor.class_id) {
        other_class = class_ids[rng.index(class_ids.size())];
      }
      const std::vector<std::size_t>& members = by_class[other_class];
      const ObjectRef& partner = objects[members[rng.index(members.size())]];
      out.non_matches.push_back({anchor.image, partner.image, anchor_window,
                                 window_of(partner), 0,
                                 PairKind::ObjectObjectNonMatch});
      ++out.summary.cross_class;
    }

    // Clutter from the anchor's own image. If the image is too crowded to
    // yield a clear window, the whole quota for this object is dropped
    // and reported, rather than silently retrying forever.
    const AnnotatedImage& ai = dataset[anchor.image];
    try {
      for (std::size_t k = 0; k < cfg.negatives_per_kind; ++k) {
        const BoundingBox bg = sample_background_window(
            ai.image, ai.annotations, cfg.patch_size, cfg.background_iou_limit,
            cfg.attempt_limit, rng);
        out.non_matches.push_back({anchor.image, anchor.image, anchor_window,
                                   bg, 0, PairKind::ObjectBackgroundNonMatch});
        ++out.summary.background;
      }
    } catch (const SamplingError&) {
      ++out.summary.background_failures;
    }
  }
  return out;
}

std::vector<PairSample> materialize_pairs(const Dataset& dataset,
                                          const std::vector<PairRecord>& records,
                                          std::size_t patch_size) {
  std::map<std::pair<std::size_t, std::pair<std::int64_t, std::int64_t>>,
           std::shared_ptr<const Tensor>>
      cache;
  auto patch_at = [&](std::size_t image, const BoundingBox& w) {
    if (image >= dataset.size()) {
      throw InputError("materialize_pairs: record names image index " +
                       std::to_string(image) + " outside the dataset");
    }
    const auto key = std::make_pair(image, std::make_pair(w.x, w.y));
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    if (std::size_t(w.width) != patch_size ||
        std::size_t(w.height) != patch_size) {
      throw InputError("materialize_pairs: window is not the configured " +
                       std::to_string(patch_size) + " pixel square");
    }
    const GrayImage& img = dataset[image].image;
    if (w.x < 0 || w.y < 0 || std::size_t(w.x) + patch_size > img.width ||
        std::size_t(w.y) + patch_size > img.height) {
      throw InputError("materialize_pairs: window leaves its image");
    }
    auto shared = std::make_shared<const Tensor>(extract_window(img, w));
    cache.emplace(key, shared);
    return shared;
  };

  std::vector<PairSample> samples;
  samples.reserve(records.size());
  for (const PairRecord& r : records) {
    samples.push_back({patch_at(r.image_a, r.window_a),
                       patch_at(r.image_b, r.window_b), r.label, r.kind});
  }
  return samples;
}

namespace {

Dataset filter_annotations(const Dataset& dataset,
                           const std::set<int>& keep_classes) {
  Dataset out;
  out.reserve(dataset.size());
  for (const AnnotatedImage& ai : dataset) {
    AnnotatedImage copy;
    copy.name = ai.name;
    copy.image = ai.image;
    for (const Annotation& ann : ai.annotations) {
      if (keep_classes.count(ann.class_id)) copy.annotations.push_back(ann);
    }
    out.push_back(std::move(copy));
  }
  return out;
}

}  // namespace

std::pair<Dataset, Dataset> split_disjoint_classes(const Dataset& dataset,
                                                   const ClassSplitConfig& cfg) {
  if (cfg.train_classes.empty() || cfg.test_classes.empty()) {
    throw ConfigError("split_disjoint_classes: both class lists must be "
                      "non-empty");
  }
  const std::set<int> train(cfg.train_classes.begin(), cfg.train_classes.end());
  const std::set<int> test(cfg.test_classes.begin(), cfg.test_classes.end());
  for (int c : train) {
    if (test.count(c)) {
      throw ConfigError("split_disjoint_classes: class " + std::to_string(c) +
                        " appears on both sides");
    }
  }
  return {filter_annotations(dataset, train), filter_annotations(dataset, test)};
}

std::pair<Dataset, Dataset> split_shared_classes(const Dataset& dataset,
                                                 const SharedSplitConfig& cfg) {
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) {
    throw ConfigError("split_shared_classes: test fraction must lie in (0, 1)");
  }

  // Objects grouped per class, then shuffled and cut per class so every
  // class keeps a presence on both sides whenever it has 2+ members.
  std::map<int, std::vector<std::pair<std::size_t, std::size_t>>> by_class;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t j = 0; j < dataset[i].annotations.size(); ++j) {
      by_class[dataset[i].annotations[j].class_id].push_back({i, j});
    }
  }
  if (by_class.empty()) {
    throw InputError("split_shared_classes: dataset has no annotated objects");
  }

  std::set<std::pair<std::size_t, std::size_t>> to_test;
  Rng rng(Rng::derive(cfg.seed, 11));
  for (auto& [cid, members] : by_class) {
    (void)cid;
    for (std::size_t i = members.size() - 1; i > 0; --i) {
      std::swap(members[i], members[rng.index(i + 1)]);
    }
    const std::size_t n = members.size();
    if (n < 2) continue;  // singletons stay in train
    const std::size_t want = static_cast<std::size_t>(
        std::llround(static_cast<double>(n) * cfg.test_fraction));
    const std::size_t take = std::max<std::size_t>(
        1, std::min<std::size_t>(n - 1, want));
    for (std::size_t k = 0; k < take; ++k) to_test.insert(members[k]);
  }

  Dataset train, test;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    AnnotatedImage tr, te;
    tr.name = te.name = dataset[i].name;
    tr.image = te.image = dataset[i].image;
    for (std::size_t j = 0; j < dataset[i].annotations.size(); ++j) {
      if (to_test.count({i, j})) {
        te.annotations.push_back(dataset[i].annotations[j]);
      } else {
        tr.annotations.push_back(dataset[i].annotations[j]);
      }
    }
    train.push_back(std::move(tr));
    test.push_back(std::move(te));
  }
  return {std::move(train), std::move(test)};
}

}  // namespace sonamatch
