#include "sonamatch/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "sonamatch/errors.hpp"
#include "sonamatch/rng.hpp"

namespace sonamatch {

namespace {

// Every family lives in local coordinates with support inside the unit
// square, so a rendered instance fits a circle of radius sqrt(2)*scale.
constexpr double kShapeReach = 1.45;

// Background reverberation level, drawn once per image to mimic changing
// insonification and sensor gain. The band is kept moderate: most object
// pairs span two images, and a wild gain mismatch between the two crops
// would drown the object contrast the matcher relies on.
constexpr double kBackgroundLo = 0.35;
constexpr double kBackgroundHi = 0.55;

// Object contrast magnitude range, drawn per instance. The sign depends
// on the class: strongly reflective families return more energy than the
// reverberation floor, absorbing ones return less, so half the classes
// render brighter than the background and half darker. Alternating ids
// keeps both polarities present in any contiguous class subset.
constexpr double kIntensityLo = 0.45;
constexpr double kIntensityHi = 0.70;

// Acoustic shadow cast by each object: the same silhouette displaced
// down-range (+y), slightly widened by beam divergence, with most of the
// insonification removed. Every object patch therefore carries both
// contrast polarities (bright highlight, dark shadow), like real
// forward-looking sonar returns.
constexpr double kShadowDrop = 2.2;     // centre offset, in units of scale
constexpr double kShadowBloom = 1.15;   // silhouette widening factor
constexpr double kShadowFactor = 0.12;  // insonification left inside

constexpr std::size_t kPlacementAttempts = 200;
constexpr double kPlacementIouLimit = 0.5;

bool shape_inside(int class_id, double u, double v) {
  const double r2 = u * u + v * v;
  const double au = std::abs(u);
  const double av = std::abs(v);
  switch (class_id) {
    case 0:  // disc
      return r2 <= 1.0;
    case 1:  // ring
      return r2 <= 1.0 && r2 >= 0.55 * 0.55;
    case 2:  // bar
      return au <= 1.0 && av <= 0.32;
    case 3:  // cross
      return (au <= 1.0 && av <= 0.28) || (av <= 1.0 && au <= 0.28);
    case 4:  // wedge pointing +u
      return u >= -0.75 && u <= 1.0 && av <= 0.85 * (1.0 - u) / 1.75;
    case 5:  // flat ellipse
      return u * u + (v * v) / (0.45 * 0.45) <= 1.0;
    case 6:  // square frame
      return std::max(au, av) <= 1.0 && std::max(au, av) >= 0.55;
    case 7:  // H
      return (au >= 0.62 && au <= 1.0 && av <= 1.0) ||
             (au <= 1.0 && av <= 0.24);
    case 8:  // crescent
      return r2 <= 1.0 && (u - 0.45) * (u - 0.45) + v * v >= 0.60 * 0.60;
    case 9:  // diamond
      return au + av <= 1.0;
    case 10:  // twin blobs
      return (u - 0.52) * (u - 0.52) + v * v <= 0.45 * 0.45 ||
             (u + 0.52) * (u + 0.52) + v * v <= 0.45 * 0.45;
    case 11:  // chevron
      return au <= 1.0 && std::abs(v - (0.5 - 0.9 * au)) <= 0.28;
    default:
      return false;
  }
}

// Visit every canvas pixel inside the shape's support. The visitor runs
// once per (row, col); rasterization order is row-major, so callers that
// mutate state stay deterministic.
template <typename Visit>
void rasterize(int class_id, const Pose& pose, const GrayImage& canvas,
               Visit&& visit) {
  const double reach = kShapeReach * pose.scale;
  const auto lo = [](double c, double r) {
    return static_cast<std::size_t>(std::max(0.0, std::floor(c - r)));
  };
  const std::size_t row_lo = lo(pose.cy, reach);
  const std::size_t col_lo = lo(pose.cx, reach);
  const std::size_t row_hi = std::min(
      canvas.height, static_cast<std::size_t>(std::max(0.0, std::ceil(pose.cy + reach) + 1.0)));
  const std::size_t col_hi = std::min(
      canvas.width, static_cast<std::size_t>(std::max(0.0, std::ceil(pose.cx + reach) + 1.0)));
  const double c = std::cos(pose.rotation);
  const double s = std::sin(pose.rotation);
  const double inv = 1.0 / pose.scale;
  for (std::size_t row = row_lo; row < row_hi; ++row) {
    const double dy = static_cast<double>(row) - pose.cy;
    for (std::size_t col = col_lo; col < col_hi; ++col) {
      const double dx = static_cast<double>(col) - pose.cx;
      const double u = (c * dx + s * dy) * inv;
      const double v = (-s * dx + c * dy) * inv;
      if (shape_inside(class_id, u, v)) visit(row, col);
    }
  }
}

BoundingBox support_box(int class_id, const Pose& pose,
                        const GrayImage& canvas) {
  std::size_t min_row = canvas.height, max_row = 0;
  std::size_t min_col = canvas.width, max_col = 0;
  bool any = false;
  rasterize(class_id, pose, canvas, [&](std::size_t row, std::size_t col) {
    min_row = std::min(min_row, row);
    max_row = std::max(max_row, row);
    min_col = std::min(min_col, col);
    max_col = std::max(max_col, col);
    any = true;
  });
  if (!any) return BoundingBox{};
  return BoundingBox{static_cast<std::int64_t>(min_col),
                     static_cast<std::int64_t>(min_row),
                     static_cast<std::int64_t>(max_col - min_col + 1),
                     static_cast<std::int64_t>(max_row - min_row + 1)};
}

void check_config(const SynthConfig& cfg) {
  if (cfg.num_classes < 2 ||
      static_cast<std::size_t>(cfg.num_classes) > shape_library_size()) {
    throw ConfigError("synth: num_classes must be between 2 and " +
                      std::to_string(shape_library_size()) + ", got " +
                      std::to_string(cfg.num_classes));
  }
  if (cfg.width < 96 || cfg.height < 96) {
    throw ConfigError("synth: image extents must be at least 96, got " +
                      std::to_string(cfg.width) + "x" +
                      std::to_string(cfg.height));
  }
  if (!(cfg.scale_min > 0.0) || !(cfg.scale_max >= cfg.scale_min)) {
    throw ConfigError("synth: scale range must satisfy 0 < min <= max, got [" +
                      std::to_string(cfg.scale_min) + ", " +
                      std::to_string(cfg.scale_max) + "]");
  }
  if (cfg.speckle_strength < 0.0 || cfg.gradient_strength < 0.0 ||
      cfg.rotation_jitter < 0.0) {
    throw ConfigError(
        "synth: speckle, gradient, and rotation jitter must be non-negative");
  }
  // Largest support footprint at scale_max, plus a one-pixel margin on
  // each side, has to fit the smaller extent or no pose can ever be
  // placed.
  const double footprint = 2.0 * (kShapeReach * cfg.scale_max + 1.0);
  if (footprint >= static_cast<double>(std::min(cfg.width, cfg.height))) {
    throw ConfigError("synth: objects at scale " +
                      std::to_string(cfg.scale_max) +
                      " cannot fit a " + std::to_string(cfg.width) + "x" +
                      std::to_string(cfg.height) + " image");
  }
}

// Smooth per-image illumination: 1 + g * P(x, y) with P a random
// quadratic over [-1, 1]^2 scaled so |P| <= 1, hence the field stays in
// [1-g, 1+g].
struct Illumination {
  double coeff[6] = {};
  double gain = 0.0;

  static Illumination draw(Rng& rng, double strength) {
    Illumination f;
    double norm = 0.0;
    for (double& c : f.coeff) {
      c = rng.uniform(-1.0, 1.0);
      norm += std::abs(c);
    }
    f.gain = norm > 0.0 ? strength / norm : 0.0;
    return f;
  }

  double at(double x01, double y01) const {
    const double x = 2.0 * x01 - 1.0;
    const double y = 2.0 * y01 - 1.0;
    const double p = coeff[0] + coeff[1] * x + coeff[2] * y +
                     coeff[3] * x * x + coeff[4] * x * y + coeff[5] * y * y;
    return 1.0 + gain * p;
  }
};

}  // namespace

std::size_t shape_library_size() { return 12; }

BoundingBox render_instance(int class_id, const Pose& pose, double intensity,
                            GrayImage& canvas) {
  BoundingBox box = support_box(class_id, pose, canvas);
  // Shadow first; the highlight overwrites it where the two overlap. The
  // annotation box covers only the highlight, as shadows are context.
  Pose shadow = pose;
  shadow.cy += kShadowDrop * pose.scale;
  shadow.scale *= kShadowBloom;
  rasterize(class_id, shadow, canvas, [&](std::size_t row, std::size_t col) {
    canvas.at(row, col) *= kShadowFactor;
  });
  rasterize(class_id, pose, canvas, [&](std::size_t row, std::size_t col) {
    canvas.at(row, col) =
        std::clamp(canvas.at(row, col) + intensity, 0.0, 1.0);
  });
  return box;
}

Dataset generate_dataset(const SynthConfig& cfg) {
  check_config(cfg);
  Dataset dataset;
  dataset.reserve(cfg.images);
  for (std::size_t img = 0; img < cfg.images; ++img) {
    Rng rng(Rng::derive(cfg.seed, img));
    AnnotatedImage entry;
    char name[32];
    std::snprintf(name, sizeof(name), "synth-%04zu.pgm", img);
    entry.name = name;
    entry.image.width = cfg.width;
    entry.image.height = cfg.height;
    entry.image.pixels.assign(cfg.width * cfg.height,
                              rng.uniform(kBackgroundLo, kBackgroundHi));

    const Illumination field = Illumination::draw(rng, cfg.gradient_strength);

    for (std::size_t obj = 0; obj < cfg.objects_per_image; ++obj) {
      const int class_id = static_cast<int>(rng.index(cfg.num_classes));
      double intensity = rng.uniform(kIntensityLo, kIntensityHi);
      if (class_id % 2 != 0) intensity = -intensity;
      bool placed = false;
      for (std::size_t attempt = 0; attempt < kPlacementAttempts; ++attempt) {
        Pose pose;
        pose.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
        pose.rotation = rng.uniform(-cfg.rotation_jitter, cfg.rotation_jitter);
        const double margin = kShapeReach * pose.scale + 1.0;
        pose.cx = rng.uniform(margin, static_cast<double>(cfg.width) - margin);
        pose.cy = rng.uniform(margin, static_cast<double>(cfg.height) - margin);
        const BoundingBox box = support_box(class_id, pose, entry.image);
        if (box.width <= 0 || box.height <= 0) continue;
        const bool clear = std::none_of(
            entry.annotations.begin(), entry.annotations.end(),
            [&](const Annotation& a) {
              return iou(a.box, box) >= kPlacementIouLimit;
            });
        if (!clear) continue;
        render_instance(class_id, pose, intensity, entry.image);
        entry.annotations.push_back({box, class_id});
        placed = true;
        break;
      }
      if (!placed) {
        throw SamplingError("synth: image " + std::to_string(img) +
                            ": could not place object " + std::to_string(obj) +
                            " within " + std::to_string(kPlacementAttempts) +
                            " attempts");
      }
    }

    const double wd = static_cast<double>(cfg.width - 1);
    const double hd = static_cast<double>(cfg.height - 1);
    for (std::size_t row = 0; row < cfg.height; ++row) {
      for (std::size_t col = 0; col < cfg.width; ++col) {
        double value = entry.image.at(row, col);
        value *= field.at(static_cast<double>(col) / wd,
                          static_cast<double>(row) / hd);
        if (cfg.speckle_strength > 0.0) {
          value *= rng.gamma_unit_mean(cfg.speckle_strength);
        }
        entry.image.at(row, col) = std::clamp(value, 0.0, 1.0);
      }
    }
    dataset.push_back(std::move(entry));
  }
  return dataset;
}

}  // namespace sonamatch
