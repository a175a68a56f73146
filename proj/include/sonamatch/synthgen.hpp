#pragma once

#include <cstdint>
#include <cstddef>

#include "sonamatch/pairgen.hpp"

namespace sonamatch {

// Pose of one rendered object: image-space centre in pixels, rotation in
// radians, and scale in pixels (the shape's unit coordinate maps to
// `scale` pixels).
struct Pose {
  double cx = 0.0;
  double cy = 0.0;
  double rotation = 0.0;
  double scale = 1.0;
};

struct SynthConfig {
  int num_classes = 9;             // distinct shape families, 2..shape_library_size()
  std::size_t images = 200;
  std::size_t objects_per_image = 3;
  std::size_t width = 192;         // extents must each be at least 96
  std::size_t height = 192;
  double speckle_strength = 0.25;  // multiplicative-noise coefficient of variation; 0 disables
  double gradient_strength = 0.25; // illumination field amplitude; 0 disables
  double rotation_jitter = 1.0;    // pose rotation drawn uniformly from +/- this, radians
  double scale_min = 11.0;         // pose scale range, pixels
  double scale_max = 16.0;
  std::uint64_t seed = 0;
};

// Number of distinct parametric shape families available.
std::size_t shape_library_size();

// Rasterize one object additively onto the canvas, clipping each touched
// pixel to [0, 1]. Pure geometry: no noise, no illumination, so a given
// (class, pose) always produces the same raster. Returns the tight
// bounding box of the support pixels that landed on the canvas; a shape
// entirely off-canvas yields a degenerate (zero-size) box.
BoundingBox render_instance(int class_id, const Pose& pose, double intensity,
                            GrayImage& canvas);

// Generate an annotated synthetic dataset: per image, class-distinct
// shapes at jittered non-overlapping poses over a smooth illumination
// field, with multiplicative speckle on top. Deterministic per cfg.seed,
// with an independent random stream per image. Throws ConfigError when
// the configuration is invalid or the requested scales cannot fit the
// image, and SamplingError when object placement runs out of attempts.
Dataset generate_dataset(const SynthConfig& cfg);

}  // namespace sonamatch
