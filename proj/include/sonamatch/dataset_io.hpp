#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sonamatch/pairgen.hpp"

namespace sonamatch {

// Write-to-temp-then-rename, so readers never observe a half-written
// file and a crashed run leaves the previous version intact.
void atomic_write_file(const std::string& path, const std::string& bytes);

// Whole file as bytes; IoError when unreadable.
std::string read_file(const std::string& path);

// ---- grayscale rasters ----
// Binary PGM ("P5"), 8- or 16-bit. Intensities map linearly between
// [0, 1] and [0, maxval]; 16-bit samples are stored big endian as the
// format requires. Writing quantizes by rounding, so save/load of a file
// reproduces it bit for bit.
void write_pgm(const std::string& path, const GrayImage& image,
               int bit_depth = 16);
GrayImage read_pgm(const std::string& path);

// ---- annotated datasets ----
// A dataset directory holds images/*.pgm plus annotations.csv with the
// header image_path,x,y,width,height,class_id and one row per object.
// Images that appear in no row (pure clutter) are still part of the
// dataset; they are picked up from the images directory in name order.
void save_dataset(const std::string& dir, const Dataset& dataset,
                  int bit_depth = 16);
Dataset load_dataset(const std::string& dir);

// ---- pair manifests ----
// Line-oriented text: "# key=value" metadata lines, then the header
// image_a,x_a,y_a,image_b,x_b,y_b,label,kind and one row per pair. Crop
// windows are squares of the patch_size given in the metadata, so only
// their top-left corners are stored.
struct ManifestPair {
  std::string image_a;
  std::string image_b;
  std::int64_t xa = 0, ya = 0;
  std::int64_t xb = 0, yb = 0;
  int label = 0;
  PairKind kind = PairKind::ObjectObjectMatch;
};

struct PairManifest {
  std::size_t patch_size = 96;
  std::vector<ManifestPair> pairs;
};

void write_pair_manifest(const std::string& path, const PairManifest& manifest);
PairManifest read_pair_manifest(const std::string& path);

// Resolve manifest rows against a loaded dataset (image names must match)
// and cut the patches. Identical windows share one tensor.
std::vector<PairSample> manifest_to_samples(const PairManifest& manifest,
                                            const Dataset& dataset);

}  // namespace sonamatch
