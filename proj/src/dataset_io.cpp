#include "sonamatch/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "sonamatch/errors.hpp"

namespace fs = std::filesystem;

namespace sonamatch {

void atomic_write_file(const std::string& path, const std::string& bytes) {
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
    if (ec) {
      throw IoError("cannot create directory " +
                    target.parent_path().string() + ": " + ec.message());
    }
  }
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename " + tmp.string() + " to " + path + ": " +
                  ec.message());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failure on " + path);
  return std::move(buf).str();
}

// ---- PGM ----

void write_pgm(const std::string& path, const GrayImage& image,
               int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) {
    throw ConfigError("write_pgm: bit depth must be 8 or 16, got " +
                      std::to_string(bit_depth));
  }
  if (image.width == 0 || image.height == 0 ||
      image.pixels.size() != image.width * image.height) {
    throw InputError("write_pgm: image extent " + std::to_string(image.width) +
                     "x" + std::to_string(image.height) +
                     " does not match its pixel count");
  }
  for (double v : image.pixels) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw InputError("write_pgm: pixel value " + std::to_string(v) +
                       " is outside [0, 1]");
    }
  }
  const int maxval = bit_depth == 8 ? 255 : 65535;
  std::string bytes = "P5\n" + std::to_string(image.width) + " " +
                      std::to_string(image.height) + "\n" +
                      std::to_string(maxval) + "\n";
  bytes.reserve(bytes.size() + image.pixels.size() * (bit_depth / 8));
  for (double v : image.pixels) {
    const int q = static_cast<int>(std::lround(v * maxval));
    if (bit_depth == 8) {
      bytes.push_back(static_cast<char>(q));
    } else {
      bytes.push_back(static_cast<char>((q >> 8) & 0xff));
      bytes.push_back(static_cast<char>(q & 0xff));
    }
  }
  atomic_write_file(path, bytes);
}

namespace {

// Reads the next header token, skipping whitespace and # comments.
std::string pgm_token(const std::string& bytes, std::size_t& offset,
                      const std::string& path) {
  while (offset < bytes.size()) {
    const char c = bytes[offset];
    if (c == '#') {
      while (offset < bytes.size() && bytes[offset] != '\n') ++offset;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++offset;
    } else {
      break;
    }
  }
  const std::size_t start = offset;
  while (offset < bytes.size() &&
         !std::isspace(static_cast<unsigned char>(bytes[offset]))) {
    ++offset;
  }
  if (start == offset) {
    throw FormatError(path + ": truncated header at offset " +
                      std::to_string(offset));
  }
  return bytes.substr(start, offset - start);
}

long pgm_int(const std::string& bytes, std::size_t& offset,
             const std::string& path, const char* what) {
  const std::size_t at = offset;
  const std::string tok = pgm_token(bytes, offset, path);
  try {
    std::size_t used = 0;
    const long v = std::stol(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError(path + ": bad " + std::string(what) + " \"" + tok +
                      "\" at offset " + std::to_string(at));
  }
}

}  // namespace

GrayImage read_pgm(const std::string& path) {
  const std::string bytes = read_file(path);
  std::size_t offset = 0;
  const std::string magic = pgm_token(bytes, offset, path);
  if (magic != "P5") {
    throw FormatError(path + ": expected P5 magic at offset 0, found \"" +
                      magic + "\"");
  }
  const long width = pgm_int(bytes, offset, path, "width");
  const long height = pgm_int(bytes, offset, path, "height");
  const long maxval = pgm_int(bytes, offset, path, "maxval");
  if (width <= 0 || height <= 0) {
    throw FormatError(path + ": non-positive image extent " +
                      std::to_string(width) + "x" + std::to_string(height));
  }
  if (maxval <= 0 || maxval > 65535) {
    throw FormatError(path + ": unsupported maxval " + std::to_string(maxval));
  }
  if (offset >= bytes.size()) {
    throw FormatError(path + ": missing pixel data at offset " +
                      std::to_string(offset));
  }
  ++offset;  // single whitespace after maxval
  const std::size_t bpp = maxval < 256 ? 1 : 2;
  const std::size_t need = std::size_t(width) * std::size_t(height) * bpp;
  if (bytes.size() - offset < need) {
    throw FormatError(path + ": pixel data truncated at offset " +
                      std::to_string(bytes.size()) + ", need " +
                      std::to_string(offset + need) + " bytes");
  }
  GrayImage img;
  img.width = std::size_t(width);
  img.height = std::size_t(height);
  img.pixels.resize(img.width * img.height);
  const double inv = 1.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    unsigned v = static_cast<unsigned char>(bytes[offset + i * bpp]);
    if (bpp == 2) {
      v = (v << 8) | static_cast<unsigned char>(bytes[offset + i * bpp + 1]);
    }
    if (v > static_cast<unsigned>(maxval)) {
      throw FormatError(path + ": sample " + std::to_string(v) +
                        " above maxval at offset " +
                        std::to_string(offset + i * bpp));
    }
    img.pixels[i] = static_cast<double>(v) * inv;
  }
  return img;
}

// ---- annotations ----

namespace {

constexpr const char* kAnnotationHeader =
    "image_path,x,y,width,height,class_id";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  for (std::string& f : fields) {
    const auto b = f.find_first_not_of(" \t\r");
    const auto e = f.find_last_not_of(" \t\r");
    f = b == std::string::npos ? "" : f.substr(b, e - b + 1);
  }
  return fields;
}

std::int64_t parse_int(const std::string& s, const std::string& path,
                       std::size_t line, const char* what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size() || s.empty()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(path + ":" + std::to_string(line) + ": bad " + what +
                      " \"" + s + "\"");
  }
}

std::vector<std::string> read_lines(const std::string& bytes) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : bytes) {
    if (c == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& dataset,
                  int bit_depth) {
  std::string csv = std::string(kAnnotationHeader) + "\n";
  for (const AnnotatedImage& ai : dataset) {
    if (ai.name.empty()) {
      throw InputError("save_dataset: image without a name");
    }
    write_pgm((fs::path(dir) / "images" / ai.name).string(), ai.image,
              bit_depth);
    for (const Annotation& ann : ai.annotations) {
      csv += "images/" + ai.name + "," + std::to_string(ann.box.x) + "," +
             std::to_string(ann.box.y) + "," + std::to_string(ann.box.width) +
             "," + std::to_string(ann.box.height) + "," +
             std::to_string(ann.class_id) + "\n";
    }
  }
  atomic_write_file((fs::path(dir) / "annotations.csv").string(), csv);
}

Dataset load_dataset(const std::string& dir) {
  const std::string csv_path = (fs::path(dir) / "annotations.csv").string();
  const std::vector<std::string> lines = read_lines(read_file(csv_path));
  if (lines.empty() || lines[0] != kAnnotationHeader) {
    throw FormatError(csv_path + ":1: expected header \"" +
                      kAnnotationHeader + "\"");
  }

  Dataset ds;
  std::map<std::string, std::size_t> index_of;
  auto image_slot = [&](const std::string& rel) -> AnnotatedImage& {
    auto it = index_of.find(rel);
    if (it == index_of.end()) {
      AnnotatedImage ai;
      ai.name = fs::path(rel).filename().string();
      ai.image = read_pgm((fs::path(dir) / rel).string());
      index_of.emplace(rel, ds.size());
      ds.push_back(std::move(ai));
      return ds.back();
    }
    return ds[it->second];
  };

  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::vector<std::string> f = split_csv(lines[i]);
    if (f.size() != 6) {
      throw FormatError(csv_path + ":" + std::to_string(i + 1) + ": expected 6 fields, found " +
                        std::to_string(f.size()));
    }
    Annotation ann;
    ann.box.x = parse_int(f[1], csv_path, i + 1, "x");
    ann.box.y = parse_int(f[2], csv_path, i + 1, "y");
    ann.box.width = parse_int(f[3], csv_path, i + 1, "width");
    ann.box.height = parse_int(f[4], csv_path, i + 1, "height");
    ann.class_id = static_cast<int>(parse_int(f[5], csv_path, i + 1, "class_id"));
    if (ann.box.width <= 0 || ann.box.height <= 0) {
      throw FormatError(csv_path + ":" + std::to_string(i + 1) +
                        ": non-positive box extent");
    }
    image_slot(f[0]).annotations.push_back(ann);
  }

  // Pick up images no annotation refers to (pure clutter frames).
  const fs::path images_dir = fs::path(dir) / "images";
  if (fs::exists(images_dir)) {
    std::vector<std::string> extra;
    for (const auto& entry : fs::directory_iterator(images_dir)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".pgm") {
        continue;
      }
      const std::string rel = "images/" + entry.path().filename().string();
      if (!index_of.count(rel)) extra.push_back(rel);
    }
    std::sort(extra.begin(), extra.end());
    for (const std::string& rel : extra) image_slot(rel);
  }
  if (ds.empty()) {
    throw InputError("load_dataset: " + dir + " contains no images");
  }
  return ds;
}

// ---- pair manifests ----

namespace {

constexpr const char* kManifestHeader =
    "image_a,x_a,y_a,image_b,x_b,y_b,label,kind";

}  // namespace

void write_pair_manifest(const std::string& path,
                         const PairManifest& manifest) {
  std::string text = "# patch_size=" + std::to_string(manifest.patch_size) +
                     "\n" + kManifestHeader + "\n";
  for (const ManifestPair& p : manifest.pairs) {
    text += p.image_a + "," + std::to_string(p.xa) + "," +
            std::to_string(p.ya) + "," + p.image_b + "," +
            std::to_string(p.xb) + "," + std::to_string(p.yb) + "," +
            std::to_string(p.label) + "," + pair_kind_name(p.kind) + "\n";
  }
  atomic_write_file(path, text);
}

PairManifest read_pair_manifest(const std::string& path) {
  const std::vector<std::string> lines = read_lines(read_file(path));
  PairManifest m;
  bool patch_size_seen = false;
  std::size_t i = 0;
  for (; i < lines.size() && !lines[i].empty() && lines[i][0] == '#'; ++i) {
    const std::string meta = lines[i].substr(1);
    const auto eq = meta.find('=');
    if (eq == std::string::npos) continue;
    std::string key = meta.substr(0, eq);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    if (key == "patch_size") {
      m.patch_size = static_cast<std::size_t>(
          parse_int(meta.substr(eq + 1), path, i + 1, "patch_size"));
      patch_size_seen = true;
    }
  }
  if (!patch_size_seen) {
    throw FormatError(path + ": missing \"# patch_size=\" metadata line");
  }
  if (i >= lines.size() || lines[i] != kManifestHeader) {
    throw FormatError(path + ":" + std::to_string(i + 1) +
                      ": expected header \"" + kManifestHeader + "\"");
  }
  for (++i; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::vector<std::string> f = split_csv(lines[i]);
    if (f.size() != 8) {
      throw FormatError(path + ":" + std::to_string(i + 1) +
                        ": expected 8 fields, found " +
                        std::to_string(f.size()));
    }
    ManifestPair p;
    p.image_a = f[0];
    p.xa = parse_int(f[1], path, i + 1, "x_a");
    p.ya = parse_int(f[2], path, i + 1, "y_a");
    p.image_b = f[3];
    p.xb = parse_int(f[4], path, i + 1, "x_b");
    p.yb = parse_int(f[5], path, i + 1, "y_b");
    const std::int64_t label = parse_int(f[6], path, i + 1, "label");
    if (label != 0 && label != 1) {
      throw FormatError(path + ":" + std::to_string(i + 1) + ": label " +
                        std::to_string(label) + " is not 0 or 1");
    }
    p.label = static_cast<int>(label);
    try {
      p.kind = pair_kind_from_name(f[7]);
    } catch (const InputError& e) {
      throw FormatError(path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
    m.pairs.push_back(std::move(p));
  }
  return m;
}

std::vector<PairSample> manifest_to_samples(const PairManifest& manifest,
                                            const Dataset& dataset) {
  std::map<std::string, const AnnotatedImage*> by_name;
  for (const AnnotatedImage& ai : dataset) by_name[ai.name] = &ai;

  std::map<std::tuple<std::string, std::int64_t, std::int64_t>,
           std::shared_ptr<const Tensor>>
      cache;
  auto patch_at = [&](const std::string& image, std::int64_t x,
                      std::int64_t y) {
    const auto key = std::make_tuple(image, x, y);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    const auto img_it = by_name.find(image);
    if (img_it == by_name.end()) {
      throw InputError("pair manifest names image \"" + image +
                       "\" which the dataset does not contain");
    }
    const GrayImage& img = img_it->second->image;
    const std::size_t size = manifest.patch_size;
    if (x < 0 || y < 0 || std::size_t(x) + size > img.width ||
        std::size_t(y) + size > img.height) {
      throw InputError("pair manifest window (" + std::to_string(x) + ", " +
                       std::to_string(y) + ") leaves image \"" + image + "\"");
    }
    Tensor patch = Tensor::zeros({size, size});
    for (std::size_t r = 0; r < size; ++r) {
      for (std::size_t col = 0; col < size; ++col) {
        patch.at(r, col) = img.at(std::size_t(y) + r, std::size_t(x) + col);
      }
    }
    auto shared = std::make_shared<const Tensor>(std::move(patch));
    cache.emplace(key, shared);
    return shared;
  };

  std::vector<PairSample> samples;
  samples.reserve(manifest.pairs.size());
  for (const ManifestPair& p : manifest.pairs) {
    samples.push_back({patch_at(p.image_a, p.xa, p.ya),
                       patch_at(p.image_b, p.xb, p.yb), p.label, p.kind});
  }
  return samples;
}

}  // namespace sonamatch
