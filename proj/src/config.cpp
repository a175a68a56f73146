#include "sonamatch/config.hpp"

#include <cctype>
#include <cerrno>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <limits>

#include "sonamatch/dataset_io.hpp"
#include "sonamatch/errors.hpp"

namespace sonamatch {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// A trailing "  # ..." on a value line is commentary, e.g. the source
// notes render_effective emits. A '#' glued to non-space text stays part
// of the value.
std::string strip_trailing_comment(const std::string& s) {
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    if (s[i + 1] == '#' &&
        std::isspace(static_cast<unsigned char>(s[i]))) {
      return s.substr(0, i);
    }
  }
  return s;
}

bool valid_key(const std::string& key) {
  const std::size_t dot = key.find('.');
  if (dot == 0 || dot == std::string::npos || dot + 1 == key.size()) {
    return false;
  }
  for (char c : key) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' ||
          c == '_' || c == '-')) {
      return false;
    }
  }
  return key.find('.', dot + 1) == std::string::npos;
}

const char* source_name(ConfigSource s) {
  switch (s) {
    case ConfigSource::Default: return "default";
    case ConfigSource::File: return "config";
    case ConfigSource::Flag: return "flag";
  }
  return "?";
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void bad_number(const std::string& key, const std::string& value,
                             const char* wanted) {
  throw FormatError("setting " + key + ": expected " + wanted + ", got '" +
                    value + "'");
}

}  // namespace

const std::string* ConfigFile::find(const std::string& key) const {
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    if (it->first == key) return &it->second;
  }
  return nullptr;
}

ConfigFile parse_config_text(const std::string& text) {
  ConfigFile file;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string line = text.substr(
        pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(line_no) +
                        ": expected key = value, got '" + stripped + "'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    if (!valid_key(key)) {
      throw FormatError("config line " + std::to_string(line_no) + ": key '" +
                        key +
                        "' must look like section.name with one dot");
    }
    const std::string value =
        trim(strip_trailing_comment(stripped.substr(eq + 1)));
    file.entries.emplace_back(key, value);
  }
  return file;
}

ConfigFile load_config_file(const std::string& path) {
  return parse_config_text(read_file(path));
}

ConfigResolver::ConfigResolver(ConfigFile file) : file_(std::move(file)) {
  used_.assign(file_.entries.size(), false);
}

const std::string* ConfigResolver::lookup(const std::string& key) {
  const std::string* found = nullptr;
  for (std::size_t i = 0; i < file_.entries.size(); ++i) {
    if (file_.entries[i].first == key) {
      used_[i] = true;
      found = &file_.entries[i].second;
    }
  }
  return found;
}

std::string ConfigResolver::resolve_string(
    const std::string& key, const std::optional<std::string>& flag,
    const std::string& fallback) {
  const std::string* file_value = lookup(key);
  ResolvedSetting r{key, fallback, ConfigSource::Default};
  if (file_value) r = {key, *file_value, ConfigSource::File};
  if (flag) r = {key, *flag, ConfigSource::Flag};
  resolved_.push_back(r);
  return r.value;
}

double ConfigResolver::resolve_double(const std::string& key,
                                      const std::optional<double>& flag,
                                      double fallback) {
  const std::string text = resolve_string(
      key, flag ? std::optional<std::string>(format_double(*flag))
                : std::nullopt,
      format_double(fallback));
  const char* begin = text.c_str();
  char* end = nullptr;
  errno = 0;
  const double value = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || errno == ERANGE) {
    bad_number(key, text, "a number");
  }
  return value;
}

std::uint64_t ConfigResolver::resolve_u64(
    const std::string& key, const std::optional<std::uint64_t>& flag,
    std::uint64_t fallback) {
  const std::string text = resolve_string(
      key, flag ? std::optional<std::string>(std::to_string(*flag))
                : std::nullopt,
      std::to_string(fallback));
  if (text.empty() || text[0] == '-' || text[0] == '+') {
    bad_number(key, text, "a non-negative integer");
  }
  const char* begin = text.c_str();
  char* end = nullptr;
  errno = 0;
  const unsigned long long value = std::strtoull(begin, &end, 10);
  if (end == begin || *end != '\0' || errno == ERANGE) {
    bad_number(key, text, "a non-negative integer");
  }
  return value;
}

std::size_t ConfigResolver::resolve_size(const std::string& key,
                                         const std::optional<std::size_t>& flag,
                                         std::size_t fallback) {
  const std::uint64_t value = resolve_u64(
      key, flag ? std::optional<std::uint64_t>(*flag) : std::nullopt,
      fallback);
  if (value > std::numeric_limits<std::size_t>::max()) {
    bad_number(key, std::to_string(value), "a size that fits this platform");
  }
  return static_cast<std::size_t>(value);
}

int ConfigResolver::resolve_int(const std::string& key,
                                const std::optional<int>& flag, int fallback) {
  const std::string text = resolve_string(
      key, flag ? std::optional<std::string>(std::to_string(*flag))
                : std::nullopt,
      std::to_string(fallback));
  const char* begin = text.c_str();
  char* end = nullptr;
  errno = 0;
  const long value = std::strtol(begin, &end, 10);
  if (end == begin || *end != '\0' || errno == ERANGE ||
      value < std::numeric_limits<int>::min() ||
      value > std::numeric_limits<int>::max()) {
    bad_number(key, text, "an integer");
  }
  return static_cast<int>(value);
}

std::string ConfigResolver::render_effective() const {
  std::string out = "# effective configuration (value  # origin)\n";
  for (const ResolvedSetting& r : resolved_) {
    out += r.key + " = " + r.value + "  # " + source_name(r.source) + "\n";
  }
  return out;
}

void ConfigResolver::reject_unused() const {
  reject_unused({});
}

void ConfigResolver::reject_unused(
    const std::vector<std::string>& sections) const {
  for (std::size_t i = 0; i < file_.entries.size(); ++i) {
    if (used_[i]) continue;
    const std::string& key = file_.entries[i].first;
    if (!sections.empty()) {
      const std::string section = key.substr(0, key.find('.'));
      bool owned = false;
      for (const std::string& s : sections) owned = owned || s == section;
      if (!owned) continue;
    }
    throw ConfigError("unknown setting '" + key + "' in config file");
  }
}

}  // namespace sonamatch
