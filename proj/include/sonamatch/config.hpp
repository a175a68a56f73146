#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sonamatch {

// Parsed line-oriented configuration. Keys carry their section as a dot
// prefix ("train.epochs"), values are kept verbatim; later lines win when
// a key repeats. Blank lines and lines starting with '#' are skipped.
struct ConfigFile {
  std::vector<std::pair<std::string, std::string>> entries;

  const std::string* find(const std::string& key) const;
};

// Parse config text; FormatError pinpoints the offending line number.
ConfigFile parse_config_text(const std::string& text);

// Read and parse a config file; IoError if unreadable.
ConfigFile load_config_file(const std::string& path);

// Where a resolved setting's value came from, in increasing precedence.
enum class ConfigSource { Default, File, Flag };

struct ResolvedSetting {
  std::string key;
  std::string value;
  ConfigSource source = ConfigSource::Default;
};

// Resolves settings with command-line-flag > config-file > default
// precedence, remembering every lookup. The record serves two ends: the
// effective configuration can be echoed next to any artifact for
// provenance, and file keys that no lookup ever touched can be flagged
// as unknown instead of being silently ignored.
class ConfigResolver {
 public:
  explicit ConfigResolver(ConfigFile file);

  std::string resolve_string(const std::string& key,
                             const std::optional<std::string>& flag,
                             const std::string& fallback);
  double resolve_double(const std::string& key,
                        const std::optional<double>& flag, double fallback);
  std::size_t resolve_size(const std::string& key,
                           const std::optional<std::size_t>& flag,
                           std::size_t fallback);
  int resolve_int(const std::string& key, const std::optional<int>& flag,
                  int fallback);
  std::uint64_t resolve_u64(const std::string& key,
                            const std::optional<std::uint64_t>& flag,
                            std::uint64_t fallback);

  const std::vector<ResolvedSetting>& resolved() const { return resolved_; }

  // Every resolved setting as "key = value  # source" lines, themselves
  // parseable as a config file.
  std::string render_effective() const;

  // ConfigError naming the first config-file key that no resolve_* call
  // ever asked about (typo protection). Call after all lookups. The
  // scoped form only checks keys whose section is listed, so one file
  // can carry settings for several commands and each command vets just
  // the sections it owns.
  void reject_unused() const;
  void reject_unused(const std::vector<std::string>& sections) const;

 private:
  const std::string* lookup(const std::string& key);

  ConfigFile file_;
  std::vector<ResolvedSetting> resolved_;
  std::vector<bool> used_;
};

}  // namespace sonamatch
