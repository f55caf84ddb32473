#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wallkin/volume.hpp"

namespace wallkin {

/// Flat `key = value` store used for sidecar headers and run configs.
///
/// Lines starting with '#' or ';' are comments. A `[section]` line prefixes
/// the keys that follow with `section.`. Values are whitespace-separated
/// lists where a list is expected (e.g. `dims = 112 112 74`).
class KeyValues {
 public:
  static KeyValues parse_file(const std::filesystem::path& path);
  static KeyValues parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  /// Applies a `key=value` override string.
  void apply_override(const std::string& assignment);

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_ints(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  Vec3 get_vec3(const std::string& key) const;
  Vec3 get_vec3(const std::string& key, const Vec3& fallback) const;
  Index3 get_index3(const std::string& key) const;
  Index3 get_index3(const std::string& key, const Index3& fallback) const;

  const std::map<std::string, std::string>& entries() const { return values_; }
  std::string to_string() const;

 private:
  [[noreturn]] void bad_value(const std::string& key, const std::string& expected) const;

  std::map<std::string, std::string> values_;
  std::string origin_;
};

}  // namespace wallkin
