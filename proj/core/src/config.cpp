#include "wallkin/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "wallkin/error.hpp"

namespace wallkin {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

template <typename T>
std::optional<T> parse_number(const std::string& tok) {
  T v{};
  const auto* end = tok.data() + tok.size();
  const auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

}  // namespace

KeyValues KeyValues::parse_string(const std::string& text, const std::string& origin) {
  KeyValues kv;
  kv.origin_ = origin;
  std::istringstream is(text);
  std::string section;
  int lineno = 0;
  for (std::string line; std::getline(is, line);) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw_validation(origin + ":" + std::to_string(lineno) + ": malformed section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw_validation(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    auto key = trim(t.substr(0, eq));
    if (key.empty()) throw_validation(origin + ":" + std::to_string(lineno) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    kv.values_[key] = trim(t.substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_io("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str(), path.string());
}

void KeyValues::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw_validation("override '" + assignment + "' must have the form key=value");
  }
  values_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

void KeyValues::bad_value(const std::string& key, const std::string& expected) const {
  throw_validation(origin_ + ": key '" + key + "' must be " + expected + " (got '" +
                   values_.at(key) + "')");
}

std::string KeyValues::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw_validation(origin_ + ": missing required key '" + key + "'");
  return it->second;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValues::get_double(const std::string& key) const {
  const auto v = parse_number<double>(get_string(key));
  if (!v) bad_value(key, "a real number");
  return *v;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

int KeyValues::get_int(const std::string& key) const {
  const auto v = parse_number<int>(get_string(key));
  if (!v) bad_value(key, "an integer");
  return *v;
}

int KeyValues::get_int(const std::string& key, int fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const auto s = get_string(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad_value(key, "a boolean");
}

std::vector<int> KeyValues::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (const auto& tok : split_ws(get_string(key))) {
    const auto v = parse_number<int>(tok);
    if (!v) bad_value(key, "a list of integers");
    out.push_back(*v);
  }
  return out;
}

std::vector<double> KeyValues::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& tok : split_ws(get_string(key))) {
    const auto v = parse_number<double>(tok);
    if (!v) bad_value(key, "a list of real numbers");
    out.push_back(*v);
  }
  return out;
}

Vec3 KeyValues::get_vec3(const std::string& key) const {
  const auto v = get_doubles(key);
  if (v.size() != 3) bad_value(key, "three real numbers");
  return {v[0], v[1], v[2]};
}

Vec3 KeyValues::get_vec3(const std::string& key, const Vec3& fallback) const {
  return has(key) ? get_vec3(key) : fallback;
}

Index3 KeyValues::get_index3(const std::string& key) const {
  const auto v = get_ints(key);
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() != 3) bad_value(key, "one or three integers");
  return {v[0], v[1], v[2]};
}

Index3 KeyValues::get_index3(const std::string& key, const Index3& fallback) const {
  return has(key) ? get_index3(key) : fallback;
}

std::string KeyValues::to_string() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
  return os.str();
}

}  // namespace wallkin
