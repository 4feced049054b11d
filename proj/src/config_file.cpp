#include "graspfs/config_file.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "graspfs/binary_io.hpp"
#include "graspfs/errors.hpp"

namespace graspfs {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
bool parse_number(const std::string& s, T& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::string& source) {
  KeyValueConfig cfg;
  cfg.source_ = source;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(number) + ": empty key");
    if (cfg.values_.count(key)) {
      throw ConfigError(source + ":" + std::to_string(number) + ": duplicate key '" + key + "'");
    }
    cfg.values_[key] = trim(t.substr(eq + 1));
    cfg.lines_[key] = number;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  return parse(io::read_file(path), path.string());
}

void KeyValueConfig::set(const std::string& key, std::string value) {
  values_[key] = std::move(value);
  lines_.erase(key);
}

std::string KeyValueConfig::where(const std::string& key) const {
  const auto it = lines_.find(key);
  if (it == lines_.end()) return "'" + key + "'";
  return "'" + key + "' (" + source_ + ":" + std::to_string(it->second) + ")";
}

std::string KeyValueConfig::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

double KeyValueConfig::get_double(const std::string& key) const {
  double v = 0;
  if (!parse_number(get_string(key), v)) throw ConfigError("config key " + where(key) + " is not a number");
  return v;
}

std::size_t KeyValueConfig::get_size(const std::string& key) const {
  std::size_t v = 0;
  if (!parse_number(get_string(key), v)) {
    throw ConfigError("config key " + where(key) + " is not a non-negative integer");
  }
  return v;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key) const {
  std::uint64_t v = 0;
  if (!parse_number(get_string(key), v)) {
    throw ConfigError("config key " + where(key) + " is not a non-negative integer");
  }
  return v;
}

bool KeyValueConfig::get_bool(const std::string& key) const {
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key " + where(key) + " is not a boolean");
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get_string(key))) {
    double v = 0;
    if (!parse_number(item, v)) throw ConfigError("config key " + where(key) + " has a non-numeric entry");
    out.push_back(v);
  }
  return out;
}

std::vector<std::size_t> KeyValueConfig::get_sizes(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(get_string(key))) {
    std::size_t v = 0;
    if (!parse_number(item, v)) throw ConfigError("config key " + where(key) + " has a non-integer entry");
    out.push_back(v);
  }
  return out;
}

void KeyValueConfig::require_known(const std::vector<std::string>& known) const {
  for (const auto& [key, value] : values_) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown config key " + where(key));
    }
  }
}

}  // namespace graspfs
