#include "axis/config.hpp"

#include <fstream>
#include <sstream>

namespace axis {

namespace {

std::string trim(const std::string& text) {
  const auto begin = text.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = text.find_last_not_of(" \t\r\n");
  return text.substr(begin, end - begin + 1);
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open config: " + path);
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_text(buffer.str());
}

Config Config::parse_text(const std::string& text) {
  Config cfg;
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::FormatError,
                  "config line " + std::to_string(line_no) + " has no '='");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw Error(ErrorCode::FormatError,
                  "config line " + std::to_string(line_no) + " has empty key");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

long Config::get_int(const std::string& key, long fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const long value = std::stol(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return value;
  } catch (const std::exception&) {
    throw Error(ErrorCode::FormatError, "config key " + key +
                                            " is not an integer: " + it->second);
  }
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double value = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return value;
  } catch (const std::exception&) {
    throw Error(ErrorCode::FormatError, "config key " + key +
                                            " is not a number: " + it->second);
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw Error(ErrorCode::FormatError,
              "config key " + key + " is not a bool: " + it->second);
}

std::uint64_t Config::get_seed(const std::string& key,
                               std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const unsigned long long value = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return value;
  } catch (const std::exception&) {
    throw Error(ErrorCode::FormatError,
                "config key " + key + " is not a seed: " + it->second);
  }
}

std::vector<std::size_t> Config::get_counts(
    const std::string& key, std::vector<std::size_t> fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::size_t> out;
  std::istringstream parts(it->second);
  std::string token;
  while (std::getline(parts, token, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long long value = std::stoull(trim(token), &used);
      if (used != trim(token).size()) throw std::invalid_argument(key);
      out.push_back(static_cast<std::size_t>(value));
    } catch (const std::exception&) {
      throw Error(ErrorCode::FormatError,
                  "config key " + key + " is not a count list: " + it->second);
    }
  }
  if (out.empty()) {
    throw Error(ErrorCode::FormatError, "config key " + key + " is empty");
  }
  return out;
}

}  // namespace axis
