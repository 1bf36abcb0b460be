#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "axis/error.hpp"

namespace axis {

// Flat "key = value" text with # comments; no nesting.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_text(const std::string& text);

  bool contains(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  long get_int(const std::string& key, long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t get_seed(const std::string& key, std::uint64_t fallback) const;
  // Comma-separated integers, e.g. "1,2,3".
  std::vector<std::size_t> get_counts(const std::string& key,
                                      std::vector<std::size_t> fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace axis
