#pragma once

#include "qeadapt/common.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace qea {

/// Flat `key = value` configuration. Later sets override earlier ones, so a
/// config file is loaded first and command-line flags are applied on top.
class Config {
public:
  static Config parse(std::istream &in, const std::string &origin = "<config>");
  static Config load(const std::string &path);

  void set(const std::string &key, const std::string &value) { values_[key] = value; }
  void merge(const Config &other);
  bool has(const std::string &key) const { return values_.count(key) != 0; }

  std::string get(const std::string &key, const std::string &fallback) const;
  double get_double(const std::string &key, double fallback) const;
  int get_int(const std::string &key, int fallback) const;
  std::uint64_t get_u64(const std::string &key, std::uint64_t fallback) const;
  bool get_bool(const std::string &key, bool fallback) const;
  /// Comma- or space-separated list.
  std::vector<double> get_doubles(const std::string &key, const std::vector<double> &fallback) const;
  std::vector<int> get_ints(const std::string &key, const std::vector<int> &fallback) const;

  const std::map<std::string, std::string> &values() const { return values_; }

private:
  std::map<std::string, std::string> values_;
};

} // namespace qea
