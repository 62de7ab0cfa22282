#include "qeadapt/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

namespace qea {

namespace {

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string &s) {
  std::string t = s;
  for (char &c : t)
    if (c == ',')
      c = ' ';
  std::istringstream ss(t);
  std::vector<std::string> out;
  std::string item;
  while (ss >> item)
    out.push_back(item);
  return out;
}

double to_double(const std::string &key, const std::string &v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos == v.size())
      return d;
  } catch (const std::exception &) {
  }
  fail("config", "key '" + key + "': expected a number, got '" + v + "'");
}

long long to_integer(const std::string &key, const std::string &v) {
  long long x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  require(ec == std::errc() && p == v.data() + v.size(), "config",
          "key '" + key + "': expected an integer, got '" + v + "'");
  return x;
}

} // namespace

Config Config::parse(std::istream &in, const std::string &origin) {
  Config c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos)
      line.erase(h);
    line = trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, "config", origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    require(!key.empty(), "config", origin + ":" + std::to_string(lineno) + ": empty key");
    c.values_[key] = trim(line.substr(eq + 1));
  }
  return c;
}

Config Config::load(const std::string &path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "io", "cannot open config file " + path);
  return parse(in, path);
}

void Config::merge(const Config &other) {
  for (const auto &[k, v] : other.values_)
    values_[k] = v;
}

std::string Config::get(const std::string &key, const std::string &fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string &key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : to_double(key, it->second);
}

int Config::get_int(const std::string &key, int fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : static_cast<int>(to_integer(key, it->second));
}

std::uint64_t Config::get_u64(const std::string &key, std::uint64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end())
    return fallback;
  const long long v = to_integer(key, it->second);
  require(v >= 0, "config", "key '" + key + "' must be non-negative");
  return static_cast<std::uint64_t>(v);
}

bool Config::get_bool(const std::string &key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end())
    return fallback;
  const auto &v = it->second;
  if (v == "1" || v == "true" || v == "yes" || v == "on")
    return true;
  if (v == "0" || v == "false" || v == "no" || v == "off")
    return false;
  fail("config", "key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<double> Config::get_doubles(const std::string &key, const std::vector<double> &fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end())
    return fallback;
  std::vector<double> out;
  for (const auto &s : split_list(it->second))
    out.push_back(to_double(key, s));
  require(!out.empty(), "config", "key '" + key + "' must list at least one value");
  return out;
}

std::vector<int> Config::get_ints(const std::string &key, const std::vector<int> &fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end())
    return fallback;
  std::vector<int> out;
  for (const auto &s : split_list(it->second))
    out.push_back(static_cast<int>(to_integer(key, s)));
  require(!out.empty(), "config", "key '" + key + "' must list at least one value");
  return out;
}

} // namespace qea
