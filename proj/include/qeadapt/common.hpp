#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qea {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

/// Error carrying a short machine-readable kind ("invalid_argument", "io",
/// "dimension", ...) next to the human message. The CLI prints both on one line.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string &message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string &kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

[[noreturn]] inline void fail(const char *kind, const std::string &message) {
  throw Error(kind, message);
}

inline void require(bool ok, const char *kind, const std::string &message) {
  if (!ok)
    fail(kind, message);
}

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double &operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix &) const = default;
};

/// splitmix64 finalizer; used to derive independent sub-seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(master);
  for (auto p : path)
    s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

/// FNV-1a over raw bytes; used for parameter fingerprints in tests and logs.
inline std::uint64_t fnv1a(const void *bytes, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto *p = static_cast<const unsigned char *>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

} // namespace qea
