#include "qeadapt/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qea::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::int64_t kParallelWork = 1 << 15;

inline void softmax_row(double *r, std::size_t n) {
  double mx = r[0];
  for (std::size_t j = 1; j < n; ++j)
    mx = std::max(mx, r[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    r[j] = std::exp(r[j] - mx);
    sum += r[j];
  }
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < n; ++j)
    r[j] *= inv;
}

} // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm_abt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
              std::size_t n, std::size_t k, bool accumulate) {
  const double *A = a.data();
  const double *B = b.data();
  double *C = c.data();
  const auto rows = static_cast<std::int64_t>(m);
  const bool par = static_cast<std::int64_t>(m * n * k) >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < rows; ++i) {
    const double *ai = A + i * k;
    double *ci = C + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double *bj = B + j * k;
      double s = accumulate ? ci[j] : 0.0;
      for (std::size_t t = 0; t < k; ++t)
        s += ai[t] * bj[t];
      ci[j] = s;
    }
  }
}

void gemm_atb(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
              std::size_t n, std::size_t k, bool accumulate) {
  const double *A = a.data();
  const double *B = b.data();
  double *C = c.data();
  const auto outer = static_cast<std::int64_t>(n);
  const bool par = static_cast<std::int64_t>(m * n * k) >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t j = 0; j < outer; ++j) {
    double *cj = C + j * k;
    if (!accumulate)
      std::fill(cj, cj + k, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double aij = A[i * n + j];
      const double *bi = B + i * k;
      for (std::size_t t = 0; t < k; ++t)
        cj[t] += aij * bi[t];
    }
  }
}

void gemm_ab(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t n, std::size_t k, bool accumulate) {
  const double *A = a.data();
  const double *B = b.data();
  double *C = c.data();
  const auto rows = static_cast<std::int64_t>(m);
  const bool par = static_cast<std::int64_t>(m * n * k) >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < rows; ++i) {
    double *ci = C + i * k;
    if (!accumulate)
      std::fill(ci, ci + k, 0.0);
    const double *ai = A + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double aij = ai[j];
      const double *bj = B + j * k;
      for (std::size_t t = 0; t < k; ++t)
        ci[t] += aij * bj[t];
    }
  }
}

void softmax_rows(std::span<double> x, std::size_t m, std::size_t n) {
  double *X = x.data();
  const auto rows = static_cast<std::int64_t>(m);
  const bool par = static_cast<std::int64_t>(m * n) * 16 >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < rows; ++i)
    softmax_row(X + i * n, n);
}

void sigmoid(std::span<double> x) {
  double *X = x.data();
  const auto len = static_cast<std::int64_t>(x.size());
  const bool par = len * 16 >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < len; ++i)
    X[i] = 1.0 / (1.0 + std::exp(-X[i]));
}

void add_row_bias(std::span<double> x, std::span<const double> bias, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double *r = x.data() + i * n;
    for (std::size_t j = 0; j < n; ++j)
      r[j] += bias[j];
  }
}

void column_sums(std::span<const double> x, std::span<double> out, std::size_t m, std::size_t n,
                 bool accumulate) {
  if (!accumulate)
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double *r = x.data() + i * n;
    for (std::size_t j = 0; j < n; ++j)
      out[j] += r[j];
  }
}

namespace reference {

void gemm_abt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
              std::size_t n, std::size_t k, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t t = 0; t < k; ++t)
        s += a[i * k + t] * b[j * k + t];
      c[i * n + j] = s;
    }
}

void gemm_atb(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
              std::size_t n, std::size_t k, bool accumulate) {
  if (!accumulate)
    std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(n * k), 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t t = 0; t < k; ++t)
        c[j * k + t] += a[i * n + j] * b[i * k + t];
}

void gemm_ab(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t n, std::size_t k, bool accumulate) {
  if (!accumulate)
    std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(m * k), 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t t = 0; t < k; ++t)
        c[i * k + t] += a[i * n + j] * b[j * k + t];
}

void softmax_rows(std::span<double> x, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    softmax_row(x.data() + i * n, n);
}

void sigmoid(std::span<double> x) {
  for (double &v : x)
    v = 1.0 / (1.0 + std::exp(-v));
}

} // namespace reference

} // namespace qea::kernels
