#pragma once

#include <cstddef>
#include <span>

// Dense kernels behind the acoustic model. The default namespace holds the
// OpenMP versions; `reference` holds plain serial loops kept for testing and
// benchmarking. Every output element is accumulated serially in the same
// order by both, so results are bitwise identical for any thread count.

namespace qea::kernels {

/// C[m x n] (+)= A[m x k] * B[n x k]^T
void gemm_abt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
              std::size_t n, std::size_t k, bool accumulate = false);

/// C[n x k] (+)= A[m x n]^T * B[m x k]
void gemm_atb(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
              std::size_t n, std::size_t k, bool accumulate = false);

/// C[m x k] (+)= A[m x n] * B[n x k]
void gemm_ab(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t n, std::size_t k, bool accumulate = false);

/// Row-wise softmax in place over an m x n block.
void softmax_rows(std::span<double> x, std::size_t m, std::size_t n);

/// Logistic sigmoid in place.
void sigmoid(std::span<double> x);

/// Adds `bias` (length n) to every row of an m x n block.
void add_row_bias(std::span<double> x, std::span<const double> bias, std::size_t m, std::size_t n);

/// Column sums of an m x n block into out (length n), accumulated row by row.
void column_sums(std::span<const double> x, std::span<double> out, std::size_t m, std::size_t n,
                 bool accumulate = false);

/// Number of threads the parallel kernels may use.
int max_threads();

namespace reference {

void gemm_abt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
              std::size_t n, std::size_t k, bool accumulate = false);
void gemm_atb(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
              std::size_t n, std::size_t k, bool accumulate = false);
void gemm_ab(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t n, std::size_t k, bool accumulate = false);
void softmax_rows(std::span<double> x, std::size_t m, std::size_t n);
void sigmoid(std::span<double> x);

} // namespace reference

} // namespace qea::kernels
