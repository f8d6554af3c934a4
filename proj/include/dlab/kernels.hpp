#pragma once

// Raw dense kernels. Every kernel exists twice: a plain serial loop nest that
// serves as the reference, and an OpenMP version that splits output rows
// across threads. Both accumulate each output entry in the same order, so the
// results are bitwise identical for any thread count.

#include <cstddef>
#include <span>

namespace dlab::kernels {

struct GemmShape {
  std::size_t m;  // rows of the output
  std::size_t n;  // cols of the output
  std::size_t k;  // contraction length
};

// Work (m*n*k) below which the parallel kernels run serially.
inline constexpr std::size_t kParallelThreshold = std::size_t{1} << 15;

namespace serial {

// c[m x n] = a[m x k] * b[k x n]
void gemm_nn(GemmShape s, std::span<const double> a, std::span<const double> b, std::span<double> c);
// c[m x n] = a[k x m]^T * b[k x n]
void gemm_tn(GemmShape s, std::span<const double> a, std::span<const double> b, std::span<double> c);
// c[m x n] = a[m x k] * b[n x k]^T
void gemm_nt(GemmShape s, std::span<const double> a, std::span<const double> b, std::span<double> c);

// Per-column standardization of x[rows x cols] with biased variance.
void column_standardize(std::size_t rows, std::size_t cols, double eps, std::span<const double> x,
                        std::span<double> y);

}  // namespace serial

namespace parallel {

void gemm_nn(GemmShape s, std::span<const double> a, std::span<const double> b, std::span<double> c);
void gemm_tn(GemmShape s, std::span<const double> a, std::span<const double> b, std::span<double> c);
void gemm_nt(GemmShape s, std::span<const double> a, std::span<const double> b, std::span<double> c);
void column_standardize(std::size_t rows, std::size_t cols, double eps, std::span<const double> x,
                        std::span<double> y);

}  // namespace parallel

// Number of worker threads the OpenMP runtime will use; honours DLAB_THREADS.
int configure_threads();

}  // namespace dlab::kernels
