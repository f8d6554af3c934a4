#include "dlab/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dlab::kernels {

namespace {

inline void gemm_nn_rows(GemmShape s, const double* a, const double* b, double* c, std::size_t i) {
  double* ci = c + i * s.n;
  for (std::size_t j = 0; j < s.n; ++j) ci[j] = 0.0;
  const double* ai = a + i * s.k;
  for (std::size_t p = 0; p < s.k; ++p) {
    const double aip = ai[p];
    const double* bp = b + p * s.n;
    for (std::size_t j = 0; j < s.n; ++j) ci[j] += aip * bp[j];
  }
}

inline void gemm_tn_rows(GemmShape s, const double* a, const double* b, double* c, std::size_t i) {
  double* ci = c + i * s.n;
  for (std::size_t j = 0; j < s.n; ++j) ci[j] = 0.0;
  for (std::size_t p = 0; p < s.k; ++p) {
    const double api = a[p * s.m + i];
    const double* bp = b + p * s.n;
    for (std::size_t j = 0; j < s.n; ++j) ci[j] += api * bp[j];
  }
}

inline void gemm_nt_rows(GemmShape s, const double* a, const double* b, double* c, std::size_t i) {
  const double* ai = a + i * s.k;
  for (std::size_t j = 0; j < s.n; ++j) {
    const double* bj = b + j * s.k;
    double acc = 0.0;
    for (std::size_t p = 0; p < s.k; ++p) acc += ai[p] * bj[p];
    c[i * s.n + j] = acc;
  }
}

inline void standardize_col(std::size_t rows, std::size_t cols, double eps, const double* x, double* y,
                            std::size_t j) {
  double mean = 0.0;
  for (std::size_t i = 0; i < rows; ++i) mean += x[i * cols + j];
  mean /= static_cast<double>(rows);
  double var = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    const double d = x[i * cols + j] - mean;
    var += d * d;
  }
  var /= static_cast<double>(rows);
  const double inv = 1.0 / std::sqrt(var + eps);
  for (std::size_t i = 0; i < rows; ++i) y[i * cols + j] = (x[i * cols + j] - mean) * inv;
}

bool worth_parallel(GemmShape s) { return s.m > 1 && s.m * s.n * s.k >= kParallelThreshold; }

}  // namespace

namespace serial {

void gemm_nn(GemmShape s, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  for (std::size_t i = 0; i < s.m; ++i) gemm_nn_rows(s, a.data(), b.data(), c.data(), i);
}

void gemm_tn(GemmShape s, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  for (std::size_t i = 0; i < s.m; ++i) gemm_tn_rows(s, a.data(), b.data(), c.data(), i);
}

void gemm_nt(GemmShape s, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  for (std::size_t i = 0; i < s.m; ++i) gemm_nt_rows(s, a.data(), b.data(), c.data(), i);
}

void column_standardize(std::size_t rows, std::size_t cols, double eps, std::span<const double> x,
                        std::span<double> y) {
  for (std::size_t j = 0; j < cols; ++j) standardize_col(rows, cols, eps, x.data(), y.data(), j);
}

}  // namespace serial

namespace parallel {

void gemm_nn(GemmShape s, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  const auto m = static_cast<std::ptrdiff_t>(s.m);
#pragma omp parallel for schedule(static) if (worth_parallel(s))
  for (std::ptrdiff_t i = 0; i < m; ++i)
    gemm_nn_rows(s, a.data(), b.data(), c.data(), static_cast<std::size_t>(i));
}

void gemm_tn(GemmShape s, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  const auto m = static_cast<std::ptrdiff_t>(s.m);
#pragma omp parallel for schedule(static) if (worth_parallel(s))
  for (std::ptrdiff_t i = 0; i < m; ++i)
    gemm_tn_rows(s, a.data(), b.data(), c.data(), static_cast<std::size_t>(i));
}

void gemm_nt(GemmShape s, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  const auto m = static_cast<std::ptrdiff_t>(s.m);
#pragma omp parallel for schedule(static) if (worth_parallel(s))
  for (std::ptrdiff_t i = 0; i < m; ++i)
    gemm_nt_rows(s, a.data(), b.data(), c.data(), static_cast<std::size_t>(i));
}

void column_standardize(std::size_t rows, std::size_t cols, double eps, std::span<const double> x,
                        std::span<double> y) {
  const auto n = static_cast<std::ptrdiff_t>(cols);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelThreshold)
  for (std::ptrdiff_t j = 0; j < n; ++j)
    standardize_col(rows, cols, eps, x.data(), y.data(), static_cast<std::size_t>(j));
}

}  // namespace parallel

int configure_threads() {
#ifdef _OPENMP
  if (const char* env = std::getenv("DLAB_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) omp_set_num_threads(n);
    } catch (const std::exception&) {
      // unparsable value: keep the runtime default
    }
  }
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace dlab::kernels
