#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dlab/matrix.hpp"

namespace dlab {

// Thin SVD m = U * diag(sigma) * V^T with k = min(rows, cols):
// U is rows x k, V is cols x k, sigma non-increasing.
struct SvdResult {
  std::vector<double> singular_values;
  Matrix left_vectors;
  Matrix right_vectors;
};

struct SvdOptions {
  int max_sweeps = 100;
  double tolerance = 1e-12;  // on |<a_p, a_q>| / (|a_p| |a_q|)
};

// One-sided (Hestenes) Jacobi SVD. Throws NumericError when the sweep cap is
// hit, reporting the largest remaining normalized off-diagonal inner product.
SvdResult svd(const Matrix& m, SvdOptions opts = {});

std::vector<double> singular_values(const Matrix& m);

// Number of singular values strictly above rel_tol * sigma_max.
std::size_t numerical_rank(const Matrix& m, double rel_tol = 1e-8);

// Orthonormal basis for the column space of m (rows >= cols, full column rank),
// via modified Gram-Schmidt with one re-orthogonalization pass.
Matrix orthonormalize_columns(const Matrix& m);

// Pearson correlation; 0 when either input has variance below 1e-24.
double pearson(std::span<const double> x, std::span<const double> y);

}  // namespace dlab
