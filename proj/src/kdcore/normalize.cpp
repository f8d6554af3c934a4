#include <cmath>

#include "dlab/error.hpp"
#include "dlab/kdcore.hpp"
#include "dlab/kernels.hpp"

namespace dlab::kd {

namespace {

struct GroupStats {
  double mean;
  double inv_std;
};

// Mean and 1/sqrt(var + eps) pooled over all rows and columns [c0, c0 + width).
GroupStats pooled_stats(const Matrix& z, std::size_t c0, std::size_t width, double eps) {
  const double n = static_cast<double>(z.rows() * width);
  double mean = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r)
    for (std::size_t c = c0; c < c0 + width; ++c) mean += z(r, c);
  mean /= n;
  double var = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r)
    for (std::size_t c = c0; c < c0 + width; ++c) {
      const double d = z(r, c) - mean;
      var += d * d;
    }
  var /= n;
  return {mean, 1.0 / std::sqrt(var + eps)};
}

// Standardizes each block of `width` columns with pooled statistics.
Matrix standardize_blocks(const Matrix& z, std::size_t width, double eps) {
  Matrix y(z.rows(), z.cols());
  for (std::size_t c0 = 0; c0 < z.cols(); c0 += width) {
    const auto st = pooled_stats(z, c0, width, eps);
    for (std::size_t r = 0; r < z.rows(); ++r)
      for (std::size_t c = c0; c < c0 + width; ++c) y(r, c) = (z(r, c) - st.mean) * st.inv_std;
  }
  return y;
}

// dx = (g - mean(g) - y * mean(g*y)) / s over each pooled block.
Matrix standardize_blocks_vjp(const Matrix& z, std::size_t width, double eps, const Matrix& g) {
  Matrix dx(z.rows(), z.cols());
  for (std::size_t c0 = 0; c0 < z.cols(); c0 += width) {
    const auto st = pooled_stats(z, c0, width, eps);
    const double n = static_cast<double>(z.rows() * width);
    double mean_g = 0.0, mean_gy = 0.0;
    for (std::size_t r = 0; r < z.rows(); ++r)
      for (std::size_t c = c0; c < c0 + width; ++c) {
        const double y = (z(r, c) - st.mean) * st.inv_std;
        mean_g += g(r, c);
        mean_gy += g(r, c) * y;
      }
    mean_g /= n;
    mean_gy /= n;
    for (std::size_t r = 0; r < z.rows(); ++r)
      for (std::size_t c = c0; c < c0 + width; ++c) {
        const double y = (z(r, c) - st.mean) * st.inv_std;
        dx(r, c) = (g(r, c) - mean_g - y * mean_gy) * st.inv_std;
      }
  }
  return dx;
}

double row_norm(const Matrix& z, std::size_t r) {
  double s = 0.0;
  for (double v : z.row(r)) s += v * v;
  return std::sqrt(s);
}

}  // namespace

void NormScheme::validate(std::size_t batch, std::size_t dim) const {
  if (batch == 0 || dim == 0) throw ShapeError("normalize: empty input");
  if (kind == NormKind::batch || kind == NormKind::group) {
    if (!(epsilon > 0.0)) throw PreconditionError("normalize: epsilon must be > 0");
    if (batch < 2) throw PreconditionError("normalize: batch/group normalization needs a batch of at least 2 rows");
  }
  if (kind == NormKind::group) {
    if (groups == 0 || dim % groups != 0) {
      throw PreconditionError("normalize: " + std::to_string(groups) + " groups do not divide feature dimension " +
                              std::to_string(dim));
    }
  }
}

Matrix normalize(const Matrix& z, const NormScheme& scheme) {
  scheme.validate(z.rows(), z.cols());
  switch (scheme.kind) {
    case NormKind::none:
      return z;
    case NormKind::l2_row: {
      Matrix y = z;
      for (std::size_t r = 0; r < z.rows(); ++r) {
        const double n = row_norm(z, r);
        if (n < kRowNormFloor) continue;
        for (double& v : y.row(r)) v /= n;
      }
      return y;
    }
    case NormKind::batch: {
      Matrix y(z.rows(), z.cols());
      kernels::parallel::column_standardize(z.rows(), z.cols(), scheme.epsilon, z.data(), y.data());
      return y;
    }
    case NormKind::group:
      return standardize_blocks(z, z.cols() / scheme.groups, scheme.epsilon);
  }
  throw UnsupportedError("normalize: unknown scheme");
}

std::vector<std::size_t> degenerate_rows(const Matrix& z) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < z.rows(); ++r)
    if (row_norm(z, r) < kRowNormFloor) out.push_back(r);
  return out;
}

Matrix normalize_vjp(const Matrix& z, const NormScheme& scheme, const Matrix& upstream) {
  scheme.validate(z.rows(), z.cols());
  require_same_shape(z, upstream, "normalize_vjp");
  switch (scheme.kind) {
    case NormKind::none:
      return upstream;
    case NormKind::l2_row: {
      // d(x/|x|) = (g - y (y.g)) / |x|
      Matrix dx = upstream;
      for (std::size_t r = 0; r < z.rows(); ++r) {
        const double n = row_norm(z, r);
        if (n < kRowNormFloor) continue;
        auto zr = z.row(r);
        auto gr = upstream.row(r);
        double yg = 0.0;
        for (std::size_t c = 0; c < zr.size(); ++c) yg += zr[c] / n * gr[c];
        auto dr = dx.row(r);
        for (std::size_t c = 0; c < zr.size(); ++c) dr[c] = (gr[c] - zr[c] / n * yg) / n;
      }
      return dx;
    }
    case NormKind::batch:
      return standardize_blocks_vjp(z, 1, scheme.epsilon, upstream);
    case NormKind::group:
      return standardize_blocks_vjp(z, z.cols() / scheme.groups, scheme.epsilon, upstream);
  }
  throw UnsupportedError("normalize_vjp: unknown scheme");
}

}  // namespace dlab::kd
