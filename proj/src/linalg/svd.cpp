#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dlab/error.hpp"
#include "dlab/linalg.hpp"

namespace dlab {

namespace {

double row_dot(const Matrix& m, std::size_t p, std::size_t q) {
  auto a = m.row(p);
  auto b = m.row(q);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void rotate_rows(Matrix& m, std::size_t p, std::size_t q, double c, double s) {
  auto a = m.row(p);
  auto b = m.row(q);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    const double y = b[i];
    a[i] = c * x - s * y;
    b[i] = s * x + c * y;
  }
}

// SVD for a tall (rows >= cols) matrix. Works on the transpose so that the
// columns being orthogonalized are contiguous rows.
SvdResult svd_tall(const Matrix& m, const SvdOptions& opts) {
  const std::size_t rows = m.rows();
  const std::size_t n = m.cols();
  Matrix work = m.transpose();       // n x rows; row j is column j of m
  Matrix vt = Matrix::identity(n);   // row j is column j of V

  bool converged = n < 2;
  double worst = 0.0;
  for (int sweep = 0; sweep < opts.max_sweeps && !converged; ++sweep) {
    bool rotated = false;
    worst = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = row_dot(work, p, p);
        const double beta = row_dot(work, q, q);
        const double gamma = row_dot(work, p, q);
        if (alpha == 0.0 || beta == 0.0) continue;
        const double ratio = std::abs(gamma) / std::sqrt(alpha * beta);
        worst = std::max(worst, ratio);
        if (ratio <= opts.tolerance) continue;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate_rows(work, p, q, c, s);
        rotate_rows(vt, p, q, c, s);
        rotated = true;
      }
    }
    converged = !rotated;
  }
  if (!converged) {
    std::ostringstream os;
    os << "svd: no convergence after " << opts.max_sweeps
       << " sweeps; max normalized off-diagonal residual " << worst;
    throw NumericError(os.str());
  }

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) norms[j] = std::sqrt(row_dot(work, j, j));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

  SvdResult out;
  out.singular_values.resize(n);
  out.left_vectors = Matrix(rows, n);
  out.right_vectors = Matrix(n, n);
  const double sigma_max = n > 0 ? norms[order[0]] : 0.0;
  const double zero_cut = sigma_max * 1e-14;

  std::vector<bool> filled(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.singular_values[k] = norms[j];
    for (std::size_t i = 0; i < n; ++i) out.right_vectors(i, k) = vt(j, i);
    if (norms[j] > zero_cut && norms[j] > 0.0) {
      for (std::size_t i = 0; i < rows; ++i) out.left_vectors(i, k) = work(j, i) / norms[j];
      filled[k] = true;
    }
  }

  // Complete U for (numerically) zero singular values with unit vectors
  // orthogonal to everything already accepted.
  std::size_t probe = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (filled[k]) continue;
    while (probe < rows) {
      std::vector<double> v(rows, 0.0);
      v[probe++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t o = 0; o < n; ++o) {
          if (!filled[o]) continue;
          double proj = 0.0;
          for (std::size_t i = 0; i < rows; ++i) proj += out.left_vectors(i, o) * v[i];
          for (std::size_t i = 0; i < rows; ++i) v[i] -= proj * out.left_vectors(i, o);
        }
      }
      double nv = 0.0;
      for (double x : v) nv += x * x;
      nv = std::sqrt(nv);
      if (nv > 0.5) {
        for (std::size_t i = 0; i < rows; ++i) out.left_vectors(i, k) = v[i] / nv;
        filled[k] = true;
        break;
      }
    }
  }
  return out;
}

}  // namespace

SvdResult svd(const Matrix& m, SvdOptions opts) {
  require_finite(m, "svd input");
  if (m.rows() >= m.cols()) return svd_tall(m, opts);
  SvdResult t = svd_tall(m.transpose(), opts);
  std::swap(t.left_vectors, t.right_vectors);
  return t;
}

std::vector<double> singular_values(const Matrix& m) { return svd(m).singular_values; }

std::size_t numerical_rank(const Matrix& m, double rel_tol) {
  if (!(rel_tol > 0.0 && rel_tol < 1.0)) throw InputError("numerical_rank: rel_tol must be in (0,1)");
  const auto sv = singular_values(m);
  if (sv.empty() || sv.front() == 0.0) return 0;
  const double cut = rel_tol * sv.front();
  return static_cast<std::size_t>(std::count_if(sv.begin(), sv.end(), [&](double s) { return s > cut; }));
}

Matrix orthonormalize_columns(const Matrix& m) {
  if (m.rows() < m.cols()) throw ShapeError("orthonormalize_columns: need rows >= cols, got " + m.shape_string());
  Matrix q = m.transpose();  // rows of q are the vectors
  for (std::size_t j = 0; j < q.rows(); ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t o = 0; o < j; ++o) {
        const double proj = row_dot(q, o, j);
        auto qj = q.row(j);
        auto qo = q.row(o);
        for (std::size_t i = 0; i < qj.size(); ++i) qj[i] -= proj * qo[i];
      }
    }
    const double nrm = std::sqrt(row_dot(q, j, j));
    if (nrm < 1e-12) throw NumericError("orthonormalize_columns: input is column-rank deficient");
    for (double& v : q.row(j)) v /= nrm;
  }
  return q.transpose();
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ShapeError("pearson: length mismatch " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  }
  if (x.size() < 2) throw PreconditionError("pearson: need at least 2 samples");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx / n < 1e-24 || syy / n < 1e-24) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace dlab
