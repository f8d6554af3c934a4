#include <algorithm>
#include <cmath>

#include "dlab/error.hpp"
#include "dlab/kdcore.hpp"

namespace dlab::kd {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// |r|^alpha via exp(alpha * ln|r|); magnitudes under the floor contribute 0.
double powered(double r, double alpha, double floor) {
  const double m = std::abs(r);
  if (m < floor) return 0.0;
  return std::exp(alpha * std::log(m));
}

double logsum_total(const Matrix& a, const Matrix& b, const DistanceSpec& spec) {
  double s = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) s += powered(ad[i] - bd[i], spec.alpha, spec.floor);
  return s;
}

}  // namespace

void DistanceSpec::validate() const {
  if (!(floor > 0.0)) throw InputError("distance: floor must be > 0");
  if (kind == DistanceKind::logsum && !(alpha > 0.0)) throw InputError("distance: logsum alpha must be > 0");
  if (kind == DistanceKind::logsumexp && !(tau > 0.0)) throw InputError("distance: logsumexp tau must be > 0");
}

double distance(const Matrix& a, const Matrix& b, const DistanceSpec& spec) {
  require_same_shape(a, b, "distance");
  spec.validate();
  switch (spec.kind) {
    case DistanceKind::frobenius:
      return 0.5 * squared_norm(a - b);
    case DistanceKind::logsum:
      return std::log(logsum_total(a, b, spec) + spec.floor);
    case DistanceKind::logsumexp: {
      const double m = max_abs_diff(a, b) / spec.tau;
      double s = 0.0;
      auto ad = a.data();
      auto bd = b.data();
      for (std::size_t i = 0; i < ad.size(); ++i) s += std::exp(std::abs(ad[i] - bd[i]) / spec.tau - m);
      return spec.tau * (m + std::log(s));
    }
  }
  throw UnsupportedError("distance: unknown kind");
}

Matrix distance_grad(const Matrix& a, const Matrix& b, const DistanceSpec& spec) {
  require_same_shape(a, b, "distance_grad");
  spec.validate();
  Matrix r = a - b;
  switch (spec.kind) {
    case DistanceKind::frobenius:
      return r;
    case DistanceKind::logsum: {
      const double denom = logsum_total(a, b, spec) + spec.floor;
      for (double& v : r.data()) {
        const double m = std::abs(v);
        v = m < spec.floor ? 0.0 : spec.alpha * std::exp((spec.alpha - 1.0) * std::log(m)) * sign(v) / denom;
      }
      return r;
    }
    case DistanceKind::logsumexp: {
      // softmax(|r| / tau) * sign(r)
      const double m = max_abs(r) / spec.tau;
      double s = 0.0;
      for (double v : r.data()) s += std::exp(std::abs(v) / spec.tau - m);
      for (double& v : r.data()) v = sign(v) * std::exp(std::abs(v) / spec.tau - m) / s;
      return r;
    }
  }
  throw UnsupportedError("distance_grad: unknown kind");
}

}  // namespace dlab::kd
