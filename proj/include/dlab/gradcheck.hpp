#pragma once

// Central finite-difference checks for every analytic gradient in kdcore and
// the projector velocity of the dynamics module.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dlab/matrix.hpp"

namespace dlab::gc {

using ScalarFn = std::function<double(const Matrix&)>;

// d f / d x by central differences, one entry at a time.
Matrix numeric_gradient(const ScalarFn& f, const Matrix& x, double h = 1e-6);

// |a - n| / max(|a|, |n|) in Frobenius norm; the absolute difference when
// both norms are below 1e-12.
double relative_error(const Matrix& analytic, const Matrix& numeric);

struct ComponentReport {
  std::string name;
  std::size_t instances = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;

  bool pass() const { return max_rel_error <= tolerance; }
};

struct SuiteOptions {
  std::size_t instances = 20;
  double tolerance = 1e-5;
  std::size_t velocity_instances = 50;
  double velocity_tolerance = 1e-6;
  double h = 1e-6;
  std::uint64_t seed = 0;
};

// Components, in report order:
//   normalize_vjp/{none,l2_row,batch,group}
//   distance_grad/{frobenius,logsum1,logsum2,logsum3,logsum4,logsum4.7,logsum5,logsumexp}
//   project/{linear,mlp3}, task_loss, distill_loss, projector_velocity
std::vector<ComponentReport> run_suite(const SuiteOptions& opts = {});

// Names of the components run_suite reports.
std::vector<std::string> component_names();

}  // namespace dlab::gc
