#pragma once

// Feature distillation loss kernel: normalization, projector, distance,
// combined objective and the analytic backward pass of each piece.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dlab/matrix.hpp"

namespace dlab::kd {

enum class NormKind { none, l2_row, batch, group };

struct NormScheme {
  NormKind kind = NormKind::none;
  std::size_t groups = 4;  // group kind only; must divide the feature dimension
  double epsilon = 1e-4;   // batch and group kinds; no affine parameters

  static NormScheme none() { return {}; }
  static NormScheme l2_row() { return {NormKind::l2_row}; }
  static NormScheme batch(double eps = 1e-4) { return {NormKind::batch, 4, eps}; }
  static NormScheme group(std::size_t g = 4, double eps = 1e-4) { return {NormKind::group, g, eps}; }

  // Throws PreconditionError/ShapeError if the scheme cannot apply to a
  // batch x dim input.
  void validate(std::size_t batch, std::size_t dim) const;
};

// Rows whose Euclidean norm falls below this are left untouched by l2_row.
inline constexpr double kRowNormFloor = 1e-12;

Matrix normalize(const Matrix& z, const NormScheme& scheme);
// Indices of the rows l2_row leaves unchanged (norm below kRowNormFloor).
std::vector<std::size_t> degenerate_rows(const Matrix& z);
// upstream^T * d normalize(z) / dz, including the mean/variance terms.
Matrix normalize_vjp(const Matrix& z, const NormScheme& scheme, const Matrix& upstream);

enum class DistanceKind { frobenius, logsum, logsumexp };

struct DistanceSpec {
  DistanceKind kind = DistanceKind::frobenius;
  double alpha = 4.0;   // logsum exponent
  double tau = 1.0;     // logsumexp temperature
  double floor = 1e-12;

  static DistanceSpec frobenius() { return {}; }
  static DistanceSpec logsum(double alpha) { return {DistanceKind::logsum, alpha}; }
  static DistanceSpec logsumexp(double tau) { return {DistanceKind::logsumexp, 4.0, tau}; }

  void validate() const;
};

// frobenius: 0.5 * |a - b|_F^2
// logsum:    log(sum_i |a - b|_i^alpha + floor)
// logsumexp: tau * log(sum_i exp(|a - b|_i / tau))
double distance(const Matrix& a, const Matrix& b, const DistanceSpec& spec);
// d distance / d a.
Matrix distance_grad(const Matrix& a, const Matrix& b, const DistanceSpec& spec);

enum class Activation { relu };

// Bias-free projector: a single weight matrix (linear) or a ReLU MLP stack.
struct ProjectorState {
  std::vector<Matrix> layers;
  Activation activation = Activation::relu;

  static ProjectorState linear(Matrix w);
  static ProjectorState mlp(std::vector<Matrix> layers);

  bool is_linear() const { return layers.size() == 1; }
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  // Checks the dimension chain.
  void validate() const;
};

inline constexpr std::size_t kDefaultHiddenWidth = 1024;

Matrix project(const Matrix& zs, const ProjectorState& p);

// Forward/backward of a bias-free stack x -> W0 -> relu -> W1 -> ... -> W_last.
// The projector and the lab's toy networks share this structure.
Matrix relu_stack_forward(const Matrix& x, std::span<const Matrix> layers);

struct ProjectorGrad {
  Matrix grad_input;
  std::vector<Matrix> grad_layers;
};
// Backward pass of project() for the given upstream gradient.
ProjectorGrad project_vjp(const Matrix& zs, const ProjectorState& p, const Matrix& upstream);
ProjectorGrad relu_stack_vjp(const Matrix& x, std::span<const Matrix> layers, const Matrix& upstream);

// Where normalization is applied relative to the projector.
//   joint:          D(norm(project(zs)), norm(zt))    -- canonical
//   teacher_only:   D(project(zs), norm(zt))
//   pre_projection: D(project(norm(zs)), norm(zt))
enum class NormPlacement { joint, teacher_only, pre_projection };

struct DistillResult {
  double loss = 0.0;
  Matrix grad_zs;
  std::vector<Matrix> grad_layers;
};

DistillResult distill_loss(const Matrix& zs, const Matrix& zt, const ProjectorState& p, const NormScheme& norm,
                           const DistanceSpec& spec, NormPlacement placement = NormPlacement::joint);

struct TaskLossResult {
  double loss = 0.0;
  Matrix grad_logits;
};

// Mean softmax cross-entropy over the batch.
TaskLossResult task_loss(const Matrix& logits, const std::vector<std::size_t>& labels);

struct LossBreakdown {
  double task_loss = 0.0;
  double distill_loss = 0.0;  // already multiplied by the distillation weight
  double total = 0.0;

  static LossBreakdown compose(double task, double distill, double weight = 1.0) {
    const double d = weight * distill;
    return {task, d, task + d};
  }
};

std::string to_string(NormKind k);
std::string to_string(DistanceKind k);
std::string to_string(NormPlacement p);
NormKind parse_norm_kind(const std::string& s);
DistanceKind parse_distance_kind(const std::string& s);
NormPlacement parse_norm_placement(const std::string& s);

}  // namespace dlab::kd
