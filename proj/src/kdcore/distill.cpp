#include <cmath>

#include "dlab/error.hpp"
#include "dlab/kdcore.hpp"

namespace dlab::kd {

DistillResult distill_loss(const Matrix& zs, const Matrix& zt, const ProjectorState& p, const NormScheme& norm,
                           const DistanceSpec& spec, NormPlacement placement) {
  if (zs.rows() != zt.rows()) {
    throw ShapeError("distill_loss: student batch " + zs.shape_string() + " and teacher batch " +
                     zt.shape_string() + " differ in size");
  }
  const Matrix teacher = normalize(zt, norm);

  const bool pre = placement == NormPlacement::pre_projection;
  const bool post = placement == NormPlacement::joint;

  const Matrix student_in = pre ? normalize(zs, norm) : zs;
  const Matrix projected = project(student_in, p);
  const Matrix student = post ? normalize(projected, norm) : projected;
  if (student.cols() != teacher.cols()) {
    throw ShapeError("distill_loss: projected student " + student.shape_string() + " vs teacher " +
                     teacher.shape_string());
  }

  DistillResult out;
  out.loss = distance(student, teacher, spec);
  Matrix g = distance_grad(student, teacher, spec);
  if (post) g = normalize_vjp(projected, norm, g);
  ProjectorGrad pg = project_vjp(student_in, p, g);
  out.grad_layers = std::move(pg.grad_layers);
  out.grad_zs = pre ? normalize_vjp(zs, norm, pg.grad_input) : std::move(pg.grad_input);
  if (!std::isfinite(out.loss)) throw NumericError("distill_loss: non-finite loss");
  return out;
}

TaskLossResult task_loss(const Matrix& logits, const std::vector<std::size_t>& labels) {
  if (labels.size() != logits.rows()) {
    throw ShapeError("task_loss: " + std::to_string(labels.size()) + " labels for " + logits.shape_string() +
                     " logits");
  }
  if (logits.rows() == 0 || logits.cols() == 0) throw ShapeError("task_loss: empty logits");
  const double b = static_cast<double>(logits.rows());
  TaskLossResult out;
  out.grad_logits = Matrix(logits.rows(), logits.cols());
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    if (labels[r] >= logits.cols()) {
      throw InputError("task_loss: label " + std::to_string(labels[r]) + " at row " + std::to_string(r) +
                       " out of range [0, " + std::to_string(logits.cols()) + ")");
    }
    auto row = logits.row(r);
    double m = row[0];
    for (double v : row) m = std::max(m, v);
    double s = 0.0;
    for (double v : row) s += std::exp(v - m);
    const double lse = m + std::log(s);
    total += lse - row[labels[r]];
    auto gr = out.grad_logits.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) gr[c] = std::exp(row[c] - lse) / b;
    gr[labels[r]] -= 1.0 / b;
  }
  out.loss = total / b;
  return out;
}

std::string to_string(NormKind k) {
  switch (k) {
    case NormKind::none: return "none";
    case NormKind::l2_row: return "l2_row";
    case NormKind::batch: return "batch";
    case NormKind::group: return "group";
  }
  return "?";
}

std::string to_string(DistanceKind k) {
  switch (k) {
    case DistanceKind::frobenius: return "frobenius";
    case DistanceKind::logsum: return "logsum";
    case DistanceKind::logsumexp: return "logsumexp";
  }
  return "?";
}

std::string to_string(NormPlacement p) {
  switch (p) {
    case NormPlacement::joint: return "joint";
    case NormPlacement::teacher_only: return "teacher_only";
    case NormPlacement::pre_projection: return "pre_projection";
  }
  return "?";
}

NormKind parse_norm_kind(const std::string& s) {
  if (s == "none") return NormKind::none;
  if (s == "l2_row" || s == "l2") return NormKind::l2_row;
  if (s == "batch") return NormKind::batch;
  if (s == "group") return NormKind::group;
  throw InputError("unknown normalization '" + s + "'");
}

DistanceKind parse_distance_kind(const std::string& s) {
  if (s == "frobenius") return DistanceKind::frobenius;
  if (s == "logsum") return DistanceKind::logsum;
  if (s == "logsumexp") return DistanceKind::logsumexp;
  throw InputError("unknown distance '" + s + "'");
}

NormPlacement parse_norm_placement(const std::string& s) {
  if (s == "joint") return NormPlacement::joint;
  if (s == "teacher_only") return NormPlacement::teacher_only;
  if (s == "pre_projection") return NormPlacement::pre_projection;
  throw InputError("unknown normalization placement '" + s + "'");
}

}  // namespace dlab::kd
