#include <algorithm>
#include <cmath>

#include "dlab/error.hpp"
#include "dlab/linalg.hpp"
#include "dlab/trainlab.hpp"

namespace dlab::lab {

namespace {

std::size_t argmax_row(const Matrix& m, std::size_t r) {
  auto row = m.row(r);
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

Matrix rows_of(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) std::copy(m.row(idx[i]).begin(), m.row(idx[i]).end(), out.row(i).begin());
  return out;
}

void sgd(Matrix& p, const Matrix& g, double lr, double wd) {
  if (wd != 0.0) p *= 1.0 - wd;
  auto pd = p.data();
  auto gd = g.data();
  for (std::size_t i = 0; i < pd.size(); ++i) pd[i] -= lr * gd[i];
}

}  // namespace

ToyNet ToyNet::random(const std::vector<std::size_t>& dims, Rng& rng) {
  if (dims.size() < 2) throw InputError("toy net: need at least input and output dims");
  ToyNet net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    net.layers.push_back(rng.gaussian(dims[i], dims[i + 1], std::sqrt(2.0 / static_cast<double>(dims[i]))));
  }
  return net;
}

SyntheticTask SyntheticTask::generate(const TaskConfig& cfg, std::uint64_t seed) {
  SyntheticTask t;
  t.config = cfg;
  t.seed = seed;
  Rng model_rng = Rng(seed).fork(1);
  std::vector<std::size_t> dims{cfg.input_dim};
  dims.insert(dims.end(), cfg.teacher_hidden.begin(), cfg.teacher_hidden.end());
  dims.push_back(cfg.teacher_dim);
  t.teacher = ToyNet::random(dims, model_rng);
  if (cfg.teacher_scale_decay != 1.0) {
    Matrix& last = t.teacher.layers.back();
    for (std::size_t c = 0; c < last.cols(); ++c) {
      const double s = std::pow(cfg.teacher_scale_decay, static_cast<double>(c));
      for (std::size_t r = 0; r < last.rows(); ++r) last(r, c) *= s;
    }
  }
  t.teacher_head = model_rng.gaussian(cfg.teacher_dim, cfg.classes, 1.0 / std::sqrt(static_cast<double>(cfg.teacher_dim)));

  Rng data_rng = Rng(seed).fork(2);
  t.train_x = data_rng.gaussian(cfg.train_size, cfg.input_dim);
  t.test_x = data_rng.gaussian(cfg.test_size, cfg.input_dim);
  t.train_zt = t.teacher.forward(t.train_x);
  t.test_zt = t.teacher.forward(t.test_x);
  const Matrix train_logits = matmul(t.train_zt, t.teacher_head);
  const Matrix test_logits = matmul(t.test_zt, t.teacher_head);
  for (std::size_t r = 0; r < cfg.train_size; ++r) t.train_labels.push_back(argmax_row(train_logits, r));
  for (std::size_t r = 0; r < cfg.test_size; ++r) t.test_labels.push_back(argmax_row(test_logits, r));
  return t;
}

Batch gather(const SyntheticTask& task, const std::vector<std::size_t>& indices) {
  Batch b{rows_of(task.train_x, indices), rows_of(task.train_zt, indices), {}};
  for (std::size_t i : indices) b.labels.push_back(task.train_labels[i]);
  return b;
}

std::string ProjectorSpec::label() const {
  if (kind == ProjectorKind::linear) return "linear";
  return "mlp" + std::to_string(depth);
}

kd::ProjectorState make_projector(const ProjectorSpec& spec, std::size_t in, std::size_t out, Rng& rng) {
  if (spec.kind == ProjectorKind::linear) {
    if (spec.init == ProjectorInit::orthogonal) {
      // Semi-orthogonal: orthonormal columns if in >= out, orthonormal rows otherwise.
      const std::size_t tall = std::max(in, out);
      const std::size_t narrow = std::min(in, out);
      Matrix q = orthonormalize_columns(rng.gaussian(tall, narrow));
      return kd::ProjectorState::linear(in >= out ? q : q.transpose());
    }
    return kd::ProjectorState::linear(rng.gaussian(in, out, 1.0 / std::sqrt(static_cast<double>(in))));
  }
  if (spec.depth < 2) throw InputError("make_projector: an MLP projector needs depth >= 2");
  std::vector<std::size_t> dims{in};
  for (std::size_t i = 0; i + 1 < spec.depth; ++i) dims.push_back(spec.hidden);
  dims.push_back(out);
  return kd::ProjectorState::mlp(ToyNet::random(dims, rng).layers);
}

void ExperimentSpec::validate() const {
  if (task.train_size < batch_size) throw PreconditionError("experiment: training pool smaller than a batch");
  if (batch_size < 2) throw PreconditionError("experiment: batch size must be at least 2");
  if (student_dim == 0 || task.teacher_dim == 0) throw InputError("experiment: feature dims must be positive");
  if (projector.kind == ProjectorKind::mlp && projector.depth < 2) throw InputError("experiment: MLP depth must be >= 2");
  if (record_every == 0) throw InputError("experiment: record_every must be positive");
  if (!(learning_rate >= 0.0) || !(weight_decay >= 0.0)) throw InputError("experiment: negative optimizer setting");
  norm.validate(batch_size, task.teacher_dim);
  distance.validate();
}

StudentModel init_student(const ExperimentSpec& spec, Rng& rng) {
  std::vector<std::size_t> dims{spec.task.input_dim};
  dims.insert(dims.end(), spec.student_hidden.begin(), spec.student_hidden.end());
  dims.push_back(spec.student_dim);
  StudentModel m;
  m.backbone = ToyNet::random(dims, rng);
  m.head = rng.gaussian(spec.student_dim, spec.task.classes, 1.0 / std::sqrt(static_cast<double>(spec.student_dim)));
  m.projector = make_projector(spec.projector, spec.student_dim, spec.task.teacher_dim, rng);
  return m;
}

Evaluation evaluate(const StudentModel& model, const Batch& batch, const ExperimentSpec& spec) {
  const Matrix zs = model.backbone.forward(batch.x);
  const Matrix logits = matmul(zs, model.head);
  const auto task = kd::task_loss(logits, batch.labels);
  const auto dist = kd::distill_loss(zs, batch.zt, model.projector, spec.norm, spec.distance, spec.placement);

  Evaluation ev;
  ev.raw_distill = dist.loss;
  ev.loss = kd::LossBreakdown::compose(task.loss, dist.loss, spec.distill_weight);
  ev.grad.head = matmul_tn(zs, task.grad_logits);
  Matrix dzs = matmul_nt(task.grad_logits, model.head);
  dzs += dist.grad_zs * spec.distill_weight;
  ev.grad.projector = dist.grad_layers;
  for (auto& g : ev.grad.projector) g *= spec.distill_weight;
  ev.grad.backbone = kd::relu_stack_vjp(batch.x, model.backbone.layers, dzs).grad_layers;
  return ev;
}

double accuracy(const StudentModel& model, const Matrix& x, const std::vector<std::size_t>& labels) {
  const Matrix logits = matmul(model.backbone.forward(x), model.head);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) hits += argmax_row(logits, r) == labels[r];
  return labels.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(labels.size());
}

TrainOutput train(const ExperimentSpec& spec, std::uint64_t seed, const SyntheticTask& task) {
  spec.validate();
  Rng init_rng = Rng(seed).fork(3);
  Rng order_rng = Rng(seed).fork(4);

  TrainOutput out;
  StudentModel& model = out.model;
  model = init_student(spec, init_rng);

  const std::size_t probe_rows = std::min(spec.batch_size, task.test_x.rows());
  std::vector<std::size_t> probe_idx(probe_rows);
  for (std::size_t i = 0; i < probe_rows; ++i) probe_idx[i] = i;
  const Matrix probe_x = rows_of(task.test_x, probe_idx);
  const Matrix probe_zt = rows_of(task.test_zt, probe_idx);

  dyn::RecordOptions ropts;
  ropts.every = spec.record_every;
  auto record = [&](std::size_t step) {
    const Matrix zs = model.backbone.forward(probe_x);
    const double d = kd::distill_loss(zs, probe_zt, model.projector, spec.norm, spec.distance, spec.placement).loss;
    dyn::append_record(out.result.trajectory, step, d, zs, model.projector, ropts);
    return d;
  };

  out.result.init_accuracy = accuracy(model, task.test_x, task.test_labels);

  const std::size_t per_epoch = task.train_x.rows() / spec.batch_size;
  std::vector<std::size_t> order;
  for (std::size_t t = 0; t < spec.steps; ++t) {
    if (t % spec.record_every == 0) record(t);
    const std::size_t slot = t % per_epoch;
    if (slot == 0) order = order_rng.permutation(task.train_x.rows());
    const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(slot * spec.batch_size),
                                       order.begin() + static_cast<std::ptrdiff_t>((slot + 1) * spec.batch_size));
    const Evaluation ev = evaluate(model, gather(task, idx), spec);
    if (!std::isfinite(ev.loss.total)) {
      throw NumericError("train: loss became non-finite at step " + std::to_string(t));
    }
    for (std::size_t l = 0; l < model.backbone.layers.size(); ++l)
      sgd(model.backbone.layers[l], ev.grad.backbone[l], spec.learning_rate, spec.weight_decay);
    sgd(model.head, ev.grad.head, spec.learning_rate, spec.weight_decay);
    for (std::size_t l = 0; l < model.projector.layers.size(); ++l)
      sgd(model.projector.layers[l], ev.grad.projector[l], spec.learning_rate, spec.weight_decay);
  }
  out.result.final_distill_loss = record(spec.steps);
  out.result.accuracy = accuracy(model, task.test_x, task.test_labels);
  return out;
}

RunResult train(const ExperimentSpec& spec, std::uint64_t seed) {
  const SyntheticTask task = SyntheticTask::generate(spec.task, seed);
  return train(spec, seed, task).result;
}

}  // namespace dlab::lab
