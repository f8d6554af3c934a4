#include <algorithm>
#include <cmath>

#include "dlab/error.hpp"
#include "dlab/linalg.hpp"
#include "dlab/trainlab.hpp"

namespace dlab::lab {

namespace {

using json = nlohmann::ordered_json;

eq::TokenBatch gaussian_tokens(const EquivarianceSpec& s, std::size_t batch, Rng& rng) {
  eq::TokenBatch x = eq::TokenBatch::zeros(batch, s.channels, s.prefix, s.grid_h, s.grid_w);
  for (double& v : x.data) v = rng.normal();
  return x;
}

eq::TokenBatch select_samples(const eq::TokenBatch& x, const std::vector<std::size_t>& idx) {
  eq::TokenBatch out = eq::TokenBatch::zeros(idx.size(), x.channels, x.prefix, x.grid_h, x.grid_w);
  for (std::size_t i = 0; i < idx.size(); ++i) out.set_sample(i, x.sample(idx[i]));
  return out;
}

// Spatial tokens as (batch * H * W) x C rows.
Matrix spatial_rows(const eq::TokenBatch& x) {
  const std::size_t cells = x.grid_h * x.grid_w;
  Matrix out(x.batch * cells, x.channels);
  for (std::size_t b = 0; b < x.batch; ++b)
    for (std::size_t s = 0; s < cells; ++s)
      for (std::size_t c = 0; c < x.channels; ++c) out(b * cells + s, c) = x.at(b, x.prefix + s, c);
  return out;
}

// Mean of the spatial tokens of each sample: batch x C.
Matrix pooled(const eq::TokenBatch& x) {
  const std::size_t cells = x.grid_h * x.grid_w;
  Matrix out(x.batch, x.channels);
  for (std::size_t b = 0; b < x.batch; ++b)
    for (std::size_t s = 0; s < cells; ++s)
      for (std::size_t c = 0; c < x.channels; ++c) out(b, c) += x.at(b, x.prefix + s, c) / static_cast<double>(cells);
  return out;
}

std::vector<std::size_t> argmax_rows(const Matrix& m) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    out.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return out;
}

void sgd(Matrix& p, const Matrix& g, double lr) { p -= g * lr; }

}  // namespace

json to_json(const EquivarianceSpec& s) {
  json j;
  j["channels"] = s.channels;
  j["grid_h"] = s.grid_h;
  j["grid_w"] = s.grid_w;
  j["prefix"] = s.prefix;
  j["classes"] = s.classes;
  j["kernel_radius"] = s.kernel_radius;
  j["train_size"] = s.train_size;
  j["batch_size"] = s.batch_size;
  j["steps"] = s.steps;
  j["learning_rate"] = s.learning_rate;
  j["pos_bias_scale"] = s.pos_bias_scale;
  j["norm"] = kd::to_string(s.norm.kind);
  j["distance"] = {{"kind", kd::to_string(s.distance.kind)}, {"alpha", s.distance.alpha}};
  j["distill_weight"] = s.distill_weight;
  j["eval_batches"] = s.eval_batches;
  j["eval_batch_size"] = s.eval_batch_size;
  return j;
}

EquivarianceTask EquivarianceTask::generate(const EquivarianceSpec& spec, std::uint64_t seed) {
  Rng model_rng = Rng(seed).fork(11);
  const std::size_t side = 2 * spec.kernel_radius + 1;
  std::vector<Matrix> kernels;
  const double kscale = 1.0 / std::sqrt(static_cast<double>(spec.channels * side * side));
  for (std::size_t i = 0; i < side * side; ++i) kernels.push_back(model_rng.gaussian(spec.channels, spec.channels, kscale));
  EquivarianceTask t{spec,
                     eq::ConvMixerMap(spec.kernel_radius, std::move(kernels)),
                     model_rng.gaussian(spec.channels, spec.classes, 1.0),
                     {},
                     {},
                     {},
                     {}};
  Rng data_rng = Rng(seed).fork(12);
  t.train_x = gaussian_tokens(spec, spec.train_size, data_rng);
  t.train_labels = argmax_rows(matmul(pooled(t.teacher.apply(t.train_x)), t.teacher_head));
  for (std::size_t i = 0; i < spec.eval_batches; ++i) {
    t.eval_xs.push_back(gaussian_tokens(spec, spec.eval_batch_size, data_rng));
    t.eval_labels.push_back(argmax_rows(matmul(pooled(t.teacher.apply(t.eval_xs.back())), t.teacher_head)));
  }
  return t;
}

EquivarianceStudent init_equivariance_student(const EquivarianceSpec& spec, Rng& rng) {
  const std::size_t c = spec.channels;
  const std::size_t n = spec.prefix + spec.grid_h * spec.grid_w;
  const double s = 1.0 / std::sqrt(static_cast<double>(c));
  EquivarianceStudent st;
  st.attention.wq = rng.gaussian(c, c, s);
  st.attention.wk = rng.gaussian(c, c, s);
  st.attention.wv = rng.gaussian(c, c, s);
  st.attention.pos_bias = rng.gaussian(n, n, spec.pos_bias_scale);
  st.attention.residual = true;
  st.head = rng.gaussian(c, spec.classes, s);
  st.projector = orthonormalize_columns(rng.gaussian(c, c));
  return st;
}

EquivarianceEval evaluate_equivariance(const EquivarianceStudent& s, const EquivarianceTask& task,
                                       const eq::TokenBatch& x, const std::vector<std::size_t>& labels,
                                       double distill_weight) {
  const eq::SelfAttentionMap student(s.attention);
  const eq::TokenBatch out = student.apply(x);
  const Matrix feats = pooled(out);
  const Matrix logits = matmul(feats, s.head);
  const auto task_res = kd::task_loss(logits, labels);

  const Matrix zs = spatial_rows(out);
  const Matrix zt = spatial_rows(task.teacher.apply(x));
  const auto proj = kd::ProjectorState::linear(s.projector);
  const auto dist = kd::distill_loss(zs, zt, proj, task.spec.norm, task.spec.distance);

  EquivarianceEval ev;
  ev.loss = kd::LossBreakdown::compose(task_res.loss, dist.loss, distill_weight);
  ev.head = matmul_tn(feats, task_res.grad_logits);
  ev.projector = dist.grad_layers.front() * distill_weight;

  const Matrix dfeat = matmul_nt(task_res.grad_logits, s.head);
  const std::size_t cells = x.grid_h * x.grid_w;
  eq::TokenBatch upstream = eq::TokenBatch::zeros(x.batch, x.channels, x.prefix, x.grid_h, x.grid_w);
  for (std::size_t b = 0; b < x.batch; ++b)
    for (std::size_t sidx = 0; sidx < cells; ++sidx)
      for (std::size_t c = 0; c < x.channels; ++c)
        upstream.at(b, x.prefix + sidx, c) =
            dfeat(b, c) / static_cast<double>(cells) + distill_weight * dist.grad_zs(b * cells + sidx, c);
  ev.attention = student.backward(x, upstream);
  return ev;
}

RunResult train_equivariance(const EquivarianceTask& task, std::uint64_t seed, double distill_weight,
                             EquivarianceStudent* final_student) {
  const EquivarianceSpec& spec = task.spec;
  if (spec.batch_size < 2 || spec.batch_size > spec.train_size) {
    throw PreconditionError("train_equivariance: batch size must be in [2, train_size]");
  }
  Rng init_rng = Rng(seed).fork(13);
  Rng order_rng = Rng(seed).fork(14);
  EquivarianceStudent st = init_equivariance_student(spec, init_rng);

  RunResult res;
  const std::size_t every = std::max<std::size_t>(1, spec.steps / 10);
  const eq::TokenBatch& probe = task.eval_xs.front();
  auto record = [&](std::size_t step) {
    const auto ev = evaluate_equivariance(st, task, probe, task.eval_labels.front(), distill_weight);
    const Matrix zs = spatial_rows(eq::SelfAttentionMap(st.attention).apply(probe));
    dyn::RecordOptions ropts;
    dyn::append_record(res.trajectory, step, ev.loss.total, zs, kd::ProjectorState::linear(st.projector), ropts);
    return ev;
  };
  auto eval_accuracy = [&]() {
    std::size_t hits = 0, total = 0;
    const eq::SelfAttentionMap student(st.attention);
    for (std::size_t i = 0; i < task.eval_xs.size(); ++i) {
      const auto pred = argmax_rows(matmul(pooled(student.apply(task.eval_xs[i])), st.head));
      for (std::size_t k = 0; k < pred.size(); ++k) hits += pred[k] == task.eval_labels[i][k];
      total += pred.size();
    }
    return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
  };

  res.init_accuracy = eval_accuracy();
  const std::size_t per_epoch = spec.train_size / spec.batch_size;
  std::vector<std::size_t> order;
  for (std::size_t t = 0; t < spec.steps; ++t) {
    if (t % every == 0) record(t);
    const std::size_t slot = t % per_epoch;
    if (slot == 0) order = order_rng.permutation(spec.train_size);
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(slot * spec.batch_size),
                                 order.begin() + static_cast<std::ptrdiff_t>((slot + 1) * spec.batch_size));
    std::vector<std::size_t> labels;
    for (auto i : idx) labels.push_back(task.train_labels[i]);
    const auto ev = evaluate_equivariance(st, task, select_samples(task.train_x, idx), labels, distill_weight);
    if (!std::isfinite(ev.loss.total)) throw NumericError("train_equivariance: non-finite loss at step " + std::to_string(t));
    sgd(st.attention.wq, ev.attention.wq, spec.learning_rate);
    sgd(st.attention.wk, ev.attention.wk, spec.learning_rate);
    sgd(st.attention.wv, ev.attention.wv, spec.learning_rate);
    sgd(st.attention.pos_bias, ev.attention.pos_bias, spec.learning_rate);
    sgd(st.head, ev.head, spec.learning_rate);
    sgd(st.projector, ev.projector, spec.learning_rate);
  }
  res.final_distill_loss = record(spec.steps).loss.distill_loss;
  res.accuracy = eval_accuracy();
  res.equivariance = eq::mu_t_suite(eq::SelfAttentionMap(st.attention), task.eval_xs, eq::unit_translations());
  if (final_student) *final_student = std::move(st);
  return res;
}

ExperimentOutcome experiment_equivariance(const std::vector<std::uint64_t>& seeds, const EquivarianceSpec& spec) {
  if (seeds.empty()) throw PreconditionError("experiment_equivariance: needs at least one seed");
  const std::vector<std::pair<std::string, double>> arms{{"task_only", 0.0}, {"distilled", spec.distill_weight}};
  const std::size_t cells = seeds.size() * arms.size();
  std::vector<ArmRun> runs(cells);
  std::vector<double> teacher_mu(seeds.size());
  std::vector<std::string> errors(cells);
  const auto n = static_cast<std::ptrdiff_t>(cells);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const auto seed = seeds[k / arms.size()];
    const auto& [arm, weight] = arms[k % arms.size()];
    try {
      const EquivarianceTask task = EquivarianceTask::generate(spec, seed);
      runs[k] = {seed, arm, train_equivariance(task, seed, weight)};
      if (k % arms.size() == 0) teacher_mu[k / arms.size()] = eq::mu_t_suite(task.teacher, task.eval_xs, eq::unit_translations()).mean;
    } catch (const std::exception& e) {
      errors[k] = arm + " seed " + std::to_string(seed) + ": " + e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw NumericError("experiment cell failed: " + e);

  ExperimentOutcome out{"equivariance", std::move(runs), {}};
  json per_seed = json::array();
  std::size_t lower = 0;
  double teacher_max = 0.0, sum_plain = 0.0, sum_dist = 0.0;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const auto& plain = *out.runs[s * 2].result.equivariance;
    const auto& dist = *out.runs[s * 2 + 1].result.equivariance;
    lower += dist.mean < plain.mean;
    teacher_max = std::max(teacher_max, teacher_mu[s]);
    sum_plain += plain.mean;
    sum_dist += dist.mean;
    per_seed.push_back({{"seed", seeds[s]},
                        {"teacher_mu", teacher_mu[s]},
                        {"task_only", {{"mean", plain.mean}, {"std", plain.std}, {"n", plain.n}}},
                        {"distilled", {{"mean", dist.mean}, {"std", dist.std}, {"n", dist.n}}},
                        {"task_only_accuracy", out.runs[s * 2].result.accuracy},
                        {"distilled_accuracy", out.runs[s * 2 + 1].result.accuracy}});
  }
  json& sm = out.summary;
  sm["experiment"] = "equivariance";
  sm["measure"] = "mean squared error between phi(Tx) and T phi(x) over spatial tokens, 8 unit circular shifts";
  sm["seeds"] = seeds.size();
  sm["per_seed"] = per_seed;
  sm["teacher_mu_max"] = teacher_max;
  sm["distilled_lower"] = lower;
  sm["mean_ratio_task_only_over_distilled"] = sum_dist > 0.0 ? sum_plain / sum_dist : 0.0;
  sm["pass"] = teacher_max <= 1e-12 && lower * 10 >= 8 * seeds.size();
  sm["config"] = to_json(spec);
  sm["note"] = "synthetic token task; grid, channels and optimizer settings are this lab's own choices";
  return out;
}

}  // namespace dlab::lab
