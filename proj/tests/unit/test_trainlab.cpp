#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "dlab/error.hpp"
#include "dlab/trainlab.hpp"
#include "oracles.hpp"

using namespace dlab;
using namespace dlab::lab;

namespace {

ExperimentSpec tiny_spec() {
  ExperimentSpec s;
  s.task.input_dim = 6;
  s.task.classes = 3;
  s.task.teacher_hidden = {8};
  s.task.teacher_dim = 5;
  s.task.train_size = 32;
  s.task.test_size = 16;
  s.student_hidden = {7};
  s.student_dim = 4;
  s.batch_size = 8;
  s.steps = 20;
  s.record_every = 5;
  s.learning_rate = 0.05;
  return s;
}

// Checks every gradient block of evaluate() against central differences of the total loss.
void check_gradients(const ExperimentSpec& spec, std::uint64_t seed) {
  const SyntheticTask task = SyntheticTask::generate(spec.task, seed);
  Rng rng(seed + 100);
  const StudentModel m0 = init_student(spec, rng);
  const Batch batch = gather(task, {0, 3, 5, 7, 11, 13, 17, 19});
  const Evaluation ev = evaluate(m0, batch, spec);

  auto total = [&](auto&& edit) {
    return [&, edit](const Matrix& w) {
      StudentModel m = m0;
      edit(m) = w;
      return evaluate(m, batch, spec).loss.total;
    };
  };
  for (std::size_t l = 0; l < m0.backbone.layers.size(); ++l) {
    const auto f = total([l](StudentModel& m) -> Matrix& { return m.backbone.layers[l]; });
    CHECK(oracle::rel_err(ev.grad.backbone[l], oracle::fd_gradient(f, m0.backbone.layers[l])) <= 1e-5);
  }
  const auto fh = total([](StudentModel& m) -> Matrix& { return m.head; });
  CHECK(oracle::rel_err(ev.grad.head, oracle::fd_gradient(fh, m0.head)) <= 1e-5);
  for (std::size_t l = 0; l < m0.projector.layers.size(); ++l) {
    const auto f = total([l](StudentModel& m) -> Matrix& { return m.projector.layers[l]; });
    CHECK(oracle::rel_err(ev.grad.projector[l], oracle::fd_gradient(f, m0.projector.layers[l])) <= 1e-5);
  }
}

}  // namespace

TEST_CASE("synthetic task is reproducible and labelled by the teacher") {
  const ExperimentSpec s = tiny_spec();
  const SyntheticTask a = SyntheticTask::generate(s.task, 4), b = SyntheticTask::generate(s.task, 4);
  CHECK(a.train_x == b.train_x);
  CHECK(a.train_labels == b.train_labels);
  CHECK(!(a.train_x == SyntheticTask::generate(s.task, 5).train_x));
  CHECK(max_abs_diff(a.train_zt, a.teacher.forward(a.train_x)) == 0.0);
  const Matrix logits = oracle::matmul(a.train_zt, a.teacher_head);
  for (std::size_t r = 0; r < logits.rows(); ++r)
    for (std::size_t c = 0; c < logits.cols(); ++c) CHECK(logits(r, c) <= logits(r, a.train_labels[r]));
}

TEST_CASE("total loss gradient matches finite differences") {
  ExperimentSpec s = tiny_spec();
  s.distill_weight = 0.7;
  SUBCASE("linear, batch norm") { check_gradients(s, 1); }
  SUBCASE("mlp, l2_row, logsum") {
    s.projector.kind = ProjectorKind::mlp;
    s.projector.depth = 3;
    s.projector.hidden = 6;
    s.norm = kd::NormScheme::l2_row();
    s.distance = kd::DistanceSpec::logsum(4);
    check_gradients(s, 2);
  }
  SUBCASE("teacher-only placement") {
    s.placement = kd::NormPlacement::teacher_only;
    check_gradients(s, 3);
  }
}

TEST_CASE("gradients stay correct after training") {
  // Re-check at a trained checkpoint rather than only at initialization.
  const ExperimentSpec s = tiny_spec();
  const SyntheticTask task = SyntheticTask::generate(s.task, 6);
  const TrainOutput out = train(s, 6, task);
  const Batch batch = gather(task, {1, 2, 4, 8, 9, 10, 12, 14});
  const Evaluation ev = evaluate(out.model, batch, s);
  const auto fh = [&](const Matrix& w) {
    StudentModel m = out.model;
    m.projector.layers[0] = w;
    return evaluate(m, batch, s).loss.total;
  };
  CHECK(oracle::rel_err(ev.grad.projector[0], oracle::fd_gradient(fh, out.model.projector.layers[0])) <= 1e-5);
}

TEST_CASE("training is deterministic per seed") {
  const ExperimentSpec s = tiny_spec();
  const RunResult a = train(s, 7), b = train(s, 7), c = train(s, 8);
  CHECK(a.trajectory.to_csv() == b.trajectory.to_csv());
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.trajectory.to_csv() != c.trajectory.to_csv());
  CHECK(a.trajectory.steps == std::vector<std::size_t>{0, 5, 10, 15, 20});
  CHECK(a.trajectory.rank_bound_holds());
}

TEST_CASE("zero learning rate leaves the student untouched") {
  ExperimentSpec s = tiny_spec();
  s.learning_rate = 0.0;
  const SyntheticTask task = SyntheticTask::generate(s.task, 9);
  const TrainOutput out = train(s, 9, task);
  Rng rng = Rng(9).fork(3);
  const StudentModel init = init_student(s, rng);
  CHECK(out.model.head == init.head);
  CHECK(out.model.projector.layers == init.projector.layers);
  for (double l : out.result.trajectory.loss) CHECK(l == out.result.trajectory.loss.front());
  CHECK(out.result.accuracy == out.result.init_accuracy);
}

TEST_CASE("distillation lowers the distillation loss") {
  ExperimentSpec s = tiny_spec();
  s.steps = 200;
  s.record_every = 50;
  s.distill_weight = 1.0;
  const double distilled = train(s, 10).final_distill_loss;
  s.distill_weight = 0.0;
  const double task_only = train(s, 10).final_distill_loss;
  CHECK(distilled < task_only);
}

TEST_CASE("spec preconditions") {
  ExperimentSpec s = tiny_spec();
  s.batch_size = 1;
  CHECK_THROWS_AS(train(s, 0), PreconditionError);
  s = tiny_spec();
  s.batch_size = 64;
  CHECK_THROWS_AS(s.validate(), PreconditionError);
  s = tiny_spec();
  s.projector.kind = ProjectorKind::mlp;
  s.projector.depth = 1;
  CHECK_THROWS_AS(s.validate(), InputError);
  s = tiny_spec();
  s.record_every = 0;
  CHECK_THROWS_AS(s.validate(), InputError);
  CHECK(shrinkage_count({1.0, 0.5, 0.09, 0.0}) == 2);
  CHECK(shrinkage_count({1.0, 0.5, 0.09, 0.0}, 0.6) == 3);
}

TEST_CASE("equivariance student gradient matches finite differences") {
  EquivarianceSpec spec;
  spec.channels = 3;
  spec.grid_h = 3;
  spec.grid_w = 3;
  spec.prefix = 1;
  spec.classes = 3;
  spec.train_size = 8;
  spec.eval_batches = 1;
  spec.eval_batch_size = 4;
  const EquivarianceTask task = EquivarianceTask::generate(spec, 1);
  Rng rng(2);
  const EquivarianceStudent s0 = init_equivariance_student(spec, rng);
  const auto& x = task.eval_xs.front();
  const auto& y = task.eval_labels.front();
  const EquivarianceEval ev = evaluate_equivariance(s0, task, x, y, 0.6);

  auto total = [&](auto&& edit) {
    return [&, edit](const Matrix& w) {
      EquivarianceStudent s = s0;
      edit(s) = w;
      return evaluate_equivariance(s, task, x, y, 0.6).loss.total;
    };
  };
  CHECK(oracle::rel_err(ev.head, oracle::fd_gradient(total([](EquivarianceStudent& s) -> Matrix& { return s.head; }), s0.head)) <= 1e-5);
  CHECK(oracle::rel_err(ev.projector, oracle::fd_gradient(total([](EquivarianceStudent& s) -> Matrix& { return s.projector; }), s0.projector)) <= 1e-5);
  CHECK(oracle::rel_err(ev.attention.wq, oracle::fd_gradient(total([](EquivarianceStudent& s) -> Matrix& { return s.attention.wq; }), s0.attention.wq)) <= 1e-5);
  CHECK(oracle::rel_err(ev.attention.wv, oracle::fd_gradient(total([](EquivarianceStudent& s) -> Matrix& { return s.attention.wv; }), s0.attention.wv)) <= 1e-5);
  CHECK(oracle::rel_err(ev.attention.pos_bias, oracle::fd_gradient(total([](EquivarianceStudent& s) -> Matrix& { return s.attention.pos_bias; }), s0.attention.pos_bias)) <= 1e-5);

  EquivarianceSpec bad = spec;
  bad.batch_size = 1;
  CHECK_THROWS_AS(train_equivariance(EquivarianceTask::generate(bad, 1), 0, 1.0), PreconditionError);
}

TEST_CASE("write_outcome layout") {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "dlab_outcome_test";
  fs::remove_all(root);
  ExperimentOutcome o;
  o.id = "demo";
  o.summary["pass"] = true;
  for (std::uint64_t seed : {0u, 3u}) {
    ArmRun r;
    r.seed = seed;
    r.arm = "batch";
    dyn::append_record(r.result.trajectory, 0, 1.0, Matrix{{1, 2}, {3, 5}, {0, 1}},
                       kd::ProjectorState::linear(Matrix::identity(2)), {});
    o.runs.push_back(r);
  }
  write_outcome(root, o);
  CHECK(fs::exists(root / "demo" / "0" / "batch.csv"));
  CHECK(fs::exists(root / "demo" / "3" / "batch.csv"));
  std::ifstream is(root / "demo" / "summary.json");
  const auto j = nlohmann::json::parse(is);
  CHECK(j["pass"] == true);
  fs::remove_all(root);
}

TEST_CASE("batch-size sweep measures its gap at 128 even when 128 is not swept") {
  ExperimentSpec s = tiny_spec();
  s.task.train_size = 128;
  s.task.teacher_dim = 8;
  const auto out = experiment_batch_size({0}, {32, 64}, s);
  std::set<std::string> arms;
  for (const auto& r : out.runs) arms.insert(r.arm);
  CHECK(arms == std::set<std::string>{"distill_b32", "distill_b64", "distill_b128", "task_only_b128"});
  CHECK(out.summary["per_seed"][0]["accuracy"].size() == 2);
}
