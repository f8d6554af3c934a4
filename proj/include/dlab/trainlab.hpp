#pragma once

// Desk-scale teacher/student experiments on synthetic Gaussian tasks.
// None of these reproduce benchmark accuracies; they exercise the mechanisms
// (projector spectra, decorrelation, equivariance transfer) end to end.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dlab/dynamics.hpp"
#include "dlab/equivariance.hpp"
#include "dlab/kdcore.hpp"
#include "dlab/matrix.hpp"
#include "dlab/rng.hpp"

namespace dlab::lab {

// Bias-free ReLU network; no activation after the last layer.
struct ToyNet {
  std::vector<Matrix> layers;

  // dims = {input, hidden..., output}; He-scaled Gaussian weights.
  static ToyNet random(const std::vector<std::size_t>& dims, Rng& rng);

  std::size_t input_dim() const { return layers.front().rows(); }
  std::size_t output_dim() const { return layers.back().cols(); }
  Matrix forward(const Matrix& x) const { return kd::relu_stack_forward(x, layers); }
};

struct TaskConfig {
  std::size_t input_dim = 32;
  std::size_t classes = 10;
  std::vector<std::size_t> teacher_hidden{128, 128};
  std::size_t teacher_dim = 64;
  // Teacher feature j is scaled by decay^j, giving an anisotropic spectrum.
  double teacher_scale_decay = 1.0;
  std::size_t train_size = 2048;
  std::size_t test_size = 1024;
};

// Frozen teacher plus fixed train/test pools; labels are the argmax of the
// teacher's logits. Regenerating with the same seed gives identical data.
struct SyntheticTask {
  TaskConfig config;
  std::uint64_t seed = 0;
  ToyNet teacher;
  Matrix teacher_head;  // teacher_dim x classes
  Matrix train_x, test_x;
  Matrix train_zt, test_zt;
  std::vector<std::size_t> train_labels, test_labels;

  static SyntheticTask generate(const TaskConfig& cfg, std::uint64_t seed);
};

struct Batch {
  Matrix x;
  Matrix zt;
  std::vector<std::size_t> labels;
};

// Rows `indices` of the training pool.
Batch gather(const SyntheticTask& task, const std::vector<std::size_t>& indices);

enum class ProjectorKind { linear, mlp };
enum class ProjectorInit { orthogonal, gaussian };

struct ProjectorSpec {
  ProjectorKind kind = ProjectorKind::linear;
  std::size_t depth = 1;  // number of weight layers; linear means 1
  std::size_t hidden = kd::kDefaultHiddenWidth;
  ProjectorInit init = ProjectorInit::orthogonal;

  std::string label() const;
};

kd::ProjectorState make_projector(const ProjectorSpec& spec, std::size_t in, std::size_t out, Rng& rng);

struct ExperimentSpec {
  TaskConfig task;
  std::vector<std::size_t> student_hidden{64};
  std::size_t student_dim = 32;
  ProjectorSpec projector;
  kd::NormScheme norm = kd::NormScheme::batch();
  kd::DistanceSpec distance = kd::DistanceSpec::frobenius();
  kd::NormPlacement placement = kd::NormPlacement::joint;
  double distill_weight = 1.0;
  double learning_rate = 0.05;
  double weight_decay = 0.0;  // applied as p <- (1 - wd) p - lr g
  std::size_t steps = 1000;
  std::size_t record_every = 100;
  std::size_t batch_size = 128;
  std::vector<std::uint64_t> seeds{0};

  void validate() const;
};

// Trainable state of one student run.
struct StudentModel {
  ToyNet backbone;
  Matrix head;  // student_dim x classes
  kd::ProjectorState projector;
};

StudentModel init_student(const ExperimentSpec& spec, Rng& rng);

struct ModelGrad {
  std::vector<Matrix> backbone;
  Matrix head;
  std::vector<Matrix> projector;
};

struct Evaluation {
  kd::LossBreakdown loss;
  double raw_distill = 0.0;  // distance before weighting
  ModelGrad grad;
};

// Total loss L = task + weight * D on one batch and its gradient with respect
// to every student and projector parameter.
Evaluation evaluate(const StudentModel& model, const Batch& batch, const ExperimentSpec& spec);

double accuracy(const StudentModel& model, const Matrix& x, const std::vector<std::size_t>& labels);

struct RunResult {
  dyn::TrajectoryRecord trajectory;
  double init_accuracy = 0.0;
  double accuracy = 0.0;
  double final_distill_loss = 0.0;
  std::optional<eq::SuiteReport> equivariance;
};

struct TrainOutput {
  RunResult result;
  StudentModel model;
};

// Joint SGD on student and projector with the frozen teacher. Records the
// trajectory on a fixed probe batch (the first batch_size test rows).
// Throws NumericError naming the step if the loss stops being finite.
TrainOutput train(const ExperimentSpec& spec, std::uint64_t seed, const SyntheticTask& task);
RunResult train(const ExperimentSpec& spec, std::uint64_t seed);

// One (seed, arm) cell of an experiment.
struct ArmRun {
  std::uint64_t seed = 0;
  std::string arm;
  RunResult result;
};

struct ExperimentOutcome {
  std::string id;
  std::vector<ArmRun> runs;
  nlohmann::ordered_json summary;
};

// Writes runs/<id>/<seed>/<arm>.csv and <id>/summary.json under `root`.
void write_outcome(const std::filesystem::path& root, const ExperimentOutcome& outcome);

// Singular values of a normalized spectrum falling below `cut`.
std::size_t shrinkage_count(const std::vector<double>& spectrum, double cut = 0.1);

// Normalization arms {none, l2_row, batch}; ds = 32, dt = 64, linear projector.
ExperimentSpec fig2_defaults();
ExperimentOutcome experiment_fig2(const std::vector<std::uint64_t>& seeds, const ExperimentSpec& base = fig2_defaults());

// Projector arms {linear, MLP-2, MLP-3}; decorrelation over training.
ExperimentSpec fig3_defaults();
ExperimentOutcome experiment_fig3(const std::vector<std::uint64_t>& seeds, const ExperimentSpec& base = fig3_defaults());

// Frobenius vs logsum(alpha = 1..5) on a large-gap and a small-gap task.
ExperimentSpec logsum_defaults();
ExperimentOutcome experiment_logsum(const std::vector<std::uint64_t>& seeds,
                                    const ExperimentSpec& base = logsum_defaults());

// Batch-norm recipe accuracy across batch sizes plus a no-distillation arm.
ExperimentSpec batch_size_defaults();
ExperimentOutcome experiment_batch_size(const std::vector<std::uint64_t>& seeds,
                                        const std::vector<std::size_t>& batch_sizes = {16, 32, 64, 128, 256},
                                        const ExperimentSpec& base = batch_size_defaults());

// ---------------------------------------------------------------------------
// Equivariance transfer: a circular-convolution teacher and a self-attention
// student with a learnable positional bias.

struct EquivarianceSpec {
  std::size_t channels = 8;
  std::size_t grid_h = 4;
  std::size_t grid_w = 4;
  std::size_t prefix = 2;
  std::size_t classes = 4;
  std::size_t kernel_radius = 1;
  std::size_t train_size = 256;
  std::size_t batch_size = 32;
  std::size_t steps = 300;
  double learning_rate = 0.05;
  double pos_bias_scale = 1.0;  // stddev of the initial positional bias
  kd::NormScheme norm = kd::NormScheme::batch();
  kd::DistanceSpec distance = kd::DistanceSpec::frobenius();
  double distill_weight = 1.0;
  std::size_t eval_batches = 4;
  std::size_t eval_batch_size = 8;
};

struct EquivarianceTask {
  EquivarianceSpec spec;
  eq::ConvMixerMap teacher;
  Matrix teacher_head;  // channels x classes
  eq::TokenBatch train_x;
  std::vector<std::size_t> train_labels;
  std::vector<eq::TokenBatch> eval_xs;
  std::vector<std::vector<std::size_t>> eval_labels;

  static EquivarianceTask generate(const EquivarianceSpec& spec, std::uint64_t seed);
};

struct EquivarianceStudent {
  eq::AttentionParams attention;
  Matrix head;       // channels x classes
  Matrix projector;  // channels x channels
};

EquivarianceStudent init_equivariance_student(const EquivarianceSpec& spec, Rng& rng);

struct EquivarianceEval {
  kd::LossBreakdown loss;
  eq::AttentionGrad attention;
  Matrix head;
  Matrix projector;
};

// Loss on the token batch: mean-pooled spatial tokens feed the task head; the
// spatial tokens (one row per token) feed the distillation branch.
EquivarianceEval evaluate_equivariance(const EquivarianceStudent& s, const EquivarianceTask& task,
                                       const eq::TokenBatch& x, const std::vector<std::size_t>& labels,
                                       double distill_weight);

// Trains the attention student (SGD, fixed seed-derived minibatch order) and
// scores it with mu_t_suite over the eval batches and the 8 unit shifts.
// The trajectory probes the first eval batch every steps/10 steps.
RunResult train_equivariance(const EquivarianceTask& task, std::uint64_t seed, double distill_weight,
                             EquivarianceStudent* final_student = nullptr);

ExperimentOutcome experiment_equivariance(const std::vector<std::uint64_t>& seeds,
                                          const EquivarianceSpec& spec = {});

// JSON echo of a spec, for summary.json.
nlohmann::ordered_json to_json(const ExperimentSpec& spec);
nlohmann::ordered_json to_json(const EquivarianceSpec& spec);

}  // namespace dlab::lab
