#pragma once

// Projector training dynamics: the correlation-driven update rule, its
// whitened fixed point and moving-average reading, spectrum and decorrelation
// probes, and the low-rank subspace loss.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dlab/kdcore.hpp"
#include "dlab/matrix.hpp"

namespace dlab::dyn {

// cs = Zs^T Zs (ds x ds), cst = Zs^T Zt (ds x dt).
struct CorrelationPair {
  Matrix cs;
  Matrix cst;
};

struct DynamicsConfig {
  double learning_rate = 0.01;  // alpha_p
  double weight_decay = 0.0;    // eta
  std::size_t steps = 100;
  std::size_t record_every = 10;

  void validate() const;
};

inline constexpr double kWhiteningTolerance = 1e-8;

CorrelationPair correlations(const Matrix& zs, const Matrix& zt);

// Wp_dot = cst - cs * wp, the negative gradient of 0.5 |Zs Wp - Zt|_F^2.
Matrix projector_velocity(const CorrelationPair& c, const Matrix& wp);

// (1 - eta) * wp + alpha_p * (cst - cs * wp)
Matrix step(const Matrix& wp, const CorrelationPair& c, const DynamicsConfig& cfg);

struct EmaCheck {
  Matrix simulated;   // result of iterating step()
  Matrix recurrence;  // m_{t+1} = (1 - eta - alpha_p) m_t + alpha_p cst_t
  double max_abs_diff = 0.0;
};

// Runs step() over a stream of whitened correlation pairs (cs = I) starting
// from wp = 0 and, independently, the moving-average recurrence.
EmaCheck ema_equivalence(const std::vector<CorrelationPair>& stream, const DynamicsConfig& cfg);

// Singular values of a linear projector divided by the largest one.
std::vector<double> record_spectrum(const kd::ProjectorState& p);

enum class DecorrelationReduce { mean_of_max, mean_of_mean };

// For each output column j: max_i |pearson(input_i, output_j)| (or mean over
// i); the result is the mean over j, in [0, 1].
double decorrelation(const Matrix& input, const Matrix& output,
                     DecorrelationReduce reduce = DecorrelationReduce::mean_of_max);

struct LowRankOptions {
  std::size_t restarts = 10;
  double learning_rate = 0.05;
  double grad_tolerance = 1e-10;
  std::size_t max_steps = 50000;
  double init_scale = 0.1;
  std::uint64_t seed = 0;
};

struct LowRankGap {
  double constrained_loss = 0.0;  // min over rank <= r of 0.5 |zs W - zt|^2, by factored descent
  double oracle_loss = 0.0;       // 0.5 (|zt|^2 - sum_{i<=r} sigma_i(zs^T zt)^2)
  Matrix projector;               // best factored W = A B
  std::size_t steps_taken = 0;    // of the best restart
};

LowRankGap low_rank_gap(const Matrix& zs, const Matrix& zt, std::size_t rank, const LowRankOptions& opts = {});

struct TrajectoryRecord {
  std::vector<std::size_t> steps;
  std::vector<double> loss;
  std::vector<double> decorrelation;
  std::vector<std::vector<double>> singular_values;
  // Rank bookkeeping at each record: rank(zs), rank(Wp), rank(zs Wp).
  std::vector<std::size_t> input_rank;
  std::vector<std::size_t> projector_rank;
  std::vector<std::size_t> projected_rank;

  std::size_t size() const { return steps.size(); }
  bool rank_bound_holds() const;

  // Columns: step,loss,decorrelation,sigma_0,...,sigma_{k-1}
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

struct RecordOptions {
  std::size_t every = 10;
  DecorrelationReduce reduce = DecorrelationReduce::mean_of_max;
  double rank_tolerance = 1e-8;
};

// Appends one record for the current projector on the batch (zs, zt).
void append_record(TrajectoryRecord& rec, std::size_t step, double loss, const Matrix& zs,
                   const kd::ProjectorState& p, const RecordOptions& opts);

// Trains the projector alone (student frozen) on the aligned batch streams,
// cycling through them. Uses kd::distill_loss gradients with weight decay:
// W <- (1 - eta) W - alpha_p * dD/dW. Records at step 0, every record_every
// steps, and at the last step.
TrajectoryRecord run_dynamics(const std::vector<Matrix>& zs_stream, const std::vector<Matrix>& zt_stream,
                              kd::ProjectorState p, const kd::NormScheme& norm, const kd::DistanceSpec& spec,
                              const DynamicsConfig& cfg, kd::ProjectorState* final_state = nullptr);

}  // namespace dlab::dyn
