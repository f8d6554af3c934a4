#include "dlab/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "dlab/error.hpp"
#include "dlab/linalg.hpp"
#include "dlab/matrix_io.hpp"
#include "dlab/rng.hpp"

namespace dlab::dyn {

namespace {

void require_square_identity(const Matrix& cs, const char* op) {
  if (cs.rows() != cs.cols()) throw ShapeError(std::string(op) + ": cs must be square, got " + cs.shape_string());
  const double off = frobenius_norm(cs - Matrix::identity(cs.rows()));
  if (off > kWhiteningTolerance) {
    throw PreconditionError(std::string(op) + ": features are not whitened, |cs - I|_F = " + io::format_double(off));
  }
}

}  // namespace

void DynamicsConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw InputError("dynamics: learning rate must be >= 0");
  if (!(weight_decay >= 0.0)) throw InputError("dynamics: weight decay must be >= 0");
  if (steps < 1) throw InputError("dynamics: steps must be >= 1");
  if (record_every < 1) throw InputError("dynamics: record_every must be >= 1");
}

CorrelationPair correlations(const Matrix& zs, const Matrix& zt) {
  if (zs.rows() != zt.rows()) {
    throw ShapeError("correlations: batch sizes differ, " + zs.shape_string() + " vs " + zt.shape_string());
  }
  return {matmul_tn(zs, zs), matmul_tn(zs, zt)};
}

Matrix projector_velocity(const CorrelationPair& c, const Matrix& wp) {
  if (c.cs.cols() != wp.rows() || c.cst.rows() != wp.rows() || c.cst.cols() != wp.cols()) {
    throw ShapeError("projector_velocity: wp " + wp.shape_string() + " does not conform to cs " +
                     c.cs.shape_string() + " / cst " + c.cst.shape_string());
  }
  return c.cst - matmul(c.cs, wp);
}

Matrix step(const Matrix& wp, const CorrelationPair& c, const DynamicsConfig& cfg) {
  Matrix next = wp * (1.0 - cfg.weight_decay);
  next += projector_velocity(c, wp) * cfg.learning_rate;
  return next;
}

EmaCheck ema_equivalence(const std::vector<CorrelationPair>& stream, const DynamicsConfig& cfg) {
  if (stream.empty()) throw InputError("ema_equivalence: empty stream");
  for (const auto& c : stream) require_square_identity(c.cs, "ema_equivalence");

  const auto& first = stream.front().cst;
  EmaCheck out{Matrix(first.rows(), first.cols()), Matrix(first.rows(), first.cols()), 0.0};
  const double keep = 1.0 - cfg.weight_decay - cfg.learning_rate;
  for (const auto& c : stream) {
    out.simulated = step(out.simulated, c, cfg);
    Matrix m = out.recurrence * keep;
    m += c.cst * cfg.learning_rate;
    out.recurrence = std::move(m);
  }
  out.max_abs_diff = max_abs_diff(out.simulated, out.recurrence);
  return out;
}

std::vector<double> record_spectrum(const kd::ProjectorState& p) {
  if (!p.is_linear()) {
    throw UnsupportedError("record_spectrum: spectrum is only defined for a single-layer (linear) projector; got " +
                           std::to_string(p.layers.size()) + " layers");
  }
  auto sv = singular_values(p.layers.front());
  if (!sv.empty() && sv.front() > 0.0) {
    const double top = sv.front();
    for (double& s : sv) s /= top;
  }
  return sv;
}

double decorrelation(const Matrix& input, const Matrix& output, DecorrelationReduce reduce) {
  if (input.rows() != output.rows()) {
    throw ShapeError("decorrelation: batch sizes differ, " + input.shape_string() + " vs " + output.shape_string());
  }
  if (input.rows() < 2) throw PreconditionError("decorrelation: need a batch of at least 2 rows");
  if (input.cols() == 0 || output.cols() == 0) throw ShapeError("decorrelation: empty feature dimension");
  const Matrix in_t = input.transpose();
  const Matrix out_t = output.transpose();
  double total = 0.0;
  for (std::size_t j = 0; j < out_t.rows(); ++j) {
    double best = 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < in_t.rows(); ++i) {
      const double r = std::abs(pearson(in_t.row(i), out_t.row(j)));
      best = std::max(best, r);
      sum += r;
    }
    total += reduce == DecorrelationReduce::mean_of_max ? best : sum / static_cast<double>(in_t.rows());
  }
  return total / static_cast<double>(out_t.rows());
}

LowRankGap low_rank_gap(const Matrix& zs, const Matrix& zt, std::size_t rank, const LowRankOptions& opts) {
  if (zs.rows() != zt.rows()) throw ShapeError("low_rank_gap: batch sizes differ");
  const CorrelationPair c = correlations(zs, zt);
  require_square_identity(c.cs, "low_rank_gap");
  const std::size_t ds = zs.cols();
  const std::size_t dt = zt.cols();
  if (rank < 1 || rank > std::min(ds, dt)) {
    throw InputError("low_rank_gap: rank " + std::to_string(rank) + " outside [1, " +
                     std::to_string(std::min(ds, dt)) + "]");
  }

  LowRankGap out;
  const auto sv = singular_values(c.cst);
  double kept = 0.0;
  for (std::size_t i = 0; i < rank; ++i) kept += sv[i] * sv[i];
  out.oracle_loss = 0.5 * (squared_norm(zt) - kept);

  Rng rng(opts.seed);
  out.constrained_loss = std::numeric_limits<double>::infinity();
  for (std::size_t restart = 0; restart < std::max<std::size_t>(opts.restarts, 1); ++restart) {
    Rng local = rng.fork(restart);
    Matrix a = local.gaussian(ds, rank, opts.init_scale);
    Matrix b = local.gaussian(rank, dt, opts.init_scale);
    std::size_t it = 0;
    for (; it < opts.max_steps; ++it) {
      // dL/dW = Zs^T (Zs W - Zt) = cs W - cst
      const Matrix g = matmul(c.cs, matmul(a, b)) - c.cst;
      const Matrix ga = matmul_nt(g, b);
      const Matrix gb = matmul_tn(a, g);
      const double gnorm = std::sqrt(squared_norm(ga) + squared_norm(gb));
      if (!std::isfinite(gnorm)) throw NumericError("low_rank_gap: factored descent diverged");
      if (gnorm < opts.grad_tolerance) break;
      a -= ga * opts.learning_rate;
      b -= gb * opts.learning_rate;
    }
    Matrix w = matmul(a, b);
    const double loss = 0.5 * squared_norm(matmul(zs, w) - zt);
    if (loss < out.constrained_loss) {
      out.constrained_loss = loss;
      out.projector = std::move(w);
      out.steps_taken = it;
    }
  }
  return out;
}

bool TrajectoryRecord::rank_bound_holds() const {
  for (std::size_t i = 0; i < projector_rank.size(); ++i) {
    if (projected_rank[i] > std::min(input_rank[i], projector_rank[i])) return false;
  }
  return true;
}

std::string TrajectoryRecord::to_csv() const {
  const std::size_t k = singular_values.empty() ? 0 : singular_values.front().size();
  std::string out = "step,loss,decorrelation";
  for (std::size_t i = 0; i < k; ++i) out += ",sigma_" + std::to_string(i);
  out += '\n';
  for (std::size_t r = 0; r < steps.size(); ++r) {
    out += std::to_string(steps[r]) + ',' + io::format_double(loss[r]) + ',' + io::format_double(decorrelation[r]);
    if (r < singular_values.size())
      for (double s : singular_values[r]) out += ',' + io::format_double(s);
    out += '\n';
  }
  return out;
}

void TrajectoryRecord::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  os << to_csv();
}

void append_record(TrajectoryRecord& rec, std::size_t step, double loss, const Matrix& zs,
                   const kd::ProjectorState& p, const RecordOptions& opts) {
  if (!rec.steps.empty() && step <= rec.steps.back()) {
    throw InputError("trajectory: record steps must be strictly increasing");
  }
  const Matrix projected = kd::project(zs, p);
  rec.steps.push_back(step);
  rec.loss.push_back(loss);
  rec.decorrelation.push_back(decorrelation(zs, projected, opts.reduce));
  if (p.is_linear()) {
    rec.singular_values.push_back(record_spectrum(p));
    rec.input_rank.push_back(numerical_rank(zs, opts.rank_tolerance));
    rec.projector_rank.push_back(numerical_rank(p.layers.front(), opts.rank_tolerance));
    rec.projected_rank.push_back(numerical_rank(projected, opts.rank_tolerance));
  }
}

TrajectoryRecord run_dynamics(const std::vector<Matrix>& zs_stream, const std::vector<Matrix>& zt_stream,
                              kd::ProjectorState p, const kd::NormScheme& norm, const kd::DistanceSpec& spec,
                              const DynamicsConfig& cfg, kd::ProjectorState* final_state) {
  cfg.validate();
  if (zs_stream.empty() || zs_stream.size() != zt_stream.size()) {
    throw ShapeError("run_dynamics: student and teacher streams must be non-empty and aligned");
  }
  if (!p.is_linear()) throw UnsupportedError("run_dynamics: spectrum recording needs a linear projector");

  RecordOptions ropts;
  ropts.every = cfg.record_every;
  TrajectoryRecord rec;
  for (std::size_t t = 0; t <= cfg.steps; ++t) {
    const std::size_t idx = t % zs_stream.size();
    const auto res = kd::distill_loss(zs_stream[idx], zt_stream[idx], p, norm, spec);
    if (t % cfg.record_every == 0 || t == cfg.steps) append_record(rec, t, res.loss, zs_stream[idx], p, ropts);
    if (t == cfg.steps) break;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      p.layers[l] *= 1.0 - cfg.weight_decay;
      p.layers[l] -= res.grad_layers[l] * cfg.learning_rate;
    }
    for (const auto& w : p.layers) require_finite(w, "run_dynamics: projector update");
  }
  if (final_state) *final_state = std::move(p);
  return rec;
}

}  // namespace dlab::dyn
