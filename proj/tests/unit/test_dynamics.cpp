#include <cmath>

#include "doctest.h"
#include "dlab/dynamics.hpp"
#include "dlab/error.hpp"
#include "dlab/linalg.hpp"
#include "dlab/rng.hpp"
#include "oracles.hpp"

using namespace dlab;
using namespace dlab::dyn;

namespace {

// Columns orthonormal, so zs^T zs = I.
Matrix whitened(Rng& rng, std::size_t rows, std::size_t cols) { return orthonormalize_columns(rng.gaussian(rows, cols)); }

double half_sq_residual(const Matrix& zs, const Matrix& w, const Matrix& zt) {
  const Matrix r = oracle::matmul(zs, w) - zt;
  return 0.5 * squared_norm(r);
}

}  // namespace

TEST_CASE("velocity is the negative gradient of the half squared residual") {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix zs = rng.gaussian(12, 4), zt = rng.gaussian(12, 5), w = rng.gaussian(4, 5);
    const Matrix v = projector_velocity(correlations(zs, zt), w);
    const Matrix fd = oracle::fd_gradient([&](const Matrix& x) { return half_sq_residual(zs, x, zt); }, w);
    CHECK(oracle::rel_err(v, fd * -1.0) <= 1e-6);
  }
}

TEST_CASE("correlations are plain products") {
  Rng rng(2);
  const Matrix zs = rng.gaussian(6, 3), zt = rng.gaussian(6, 2);
  const CorrelationPair c = correlations(zs, zt);
  CHECK(max_abs_diff(c.cs, oracle::matmul(oracle::transpose(zs), zs)) <= 1e-12);
  CHECK(max_abs_diff(c.cst, oracle::matmul(oracle::transpose(zs), zt)) <= 1e-12);
  CHECK_THROWS_AS(correlations(zs, rng.gaussian(5, 2)), ShapeError);
  CHECK_THROWS_AS(projector_velocity(c, Matrix(2, 2)), ShapeError);
}

TEST_CASE("step on whitened features") {
  Rng rng(3);
  const Matrix zs = whitened(rng, 20, 4), zt = rng.gaussian(20, 6);
  const CorrelationPair c = correlations(zs, zt);
  DynamicsConfig cfg;
  cfg.learning_rate = 0.3;
  // Without decay the fixed point is cst itself.
  CHECK(max_abs_diff(step(c.cst, c, cfg), c.cst) <= 1e-12);
  // With decay it shrinks to alpha / (alpha + eta) * cst.
  cfg.weight_decay = 0.1;
  const Matrix fixed = c.cst * (0.3 / 0.4);
  CHECK(max_abs_diff(step(fixed, c, cfg), fixed) <= 1e-12);
  // Iterating from zero converges there.
  Matrix w(4, 6);
  for (int i = 0; i < 400; ++i) w = step(w, c, cfg);
  CHECK(max_abs_diff(w, fixed) <= 1e-10);
}

TEST_CASE("moving average reading matches the closed form") {
  Rng rng(4);
  const Matrix zs = whitened(rng, 16, 3), zt = rng.gaussian(16, 3);
  const CorrelationPair c = correlations(zs, zt);
  DynamicsConfig cfg;
  cfg.learning_rate = 0.2;
  cfg.weight_decay = 0.05;
  const std::size_t T = 25;
  const EmaCheck e = ema_equivalence(std::vector<CorrelationPair>(T, c), cfg);
  const double keep = 1.0 - 0.2 - 0.05;
  const Matrix closed = c.cst * (0.2 * (1.0 - std::pow(keep, double(T))) / (1.0 - keep));
  CHECK(max_abs_diff(e.simulated, closed) <= 1e-12);
  CHECK(max_abs_diff(e.recurrence, closed) <= 1e-12);
  CHECK(e.max_abs_diff <= 1e-12);

  std::vector<CorrelationPair> varied;
  for (int i = 0; i < 30; ++i) {
    const Matrix s = whitened(rng, 16, 3);
    varied.push_back(correlations(s, rng.gaussian(16, 3)));
  }
  CHECK(ema_equivalence(varied, cfg).max_abs_diff <= 1e-12);

  CHECK_THROWS_AS(ema_equivalence({}, cfg), InputError);
  CHECK_THROWS_AS(ema_equivalence({correlations(rng.gaussian(16, 3), zt)}, cfg), PreconditionError);
}

TEST_CASE("normalized spectrum") {
  for (double s : record_spectrum(kd::ProjectorState::linear(Matrix::identity(3)))) CHECK(s == doctest::Approx(1.0));
  const std::vector<double> d{4, 2, 0};
  const auto s = record_spectrum(kd::ProjectorState::linear(Matrix::diagonal(d)));
  REQUIRE(s.size() == 3);
  CHECK(s[0] == doctest::Approx(1.0));
  CHECK(s[1] == doctest::Approx(0.5));
  CHECK(std::abs(s[2]) <= 1e-12);

  Rng rng(5);
  const Matrix q1 = orthonormalize_columns(rng.gaussian(3, 3)), q2 = orthonormalize_columns(rng.gaussian(3, 3));
  const auto r = record_spectrum(kd::ProjectorState::linear(matmul(matmul(q1, Matrix::diagonal(d)), q2)));
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(r[i] - s[i]) <= 1e-12);

  for (double v : record_spectrum(kd::ProjectorState::linear(Matrix(2, 3)))) CHECK(v == 0.0);
  CHECK_THROWS_AS(record_spectrum(kd::ProjectorState::mlp({rng.gaussian(3, 4), rng.gaussian(4, 3)})), UnsupportedError);
}

TEST_CASE("decorrelation") {
  // Two exactly uncorrelated centered columns.
  const Matrix x{{1, 1}, {-1, 1}, {1, -1}, {-1, -1}};
  CHECK(decorrelation(x, x) == doctest::Approx(1.0));
  CHECK(decorrelation(x, x, DecorrelationReduce::mean_of_mean) == doctest::Approx(0.5));
  const Matrix flipped{{-1}, {1}, {-1}, {1}};
  CHECK(decorrelation(x, flipped) == doctest::Approx(1.0));
  const Matrix mixed{{2}, {0}, {0}, {-2}};  // x0 + x1
  CHECK(decorrelation(x, mixed) == doctest::Approx(1.0 / std::sqrt(2.0)));

  Rng rng(6);
  const Matrix a = rng.gaussian(50, 4), b = rng.gaussian(50, 3);
  const double v = decorrelation(a, b);
  CHECK((v >= 0.0 && v <= 1.0));
  CHECK_THROWS_AS(decorrelation(a, rng.gaussian(49, 3)), ShapeError);
  CHECK_THROWS_AS(decorrelation(Matrix(1, 2), Matrix(1, 2)), PreconditionError);
}

TEST_CASE("low rank gap") {
  Rng rng(7);
  const Matrix zs = whitened(rng, 24, 5), zt = rng.gaussian(24, 6);
  for (std::size_t r = 1; r <= 3; ++r) {
    const LowRankGap g = low_rank_gap(zs, zt, r);
    CHECK(std::abs(g.constrained_loss - g.oracle_loss) <= 1e-2 * g.oracle_loss);
    CHECK(g.constrained_loss >= g.oracle_loss - 1e-9);
    CHECK(numerical_rank(g.projector) <= r);
  }
  // Full rank gives ordinary least squares.
  const LowRankGap full = low_rank_gap(zs, zt, 5);
  const Matrix cst = oracle::matmul(oracle::transpose(zs), zt);
  CHECK(full.oracle_loss == doctest::Approx(half_sq_residual(zs, cst, zt)).epsilon(1e-10));

  CHECK_THROWS_AS(low_rank_gap(zs, zt, 0), InputError);
  CHECK_THROWS_AS(low_rank_gap(zs, zt, 6), InputError);
  CHECK_THROWS_AS(low_rank_gap(rng.gaussian(24, 5), zt, 1), PreconditionError);
  CHECK_THROWS_AS(low_rank_gap(zs, rng.gaussian(23, 6), 1), ShapeError);
}

TEST_CASE("trajectory csv and rank bookkeeping") {
  Rng rng(8);
  const Matrix zs = rng.gaussian(10, 3);
  TrajectoryRecord rec;
  append_record(rec, 0, 1.5, zs, kd::ProjectorState::linear(rng.gaussian(3, 2)), {});
  append_record(rec, 10, 0.25, zs, kd::ProjectorState::linear(matmul(rng.gaussian(3, 1), rng.gaussian(1, 2))), {});
  CHECK(rec.size() == 2);
  const std::string csv = rec.to_csv();
  CHECK(csv.rfind("step,loss,decorrelation,sigma_0,sigma_1\n0,1.5,", 0) == 0);
  CHECK(csv.find("\n10,0.25,") != std::string::npos);
  CHECK(rec.projector_rank[1] == 1);
  CHECK(rec.projected_rank[1] == 1);
  CHECK(rec.rank_bound_holds());
  CHECK_THROWS_AS(append_record(rec, 10, 0.0, zs, kd::ProjectorState::linear(rng.gaussian(3, 2)), {}), InputError);
}

TEST_CASE("run_dynamics") {
  Rng rng(9);
  std::vector<Matrix> zs, zt;
  for (int i = 0; i < 3; ++i) {
    zs.push_back(whitened(rng, 32, 4));
    zt.push_back(rng.gaussian(32, 6));
  }
  const auto p0 = kd::ProjectorState::linear(rng.gaussian(4, 6, 0.1));
  DynamicsConfig cfg;
  cfg.steps = 30;
  cfg.record_every = 7;

  SUBCASE("zero learning rate leaves the projector alone") {
    cfg.learning_rate = 0.0;
    kd::ProjectorState out;
    const auto rec = run_dynamics({zs[0]}, {zt[0]}, p0, kd::NormScheme::none(), kd::DistanceSpec::frobenius(), cfg, &out);
    CHECK(out.layers.front() == p0.layers.front());
    for (double l : rec.loss) CHECK(l == rec.loss.front());
    CHECK(rec.steps == std::vector<std::size_t>{0, 7, 14, 21, 28, 30});
  }
  SUBCASE("one fixed batch gives a non-increasing loss") {
    cfg.learning_rate = 0.2;
    const auto rec = run_dynamics({zs[0]}, {zt[0]}, p0, kd::NormScheme::none(), kd::DistanceSpec::frobenius(), cfg);
    for (std::size_t i = 1; i < rec.size(); ++i) CHECK(rec.loss[i] <= rec.loss[i - 1] + 1e-12);
    CHECK(rec.rank_bound_holds());
  }
  SUBCASE("matches the closed-form step on whitened features") {
    cfg.learning_rate = 0.1;
    cfg.weight_decay = 0.01;
    kd::ProjectorState out;
    run_dynamics(zs, zt, p0, kd::NormScheme::none(), kd::DistanceSpec::frobenius(), cfg, &out);
    Matrix w = p0.layers.front();
    for (std::size_t t = 0; t < cfg.steps; ++t) w = step(w, correlations(zs[t % 3], zt[t % 3]), cfg);
    CHECK(max_abs_diff(out.layers.front(), w) <= 1e-12);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(run_dynamics({}, {}, p0, {}, kd::DistanceSpec::frobenius(), cfg), ShapeError);
    CHECK_THROWS_AS(run_dynamics(zs, {zt[0]}, p0, {}, kd::DistanceSpec::frobenius(), cfg), ShapeError);
    const auto mlp = kd::ProjectorState::mlp({rng.gaussian(4, 5), rng.gaussian(5, 6)});
    CHECK_THROWS_AS(run_dynamics(zs, zt, mlp, {}, kd::DistanceSpec::frobenius(), cfg), UnsupportedError);
    cfg.steps = 0;
    CHECK_THROWS_AS(run_dynamics(zs, zt, p0, {}, kd::DistanceSpec::frobenius(), cfg), InputError);
  }
}
