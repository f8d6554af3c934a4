#include "dlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dlab/dynamics.hpp"
#include "dlab/kdcore.hpp"
#include "dlab/rng.hpp"

namespace dlab::gc {

namespace {

struct Accumulator {
  ComponentReport report;

  void add(double err) {
    ++report.instances;
    if (!(err <= report.max_rel_error)) report.max_rel_error = std::isnan(err) ? INFINITY : err;
  }
};

// Worst error over the input gradient and every layer gradient of f(zs, layers).
double stack_error(const Matrix& zs, const std::vector<Matrix>& layers, const Matrix& grad_zs,
                   const std::vector<Matrix>& grad_layers,
                   const std::function<double(const Matrix&, const std::vector<Matrix>&)>& f, double h) {
  double worst = relative_error(grad_zs, numeric_gradient([&](const Matrix& z) { return f(z, layers); }, zs, h));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto with = [&](const Matrix& w) {
      std::vector<Matrix> copy = layers;
      copy[l] = w;
      return f(zs, copy);
    };
    worst = std::max(worst, relative_error(grad_layers[l], numeric_gradient(with, layers[l], h)));
  }
  return worst;
}

kd::ProjectorState random_projector(bool linear, std::size_t in, std::size_t out, Rng& rng) {
  if (linear) return kd::ProjectorState::linear(rng.gaussian(in, out, 1.0 / std::sqrt(static_cast<double>(in))));
  const std::size_t hidden = 7;
  return kd::ProjectorState::mlp({rng.gaussian(in, hidden, std::sqrt(2.0 / static_cast<double>(in))),
                                  rng.gaussian(hidden, hidden, std::sqrt(2.0 / hidden)),
                                  rng.gaussian(hidden, out, std::sqrt(2.0 / hidden))});
}

}  // namespace

Matrix numeric_gradient(const ScalarFn& f, const Matrix& x, double h) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  auto pd = probe.data();
  auto gd = g.data();
  for (std::size_t i = 0; i < pd.size(); ++i) {
    const double keep = pd[i];
    pd[i] = keep + h;
    const double up = f(probe);
    pd[i] = keep - h;
    const double down = f(probe);
    pd[i] = keep;
    gd[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double relative_error(const Matrix& analytic, const Matrix& numeric) {
  require_same_shape(analytic, numeric, "relative_error");
  const double diff = frobenius_norm(analytic - numeric);
  const double scale = std::max(frobenius_norm(analytic), frobenius_norm(numeric));
  return scale < 1e-12 ? diff : diff / scale;
}

std::vector<std::string> component_names() {
  return {"normalize_vjp/none",    "normalize_vjp/l2_row",     "normalize_vjp/batch",     "normalize_vjp/group",
          "distance_grad/frobenius", "distance_grad/logsum1",  "distance_grad/logsum2",   "distance_grad/logsum3",
          "distance_grad/logsum4", "distance_grad/logsum4.7",  "distance_grad/logsum5",   "distance_grad/logsumexp",
          "project/linear",        "project/mlp3",             "task_loss",               "distill_loss",
          "projector_velocity"};
}

std::vector<ComponentReport> run_suite(const SuiteOptions& opts) {
  const auto names = component_names();
  std::vector<Accumulator> acc(names.size());
  for (std::size_t c = 0; c < names.size(); ++c) {
    acc[c].report.name = names[c];
    acc[c].report.tolerance = names[c] == "projector_velocity" ? opts.velocity_tolerance : opts.tolerance;
  }
  const double h = opts.h;
  const Rng root(opts.seed);
  std::size_t c = 0;

  const kd::NormScheme norms[] = {kd::NormScheme::none(), kd::NormScheme::l2_row(), kd::NormScheme::batch(),
                                  kd::NormScheme::group(4)};
  for (const auto& scheme : norms) {
    Rng rng = root.fork(100 + c);
    for (std::size_t i = 0; i < opts.instances; ++i) {
      const Matrix z = rng.gaussian(6, 8);
      const Matrix up = rng.gaussian(6, 8);
      const Matrix analytic = kd::normalize_vjp(z, scheme, up);
      acc[c].add(relative_error(analytic, numeric_gradient([&](const Matrix& x) { return dot(up, kd::normalize(x, scheme)); }, z, h)));
    }
    ++c;
  }

  std::vector<kd::DistanceSpec> dists{kd::DistanceSpec::frobenius()};
  for (double a : {1.0, 2.0, 3.0, 4.0, 4.7, 5.0}) dists.push_back(kd::DistanceSpec::logsum(a));
  dists.push_back(kd::DistanceSpec::logsumexp(1.0));
  for (const auto& spec : dists) {
    Rng rng = root.fork(100 + c);
    for (std::size_t i = 0; i < opts.instances; ++i) {
      const Matrix a = rng.gaussian(6, 6);
      const Matrix b = rng.gaussian(6, 6);
      acc[c].add(relative_error(kd::distance_grad(a, b, spec),
                                numeric_gradient([&](const Matrix& x) { return kd::distance(x, b, spec); }, a, h)));
    }
    ++c;
  }

  for (bool linear : {true, false}) {
    Rng rng = root.fork(100 + c);
    for (std::size_t i = 0; i < opts.instances; ++i) {
      const Matrix zs = rng.gaussian(5, 4);
      const kd::ProjectorState p = random_projector(linear, 4, 6, rng);
      const Matrix up = rng.gaussian(5, 6);
      const auto g = kd::project_vjp(zs, p, up);
      auto f = [&](const Matrix& z, const std::vector<Matrix>& layers) {
        return dot(up, kd::relu_stack_forward(z, layers));
      };
      acc[c].add(stack_error(zs, p.layers, g.grad_input, g.grad_layers, f, h));
    }
    ++c;
  }

  {
    Rng rng = root.fork(100 + c);
    for (std::size_t i = 0; i < opts.instances; ++i) {
      const Matrix logits = rng.gaussian(4, 3, 2.0);
      std::vector<std::size_t> labels;
      for (std::size_t r = 0; r < 4; ++r) labels.push_back(rng.index(3));
      const auto res = kd::task_loss(logits, labels);
      acc[c].add(relative_error(
          res.grad_logits, numeric_gradient([&](const Matrix& x) { return kd::task_loss(x, labels).loss; }, logits, h)));
    }
    ++c;
  }

  {
    // Cycles through every normalization, distance and placement.
    Rng rng = root.fork(100 + c);
    const kd::DistanceSpec ds[] = {kd::DistanceSpec::frobenius(), kd::DistanceSpec::logsum(4.0),
                                   kd::DistanceSpec::logsumexp(1.0)};
    const kd::NormPlacement places[] = {kd::NormPlacement::joint, kd::NormPlacement::teacher_only,
                                        kd::NormPlacement::pre_projection};
    for (std::size_t i = 0; i < opts.instances; ++i) {
      const auto& norm = norms[i % 4];
      const auto& spec = ds[i % 3];
      const auto place = places[(i / 4) % 3];
      const Matrix zs = rng.gaussian(6, 4);
      const Matrix zt = rng.gaussian(6, 8);
      const kd::ProjectorState p = random_projector(i % 2 == 0, 4, 8, rng);
      const auto res = kd::distill_loss(zs, zt, p, norm, spec, place);
      auto f = [&](const Matrix& z, const std::vector<Matrix>& layers) {
        kd::ProjectorState q = p;
        q.layers = layers;
        return kd::distill_loss(z, zt, q, norm, spec, place).loss;
      };
      acc[c].add(stack_error(zs, p.layers, res.grad_zs, res.grad_layers, f, h));
    }
    ++c;
  }

  {
    Rng rng = root.fork(100 + c);
    for (std::size_t i = 0; i < opts.velocity_instances; ++i) {
      const Matrix zs = rng.gaussian(10, 4);
      const Matrix zt = rng.gaussian(10, 6);
      const Matrix wp = rng.gaussian(4, 6);
      const Matrix v = dyn::projector_velocity(dyn::correlations(zs, zt), wp);
      auto loss = [&](const Matrix& w) { return kd::distance(matmul(zs, w), zt, kd::DistanceSpec::frobenius()); };
      acc[c].add(relative_error(v * -1.0, numeric_gradient(loss, wp, h)));
    }
    ++c;
  }

  std::vector<ComponentReport> out;
  for (auto& a : acc) out.push_back(a.report);
  return out;
}

}  // namespace dlab::gc
