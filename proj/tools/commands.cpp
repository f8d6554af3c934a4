#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "cli.hpp"
#include "dlab/error.hpp"
#include "dlab/kernels.hpp"
#include "dlab/linalg.hpp"
#include "dlab/matrix_io.hpp"
#include "dlab/report.hpp"

namespace dlab::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write " + path.string());
  os << text;
}

void write_json(const fs::path& path, const ojson& j) { write_text(path, j.dump(2) + "\n"); }

// Relative paths inside a config resolve against the config file's directory.
fs::path resolve(const GlobalOptions& g, const std::string& p) {
  fs::path path(p);
  if (path.is_relative() && g.config) return g.config->parent_path() / path;
  return path;
}

std::vector<double> as_doubles(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

report::Chart spectrum_chart(const std::string& title, const dyn::TrajectoryRecord& t) {
  report::Chart c{title, "step", "sigma / sigma_max", true, false, {}};
  if (t.singular_values.empty()) return c;
  const std::size_t k = t.singular_values.front().size();
  for (std::size_t i = 0; i < k; ++i) {
    report::Series s{"sigma_" + std::to_string(i), as_doubles(t.steps), {}};
    for (const auto& row : t.singular_values) s.y.push_back(i < row.size() ? row[i] : NAN);
    c.series.push_back(std::move(s));
  }
  return c;
}

using ArmTrajectories = std::vector<std::pair<std::string, const dyn::TrajectoryRecord*>>;

report::Chart curves_chart(const std::string& title, const std::string& ylabel, const ArmTrajectories& arms,
                           bool decorrelation) {
  report::Chart c{title, "step", ylabel, false, true, {}};
  for (const auto& [label, t] : arms)
    c.series.push_back({label, as_doubles(t->steps), decorrelation ? t->decorrelation : t->loss});
  return c;
}

std::vector<std::uint64_t> default_seeds() {
  std::vector<std::uint64_t> s;
  for (std::uint64_t i = 0; i < 10; ++i) s.push_back(i);
  return s;
}

Matrix whitened_or_gaussian(Rng& rng, std::size_t rows, std::size_t cols, bool whiten) {
  if (whiten) {
    if (rows < cols) throw ConfigError("whitened features need rows >= student_dim");
    return orthonormalize_columns(rng.gaussian(rows, cols));
  }
  return rng.gaussian(rows, cols);
}

ojson echo(const kd::NormScheme& n) {
  return {{"kind", kd::to_string(n.kind)}, {"groups", n.groups}, {"epsilon", n.epsilon}};
}

ojson echo(const kd::DistanceSpec& d) {
  return {{"kind", kd::to_string(d.kind)}, {"alpha", d.alpha}, {"tau", d.tau}, {"floor", d.floor}};
}

}  // namespace

const std::vector<std::string>& experiment_ids() {
  static const std::vector<std::string> ids{"fig2", "fig3", "logsum", "batch_size", "equivariance"};
  return ids;
}

int cmd_gradcheck(const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  gc::SuiteOptions opts = parse_gradcheck(load_config(g.config));
  if (g.seed) opts.seed = *g.seed;
  const auto reports = gc::run_suite(opts);

  ojson j = ojson::array();
  std::vector<std::string> failed;
  char line[160];
  std::snprintf(line, sizeof line, "%-26s %9s %13s %9s  %s\n", "component", "instances", "max_rel_err", "tolerance",
                "status");
  out << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-26s %9zu %13.3e %9.1e  %s\n", r.name.c_str(), r.instances, r.max_rel_error,
                  r.tolerance, r.pass() ? "ok" : "FAIL");
    out << line;
    j.push_back({{"component", r.name},
                 {"instances", r.instances},
                 {"max_rel_error", r.max_rel_error},
                 {"tolerance", r.tolerance},
                 {"pass", r.pass()}});
    if (!r.pass()) failed.push_back(r.name);
  }
  if (g.out) write_json(*g.out / "gradcheck.json", {{"seed", opts.seed}, {"h", opts.h}, {"components", j}});
  if (!failed.empty()) {
    for (const auto& f : failed) err << "gradcheck failed: " << f << "\n";
    return kExitCheckFailed;
  }
  return kExitOk;
}

int cmd_dynamics(const GlobalOptions& g, std::ostream& out, std::ostream&) {
  const json cfg = load_config(g.config);
  ConfigObject o(cfg, "");
  const std::size_t rows = o.count("rows", 64);
  const std::size_t ds = o.count("student_dim", 8);
  const std::size_t dt = o.count("teacher_dim", 12);
  const std::size_t batches = o.count("batches", 4);
  const bool whiten = o.flag("whiten", true);
  const double noise = o.number("noise", 0.1);
  lab::ProjectorSpec pspec{lab::ProjectorKind::linear, 1, 0, lab::ProjectorInit::orthogonal};
  if (o.has("projector")) pspec = parse_projector(o.child("projector"), pspec);
  const kd::NormScheme norm = o.has("norm") ? parse_norm(o.raw("norm"), "norm") : kd::NormScheme::none();
  const kd::DistanceSpec dist = o.has("distance") ? parse_distance(o.raw("distance"), "distance") : kd::DistanceSpec{};
  dyn::DynamicsConfig dc;
  dc.learning_rate = o.number("learning_rate", 0.1);
  dc.weight_decay = o.number("weight_decay", 0.0);
  dc.steps = o.count("steps", 200);
  dc.record_every = o.count("record_every", 10);
  std::uint64_t seed = o.count("seed", 0);
  const std::string init_path = o.text("init_projector", "");
  o.finish();
  if (g.seed) seed = *g.seed;
  if (rows < 2 || ds == 0 || dt == 0 || batches == 0) throw ConfigError("dynamics: rows >= 2 and positive dims required");
  dc.validate();

  Rng data = Rng(seed).fork(21);
  const Matrix mix = data.gaussian(ds, dt, 1.0 / std::sqrt(static_cast<double>(ds)));
  std::vector<Matrix> zs, zt;
  for (std::size_t b = 0; b < batches; ++b) {
    zs.push_back(whitened_or_gaussian(data, rows, ds, whiten));
    zt.push_back(matmul(zs.back(), mix) + data.gaussian(rows, dt, noise));
  }
  Rng init = Rng(seed).fork(22);
  kd::ProjectorState p = init_path.empty() ? lab::make_projector(pspec, ds, dt, init)
                                           : kd::ProjectorState::linear(io::read_binary(resolve(g, init_path)));
  if (p.input_dim() != ds || p.output_dim() != dt) {
    throw ConfigError("init_projector: expected " + std::to_string(ds) + "x" + std::to_string(dt) + " weights");
  }

  kd::ProjectorState final_state;
  const dyn::TrajectoryRecord rec = dyn::run_dynamics(zs, zt, p, norm, dist, dc, &final_state);

  const fs::path dir = g.out_or_default() / "dynamics";
  write_text(dir / "trajectory.csv", rec.to_csv());
  fs::create_directories(dir);
  io::write_binary(dir / "projector.bin", final_state.layers.front());

  ojson sm;
  sm["command"] = "dynamics";
  sm["config"] = {{"rows", rows},
                  {"student_dim", ds},
                  {"teacher_dim", dt},
                  {"batches", batches},
                  {"whiten", whiten},
                  {"noise", noise},
                  {"norm", echo(norm)},
                  {"distance", echo(dist)},
                  {"learning_rate", dc.learning_rate},
                  {"weight_decay", dc.weight_decay},
                  {"steps", dc.steps},
                  {"record_every", dc.record_every},
                  {"seed", seed},
                  {"init_projector", init_path}};
  sm["records"] = rec.size();
  sm["final_loss"] = rec.loss.back();
  sm["rank_bound_holds"] = rec.rank_bound_holds();
  sm["spectrum_definition"] = "singular values of the linear projector divided by the largest";
  sm["decorrelation_definition"] = "mean over outputs of max |pearson| against any input, on the first batch";
  if (whiten && dc.weight_decay == 0.0 && norm.kind == kd::NormKind::none && dist.kind == kd::DistanceKind::frobenius) {
    // With cs = I the mean flow's fixed point is the average cross-correlation.
    Matrix target(ds, dt);
    for (std::size_t b = 0; b < batches; ++b) target += matmul_tn(zs[b], zt[b]) * (1.0 / static_cast<double>(batches));
    sm["fixed_point_rel_distance"] = frobenius_norm(final_state.layers.front() - target) / frobenius_norm(target);
  }
  write_json(dir / "summary.json", sm);
  if (g.plot) {
    report::write_svg(dir / "spectrum.svg", spectrum_chart("projector spectrum", rec));
    report::write_svg(dir / "loss.svg", curves_chart("distillation loss", "loss", {{"loss", &rec}}, false));
  }
  out << "dynamics: " << rec.size() << " records, final loss " << io::format_double(rec.loss.back()) << ", wrote "
      << dir.string() << "\n";
  return kExitOk;
}

int cmd_experiment(const std::string& id, const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  const json cfg = load_config(g.config);
  ConfigObject o(cfg, "");
  lab::ExperimentOutcome outcome;
  bool fail_on_check = false;

  if (id == "equivariance") {
    lab::EquivarianceSpec spec;
    read_equivariance_spec(o, spec);
    std::vector<std::uint64_t> seeds = default_seeds();
    if (o.has("seeds")) {
      const auto s = o.counts("seeds", {});
      seeds.assign(s.begin(), s.end());
    }
    fail_on_check = o.flag("fail_on_check", false);
    o.finish();
    if (g.seed) seeds = {*g.seed};
    if (seeds.empty()) throw ConfigError("seeds: must not be empty");
    outcome = lab::experiment_equivariance(seeds, spec);
  } else {
    lab::ExperimentSpec base;
    if (id == "fig2") {
      base = lab::fig2_defaults();
    } else if (id == "fig3") {
      base = lab::fig3_defaults();
    } else if (id == "logsum") {
      base = lab::logsum_defaults();
    } else if (id == "batch_size") {
      base = lab::batch_size_defaults();
    } else {
      throw ConfigError("unknown experiment '" + id + "' (expected fig2, fig3, logsum, batch_size or equivariance)");
    }
    const bool has_seeds = o.has("seeds");
    read_experiment_spec(o, base);
    std::vector<std::size_t> batch_sizes{16, 32, 64, 128, 256};
    if (id == "batch_size") batch_sizes = o.counts("batch_sizes", batch_sizes);
    fail_on_check = o.flag("fail_on_check", false);
    o.finish();
    std::vector<std::uint64_t> seeds = has_seeds ? base.seeds : default_seeds();
    if (g.seed) seeds = {*g.seed};
    if (seeds.empty()) throw ConfigError("seeds: must not be empty");
    base.seeds = seeds;
    if (id == "fig2") outcome = lab::experiment_fig2(seeds, base);
    if (id == "fig3") outcome = lab::experiment_fig3(seeds, base);
    if (id == "logsum") outcome = lab::experiment_logsum(seeds, base);
    if (id == "batch_size") outcome = lab::experiment_batch_size(seeds, batch_sizes, base);
  }

  const fs::path root = g.out_or_default();
  lab::write_outcome(root, outcome);
  if (g.plot) {
    std::vector<std::uint64_t> seeds;
    for (const auto& r : outcome.runs)
      if (seeds.empty() || seeds.back() != r.seed) seeds.push_back(r.seed);
    for (auto seed : seeds) {
      const fs::path dir = root / outcome.id / std::to_string(seed);
      ArmTrajectories arms;
      for (const auto& r : outcome.runs)
        if (r.seed == seed) arms.emplace_back(r.arm, &r.result.trajectory);
      report::write_svg(dir / "loss.svg", curves_chart(id + " seed " + std::to_string(seed), "loss", arms, false));
      if (id == "fig2") {
        for (const auto& [arm, t] : arms)
          report::write_svg(dir / (arm + "_spectrum.svg"), spectrum_chart(id + " " + arm + " spectrum", *t));
      }
      if (id == "fig3") {
        report::write_svg(dir / "decorrelation.svg",
                          curves_chart(id + " seed " + std::to_string(seed), "input-output correlation", arms, true));
      }
    }
  }
  const auto& sm = outcome.summary;
  out << "experiment " << outcome.id << ": " << outcome.runs.size() << " runs, wrote "
      << (root / outcome.id / "summary.json").string();
  if (sm.contains("pass")) out << ", pass " << (sm["pass"].get<bool>() ? "true" : "false");
  out << "\n";
  if (fail_on_check && sm.contains("pass") && !sm["pass"].get<bool>()) {
    err << "experiment " << outcome.id << ": qualitative check failed\n";
    return kExitCheckFailed;
  }
  return kExitOk;
}

int cmd_equivariance(const GlobalOptions& g, std::ostream& out, std::ostream&) {
  const json cfg = load_config(g.config);
  ConfigObject o(cfg, "");
  const std::string map = o.text("map", "conv_mixer");
  std::size_t channels = o.count("channels", 8);
  std::size_t grid_h = o.count("grid_h", 4);
  std::size_t grid_w = o.count("grid_w", 4);
  std::size_t prefix = o.count("prefix", 2);
  const std::size_t batch = o.count("batch", 4);
  const std::size_t num_inputs = o.count("num_inputs", 4);
  const std::size_t radius = o.count("kernel_radius", 1);
  const std::size_t hidden = o.count("hidden", 16);
  const double pos_bias_scale = o.number("pos_bias_scale", 1.0);
  std::uint64_t seed = o.count("seed", 0);
  std::vector<std::string> input_paths;
  if (o.has("inputs")) {
    const json& v = o.raw("inputs");
    if (!v.is_array()) throw ConfigError("inputs: expected an array of paths");
    for (const auto& e : v) {
      if (!e.is_string()) throw ConfigError("inputs: expected an array of paths");
      input_paths.push_back(e.get<std::string>());
    }
  }
  std::vector<eq::Translation> translations;
  const json tj = o.has("translations") ? o.raw("translations") : json("unit_circular");
  if (tj.is_string()) {
    const std::string t = tj.get<std::string>();
    if (t == "unit_circular") {
      translations = eq::unit_translations(eq::ShiftMode::circular);
    } else if (t == "unit_zero_pad") {
      translations = eq::unit_translations(eq::ShiftMode::zero_pad);
    } else {
      throw ConfigError("translations: expected unit_circular, unit_zero_pad or a list");
    }
  } else if (tj.is_array()) {
    for (std::size_t i = 0; i < tj.size(); ++i) {
      ConfigObject t(tj[i], "translations[" + std::to_string(i) + "]");
      eq::Translation tr;
      const double dy = t.number("dy", 0), dx = t.number("dx", 0);
      if (dy != std::floor(dy) || dx != std::floor(dx)) throw ConfigError(t.path("dy") + ": shifts must be integers");
      tr.dy = static_cast<int>(dy);
      tr.dx = static_cast<int>(dx);
      const std::string mode = t.text("mode", "circular");
      if (mode == "zero_pad") {
        tr.mode = eq::ShiftMode::zero_pad;
      } else if (mode != "circular") {
        throw ConfigError(t.path("mode") + ": expected circular or zero_pad");
      }
      t.finish();
      translations.push_back(tr);
    }
  } else {
    throw ConfigError("translations: expected a string or a list");
  }
  o.finish();
  if (g.seed) seed = *g.seed;

  const fs::path dir = g.out_or_default() / "equivariance";
  std::vector<eq::TokenBatch> xs;
  if (!input_paths.empty()) {
    for (const auto& p : input_paths) xs.push_back(eq::read_token_batch(resolve(g, p)));
    for (const auto& x : xs)
      if (!x.same_layout(xs.front())) throw ConfigError("inputs: token batches have different layouts");
    channels = xs.front().channels;
    grid_h = xs.front().grid_h;
    grid_w = xs.front().grid_w;
    prefix = xs.front().prefix;
  } else {
    if (batch == 0 || num_inputs == 0 || channels == 0 || grid_h == 0 || grid_w == 0) {
      throw ConfigError("equivariance: batch, num_inputs, channels and grid must be positive");
    }
    Rng data = Rng(seed).fork(31);
    for (std::size_t i = 0; i < num_inputs; ++i) {
      eq::TokenBatch x = eq::TokenBatch::zeros(batch, channels, prefix, grid_h, grid_w);
      for (double& v : x.data) v = data.normal();
      fs::create_directories(dir / "inputs");
      eq::write_token_batch(dir / "inputs" / ("input_" + std::to_string(i) + ".bin"), x);
      xs.push_back(std::move(x));
    }
  }

  Rng model = Rng(seed).fork(32);
  const double s = 1.0 / std::sqrt(static_cast<double>(channels));
  std::unique_ptr<eq::TokenMap> phi;
  if (map == "identity") {
    phi = std::make_unique<eq::IdentityMap>();
  } else if (map == "token_mlp") {
    phi = std::make_unique<eq::TokenMlp>(model.gaussian(channels, hidden, s), model.gaussian(hidden, channels, s));
  } else if (map == "conv_mixer") {
    const std::size_t side = 2 * radius + 1;
    std::vector<Matrix> kernels;
    for (std::size_t i = 0; i < side * side; ++i)
      kernels.push_back(model.gaussian(channels, channels, s / static_cast<double>(side)));
    phi = std::make_unique<eq::ConvMixerMap>(radius, std::move(kernels));
  } else if (map == "self_attention") {
    const std::size_t n = prefix + grid_h * grid_w;
    eq::AttentionParams ap{model.gaussian(channels, channels, s), model.gaussian(channels, channels, s),
                           model.gaussian(channels, channels, s), model.gaussian(n, n, pos_bias_scale), true};
    phi = std::make_unique<eq::SelfAttentionMap>(std::move(ap));
  } else {
    throw ConfigError("map: expected identity, token_mlp, conv_mixer or self_attention, got '" + map + "'");
  }

  const eq::SuiteReport rep = eq::mu_t_suite(*phi, xs, translations);
  write_text(dir / "report.json", rep.to_json() + "\n");
  out << "equivariance: " << rep.phi_id << " mean mu_T " << io::format_double(rep.mean) << " over " << rep.n
      << " pairs, wrote " << (dir / "report.json").string() << "\n";
  return kExitOk;
}

int cmd_lowrank(const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  const json cfg = load_config(g.config);
  ConfigObject o(cfg, "");
  const std::size_t rows = o.count("rows", 32);
  const std::size_t ds = o.count("student_dim", 8);
  const std::size_t dt = o.count("teacher_dim", 12);
  const std::vector<std::size_t> ranks = o.counts("ranks", {1, 2, 3});
  const std::size_t instances = o.count("instances", 10);
  const bool whiten = o.flag("whiten", true);
  const double tolerance = o.number("tolerance", 0.01);
  dyn::LowRankOptions lro;
  lro.restarts = o.count("restarts", lro.restarts);
  lro.learning_rate = o.number("learning_rate", lro.learning_rate);
  lro.grad_tolerance = o.number("grad_tolerance", lro.grad_tolerance);
  lro.max_steps = o.count("max_steps", lro.max_steps);
  lro.init_scale = o.number("init_scale", lro.init_scale);
  std::uint64_t seed = o.count("seed", 0);
  o.finish();
  if (g.seed) seed = *g.seed;
  for (auto r : ranks)
    if (r == 0 || r > std::min(ds, dt)) throw ConfigError("ranks: each rank must be in [1, min(student_dim, teacher_dim)]");

  std::string csv = "instance,rank,constrained_loss,oracle_loss,rel_gap,projector_rank,projected_rank,bound_holds\n";
  std::size_t failures = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    Rng rng = Rng(seed).fork(40 + i);
    const Matrix zs = whitened_or_gaussian(rng, rows, ds, whiten);
    const Matrix zt = rng.gaussian(rows, dt);
    for (auto r : ranks) {
      dyn::LowRankOptions opts = lro;
      opts.seed = rng.next_u64();
      const dyn::LowRankGap gap = dyn::low_rank_gap(zs, zt, r, opts);
      const double rel = std::abs(gap.constrained_loss - gap.oracle_loss) / std::max(std::abs(gap.oracle_loss), 1e-12);
      const std::size_t pr = numerical_rank(gap.projector);
      const std::size_t qr = numerical_rank(matmul(zs, gap.projector));
      const bool bound = qr <= pr;
      worst = std::max(worst, rel);
      failures += !(rel <= tolerance) || !bound;
      csv += std::to_string(i) + "," + std::to_string(r) + "," + io::format_double(gap.constrained_loss) + "," +
             io::format_double(gap.oracle_loss) + "," + io::format_double(rel) + "," + std::to_string(pr) + "," +
             std::to_string(qr) + "," + (bound ? "1" : "0") + "\n";
    }
  }
  const fs::path dir = g.out_or_default() / "lowrank";
  write_text(dir / "lowrank.csv", csv);
  ojson sm;
  sm["command"] = "lowrank";
  sm["config"] = {{"rows", rows},         {"student_dim", ds},          {"teacher_dim", dt},
                  {"ranks", ranks},       {"instances", instances},     {"whiten", whiten},
                  {"tolerance", tolerance}, {"restarts", lro.restarts}, {"learning_rate", lro.learning_rate},
                  {"grad_tolerance", lro.grad_tolerance}, {"max_steps", lro.max_steps},
                  {"init_scale", lro.init_scale}, {"seed", seed}};
  sm["max_rel_gap"] = worst;
  sm["failures"] = failures;
  sm["pass"] = failures == 0;
  write_json(dir / "summary.json", sm);
  out << "lowrank: max relative gap " << io::format_double(worst) << ", wrote " << dir.string() << "\n";
  if (failures) {
    err << "lowrank: " << failures << " instance(s) outside tolerance or violating the rank bound\n";
    return kExitCheckFailed;
  }
  return kExitOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Feature distillation lab: gradient checks, projector dynamics, experiments, equivariance"};
  app.require_subcommand(1);
  GlobalOptions g;
  std::string config, outdir, experiment_id;
  std::uint64_t seed = 0;

  auto add_globals = [&](CLI::App* sub) {
    sub->add_option("--config", config, "JSON config file");
    sub->add_option("--out", outdir, "output directory (default runs)");
    sub->add_option("--seed", seed, "seed override");
    sub->add_flag("--plot", g.plot, "also write SVG plots");
  };
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks of every analytic gradient");
  CLI::App* dynamics = app.add_subcommand("dynamics", "projector-only training dynamics on synthetic features");
  CLI::App* experiment = app.add_subcommand("experiment", "teacher/student experiment by id");
  CLI::App* equivariance = app.add_subcommand("equivariance", "score a token map with the mu_T suite");
  CLI::App* lowrank = app.add_subcommand("lowrank", "rank-constrained projector vs truncated-SVD oracle");
  experiment->add_option("id", experiment_id, "fig2 | fig3 | logsum | batch_size | equivariance")->required();
  for (CLI::App* sub : {gradcheck, dynamics, experiment, equivariance, lowrank}) add_globals(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  for (CLI::App* sub : {gradcheck, dynamics, experiment, equivariance, lowrank}) {
    if (!sub->parsed()) continue;
    if (sub->count("--config")) g.config = config;
    if (sub->count("--out")) g.out = outdir;
    if (sub->count("--seed")) g.seed = seed;
  }
  kernels::configure_threads();

  try {
    if (gradcheck->parsed()) return cmd_gradcheck(g, out, err);
    if (dynamics->parsed()) return cmd_dynamics(g, out, err);
    if (experiment->parsed()) return cmd_experiment(experiment_id, g, out, err);
    if (equivariance->parsed()) return cmd_equivariance(g, out, err);
    return cmd_lowrank(g, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UnsupportedError& e) {
    err << "unsupported configuration: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

}  // namespace dlab::cli
