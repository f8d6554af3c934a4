// Acceptance run: one line per criterion, P1..P8 gating, P9 recorded only.
//
//   acceptance <path-to-dlab-cli> [work-dir] [P1 P4 ...]

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/oracles.hpp"
#include "dlab/dynamics.hpp"
#include "dlab/equivariance.hpp"
#include "dlab/gradcheck.hpp"
#include "dlab/kernels.hpp"
#include "dlab/linalg.hpp"
#include "dlab/rng.hpp"
#include "dlab/trainlab.hpp"

namespace fs = std::filesystem;
using namespace dlab;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string id;
  std::string title;
  double budget_s;
  bool gating;
  std::function<Verdict()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<std::uint64_t> seeds(std::size_t n) {
  std::vector<std::uint64_t> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = i;
  return s;
}

Matrix whitened(Rng& rng, std::size_t rows, std::size_t cols) { return orthonormalize_columns(rng.gaussian(rows, cols)); }

fs::path g_work;
std::string g_cli;

// ---------------------------------------------------------------------------

Verdict p1() {
  gc::SuiteOptions opts;  // 20 instances, h = 1e-6, tolerance 1e-5
  const auto reports = gc::run_suite(opts);
  const std::set<std::string> required{
      "normalize_vjp/none",     "normalize_vjp/l2_row",  "normalize_vjp/batch",     "normalize_vjp/group",
      "distance_grad/frobenius", "distance_grad/logsum1", "distance_grad/logsum2",   "distance_grad/logsum3",
      "distance_grad/logsum4",  "distance_grad/logsum4.7", "distance_grad/logsum5",  "distance_grad/logsumexp",
      "project/linear",         "project/mlp3",           "task_loss",               "distill_loss"};
  std::set<std::string> seen;
  double worst = 0.0;
  std::string failed;
  bool ok = true;
  for (const auto& r : reports) {
    if (r.name == "projector_velocity") continue;
    seen.insert(r.name);
    worst = std::max(worst, r.max_rel_error);
    if (r.instances < 20 || r.tolerance > 1e-5 || !r.pass()) {
      ok = false;
      failed += " " + r.name;
    }
  }
  std::string missing;
  for (const auto& n : required)
    if (!seen.count(n)) missing += " " + n;
  ok = ok && missing.empty();
  return {ok, std::to_string(seen.size()) + " components x 20 instances, max rel err " + fmt("%.2e", worst) +
                  (failed.empty() ? "" : ", failing:" + failed) + (missing.empty() ? "" : ", missing:" + missing)};
}

Verdict p2() {
  Rng rng(2024);
  double worst_v = 0.0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t b = 8 + rng.index(24), ds = 2 + rng.index(8), dt = 2 + rng.index(8);
    const Matrix zs = rng.gaussian(b, ds), zt = rng.gaussian(b, dt), w = rng.gaussian(ds, dt);
    const Matrix v = dyn::projector_velocity(dyn::correlations(zs, zt), w);
    const Matrix fd = oracle::fd_gradient(
        [&](const Matrix& x) { return 0.5 * squared_norm(oracle::matmul(zs, x) - zt); }, w);
    worst_v = std::max(worst_v, oracle::rel_err(v, fd * -1.0));
  }
  const Matrix zs = whitened(rng, 64, 8), zt = rng.gaussian(64, 12);
  const auto c = dyn::correlations(zs, zt);
  dyn::DynamicsConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.0;
  Matrix w(8, 12);
  for (int t = 0; t < 200; ++t) w = dyn::step(w, c, cfg);
  const double fp = frobenius_norm(w - c.cst) / frobenius_norm(c.cst);
  return {worst_v <= 1e-6 && fp <= 1e-6,
          "velocity max rel err " + fmt("%.2e", worst_v) + " over 50; fixed point rel dist after 200 steps " + fmt("%.2e", fp)};
}

Verdict p3() {
  Rng rng(7);
  dyn::DynamicsConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.02;
  std::vector<dyn::CorrelationPair> stream;
  for (int i = 0; i < 50; ++i) stream.push_back(dyn::correlations(whitened(rng, 48, 6), rng.gaussian(48, 10)));
  const double stream_err = dyn::ema_equivalence(stream, cfg).max_abs_diff;

  cfg.weight_decay = cfg.learning_rate;  // eta = alpha_p
  const auto c = dyn::correlations(whitened(rng, 48, 6), rng.gaussian(48, 10));
  const auto e = dyn::ema_equivalence(std::vector<dyn::CorrelationPair>(300, c), cfg);
  const double half_err = max_abs_diff(e.simulated, c.cst * 0.5);
  return {stream_err <= 1e-12 && half_err <= 1e-9,
          "50-batch recurrence max diff " + fmt("%.2e", stream_err) + "; constant-Cst limit |m - Cst/2| " + fmt("%.2e", half_err)};
}

Verdict p4() {
  const auto out = lab::experiment_fig2(seeds(10));
  lab::write_outcome(g_work / "runs", out);
  const auto& s = out.summary;
  const std::size_t ge = s["none_ge_batch"], gt = s["none_gt_batch"];
  return {ge >= 8 && gt >= 5, "none >= batch in " + std::to_string(ge) + "/10, strictly in " + std::to_string(gt) + "/10"};
}

Verdict p5() {
  const auto out = lab::experiment_fig3(seeds(10));
  lab::write_outcome(g_work / "runs", out);
  const auto& s = out.summary;
  const std::size_t wins = s["linear_gt_mlp3"];
  const bool mono = s["median_seed_mlp3_non_increasing"];
  return {wins >= 8, "linear > mlp3 in " + std::to_string(wins) + "/10 (median-seed mlp3 curve non-increasing: " +
                         (mono ? "yes" : "no") + ", informational)"};
}

Verdict p6() {
  const auto out = lab::experiment_equivariance(seeds(10));
  lab::write_outcome(g_work / "runs", out);
  const auto& s = out.summary;
  const double teacher = s["teacher_mu_max"];
  const std::size_t lower = s["distilled_lower"];

  Rng rng(99);
  std::vector<eq::TokenBatch> xs;
  for (int i = 0; i < 4; ++i) {
    eq::TokenBatch x = eq::TokenBatch::zeros(4, 8, 2, 6, 6);
    for (double& v : x.data) v = rng.normal();
    xs.push_back(std::move(x));
  }
  const eq::IdentityMap id;
  const eq::TokenMlp mlp(rng.gaussian(8, 16, 0.35), rng.gaussian(16, 8, 0.25));
  const double mu_id = eq::mu_t_suite(id, xs, eq::unit_translations()).mean;
  const double mu_mlp = eq::mu_t_suite(mlp, xs, eq::unit_translations()).mean;
  const double ratio = s["mean_ratio_task_only_over_distilled"];
  return {teacher <= 1e-12 && lower >= 8 && mu_id <= 1e-12 && mu_mlp <= 1e-12,
          "teacher mu max " + fmt("%.1e", teacher) + "; distilled lower in " + std::to_string(lower) +
              "/10 (mean ratio " + fmt("%.1f", ratio) + "x); identity " + fmt("%.1e", mu_id) + ", token MLP " +
              fmt("%.1e", mu_mlp)};
}

Verdict p7() {
  Rng rng(31);
  double worst = 0.0;
  bool ranks_ok = true;
  for (int inst = 0; inst < 10; ++inst) {
    const Matrix zs = whitened(rng, 32, 8), zt = rng.gaussian(32, 12);
    // Independent oracle: eigenvalues of Cst^T Cst by two-sided Jacobi.
    const Matrix cst = oracle::matmul(oracle::transpose(zs), zt);
    const auto sv = oracle::singular_values(cst);
    for (std::size_t r = 1; r <= 3; ++r) {
      dyn::LowRankOptions o;
      o.seed = static_cast<std::uint64_t>(inst);
      const auto g = dyn::low_rank_gap(zs, zt, r, o);
      double kept = 0.0;
      for (std::size_t i = 0; i < r; ++i) kept += sv[i] * sv[i];
      const double oracle_loss = 0.5 * (squared_norm(zt) - kept);
      worst = std::max(worst, std::abs(g.constrained_loss - oracle_loss) / oracle_loss);
      const std::size_t rank_w = numerical_rank(g.projector);
      if (numerical_rank(matmul(zs, g.projector)) > rank_w || rank_w > r) ranks_ok = false;
    }
  }
  return {worst <= 0.01 && ranks_ok, "30 (instance, rank) cells, max rel gap " + fmt("%.2e", worst) +
                                         ", rank(zs Wp) <= rank(Wp) " + (ranks_ok ? "everywhere" : "VIOLATED")};
}

int sh(const std::string& cmd) {
  const int st = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension();
    if (ext != ".csv" && ext != ".json") continue;
    std::ifstream is(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    files[fs::relative(e.path(), root).string()] = ss.str();
  }
  return files;
}

Verdict p8() {
  const fs::path dir = g_work / "plumbing";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream(dir / name, std::ios::binary) << text;
    return (dir / name).string();
  };
  const std::string dyn_cfg = write("dynamics.json", R"({"steps": 100, "record_every": 10})");
  const std::string lr_cfg = write("lowrank.json", R"({"instances": 3})");
  const std::string eq_cfg = write("equivariance.json", R"({"map": "self_attention", "num_inputs": 2})");
  const std::string exp_cfg = write("fig2.json", R"({"steps": 60, "record_every": 20, "seeds": [0]})");
  const std::string strict = write("strict.json", R"({"tolerance": 1e-20, "instances": 2, "velocity_instances": 2})");
  const std::string broken = write("broken.json", R"({"steps": 10,)");
  const std::string unknown = write("unknown.json", R"({"stepz": 10})");

  auto all_runs = [&](const fs::path& out) {
    const std::string o = " --out '" + out.string() + "'";
    int worst = 0;
    for (const std::string& c : {"gradcheck" + o, "dynamics --config '" + dyn_cfg + "'" + o,
                                 "lowrank --config '" + lr_cfg + "'" + o, "equivariance --config '" + eq_cfg + "'" + o,
                                 "experiment fig2 --config '" + exp_cfg + "'" + o})
      worst = std::max(worst, sh("'" + g_cli + "' " + c));
    return worst;
  };
  const int ca = all_runs(dir / "a"), cb = all_runs(dir / "b");
  const auto sa = snapshot(dir / "a"), sb = snapshot(dir / "b");
  const bool same = ca == 0 && cb == 0 && sa == sb && sa.size() >= 8;

  const int forced = sh("'" + g_cli + "' gradcheck --config '" + strict + "'");
  const int malformed = sh("'" + g_cli + "' dynamics --config '" + broken + "' --out '" + (dir / "x").string() + "'");
  const int unknown_key = sh("'" + g_cli + "' dynamics --config '" + unknown + "' --out '" + (dir / "x").string() + "'");
  const int no_cmd = sh("'" + g_cli + "'");
  const bool codes = forced == 1 && malformed == 2 && unknown_key == 2 && no_cmd == 2;
  return {same && codes, std::to_string(sa.size()) + " artifacts " + (same ? "byte-identical" : "DIFFER") +
                             "; exit codes forced-failure " + std::to_string(forced) + ", malformed " +
                             std::to_string(malformed) + ", unknown key " + std::to_string(unknown_key) +
                             ", no command " + std::to_string(no_cmd)};
}

Verdict p9() {
  const auto out = lab::experiment_logsum(seeds(3));
  lab::write_outcome(g_work / "runs", out);
  const auto& s = out.summary;
  const std::size_t wins = s["large_gap_logsum45_beats_frobenius_seeds"];
  const bool dir = s["direction_matches_reference"];
  const double frob = s["arms"]["large_gap_frobenius"]["mean_accuracy"];
  const double l4 = s["arms"]["large_gap_logsum4"]["mean_accuracy"];
  const double l5 = s["arms"]["large_gap_logsum5"]["mean_accuracy"];
  return {dir, "logsum 4-5 beats frobenius in " + std::to_string(wins) + "/3 seeds; mean acc frobenius " +
                   fmt("%.3f", frob) + ", logsum4 " + fmt("%.3f", l4) + ", logsum5 " + fmt("%.3f", l5)};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <dlab-cli> [work-dir] [criterion ...]\n";
    return 2;
  }
  g_cli = fs::absolute(argv[1]).string();
  g_work = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "dlab_acceptance";
  std::set<std::string> only;
  for (int i = 3; i < argc; ++i) only.insert(argv[i]);
  fs::create_directories(g_work);
  kernels::configure_threads();

  const std::vector<Criterion> all{
      {"P1", "gradient correctness", 60, true, p1},
      {"P2", "projector velocity and whitened fixed point", 10, true, p2},
      {"P3", "moving-average equivalence", 5, true, p3},
      {"P4", "normalization and spectrum shrinkage", 600, true, p4},
      {"P5", "projector depth and decorrelation", 600, true, p5},
      {"P6", "equivariance transfer", 600, true, p6},
      {"P7", "low-rank subspace", 300, true, p7},
      {"P8", "determinism and exit codes", 120, true, p8},
      {"P9", "logsum direction (exploratory)", 1e9, false, p9},
  };

  int gating_failures = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = v.pass && in_time;
    const char* tag = c.gating ? (pass ? "PASS" : "FAIL") : (pass ? "INFO yes" : "INFO no");
    std::cout << c.id << ' ' << tag << "  " << c.title << ": " << v.detail << " [" << fmt("%.1f", secs) << " s"
              << (c.gating ? ", budget " + fmt("%.0f", c.budget_s) + " s" : "") << (in_time ? "" : ", OVER BUDGET")
              << "]" << std::endl;
    if (c.gating && !pass) ++gating_failures;
  }
  return gating_failures == 0 ? 0 : 1;
}
