// Copyright 2026 The mtlopt Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion, each with its own
// tolerance and runtime budget. Exits non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mtlopt/harness.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

namespace {

using namespace mtlopt;
using namespace mtlopt::harness;
using testing::Gen;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> body;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

fs::path scratch(const std::string& leaf) {
  const fs::path p = fs::temp_directory_path() / ("mtlopt_acceptance_" + leaf);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

TaskGradients tg(std::vector<Vec> g) { return TaskGradients::flat(std::move(g)); }

// --- 1 ------------------------------------------------------------------------

Outcome adaptive_beta_mapping() {
  const MomentumBounds b{0.1, 0.9};
  const bool exact = beta_from_rho(-1.0, b) == 0.1 && beta_from_rho(0.0, b) == 0.5 && beta_from_rho(1.0, b) == 0.9;
  Gen gen(1);
  int violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const double r1 = gen.uniform(-1, 1);
    const double r2 = gen.uniform(-1, 1);
    const double lo = std::min(r1, r2);
    const double hi = std::max(r1, r2);
    if (beta_from_rho(lo, b) > beta_from_rho(hi, b)) ++violations;
  }
  return {exact && violations == 0,
          std::string("endpoints ") + (exact ? "exact" : "inexact") + ", monotonicity violations " +
              std::to_string(violations) + "/1000"};
}

// --- 2 ------------------------------------------------------------------------

Outcome tracking_error_identity() {
  int runs = 0;
  double worst_residual = 0.0;
  double worst_margin = 0.0;  // largest ratio / bound
  std::string bad;
  std::uint64_t seed = 0;
  for (const char* problem : {"quad2", "quadK"})
    for (const char* opt : {"adam", "muon", "adamw"})
      for (const json& beta : {json("apt"), json(0.9), json(0.6)})
        for (const char* agg : {"ls", "mgda"}) {
          json doc = {{"version", 1},
                      {"run_id", "track"},
                      {"problem", {{"name", problem}, {"rows", 3}, {"cols", 3}, {"seed", seed}, {"noise", 0.05}}},
                      {"aggregator", {{"id", agg}}},
                      {"optimizer", {{"id", opt}, {"beta1", beta}}},
                      {"steps", 300},
                      {"inits", {{"seed", seed}, {"count", 1}, {"scale", 1.0}}},
                      {"record_every", 300}};
          if (std::string(problem) == "quadK") doc["problem"]["conflict_angle"] = 2.0;
          ++seed;
          const RunResult r = run(parse_run_config(doc), {.keep_history = true, .write_files = false});
          for (std::size_t i = 0; i < r.histories.size(); ++i) {
            ++runs;
            worst_residual = std::max(worst_residual, tracking_error_recursion_check(r.histories[i]));
            const double margin = r.monitor_ratio[i] / TrackingMonitor::bound_constant(r.beta_max);
            worst_margin = std::max(worst_margin, margin);
            if (margin > 1.0) bad = std::string(problem) + "/" + opt + "/" + beta.dump() + "/" + agg;
          }
        }
  const bool pass = runs >= 20 && worst_residual <= 1e-10 && worst_margin <= 1.0;
  return {pass, std::to_string(runs) + " runs, max residual " + fmt("%.2e", worst_residual) +
                    ", max monitor ratio/bound " + fmt("%.3g", worst_margin) + (bad.empty() ? "" : " (" + bad + ")")};
}

// --- 3 ------------------------------------------------------------------------

Vec sorted_nonneg(Gen& gen, std::size_t n, bool ascending) {
  Vec a(n);
  for (double& x : a) x = gen.uniform(0, 2);
  if (ascending) {
    std::sort(a.begin(), a.end());
  } else {
    std::sort(a.begin(), a.end(), std::greater<>());
  }
  return a;
}

Outcome muon_balancing() {
  Gen gen(3);
  int passed = 0;
  double worst_gap = std::numeric_limits<double>::infinity();
  double worst_oracle = 0.0;
  for (int i = 0; i < 500; ++i) {
    const std::size_t n = gen.size(2, 6);
    const std::size_t m = n + gen.size(0, 3);
    const Mat u = random_orthonormal(m, n, gen.rng());
    const Mat v = random_orthonormal(n, n, gen.rng());
    // Distinct, descending singular values keep the basis identifiable.
    Vec sigma(n);
    double s = gen.uniform(0.5, 1.5);
    for (std::size_t k = n; k-- > 0;) {
      sigma[k] = s;
      s += gen.uniform(0.2, 3.0);
    }
    const Vec strong = sorted_nonneg(gen, n, false);
    const Vec weak = sorted_nonneg(gen, n, true);
    auto outer = [&](std::size_t k, std::size_t l, double w, Mat& into) {
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) into(r, c) += w * u(r, k) * v(c, l);
    };
    Mat g(m, n);
    for (std::size_t k = 0; k < n; ++k) outer(k, k, sigma[k], g);
    auto task = [&](const Vec& alpha) {
      Mat t(m, n);
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < n; ++l) outer(k, l, k == l ? alpha[k] : gen.normal(), t);
      // Add a component in the left null space of G where one exists.
      if (m > n) {
        Mat z = gen.mat(m, n);
        const Mat uz = matmul(u.transposed(), z);
        z = z - matmul(u, uz);
        t = t + z;
      }
      return t;
    };
    const std::vector<Mat> tasks{task(strong), task(weak)};
    const MuonProjection p = muon_projection_pair(g, tasks);
    const double gap = p.p_g[0] * p.p_o[1] - p.p_o[0] * p.p_g[1];
    if (gap >= -1e-9) ++passed;
    worst_gap = std::min(worst_gap, gap);
    // By construction the polar factor of G is U Vᵀ.
    const Mat o = matmul_nt(u, v);
    for (std::size_t t = 0; t < 2; ++t)
      worst_oracle = std::max(worst_oracle, std::abs(frobenius_inner(tasks[t], o) - p.p_o[t]));
  }
  return {passed == 500 && worst_oracle <= 1e-9,
          std::to_string(passed) + "/500 constructions, min slack " + fmt("%.3g", worst_gap) +
              ", polar cross-check " + fmt("%.2e", worst_oracle)};
}

// --- 4 ------------------------------------------------------------------------

Outcome newton_schulz_vs_polar() {
  Gen gen(4);
  double lo = 2.0;
  double hi = 0.0;
  double worst_dist = 0.0;
  int well_conditioned = 0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t r = gen.size(1, 32);
    const std::size_t c = gen.size(1, 32);
    const double cond = i % 2 ? gen.uniform(1, 10) : gen.uniform(1, 100);
    const Mat a = gen.conditioned(r, c, cond);
    const Mat x = newton_schulz(a, 10);
    for (double s : svd(x).sigma) {
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    if (cond <= 10) {
      ++well_conditioned;
      worst_dist = std::max(worst_dist, max_abs_diff(x, polar_factor(a)));
    }
  }
  return {lo >= 0.95 && hi <= 1.05 && worst_dist <= 0.05,
          "singular values in [" + fmt("%.4f", lo) + ", " + fmt("%.4f", hi) + "], max entry distance " +
              fmt("%.2e", worst_dist) + " over " + std::to_string(well_conditioned) + " matrices with cond <= 10"};
}

// --- 5 ------------------------------------------------------------------------

Outcome aggregator_oracles() {
  Gen gen(5);
  double mgda_gap = 0.0;
  double cagrad_gap = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::vector<Vec> pts = gen.vecs(2, gen.size(2, 6));
    const AggregationResult m = mgda(tg(pts));
    mgda_gap = std::max(mgda_gap, std::abs(testing::vnorm(m.combined) - testing::grid_min_norm(pts, 1e-4).value));

    const double c = gen.uniform(0.05, 0.95);
    const AggregationResult r = cagrad(tg(pts), {c, 500});
    if (r.degenerate) continue;
    Vec w = *r.weights;
    const double lambda = std::accumulate(w.begin(), w.end(), 0.0) - 1.0;
    for (double& x : w) x = (x - 0.5) / lambda;
    const auto grid =
        testing::grid_simplex(2, 1e-4, [&](const Vec& v) { return testing::cagrad_inner(pts, v, c); });
    cagrad_gap = std::max(cagrad_gap, std::abs(testing::cagrad_inner(pts, w, c) - grid.value));
  }

  int pcgrad_bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const Vec g1 = gen.nonzero_vec(gen.size(2, 8));
    Vec g2 = gen.nonzero_vec(g1.size());
    const AggregationResult r = pcgrad(tg({g1, g2}), static_cast<std::uint64_t>(i));
    // Each projected gradient must not conflict with the other raw gradient.
    auto proj = [](const Vec& a, const Vec& b) {
      const double ab = dot(a, b);
      return ab < 0 ? sub(a, scaled(b, ab / dot(b, b))) : a;
    };
    const Vec p1 = proj(g1, g2);
    const Vec p2 = proj(g2, g1);
    if (dot(p1, g2) < -1e-10 || dot(p2, g1) < -1e-10) ++pcgrad_bad;
    if (testing::vnorm(sub(r.combined, testing::pcgrad_two(g1, g2))) > 1e-10 * (1.0 + testing::vnorm(r.combined)))
      ++pcgrad_bad;
  }

  int ldp_bad = 0;
  int ldp_checked = 0;
  while (ldp_checked < 500) {
    const std::size_t k = gen.size(2, 6);
    const std::vector<Vec> pts = gen.vecs(k, gen.size(2, 6));
    if (testing::vnorm(testing::mix(pts, Vec(k, 1.0 / static_cast<double>(k)))) < 1e-6) continue;
    ++ldp_checked;
    const AggregationResult r = ldp(tg(pts));
    const double sum = std::accumulate(r.weights->begin(), r.weights->end(), 0.0);
    if (std::abs(sum - static_cast<double>(k)) > 1e-10) ++ldp_bad;
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen.rng());
    std::vector<Vec> permuted;
    for (std::size_t j : perm) permuted.push_back(pts[j]);
    const AggregationResult rp = ldp(tg(permuted));
    for (std::size_t j = 0; j < k; ++j)
      if (std::abs((*rp.weights)[j] - (*r.weights)[perm[j]]) > 1e-12) {
        ++ldp_bad;
        break;
      }
  }
  return {mgda_gap <= 1e-3 && cagrad_gap <= 1e-3 && pcgrad_bad == 0 && ldp_bad == 0,
          "MGDA gap " + fmt("%.2e", mgda_gap) + ", CAGrad gap " + fmt("%.2e", cagrad_gap) + ", PCGrad failures " +
              std::to_string(pcgrad_bad) + "/1000, LDP failures " + std::to_string(ldp_bad) + "/500"};
}

// --- 6 ------------------------------------------------------------------------

Outcome effective_rank_values() {
  bool identity = true;
  for (std::size_t n = 2; n <= 8; ++n) identity = identity && effective_rank(Mat::identity(n)) == static_cast<double>(n);
  const double r1 = effective_rank(matmul(Mat(3, 1, Vec{1, 2, 3}), Mat(1, 3, Vec{2, -1, 0.5})));
  const double d = effective_rank(Mat::diag(Vec{2, 1, 1}));
  const bool pass = identity && std::abs(r1 - 1.0) <= 1e-10 && std::abs(d - 2.0 * std::sqrt(2.0)) <= 1e-10;
  return {pass, std::string("identity ") + (identity ? "exact" : "inexact") + ", rank-1 " + fmt("%.15g", r1) +
                    ", diag(2,1,1) error " + fmt("%.2e", std::abs(d - 2.0 * std::sqrt(2.0)))};
}

// --- 7 ------------------------------------------------------------------------

Outcome delta_m_and_mean_rank() {
  struct Case {
    BenchmarkScores s;
    double want;
  };
  const std::vector<Case> cases{
      {{{72, 0.025}, {70, 0.02}, {true, false}}, 100.0 * (-(2.0 / 70.0) + 0.25) / 2.0},
      {{{1, 2}, {1, 2}, {true, false}}, 0.0},
      {{{11}, {10}, {true}}, -10.0},
      {{{9}, {10}, {false}}, -10.0},
  };
  double worst = 0.0;
  for (const Case& c : cases) worst = std::max(worst, std::abs(delta_m(c.s) - c.want));
  const double mixed = delta_m(cases[0].s);
  const bool mixed_ok = std::abs(mixed - 11.071) <= 5e-4;

  // Column 0 ties the first two methods (1.5 each); column 1 is strict.
  const Vec r = mean_rank({{1, 3}, {1, 2}, {0, 1}}, {true, true});
  const bool ties = r == Vec{1.25, 1.75, 3.0} && mean_rank({{0.5}, {0.5}}, {true}) == Vec{1.5, 1.5};
  return {worst <= 1e-9 && mixed_ok && ties, "max error " + fmt("%.2e", worst) + ", mixed-direction case " +
                                                 fmt("%.4f", mixed) + ", tie convention " +
                                                 (ties ? "averaged" : "wrong")};
}

// --- 8 ------------------------------------------------------------------------

RunConfig toy_config(const std::string& beta, const fs::path& dir) {
  json opt = {{"id", "adam"}, {"lr", 0.003}};
  if (beta == "apt") {
    opt["beta1"] = "apt";
    opt["beta_min"] = 0.1;
    opt["beta_max"] = 0.9;
  } else {
    opt["beta1"] = std::stod(beta);
  }
  RunConfig c = parse_run_config({{"version", 1},
                                  {"run_id", "toy_" + beta},
                                  {"problem", {{"name", "toy2d"}}},
                                  {"aggregator", {{"id", "cagrad"}, {"c", 0.4}}},
                                  {"optimizer", opt},
                                  {"steps", 50000},
                                  {"record_every", 1000}});
  c.output_dir = dir.string();
  return c;
}

double mean_update_cos(const RunResult& r) {
  Vec xs;
  for (const SummaryRow& row : r.summary)
    if (row.mean_update_cos) xs.push_back(*row.mean_update_cos);
  return xs.empty() ? std::nan("") : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

Outcome toy_momentum() {
  const fs::path dir = scratch("toy");
  const RunResult apt = run(toy_config("apt", dir));
  int reached = 0;
  double worst = 0.0;
  for (const ParetoVerdict& v : pareto_check(read_trajectory(apt.trajectory_path.string()), 1e-3)) {
    if (v.verdict == "reached") ++reached;
    if (v.min_norm) worst = std::max(worst, *v.min_norm);
  }
  const double with_momentum = mean_update_cos(run(toy_config("0.9", dir)));
  const double without = mean_update_cos(run(toy_config("0", dir)));
  const double adaptive = mean_update_cos(apt);
  fs::remove_all(dir);
  const bool pass = reached == 5 && with_momentum - without >= 0.05;
  return {pass, "APT reached " + std::to_string(reached) + "/5 (max min-norm " + fmt("%.2e", worst) +
                    "); mean update cos beta1=0.9 " + fmt("%.3f", with_momentum) + " vs beta1=0 " +
                    fmt("%.3f", without) + " (APT " + fmt("%.3f", adaptive) + ", informational)"};
}

// --- 9 ------------------------------------------------------------------------

std::vector<std::pair<std::string, std::string>> tree(const fs::path& root) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    // Wall-clock timings are the one output allowed to differ.
    if (e.path().filename().string().ends_with("_timing.csv")) continue;
    out.emplace_back(fs::relative(e.path(), root).string(), slurp(e.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome beta_sweep() {
  RunConfig base = load_run_config(std::string(MTLOPT_CONFIG_DIR) + "/quadk_sweep.json");
  const auto betas = parse_betas("0.9,0.6,0.2,0.0");
  const std::vector<std::uint64_t> seeds{0, 1, 2};
  const fs::path a = scratch("sweep_a");
  const fs::path b = scratch("sweep_b");
  base.output_dir = a.string();
  const SweepResult ra = sweep_beta(base, betas, seeds);
  base.output_dir = b.string();
  const SweepResult rb = sweep_beta(base, betas, seeds);

  std::size_t complete = 0;
  for (const SweepCell& c : ra.cells)
    if (c.failed() == 0 && c.mean() && c.stddev()) ++complete;
  const auto files_a = tree(a);
  const bool identical = files_a == tree(b) && sweep_grid(ra.cells) == sweep_grid(rb.cells);
  std::printf("%s", sweep_grid(ra.cells).c_str());
  fs::remove_all(a);
  fs::remove_all(b);
  return {ra.cells.size() == 16 && complete == 16 && identical,
          std::to_string(complete) + "/16 cells complete, " + std::to_string(files_a.size()) + " files " +
              (identical ? "byte-identical" : "DIFFER") + " across reruns"};
}

// --- 10 -----------------------------------------------------------------------

double fd_error(const Problem& p, const Vec& x) {
  const Evaluation e = p.eval(x);
  double worst = 0.0;
  for (std::size_t i = 0; i < p.tasks(); ++i) {
    const Vec fd = testing::central_difference([&](const Vec& y) { return p.eval(y).losses[i]; }, x, 1e-5);
    const Vec g(e.grads.task(i).begin(), e.grads.task(i).end());
    worst = std::max(worst, testing::vnorm(sub(fd, g)) / std::max(1.0, testing::vnorm(g)));
  }
  return worst;
}

Outcome gradient_checks() {
  Gen gen(10);
  std::string detail;
  bool pass = true;
  for (const char* name : {"quad2", "quadK", "toy2d"}) {
    json doc = {{"version", 1}, {"problem", {{"name", name}}}};
    if (std::string(name) != "toy2d") doc["problem"].update({{"rows", 3}, {"cols", 2}, {"condition", 20}});
    if (std::string(name) == "quadK") doc["problem"].update({{"tasks", 4}, {"conflict_angle", 1.8}});
    const Problem p = build_problem(parse_run_config(doc).problem);
    double worst = 0.0;
    for (int i = 0; i < 20;) {
      const Vec x = gen.vec(p.dimension(), std::string(name) == "toy2d" ? 4.0 : 2.0);
      // The toy losses have kinks at x2 = 0 and where a log argument
      // crosses zero; central differences are meaningless there.
      if (std::string(name) == "toy2d") {
        const double t = std::tanh(x[1]);
        if (std::abs(x[1]) < 1e-2 || std::abs(0.5 * (-x[0] - 7) + t) < 1e-2 ||
            std::abs(0.5 * (-x[0] + 3) - t + 2) < 1e-2)
          continue;
      }
      worst = std::max(worst, fd_error(p, x));
      ++i;
    }
    pass = pass && worst <= 1e-5;
    detail += std::string(detail.empty() ? "" : ", ") + name + " " + fmt("%.2e", worst);
  }
  return {pass, "max relative error: " + detail};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "adaptive beta mapping", 1.0, adaptive_beta_mapping},
      {2, "tracking-error identity and monitor", 10.0, tracking_error_identity},
      {3, "Muon balancing inequality", 30.0, muon_balancing},
      {4, "Newton-Schulz vs polar factor", 30.0, newton_schulz_vs_polar},
      {5, "aggregator oracles", 60.0, aggregator_oracles},
      {6, "effective rank", 1.0, effective_rank_values},
      {7, "delta-m and mean rank", 1.0, delta_m_and_mean_rank},
      {8, "toy2d momentum comparison", 300.0, toy_momentum},
      {9, "beta sweep grid", 600.0, beta_sweep},
      {10, "finite-difference gradients", 10.0, gradient_checks},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::printf("%s criterion %d (%s): %s [%.2f s of %.0f s%s]\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs, c.budget_s, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
