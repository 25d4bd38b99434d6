// Copyright 2026 The mtlopt Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment orchestration: single runs, β₁ sweeps and Pareto checks.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mtlopt/aggregators.hpp"
#include "mtlopt/diagnostics.hpp"
#include "mtlopt/error.hpp"
#include "mtlopt/harness/config.hpp"
#include "mtlopt/harness/trajectory.hpp"
#include "mtlopt/linalg.hpp"
#include "mtlopt/optimizers.hpp"
#include "mtlopt/problems.hpp"

namespace mtlopt::harness {

namespace fs = std::filesystem;

struct RunOptions {
  /// Keep the per-step (β_t, G_t, m_t) history of every initialization.
  bool keep_history = false;
  /// Write the trajectory and summary files (otherwise only in memory).
  bool write_files = true;
};

struct RunResult {
  json header;
  std::vector<json> records;
  std::vector<SummaryRow> summary;
  std::vector<std::vector<MomentumTrace>> histories;
  /// Tracking-monitor ratio and β_max in effect, per initialization.
  Vec monitor_ratio;
  double beta_max = 0.0;
  fs::path trajectory_path;
  fs::path summary_path;

  bool aborted() const {
    return std::any_of(summary.begin(), summary.end(), [](const SummaryRow& r) { return r.status != "ok"; });
  }
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

inline std::vector<Vec> starting_points(const RunConfig& cfg, std::size_t dim) {
  if (!cfg.init.points.empty()) return cfg.init.points;
  std::vector<Vec> out;
  for (std::size_t i = 0; i < cfg.init.count; ++i) {
    std::mt19937_64 rng(mix_seed(cfg.init.seed, i));
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec p(dim);
    for (double& x : p) x = cfg.init.scale > 0.0 ? cfg.init.scale * normal(rng) : 0.0;
    out.push_back(std::move(p));
  }
  return out;
}

inline TaskGradients add_noise(const TaskGradients& tg, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, sigma);
  std::vector<Vec> grads = tg.all();
  for (Vec& g : grads)
    for (double& x : g) x += normal(rng);
  return TaskGradients(tg.layout(), std::move(grads));
}

inline json step_record(std::size_t init, std::uint64_t step, const Evaluation& e, std::span<const double> theta,
                        const AggregationResult& agg, std::span<const double> descent, const StepReport& rep,
                        const std::optional<double>& update_cos) {
  const TaskGradients& tg = e.grads;
  const std::size_t k = tg.tasks();
  json cos = json::array();
  json proj = json::array();
  std::optional<double> lo;
  std::optional<double> hi;
  bool all_defined = true;
  for (std::size_t i = 0; i < k; ++i) {
    cos.push_back(optional_json(try_cosine(agg.combined, tg.task(i))));
    const double n = norm(tg.task(i));
    if (n > 0.0) {
      const double p = dot(descent, tg.task(i)) / n;
      proj.push_back(p);
      lo = lo ? std::min(*lo, p) : p;
      hi = hi ? std::max(*hi, p) : p;
    } else {
      proj.push_back(nullptr);
      all_defined = false;
    }
  }
  const bool positive = all_defined && lo && *lo > 0.0;
  json erank = json::array();
  const Layout& layout = tg.layout();
  for (std::size_t b = 0; b < layout.block_count(); ++b) {
    if (!layout.blocks()[b].is_matrix()) continue;
    const Mat block = layout.as_matrix(agg.combined, b);
    erank.push_back(frobenius_norm(block) > 0.0 ? json(effective_rank(block)) : json(nullptr));
  }
  json r{{"type", "step"},
         {"init", init},
         {"step", step},
         {"losses", e.losses},
         {"cos_combined_vs_task", cos},
         {"proj_norms", proj},
         {"proj_norm_ratio", positive ? json(*hi / *lo) : json(nullptr)},
         {"proj_sign_mixed", all_defined && !positive},
         {"effective_rank", erank},
         {"beta", rep.beta_used},
         {"rho", optional_json(rep.rho)},
         {"tracking_error", rep.tracking_error_norm},
         {"update_cos", optional_json(update_cos)}};
  if (theta.size() <= kMaxRecordedTheta) r["theta"] = Vec(theta.begin(), theta.end());
  return r;
}

inline json abort_record(std::size_t init, std::uint64_t step, const std::string& reason) {
  return json{{"type", "abort"}, {"init", init}, {"step", step}, {"reason", reason}};
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  out << text;
  out.flush();
  if (!out) fail(ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

}  // namespace detail

inline fs::path trajectory_path(const RunConfig& cfg) { return fs::path(cfg.output_dir) / (cfg.run_id + ".jsonl"); }

/// Runs every initialization of the config in sequence. Numerical failures
/// end that initialization with an abort record; the run continues with the
/// next one.
inline RunResult run(const RunConfig& cfg, const RunOptions& options = {}) {
  const Problem problem = build_problem(cfg.problem);
  const std::size_t dim = problem.dimension();
  const std::vector<Vec> inits = detail::starting_points(cfg, dim);
  for (const Vec& p : inits) require(p.size() == dim, "run: init dimension mismatch");

  RunResult result;
  json blocks = json::array();
  json matrix_blocks = json::array();
  for (const BlockShape& b : problem.layout().blocks()) {
    blocks.push_back(json{{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
    if (b.is_matrix()) matrix_blocks.push_back(b.name);
  }
  // The output directory is where a run lands, not what it computes; leaving
  // it out keeps trajectories identical wherever they are written.
  json config = to_json(cfg);
  config.erase("output_dir");
  result.header = json{{"type", "header"},       {"format", 1},
                       {"run_id", cfg.run_id},   {"config", config},
                       {"tasks", problem.tasks()}, {"dimension", dim},
                       {"blocks", blocks},       {"matrix_blocks", matrix_blocks},
                       {"inits", inits.size()}};
  std::vector<double> wall(inits.size(), 0.0);

  for (std::size_t idx = 0; idx < inits.size(); ++idx) {
    const auto t0 = std::chrono::steady_clock::now();
    Vec theta = inits[idx];
    Optimizer opt(cfg.optimizer, problem.layout());
    opt.record_history(options.keep_history);
    result.beta_max = opt.effective_beta_max();
    std::mt19937_64 noise_rng(detail::mix_seed(cfg.problem.noise_seed, idx));
    std::optional<Vec> prev_update;
    double cos_sum = 0.0;
    std::size_t cos_count = 0;
    bool aborted = false;
    double lr = cfg.optimizer.lr;

    for (std::uint64_t t = 1; t <= cfg.steps; ++t) {
      try {
        if (cfg.halve_every > 0 && t > 1 && (t - 1) % cfg.halve_every == 0) {
          lr *= 0.5;
          opt.set_lr(lr);
        }
        Evaluation e = problem.eval(theta);
        if (!all_finite(e.losses)) {
          result.records.push_back(detail::abort_record(idx, t, "non-finite loss"));
          aborted = true;
          break;
        }
        if (cfg.problem.noise > 0.0) e.grads = detail::add_noise(e.grads, cfg.problem.noise, noise_rng);
        const AggregationResult agg = aggregate(e.grads, cfg.aggregator, t);
        const Vec before = theta;
        const StepReport rep = opt.step(theta, agg);
        if (!all_finite(theta)) {
          result.records.push_back(detail::abort_record(idx, t, "non-finite parameters"));
          aborted = true;
          break;
        }
        const Vec descent = sub(before, theta);
        std::optional<double> ucos;
        if (prev_update) ucos = try_cosine(descent, *prev_update);
        if (ucos) {
          cos_sum += *ucos;
          ++cos_count;
        }
        prev_update = descent;
        if (t % cfg.record_every == 0)
          result.records.push_back(detail::step_record(idx, t, e, before, agg, descent, rep, ucos));
      } catch (const Error& err) {
        result.records.push_back(detail::abort_record(idx, t, err.what()));
        aborted = true;
        break;
      }
    }
    if (!aborted) {
      const Evaluation e = problem.eval(theta);
      if (!all_finite(e.losses)) {
        result.records.push_back(detail::abort_record(idx, cfg.steps, "non-finite loss"));
      } else {
        const MinNormResult mn = min_norm_simplex(e.grads.all());
        result.records.push_back(json{
            {"type", "final"},
            {"init", idx},
            {"steps", cfg.steps},
            {"theta", theta},
            {"losses", e.losses},
            {"pareto_min_norm", mn.norm},
            {"pareto_weights", mn.weights.weights()},
            {"mean_update_cos", cos_count ? json(cos_sum / static_cast<double>(cos_count)) : json(nullptr)},
            {"tracking_ratio", opt.monitor().ratio()},
            {"tracking_bound", TrackingMonitor::bound_constant(opt.effective_beta_max())}});
      }
    }
    result.monitor_ratio.push_back(opt.monitor().ratio());
    if (options.keep_history) result.histories.push_back(opt.history());
    wall[idx] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  result.summary = summarize(result.header, result.records);
  for (std::size_t i = 0; i < result.summary.size(); ++i) result.summary[i].wall_clock_s = wall[i];

  if (options.write_files) {
    const fs::path dir(cfg.output_dir);
    result.trajectory_path = trajectory_path(cfg);
    result.summary_path = dir / (cfg.run_id + "_summary.csv");
    std::ostringstream traj;
    write_record(traj, result.header);
    for (const json& r : result.records) write_record(traj, r);
    detail::write_text(result.trajectory_path, traj.str());
    std::ostringstream sum;
    write_summary_csv(sum, result.summary, problem.tasks());
    detail::write_text(result.summary_path, sum.str());
    std::ostringstream timing;
    write_timing_csv(timing, result.summary);
    detail::write_text(dir / (cfg.run_id + "_timing.csv"), timing.str());
  }
  return result;
}

// ---------------------------------------------------------------------------

struct BetaLabel {
  std::string label;
  double beta = 0.0;
};

/// Parses a comma-separated β list; "default" stands for 0.9.
inline std::vector<BetaLabel> parse_betas(const std::string& csv) {
  std::vector<BetaLabel> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) fail(ErrorCode::kConfig, "betas: empty entry");
    if (item == "default") {
      out.push_back({"default", 0.9});
      continue;
    }
    double b = 0.0;
    std::size_t used = 0;
    try {
      b = std::stod(item, &used);
    } catch (const std::exception&) {
      fail(ErrorCode::kConfig, "betas: '" + item + "' is not a number");
    }
    if (used != item.size()) fail(ErrorCode::kConfig, "betas: '" + item + "' is not a number");
    if (!(b >= 0.0 && b < 1.0)) fail(ErrorCode::kConfig, "betas: " + item + " is outside [0, 1)");
    out.push_back({item, b});
  }
  if (out.empty()) fail(ErrorCode::kConfig, "betas: empty list");
  return out;
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      fail(ErrorCode::kConfig, "seeds: '" + item + "' is not a non-negative integer");
    }
    if (used != item.size() || item.find('-') != std::string::npos)
      fail(ErrorCode::kConfig, "seeds: '" + item + "' is not a non-negative integer");
    out.push_back(v);
  }
  if (out.empty()) fail(ErrorCode::kConfig, "seeds: empty list");
  return out;
}

struct SweepCell {
  std::string beta_label;
  double beta = 0.0;
  AggregatorId aggregator = AggregatorId::kLs;
  OptimizerId optimizer = OptimizerId::kAdam;
  /// Mean Δm% per seed, in seed order; absent where the run failed.
  std::vector<std::optional<double>> scores;
  std::vector<std::string> errors;

  std::size_t failed() const {
    return static_cast<std::size_t>(std::count(scores.begin(), scores.end(), std::nullopt));
  }
  std::optional<double> mean() const {
    Vec ok;
    for (const auto& s : scores)
      if (s) ok.push_back(*s);
    return detail::mean_of(ok);
  }
  /// Sample standard deviation over successful seeds (0 for one seed).
  std::optional<double> stddev() const {
    const auto m = mean();
    if (!m) return std::nullopt;
    double ss = 0.0;
    std::size_t n = 0;
    for (const auto& s : scores)
      if (s) {
        ss += (*s - *m) * (*s - *m);
        ++n;
      }
    return n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  }
};

struct SweepResult {
  std::vector<SweepCell> cells;
  fs::path table_path;
};

/// The config of one sweep run: static β₁, and `seed` driving the problem,
/// the aggregator, the noise and drawn initializations.
inline RunConfig sweep_cell_config(const RunConfig& base, AggregatorId agg, OptimizerId opt, const BetaLabel& beta,
                                   std::uint64_t seed) {
  RunConfig c = base;
  c.aggregator.id = agg;
  if (opt != base.optimizer.id) {
    const OptimizerConfig fresh = OptimizerConfig::defaults(opt);
    c.optimizer.id = opt;
    c.optimizer.lr = fresh.lr;
    c.optimizer.weight_decay = 0.0;
  }
  if (auto it = base.sweep.lr.find(std::string(to_string(opt))); it != base.sweep.lr.end()) c.optimizer.lr = it->second;
  c.optimizer.apt = false;
  c.optimizer.beta1 = beta.beta;
  c.problem.ensemble.seed = seed;
  c.problem.noise_seed = seed;
  c.aggregator.seed = seed;
  c.init.seed = seed;
  c.run_id = base.run_id + "_" + std::string(to_string(agg)) + "_" + std::string(to_string(opt)) + "_b" +
             beta.label + "_s" + std::to_string(seed);
  c.output_dir = (fs::path(base.output_dir) / (base.run_id + "_sweep")).string();
  return c;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells, std::size_t seeds) {
  out << "beta_label,beta,aggregator,optimizer,mean_delta_m_pct,std_delta_m_pct,runs,failed";
  for (std::size_t s = 0; s < seeds; ++s) out << ",seed_" << s;
  out << '\n';
  for (const SweepCell& c : cells) {
    out << c.beta_label << ',' << format_number(c.beta) << ',' << to_string(c.aggregator) << ','
        << to_string(c.optimizer) << ',' << format_number(c.mean()) << ',' << format_number(c.stddev()) << ','
        << c.scores.size() << ',' << c.failed();
    for (const auto& s : c.scores) out << ',' << (s ? format_number(*s) : std::string("failed"));
    out << '\n';
  }
}

/// Human-readable grid: rows are β labels, columns aggregator/optimizer.
inline std::string sweep_grid(const std::vector<SweepCell>& cells) {
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  for (const SweepCell& c : cells) {
    const std::string col = std::string(to_string(c.aggregator)) + "/" + std::string(to_string(c.optimizer));
    if (std::find(rows.begin(), rows.end(), c.beta_label) == rows.end()) rows.push_back(c.beta_label);
    if (std::find(cols.begin(), cols.end(), col) == cols.end()) cols.push_back(col);
  }
  std::ostringstream out;
  out << "beta";
  for (const std::string& c : cols) out << " | " << c;
  out << '\n';
  for (const std::string& r : rows) {
    out << r;
    for (const std::string& col : cols) {
      out << " | ";
      for (const SweepCell& c : cells) {
        const std::string cc =
            std::string(to_string(c.aggregator)) + "/" + std::string(to_string(c.optimizer));
        if (c.beta_label != r || cc != col) continue;
        const auto m = c.mean();
        if (!m) {
          out << "failed";
        } else {
          char buf[64];
          std::snprintf(buf, sizeof buf, "%.3f ± %.3f", *m, *c.stddev());
          out << buf;
          if (c.failed()) out << " (" << c.failed() << " failed)";
        }
      }
    }
    out << '\n';
  }
  return out.str();
}

/// β sweep grid: one cell per (β, aggregator, optimizer), each cell
/// run once per seed. Cells run concurrently; every run owns its files and
/// the table is written once all cells are done.
inline SweepResult sweep_beta(const RunConfig& base, const std::vector<BetaLabel>& betas,
                              const std::vector<std::uint64_t>& seeds) {
  require(!betas.empty() && !seeds.empty(), "sweep_beta: need at least one beta and one seed");
  const std::vector<AggregatorId> aggs =
      base.sweep.aggregators.empty() ? std::vector<AggregatorId>{base.aggregator.id} : base.sweep.aggregators;
  const std::vector<OptimizerId> opts =
      base.sweep.optimizers.empty() ? std::vector<OptimizerId>{base.optimizer.id} : base.sweep.optimizers;

  SweepResult result;
  for (const BetaLabel& b : betas)
    for (AggregatorId a : aggs)
      for (OptimizerId o : opts) {
        SweepCell c;
        c.beta_label = b.label;
        c.beta = b.beta;
        c.aggregator = a;
        c.optimizer = o;
        c.scores.assign(seeds.size(), std::nullopt);
        c.errors.assign(seeds.size(), std::string());
        result.cells.push_back(std::move(c));
      }

  const std::size_t jobs = result.cells.size() * seeds.size();
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t job = next++; job < jobs; job = next++) {
      SweepCell& cell = result.cells[job / seeds.size()];
      const std::size_t s = job % seeds.size();
      try {
        const RunConfig c =
            sweep_cell_config(base, cell.aggregator, cell.optimizer, {cell.beta_label, cell.beta}, seeds[s]);
        const RunResult r = run(c);
        Vec ok;
        for (const SummaryRow& row : r.summary)
          if (row.status == "ok" && row.delta_m_pct) ok.push_back(*row.delta_m_pct);
        if (ok.size() == r.summary.size()) {
          cell.scores[s] = detail::mean_of(ok);
        } else {
          cell.errors[s] = "aborted";
        }
      } catch (const std::exception& e) {
        cell.errors[s] = e.what();
      }
    }
  };
  unsigned threads = base.sweep.threads ? base.sweep.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, jobs));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  std::ostringstream table;
  write_sweep_csv(table, result.cells, seeds.size());
  result.table_path = fs::path(base.output_dir) / (base.run_id + "_sweep.csv");
  detail::write_text(result.table_path, table.str());
  return result;
}

// ---------------------------------------------------------------------------

struct ParetoVerdict {
  std::size_t init = 0;
  /// "reached", "not-reached" or "aborted"
  std::string verdict;
  std::optional<double> min_norm;
};

/// Recomputes Pareto stationarity at each initialization's final θ.
inline std::vector<ParetoVerdict> pareto_check(const Trajectory& t, double tol) {
  if (!(tol >= 0.0)) fail(ErrorCode::kInvalidInput, "pareto_check: tol must be >= 0");
  const RunConfig cfg = t.config();
  const Problem problem = build_problem(cfg.problem);
  std::vector<ParetoVerdict> out(t.inits());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].init = i;
    out[i].verdict = "aborted";
  }
  for (const json& r : t.records) {
    const std::string type = r.at("type").get<std::string>();
    if (type != "final") continue;
    const std::size_t i = r.at("init").get<std::size_t>();
    if (i >= out.size()) fail(ErrorCode::kInvalidInput, "pareto_check: final record for unknown init");
    if (!r.contains("theta")) fail(ErrorCode::kInvalidInput, "pareto_check: final record without theta");
    const Vec theta = r.at("theta").get<Vec>();
    if (theta.size() != problem.dimension())
      fail(ErrorCode::kInvalidInput, "pareto_check: final theta has the wrong dimension");
    const StationarityReport rep = pareto_stationarity(problem, theta);
    out[i].min_norm = rep.min_norm_value;
    out[i].verdict = rep.min_norm_value <= tol ? "reached" : "not-reached";
  }
  return out;
}

}  // namespace mtlopt::harness
