// Copyright 2026 The mtlopt Authors
// SPDX-License-Identifier: Apache-2.0

// Trajectory files (JSON Lines) and the summary rows derived from them.
//
// A file holds one header record, then for every initialization a run of
// "step" records closed by either a "final" or an "abort" record.

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtlopt/diagnostics.hpp"
#include "mtlopt/error.hpp"
#include "mtlopt/harness/config.hpp"
#include "mtlopt/linalg.hpp"

namespace mtlopt::harness {

inline constexpr std::size_t kMaxRecordedTheta = 16;

struct Trajectory {
  json header;
  std::vector<json> records;

  RunConfig config() const { return parse_run_config(header.at("config")); }
  std::size_t inits() const { return header.at("inits").get<std::size_t>(); }
};

inline json optional_json(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

inline std::optional<double> json_optional(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

inline void write_record(std::ostream& out, const json& record) { out << record.dump() << '\n'; }

/// Reads and structurally validates a trajectory file.
inline Trajectory read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open trajectory '" + path + "'");
  Trajectory t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      fail(ErrorCode::kInvalidInput, path + ":" + std::to_string(lineno) + ": not a JSON record");
    }
    if (!j.is_object() || !j.contains("type"))
      fail(ErrorCode::kInvalidInput, path + ":" + std::to_string(lineno) + ": record without a type");
    if (j.at("type") == "header") {
      if (!t.header.is_null()) fail(ErrorCode::kInvalidInput, path + ": second header record");
      t.header = std::move(j);
    } else {
      if (t.header.is_null()) fail(ErrorCode::kInvalidInput, path + ": records before the header");
      t.records.push_back(std::move(j));
    }
  }
  if (t.header.is_null()) fail(ErrorCode::kInvalidInput, path + ": missing header record");
  for (const char* key : {"config", "inits", "tasks"})
    if (!t.header.contains(key)) fail(ErrorCode::kInvalidInput, path + ": header lacks '" + key + "'");
  return t;
}

// ---------------------------------------------------------------------------

struct SummaryRow {
  std::string run_id;
  std::size_t init = 0;
  /// "ok" or "aborted"
  std::string status = "ok";
  std::uint64_t steps = 0;
  Vec final_losses;
  std::optional<double> pareto_min_norm;
  std::optional<double> mean_tracking_error;
  std::optional<double> mean_effective_rank;
  std::optional<double> final_effective_rank;
  std::optional<double> delta_m_pct;
  std::optional<double> mean_update_cos;
  /// Not derivable from the trajectory; kept out of the deterministic outputs.
  double wall_clock_s = 0.0;

  /// Field-wise equality ignoring wall-clock.
  bool same_content(const SummaryRow& o) const {
    return run_id == o.run_id && init == o.init && status == o.status && steps == o.steps &&
           final_losses == o.final_losses && pareto_min_norm == o.pareto_min_norm &&
           mean_tracking_error == o.mean_tracking_error && mean_effective_rank == o.mean_effective_rank &&
           final_effective_rank == o.final_effective_rank && delta_m_pct == o.delta_m_pct &&
           mean_update_cos == o.mean_update_cos;
  }
};

/// Δm% of final losses against per-task baselines; both sides are shifted
/// by `offset` so that zero-valued optima give a defined ratio.
inline double loss_delta_m(const Vec& losses, const Vec& baselines, double offset) {
  BenchmarkScores s;
  for (std::size_t k = 0; k < losses.size(); ++k) {
    s.method.push_back(losses[k] + offset);
    s.baseline.push_back(baselines[k] + offset);
    s.higher_better.push_back(false);
  }
  return delta_m(s);
}

/// Per-task Δm% reference losses of a config: explicit baselines or the
/// problem's single-task optima.
inline Vec baseline_losses(const RunConfig& cfg) {
  if (cfg.baselines) return *cfg.baselines;
  if (cfg.problem.name == "toy2d") return Problem::toy().single_task_optima();
  return Vec(cfg.problem.ensemble.tasks, 0.0);
}

namespace detail {

inline std::optional<double> mean_of(const Vec& xs) {
  if (xs.empty()) return std::nullopt;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline std::optional<double> block_rank_mean(const json& eranks) {
  Vec vals;
  for (const json& x : eranks)
    if (!x.is_null()) vals.push_back(x.get<double>());
  return mean_of(vals);
}

}  // namespace detail

/// Derives one SummaryRow per initialization from trajectory records alone.
inline std::vector<SummaryRow> summarize(const json& header, const std::vector<json>& records) {
  const RunConfig cfg = parse_run_config(header.at("config"));
  const std::size_t inits = header.at("inits").get<std::size_t>();
  const Vec baselines = baseline_losses(cfg);
  std::vector<SummaryRow> rows(inits);
  std::vector<Vec> tracking(inits);
  std::vector<Vec> ranks(inits);
  std::vector<std::optional<double>> last_rank(inits);
  std::vector<bool> closed(inits, false);
  for (std::size_t i = 0; i < inits; ++i) {
    rows[i].run_id = cfg.run_id;
    rows[i].init = i;
  }
  for (const json& r : records) {
    const std::size_t i = r.at("init").get<std::size_t>();
    if (i >= inits) fail(ErrorCode::kInvalidInput, "summarize: record for unknown init " + std::to_string(i));
    const std::string type = r.at("type").get<std::string>();
    SummaryRow& row = rows[i];
    if (type == "step") {
      tracking[i].push_back(r.at("tracking_error").get<double>());
      const auto rk = detail::block_rank_mean(r.at("effective_rank"));
      if (rk) ranks[i].push_back(*rk);
      last_rank[i] = rk;
      row.steps = r.at("step").get<std::uint64_t>();
    } else if (type == "final") {
      row.steps = r.at("steps").get<std::uint64_t>();
      row.final_losses = r.at("losses").get<Vec>();
      row.pareto_min_norm = r.at("pareto_min_norm").get<double>();
      row.mean_update_cos = json_optional(r.at("mean_update_cos"));
      row.delta_m_pct = loss_delta_m(row.final_losses, baselines, cfg.baseline_offset);
      closed[i] = true;
    } else if (type == "abort") {
      row.status = "aborted";
      row.steps = r.at("step").get<std::uint64_t>();
      closed[i] = true;
    }
  }
  for (std::size_t i = 0; i < inits; ++i) {
    if (!closed[i]) rows[i].status = "aborted";
    rows[i].mean_tracking_error = detail::mean_of(tracking[i]);
    rows[i].mean_effective_rank = detail::mean_of(ranks[i]);
    rows[i].final_effective_rank = last_rank[i];
  }
  return rows;
}

inline std::vector<SummaryRow> summarize(const Trajectory& t) { return summarize(t.header, t.records); }

// ---------------------------------------------------------------------------

/// Shortest round-trip text for a double; empty for absent values.
inline std::string format_number(double x) {
  if (!std::isfinite(x)) return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
  return json(x).dump();
}

inline std::string format_number(const std::optional<double>& x) { return x ? format_number(*x) : std::string(); }

/// Summary CSV (no wall-clock, so it is reproducible byte for byte).
inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows, std::size_t tasks) {
  out << "run_id,init,status,steps";
  for (std::size_t k = 0; k < tasks; ++k) out << ",final_loss_" << k;
  out << ",pareto_min_norm,mean_tracking_error,mean_effective_rank,final_effective_rank,delta_m_pct,"
         "mean_update_cos\n";
  for (const SummaryRow& r : rows) {
    out << r.run_id << ',' << r.init << ',' << r.status << ',' << r.steps;
    for (std::size_t k = 0; k < tasks; ++k)
      out << ',' << (k < r.final_losses.size() ? format_number(r.final_losses[k]) : std::string());
    out << ',' << format_number(r.pareto_min_norm) << ',' << format_number(r.mean_tracking_error) << ','
        << format_number(r.mean_effective_rank) << ',' << format_number(r.final_effective_rank) << ','
        << format_number(r.delta_m_pct) << ',' << format_number(r.mean_update_cos) << '\n';
  }
}

inline void write_timing_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "run_id,init,wall_clock_s\n";
  for (const SummaryRow& r : rows) out << r.run_id << ',' << r.init << ',' << r.wall_clock_s << '\n';
}

// ---------------------------------------------------------------------------

enum class PlotSeries { kCos, kProj, kErank, kTraj };

inline std::optional<PlotSeries> parse_plot_series(std::string_view s) {
  if (s == "cos") return PlotSeries::kCos;
  if (s == "proj") return PlotSeries::kProj;
  if (s == "erank") return PlotSeries::kErank;
  if (s == "traj") return PlotSeries::kTraj;
  return std::nullopt;
}

namespace detail {

inline void put_list(std::ostream& out, const json& arr) {
  for (const json& x : arr) out << ',' << (x.is_null() ? std::string() : format_number(x.get<double>()));
}

}  // namespace detail

/// Plain CSV series of the step records for external plotting.
inline void export_plot(std::ostream& out, const Trajectory& t, PlotSeries what) {
  const std::size_t tasks = t.header.at("tasks").get<std::size_t>();
  const json blocks = t.header.value("matrix_blocks", json::array());
  const std::size_t dim = t.header.value("dimension", std::size_t{0});
  out << "init,step";
  switch (what) {
    case PlotSeries::kCos:
      for (std::size_t k = 0; k < tasks; ++k) out << ",cos_" << k;
      break;
    case PlotSeries::kProj:
      for (std::size_t k = 0; k < tasks; ++k) out << ",proj_" << k;
      out << ",ratio,sign_mixed";
      break;
    case PlotSeries::kErank:
      for (const json& b : blocks) out << ",erank_" << b.get<std::string>();
      break;
    case PlotSeries::kTraj:
      for (std::size_t k = 0; k < tasks; ++k) out << ",loss_" << k;
      if (dim <= kMaxRecordedTheta)
        for (std::size_t k = 0; k < dim; ++k) out << ",theta_" << k;
      out << ",beta,rho,tracking_error,update_cos";
      break;
  }
  out << '\n';
  for (const json& r : t.records) {
    if (r.at("type") != "step") continue;
    out << r.at("init").get<std::size_t>() << ',' << r.at("step").get<std::uint64_t>();
    switch (what) {
      case PlotSeries::kCos: detail::put_list(out, r.at("cos_combined_vs_task")); break;
      case PlotSeries::kProj:
        detail::put_list(out, r.at("proj_norms"));
        out << ',' << format_number(json_optional(r.at("proj_norm_ratio"))) << ','
            << (r.at("proj_sign_mixed").get<bool>() ? 1 : 0);
        break;
      case PlotSeries::kErank: detail::put_list(out, r.at("effective_rank")); break;
      case PlotSeries::kTraj:
        detail::put_list(out, r.at("losses"));
        if (r.contains("theta")) detail::put_list(out, r.at("theta"));
        out << ',' << format_number(r.at("beta").get<double>()) << ','
            << format_number(json_optional(r.at("rho"))) << ','
            << format_number(r.at("tracking_error").get<double>()) << ','
            << format_number(json_optional(r.at("update_cos")));
        break;
    }
    out << '\n';
  }
}

}  // namespace mtlopt::harness
