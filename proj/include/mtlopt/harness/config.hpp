// Copyright 2026 The mtlopt Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration: a versioned JSON document. Unknown keys are errors.

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mtlopt/aggregators.hpp"
#include "mtlopt/error.hpp"
#include "mtlopt/optimizers.hpp"
#include "mtlopt/problems.hpp"

namespace mtlopt::harness {

using json = nlohmann::json;

inline constexpr int kConfigVersion = 1;
inline constexpr const char* kOutDirEnv = "MTLOPT_OUT_DIR";

struct ProblemConfig {
  /// "quad2" | "quadK" | "toy2d"
  std::string name = "quad2";
  EnsembleOptions ensemble;
  /// Standard deviation of additive Gaussian noise on every task gradient.
  double noise = 0.0;
  std::uint64_t noise_seed = 0;
};

struct InitConfig {
  /// Explicit starting points; when empty, `count` points are drawn.
  std::vector<Vec> points;
  std::uint64_t seed = 0;
  std::size_t count = 1;
  /// Standard deviation of drawn points around the origin (0: origin).
  double scale = 0.0;
};

/// Cells of a β₁ sweep; empty lists fall back to the run's own choice.
struct SweepConfig {
  std::vector<AggregatorId> aggregators;
  std::vector<OptimizerId> optimizers;
  /// Per-optimizer learning rate overrides, keyed by optimizer id.
  std::map<std::string, double> lr;
  /// Worker threads (0: hardware concurrency).
  unsigned threads = 0;
};

struct RunConfig {
  int version = kConfigVersion;
  std::string run_id = "run";
  ProblemConfig problem;
  AggregatorConfig aggregator;
  OptimizerConfig optimizer;
  std::uint64_t steps = 1000;
  /// Halve the learning rate every this many steps (0: constant).
  std::uint64_t halve_every = 0;
  InitConfig init;
  std::uint64_t record_every = 1;
  std::string output_dir = "out";
  /// Δm% reference: per-task baseline losses (default: single-task optima)
  /// and an offset added to both sides so zero-loss optima stay usable.
  std::optional<Vec> baselines;
  double baseline_offset = 1.0;
  SweepConfig sweep;
};

namespace detail {

[[noreturn]] inline void config_error(const std::string& what) { fail(ErrorCode::kConfig, what); }

inline void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) config_error(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items())
    if (!ok.count(key)) config_error("unknown key '" + key + "' in " + where);
}

template <class T>
T get(const json& obj, const char* key, const std::string& where, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    config_error("bad value for '" + std::string(key) + "' in " + where);
  }
}

inline Vec get_vec(const json& j, const std::string& where) {
  if (!j.is_array()) config_error(where + " must be an array of numbers");
  Vec out;
  for (const auto& x : j) {
    if (!x.is_number()) config_error(where + " must be an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

}  // namespace detail

inline ProblemConfig parse_problem(const json& j) {
  using detail::get;
  const std::string where = "problem";
  detail::check_keys(j, where,
                     {"name", "tasks", "rows", "cols", "condition", "conflict_angle", "seed",
                      "shared_curvature", "gradient_scale", "noise", "noise_seed"});
  ProblemConfig p;
  p.name = get<std::string>(j, "name", where, p.name);
  if (p.name != "quad2" && p.name != "quadK" && p.name != "toy2d")
    detail::config_error("unknown problem '" + p.name + "'");
  EnsembleOptions& e = p.ensemble;
  e.tasks = get<std::size_t>(j, "tasks", where, p.name == "quad2" ? 2 : 3);
  if (p.name == "quad2" && e.tasks != 2) detail::config_error("quad2 has exactly 2 tasks");
  e.rows = get<std::size_t>(j, "rows", where, 2);
  e.cols = get<std::size_t>(j, "cols", where, 1);
  e.condition = get<double>(j, "condition", where, e.condition);
  e.conflict_angle = get<double>(j, "conflict_angle", where, e.conflict_angle);
  e.seed = get<std::uint64_t>(j, "seed", where, e.seed);
  e.shared_curvature = get<bool>(j, "shared_curvature", where, e.shared_curvature);
  e.gradient_scale = get<double>(j, "gradient_scale", where, e.gradient_scale);
  p.noise = get<double>(j, "noise", where, p.noise);
  p.noise_seed = get<std::uint64_t>(j, "noise_seed", where, p.noise_seed);
  if (!(p.noise >= 0.0)) detail::config_error("problem.noise must be >= 0");
  if (p.name == "toy2d")
    for (const char* k : {"tasks", "rows", "cols", "condition", "conflict_angle", "seed", "shared_curvature",
                          "gradient_scale"})
      if (j.contains(k)) detail::config_error(std::string("toy2d takes no '") + k + "'");
  return p;
}

inline AggregatorConfig parse_aggregator_config(const json& j) {
  using detail::get;
  const std::string where = "aggregator";
  detail::check_keys(j, where, {"id", "c", "xi", "per_block", "seed", "cagrad_iterations", "fw_iterations"});
  AggregatorConfig a;
  const std::string id = get<std::string>(j, "id", where, "ls");
  const auto parsed = parse_aggregator(id);
  if (!parsed) detail::config_error("unknown aggregator '" + id + "'");
  a.id = *parsed;
  a.cagrad.c = get<double>(j, "c", where, a.cagrad.c);
  a.cagrad.iterations = get<int>(j, "cagrad_iterations", where, a.cagrad.iterations);
  a.ldp.xi = get<double>(j, "xi", where, a.ldp.xi);
  a.ldp.per_block = get<bool>(j, "per_block", where, a.ldp.per_block);
  a.min_norm.max_iterations = get<int>(j, "fw_iterations", where, a.min_norm.max_iterations);
  a.seed = get<std::uint64_t>(j, "seed", where, a.seed);
  if (!(a.cagrad.c >= 0.0 && a.cagrad.c < 1.0)) detail::config_error("aggregator.c must lie in [0, 1)");
  if (!(a.ldp.xi > 0.0) || !std::isfinite(a.ldp.xi)) detail::config_error("aggregator.xi must be > 0");
  return a;
}

inline OptimizerConfig parse_optimizer_config(const json& j) {
  using detail::get;
  const std::string where = "optimizer";
  detail::check_keys(j, where,
                     {"id", "lr", "beta1", "beta_min", "beta_max", "beta2", "eps", "weight_decay",
                      "ns_iterations", "ns_fast_steps"});
  const std::string id = get<std::string>(j, "id", where, "adam");
  const auto parsed = parse_optimizer(id);
  if (!parsed) detail::config_error("unknown optimizer '" + id + "'");
  OptimizerConfig o = OptimizerConfig::defaults(*parsed);
  o.lr = get<double>(j, "lr", where, o.lr);
  if (j.contains("beta1")) {
    const json& b = j.at("beta1");
    if (b.is_string()) {
      if (b.get<std::string>() != "apt") detail::config_error("optimizer.beta1 must be a number or \"apt\"");
      o.apt = true;
    } else if (b.is_number()) {
      o.beta1 = b.get<double>();
    } else {
      detail::config_error("optimizer.beta1 must be a number or \"apt\"");
    }
  }
  o.bounds.beta_min = get<double>(j, "beta_min", where, o.bounds.beta_min);
  o.bounds.beta_max = get<double>(j, "beta_max", where, o.bounds.beta_max);
  o.beta2 = get<double>(j, "beta2", where, o.beta2);
  o.eps = get<double>(j, "eps", where, o.eps);
  o.weight_decay = get<double>(j, "weight_decay", where, o.weight_decay);
  o.ns.iterations = get<int>(j, "ns_iterations", where, o.ns.iterations);
  o.ns.fast_steps = get<int>(j, "ns_fast_steps", where, o.ns.fast_steps);
  try {
    o.validate();
  } catch (const Error& e) {
    detail::config_error(e.what());
  }
  if (o.id == OptimizerId::kAdam && o.weight_decay != 0.0)
    detail::config_error("optimizer 'adam' takes no weight_decay; use 'adamw'");
  return o;
}

inline InitConfig parse_init(const json& j) {
  using detail::get;
  InitConfig init;
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) init.points.push_back(detail::get_vec(j[i], "inits[" + std::to_string(i) + "]"));
    if (init.points.empty()) detail::config_error("inits must not be empty");
    return init;
  }
  detail::check_keys(j, "inits", {"seed", "count", "scale"});
  init.seed = get<std::uint64_t>(j, "seed", "inits", init.seed);
  init.count = get<std::size_t>(j, "count", "inits", init.count);
  init.scale = get<double>(j, "scale", "inits", init.scale);
  if (init.count == 0) detail::config_error("inits.count must be >= 1");
  if (!(init.scale >= 0.0)) detail::config_error("inits.scale must be >= 0");
  return init;
}

inline SweepConfig parse_sweep(const json& j) {
  detail::check_keys(j, "sweep", {"aggregators", "optimizers", "lr", "threads"});
  SweepConfig s;
  if (j.contains("aggregators")) {
    if (!j.at("aggregators").is_array()) detail::config_error("sweep.aggregators must be an array");
    for (const json& x : j.at("aggregators")) {
      const auto id = x.is_string() ? parse_aggregator(x.get<std::string>()) : std::nullopt;
      if (!id) detail::config_error("sweep.aggregators: unknown aggregator " + x.dump());
      s.aggregators.push_back(*id);
    }
  }
  if (j.contains("optimizers")) {
    if (!j.at("optimizers").is_array()) detail::config_error("sweep.optimizers must be an array");
    for (const json& x : j.at("optimizers")) {
      const auto id = x.is_string() ? parse_optimizer(x.get<std::string>()) : std::nullopt;
      if (!id) detail::config_error("sweep.optimizers: unknown optimizer " + x.dump());
      s.optimizers.push_back(*id);
    }
  }
  if (j.contains("lr")) {
    if (!j.at("lr").is_object()) detail::config_error("sweep.lr must be an object");
    for (const auto& [key, val] : j.at("lr").items()) {
      if (!parse_optimizer(key)) detail::config_error("sweep.lr: unknown optimizer '" + key + "'");
      if (!val.is_number() || !(val.get<double>() > 0.0)) detail::config_error("sweep.lr values must be > 0");
      s.lr[key] = val.get<double>();
    }
  }
  s.threads = detail::get<unsigned>(j, "threads", "sweep", s.threads);
  return s;
}

/// Parses and validates a run configuration document.
inline RunConfig parse_run_config(const json& j) {
  using detail::get;
  const std::string where = "config";
  detail::check_keys(j, where,
                     {"version", "run_id", "problem", "aggregator", "optimizer", "steps", "halve_every", "inits",
                      "record_every", "output_dir", "baselines", "baseline_offset", "sweep"});
  RunConfig c;
  if (!j.contains("version")) detail::config_error("missing 'version'");
  c.version = get<int>(j, "version", where, 0);
  if (c.version != kConfigVersion)
    detail::config_error("unsupported config version " + std::to_string(c.version));
  c.run_id = get<std::string>(j, "run_id", where, c.run_id);
  if (c.run_id.empty() || c.run_id.find_first_of("/\\") != std::string::npos)
    detail::config_error("run_id must be a non-empty file name");
  if (!j.contains("problem")) detail::config_error("missing 'problem'");
  c.problem = parse_problem(j.at("problem"));
  c.aggregator = j.contains("aggregator") ? parse_aggregator_config(j.at("aggregator")) : AggregatorConfig{};
  c.optimizer = j.contains("optimizer") ? parse_optimizer_config(j.at("optimizer"))
                                        : OptimizerConfig::defaults(OptimizerId::kAdam);
  if (j.contains("steps") && j.at("steps").is_number_integer() && j.at("steps").get<long long>() < 1)
    detail::config_error("steps must be >= 1");
  c.steps = get<std::uint64_t>(j, "steps", where, c.steps);
  if (c.steps < 1) detail::config_error("steps must be >= 1");
  c.halve_every = get<std::uint64_t>(j, "halve_every", where, c.halve_every);
  c.record_every = get<std::uint64_t>(j, "record_every", where, c.record_every);
  if (c.record_every < 1) detail::config_error("record_every must be >= 1");
  c.output_dir = get<std::string>(j, "output_dir", where, c.output_dir);
  if (j.contains("inits")) {
    c.init = parse_init(j.at("inits"));
  } else if (c.problem.name == "toy2d") {
    c.init.points = toy2d::initializations();
  }
  if (j.contains("baselines")) c.baselines = detail::get_vec(j.at("baselines"), "baselines");
  c.baseline_offset = get<double>(j, "baseline_offset", where, c.baseline_offset);
  if (j.contains("sweep")) c.sweep = parse_sweep(j.at("sweep"));

  const std::size_t dim = c.problem.name == "toy2d" ? 2 : c.problem.ensemble.rows * c.problem.ensemble.cols;
  const std::size_t tasks = c.problem.name == "toy2d" ? 2 : c.problem.ensemble.tasks;
  for (const Vec& p : c.init.points)
    if (p.size() != dim) detail::config_error("init point dimension does not match the problem");
  if (c.baselines && c.baselines->size() != tasks) detail::config_error("baselines needs one entry per task");
  return c;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kConfig, "'" + path + "' is not valid JSON: " + e.what());
  }
}

inline RunConfig load_run_config(const std::string& path) { return parse_run_config(read_json_file(path)); }

// ---------------------------------------------------------------------------

inline json problem_to_json(const ProblemConfig& p) {
  json j{{"name", p.name}, {"noise", p.noise}, {"noise_seed", p.noise_seed}};
  if (p.name != "toy2d") {
    const EnsembleOptions& e = p.ensemble;
    j["tasks"] = e.tasks;
    j["rows"] = e.rows;
    j["cols"] = e.cols;
    j["condition"] = e.condition;
    j["conflict_angle"] = e.conflict_angle;
    j["seed"] = e.seed;
    j["shared_curvature"] = e.shared_curvature;
    j["gradient_scale"] = e.gradient_scale;
  }
  return j;
}

/// Canonical, fully-expanded form; parse_run_config(to_json(c)) == c.
inline json to_json(const RunConfig& c) {
  json opt{{"id", std::string(to_string(c.optimizer.id))},
           {"lr", c.optimizer.lr},
           {"beta_min", c.optimizer.bounds.beta_min},
           {"beta_max", c.optimizer.bounds.beta_max},
           {"beta2", c.optimizer.beta2},
           {"eps", c.optimizer.eps},
           {"weight_decay", c.optimizer.weight_decay},
           {"ns_iterations", c.optimizer.ns.iterations},
           {"ns_fast_steps", c.optimizer.ns.fast_steps}};
  if (c.optimizer.apt)
    opt["beta1"] = "apt";
  else
    opt["beta1"] = c.optimizer.beta1;
  json agg{{"id", std::string(to_string(c.aggregator.id))},
           {"c", c.aggregator.cagrad.c},
           {"cagrad_iterations", c.aggregator.cagrad.iterations},
           {"xi", c.aggregator.ldp.xi},
           {"per_block", c.aggregator.ldp.per_block},
           {"fw_iterations", c.aggregator.min_norm.max_iterations},
           {"seed", c.aggregator.seed}};
  json inits;
  if (!c.init.points.empty()) {
    inits = json::array();
    for (const Vec& p : c.init.points) inits.push_back(p);
  } else {
    inits = json{{"seed", c.init.seed}, {"count", c.init.count}, {"scale", c.init.scale}};
  }
  json j{{"version", c.version},
         {"run_id", c.run_id},
         {"problem", problem_to_json(c.problem)},
         {"aggregator", agg},
         {"optimizer", opt},
         {"steps", c.steps},
         {"halve_every", c.halve_every},
         {"inits", inits},
         {"record_every", c.record_every},
         {"output_dir", c.output_dir},
         {"baseline_offset", c.baseline_offset}};
  if (c.baselines) j["baselines"] = *c.baselines;
  const SweepConfig& s = c.sweep;
  if (!s.aggregators.empty() || !s.optimizers.empty() || !s.lr.empty() || s.threads != 0) {
    json sw{{"lr", s.lr}, {"threads", s.threads}};
    sw["aggregators"] = json::array();
    for (AggregatorId a : s.aggregators) sw["aggregators"].push_back(std::string(to_string(a)));
    sw["optimizers"] = json::array();
    for (OptimizerId o : s.optimizers) sw["optimizers"].push_back(std::string(to_string(o)));
    j["sweep"] = sw;
  }
  return j;
}

/// Builds the problem named in the config.
inline Problem build_problem(const ProblemConfig& p) {
  if (p.name == "toy2d") return Problem::toy();
  try {
    return make_conflict_ensemble(p.ensemble);
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, std::string("problem: ") + e.what());
  }
}

}  // namespace mtlopt::harness
