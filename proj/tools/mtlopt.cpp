// Copyright 2026 The mtlopt Authors
// SPDX-License-Identifier: Apache-2.0

// mtlopt command line: run, sweep-beta, pareto-check, diag, export-plot.
//
// Exit codes: 0 success, 1 config error, 2 numerical failure, 3 I/O error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "mtlopt/harness.hpp"

namespace {

using namespace mtlopt;
using namespace mtlopt::harness;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitIo = 3;

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig:
    case ErrorCode::kInvalidInput: return kExitConfig;
    case ErrorCode::kIo: return kExitIo;
    default: return kExitNumerical;
  }
}

/// Output directory precedence: --out, then the environment, then the config.
void apply_output_override(RunConfig& cfg, const std::string& out) {
  if (!out.empty()) {
    cfg.output_dir = out;
  } else if (const char* env = std::getenv(kOutDirEnv); env && *env) {
    cfg.output_dir = env;
  }
}

int cmd_run(const std::string& config_path, const std::string& out) {
  RunConfig cfg = load_run_config(config_path);
  apply_output_override(cfg, out);
  const RunResult r = run(cfg);
  write_summary_csv(std::cout, r.summary, r.header.at("tasks").get<std::size_t>());
  std::cerr << "trajectory: " << r.trajectory_path.string() << "\nsummary: " << r.summary_path.string() << '\n';
  if (r.aborted()) {
    for (const json& rec : r.records)
      if (rec.at("type") == "abort")
        std::cerr << "init " << rec.at("init") << " aborted at step " << rec.at("step") << ": "
                  << rec.at("reason").get<std::string>() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& betas, const std::string& seeds,
              const std::string& out) {
  RunConfig cfg = load_run_config(config_path);
  apply_output_override(cfg, out);
  const SweepResult r = sweep_beta(cfg, parse_betas(betas), parse_seeds(seeds));
  std::cout << sweep_grid(r.cells);
  std::cerr << "table: " << r.table_path.string() << '\n';
  for (const SweepCell& c : r.cells)
    for (std::size_t s = 0; s < c.errors.size(); ++s)
      if (!c.errors[s].empty())
        std::cerr << "cell " << c.beta_label << '/' << to_string(c.aggregator) << '/' << to_string(c.optimizer)
                  << " seed #" << s << " failed: " << c.errors[s] << '\n';
  return kExitOk;
}

int cmd_pareto(const std::string& path, double tol) {
  const Trajectory t = read_trajectory(path);
  std::cout << "init,verdict,min_norm\n";
  for (const ParetoVerdict& v : pareto_check(t, tol))
    std::cout << v.init << ',' << v.verdict << ',' << format_number(v.min_norm) << '\n';
  return kExitOk;
}

int cmd_diag(const std::string& path) {
  const Trajectory t = read_trajectory(path);
  write_summary_csv(std::cout, summarize(t), t.header.at("tasks").get<std::size_t>());
  return kExitOk;
}

int cmd_export(const std::string& path, const std::string& what, const std::string& out) {
  const auto series = parse_plot_series(what);
  if (!series) fail(ErrorCode::kConfig, "--what must be one of cos, proj, erank, traj");
  const Trajectory t = read_trajectory(path);
  if (out.empty()) {
    export_plot(std::cout, t, *series);
    return kExitOk;
  }
  std::ofstream f(out);
  if (!f) fail(ErrorCode::kIo, "cannot write '" + out + "'");
  export_plot(f, t, *series);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task optimization lab"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::string trajectory;
  std::string betas;
  std::string seeds;
  std::string what;
  double tol = 1e-3;

  auto* run_cmd = app.add_subcommand("run", "Run an experiment from a config file");
  run_cmd->add_option("--config", config, "Config file (JSON)")->required();
  run_cmd->add_option("--out", out, "Output directory");

  auto* sweep_cmd = app.add_subcommand("sweep-beta", "Sweep the first-moment coefficient over methods and seeds");
  sweep_cmd->add_option("--config", config, "Config file (JSON)")->required();
  sweep_cmd->add_option("--betas", betas, "Comma-separated betas; 'default' means 0.9")->required();
  sweep_cmd->add_option("--seeds", seeds, "Comma-separated seeds")->required();
  sweep_cmd->add_option("--out", out, "Output directory");

  auto* pareto_cmd = app.add_subcommand("pareto-check", "Pareto stationarity at each final point");
  pareto_cmd->add_option("--trajectory", trajectory, "Trajectory file (JSONL)")->required();
  pareto_cmd->add_option("--tol", tol, "Min-norm tolerance");

  auto* diag_cmd = app.add_subcommand("diag", "Re-derive the summary from a trajectory");
  diag_cmd->add_option("--trajectory", trajectory, "Trajectory file (JSONL)")->required();

  auto* export_cmd = app.add_subcommand("export-plot", "Emit a CSV series for plotting");
  export_cmd->add_option("--trajectory", trajectory, "Trajectory file (JSONL)")->required();
  export_cmd->add_option("--what", what, "cos | proj | erank | traj")->required();
  export_cmd->add_option("--out", out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(config, out);
    if (*sweep_cmd) return cmd_sweep(config, betas, seeds, out);
    if (*pareto_cmd) return cmd_pareto(trajectory, tol);
    if (*diag_cmd) return cmd_diag(trajectory);
    if (*export_cmd) return cmd_export(trajectory, what, out);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error [invalid-input]: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error [io]: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitConfig;
}
