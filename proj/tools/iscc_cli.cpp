// Command-line front end: solve one scenario, run a sweep, compare schemes,
// or validate a scenario file.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "iscc/ao_orchestrator.hpp"
#include "iscc/errors.hpp"
#include "iscc/experiment.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitNumerical = 4;

struct CommonFlags {
  std::string scenario;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> epsilon;
  std::optional<int> max_iter;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_out) {
  cmd->add_option("--scenario", f.scenario, "scenario file (YAML)")->required()->check(CLI::ExistingFile);
  if (with_out) cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--epsilon", f.epsilon, "relative convergence threshold");
  cmd->add_option("--max-iter", f.max_iter, "maximum number of outer iterations");
}

iscc::ExperimentConfig load(const CommonFlags& f) {
  iscc::ExperimentConfig cfg = iscc::load_scenario(f.scenario);
  if (f.seed) cfg.options.seed = *f.seed;
  if (f.epsilon) cfg.options.epsilon = *f.epsilon;
  if (f.max_iter) cfg.options.max_iter = *f.max_iter;
  cfg.options.validate();
  return cfg;
}

std::filesystem::path out_dir(const CommonFlags& f) {
  std::filesystem::path p(f.out);
  std::filesystem::create_directories(p);
  return p;
}

nlohmann::json energy_json(const iscc::EnergyBreakdown& e) {
  return {{"total_energy_j", e.total}, {"e_loc_j", e.e_loc},       {"e_tran_j", e.e_tran},
          {"e_comp_alap_j", e.e_comp_alap}, {"e_tran_alap_j", e.e_tran_alap}};
}

void log_trace(const iscc::AOResult& r) {
  for (const auto& it : r.trace.iterations) {
    spdlog::info("iteration {}: total {:.9g} J ({:.1f} ms)", it.iteration, it.phi, it.wall_ms);
    for (const auto& b : it.blocks) {
      if (!b.accepted) spdlog::warn("iteration {}: {} kept previous value: {}", it.iteration, iscc::to_string(b.block), b.note);
    }
  }
}

int cmd_solve(const CommonFlags& f, const std::string& scheme_name) {
  const iscc::ExperimentConfig cfg = load(f);
  const iscc::SchemeId scheme = iscc::scheme_from_string(scheme_name);
  const iscc::AOResult r = iscc::run_scheme(cfg.scenario, scheme, cfg.options);
  log_trace(r);
  double wall = 0.0;
  for (const auto& it : r.trace.iterations) wall += it.wall_ms;
  spdlog::info("{} finished: {} after {} sweeps, {:.1f} ms", iscc::to_string(scheme), iscc::to_string(r.trace.status),
               r.trace.sweeps(), wall);

  nlohmann::json summary = energy_json(r.energy);
  summary["scheme"] = iscc::to_string(scheme);
  summary["status"] = iscc::to_string(r.trace.status);
  summary["iterations"] = r.trace.sweeps();
  summary["scenario_hash"] = iscc::scenario_hash(cfg.scenario);
  summary["seed"] = cfg.options.seed;
  summary["offload_bits"] = r.alloc.offload_bits;
  summary["local_hz"] = r.alloc.local_hz;
  summary["alap_hz"] = r.alloc.alap_hz;
  if (!r.freeze_note.empty()) summary["freeze"] = r.freeze_note;
  std::cout << summary.dump(2) << "\n";

  if (!f.out.empty()) {
    const auto dir = out_dir(f);
    iscc::emit_convergence(r.trace, cfg.scenario, cfg.options, (dir / "convergence.dat").string());
    iscc::write_text_file((dir / "summary.json").string(), summary.dump(2) + "\n");
  }
  return 0;
}

int cmd_sweep(const CommonFlags& f, std::optional<int> workers) {
  iscc::ExperimentConfig cfg = load(f);
  if (workers) cfg.workers = *workers;
  if (!cfg.sweep) throw iscc::ValidationError("sweep: the scenario file has no sweep block");
  if (f.seed) cfg.sweep->seeds = {*f.seed};
  spdlog::info("sweeping {} over {} values, {} schemes, {} seeds", iscc::to_string(cfg.sweep->axis),
               cfg.sweep->values.size(), cfg.sweep->schemes.size(), cfg.sweep->seeds.size());
  const auto rows = iscc::run_sweep(cfg);
  for (const auto& row : rows) {
    if (!row.energy) spdlog::warn("{} at {} (seed {}) is infeasible", row.scheme, row.axis_value, row.seed);
  }
  const std::string csv = iscc::format_csv(rows);
  if (f.out.empty()) {
    std::cout << csv;
  } else {
    const auto path = out_dir(f) / "sweep.csv";
    iscc::write_text_file(path.string(), csv);
    spdlog::info("wrote {}", path.string());
  }
  return 0;
}

int cmd_bench(const CommonFlags& f) {
  const iscc::ExperimentConfig cfg = load(f);
  std::vector<iscc::ResultRow> rows;
  for (iscc::SchemeId s : iscc::all_schemes()) {
    iscc::ResultRow row;
    row.scheme = iscc::to_string(s);
    row.seed = cfg.options.seed;
    try {
      const iscc::AOResult r = iscc::run_scheme(cfg.scenario, s, cfg.options);
      row.energy = r.energy;
      row.iterations = r.trace.sweeps();
      row.converged = r.trace.status == iscc::AOStatus::Converged;
      for (const auto& it : r.trace.iterations) row.wall_ms += it.wall_ms;
    } catch (const iscc::ScenarioInfeasible& e) {
      spdlog::warn("{}: {}", row.scheme, e.what());
    }
    rows.push_back(row);
  }
  const double proposed = rows.front().energy ? rows.front().energy->total : 0.0;
  std::printf("%-9s %16s %10s\n", "scheme", "total_energy_j", "saving");
  for (const auto& row : rows) {
    if (!row.energy) {
      std::printf("%-9s %16s %10s\n", row.scheme.c_str(), "infeasible", "-");
      continue;
    }
    const double saving = row.energy->total > 0.0 ? 100.0 * (row.energy->total - proposed) / row.energy->total : 0.0;
    std::printf("%-9s %16.9g %9.2f%%\n", row.scheme.c_str(), row.energy->total, saving);
  }
  if (!f.out.empty()) iscc::write_text_file((out_dir(f) / "bench.csv").string(), iscc::format_csv(rows));
  return 0;
}

int cmd_check(const CommonFlags& f) {
  const iscc::ExperimentConfig cfg = load(f);
  std::printf("ok: %zu users, scenario hash %s%s\n", cfg.scenario.n_users(), iscc::scenario_hash(cfg.scenario).c_str(),
              cfg.sweep ? ", sweep block present" : "");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("iscc");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);

  CLI::App app{"Energy minimization for an aerial ISCC platform"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("--quiet", quiet, "only log warnings and errors");

  CommonFlags solve_f, sweep_f, bench_f, check_f;
  std::string scheme = "Proposed";
  std::optional<int> workers;

  auto* solve = app.add_subcommand("solve", "solve one scenario and write its convergence trace");
  add_common(solve, solve_f, true);
  solve->add_option("--scheme", scheme, "Proposed, FT, RT, FC, RC or RB");
  solve->add_flag("--quiet", quiet, "only log warnings and errors");

  auto* sweep = app.add_subcommand("sweep", "run the sweep block of a scenario file and write a CSV");
  add_common(sweep, sweep_f, true);
  sweep->add_option("--workers", workers, "concurrent sweep cells");
  sweep->add_flag("--quiet", quiet, "only log warnings and errors");

  auto* bench = app.add_subcommand("bench", "compare all six schemes on one scenario");
  add_common(bench, bench_f, true);
  bench->add_flag("--quiet", quiet, "only log warnings and errors");

  auto* check = app.add_subcommand("check", "validate a scenario file");
  add_common(check, check_f, false);
  check->add_flag("--quiet", quiet, "only log warnings and errors");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }
  spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (*solve) return cmd_solve(solve_f, scheme);
    if (*sweep) return cmd_sweep(sweep_f, workers);
    if (*bench) return cmd_bench(bench_f);
    if (*check) return cmd_check(check_f);
  } catch (const iscc::ValidationError& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  } catch (const iscc::ScenarioInfeasible& e) {
    spdlog::error("infeasible scenario: {}", e.what());
    return kExitInfeasible;
  } catch (const iscc::NumericalFailure& e) {
    spdlog::error("numerical failure: {}", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
