#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iscc/ao_orchestrator.hpp"
#include "iscc/core_model.hpp"

namespace iscc {

enum class SweepAxis { UserPower, GammaMin, TaskBits, NUsers };

const char* to_string(SweepAxis a);
SweepAxis axis_from_string(const std::string& name);

struct SweepSpec {
  SweepAxis axis = SweepAxis::UserPower;
  std::vector<double> values;
  std::vector<SchemeId> schemes{SchemeId::Proposed};
  std::vector<std::uint64_t> seeds{1};
};

struct ExperimentConfig {
  Scenario scenario;
  UserParams user_prototype;  // used when a sweep adds users
  AOOptions options;
  std::optional<SweepSpec> sweep;
  int workers = 1;
};

/// Parses a YAML scenario file. Errors are ValidationError messages that name
/// the field path and the line.
ExperimentConfig load_scenario(const std::string& path);
ExperimentConfig parse_scenario(const std::string& text);

/// Copy of `base` with one sweep axis set to `value`.
Scenario apply_axis(const Scenario& base, const UserParams& prototype, SweepAxis axis, double value);

struct ResultRow {
  double axis_value = 0.0;
  std::string scheme;
  std::uint64_t seed = 0;
  std::optional<EnergyBreakdown> energy;  // empty when the cell was infeasible
  int iterations = 0;
  bool converged = false;
  double wall_ms = 0.0;
};

/// Runs every (value, scheme, seed) cell on up to config.workers threads.
/// Rows come back sorted by (scheme, axis value, seed).
std::vector<ResultRow> run_sweep(const ExperimentConfig& config);

extern const char* const kCsvHeader;

std::string format_csv(const std::vector<ResultRow>& rows);
std::vector<ResultRow> parse_csv(const std::string& text);
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

/// FNV-1a over a fixed-precision dump of every scenario field.
std::string scenario_hash(const Scenario& s);

/// "iteration total_energy_j" data lines followed by a commented footer.
std::string format_convergence(const ConvergenceTrace& trace, const Scenario& scenario, const AOOptions& opts);
void emit_convergence(const ConvergenceTrace& trace, const Scenario& scenario, const AOOptions& opts,
                      const std::string& path);

}  // namespace iscc
