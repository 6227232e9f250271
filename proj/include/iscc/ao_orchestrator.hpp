#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iscc/beamforming_solvers.hpp"
#include "iscc/core_model.hpp"

namespace iscc {

struct AOOptions {
  double epsilon = 1e-4;  // relative change of the total energy between sweeps
  int max_iter = 20;
  std::uint64_t seed = 1;
  BeamformingOptions beam;

  /// Throws ValidationError for epsilon <= 0 or max_iter < 1.
  void validate() const;
};

enum class SchemeId { Proposed, FT, RT, FC, RC, RB };

const char* to_string(SchemeId s);
/// Case-insensitive; throws ValidationError for unknown names.
SchemeId scheme_from_string(const std::string& name);
const std::vector<SchemeId>& all_schemes();

enum class Block { TaskAllocation, ComputeAllocation, TxBeamforming, RxBeamforming };

const char* to_string(Block b);

struct BlockRecord {
  Block block = Block::TaskAllocation;
  bool accepted = false;
  double phi_before = 0.0;
  double phi_after = 0.0;  // energy of the candidate, even when rejected
  std::string note;        // reason for a rejection or a solver failure
};

struct IterationRecord {
  int iteration = 0;  // 0 is the initial point
  double phi = 0.0;
  EnergyBreakdown energy;
  std::vector<BlockRecord> blocks;
  double wall_ms = 0.0;
};

enum class AOStatus { Converged, MaxIter };

const char* to_string(AOStatus s);

struct ConvergenceTrace {
  std::vector<IterationRecord> iterations;
  AOStatus status = AOStatus::MaxIter;

  /// Number of full sweeps performed.
  int sweeps() const { return static_cast<int>(iterations.size()) - 1; }
};

struct AODiagnostics {
  std::vector<double> tx_residual_ratios;  // one per successful transmit solve
  std::vector<ipm::SolverReport> solver_reports;
  std::optional<RankOneCertificate> last_certificate;
  int rx_randomizations = 0;
};

struct AOResult {
  AllocationState alloc;
  BeamformingState beam;
  EnergyBreakdown energy;
  ConvergenceTrace trace;
  AODiagnostics diagnostics;
  std::string freeze_note;  // how a benchmark fixed its frozen block
};

struct InitialPoint {
  BeamformingState beam;
  AllocationState alloc;
};

/// Matched combiners, the weakest sensing-feasible transmit beam, an equal
/// split of the platform budget and the midpoint of each offload interval.
/// Throws ScenarioInfeasible when no such point satisfies every constraint.
InitialPoint initialize_feasible(const SystemModel& model, std::uint64_t seed);

/// Allocation for given beams: l at the interval midpoint computed with local
/// caps and an equal platform split, frequencies at their deadline minimum.
AllocationState initial_allocation(const SystemModel& model, const BeamformingState& beam);

struct FreezeMask {
  bool task = false;
  bool compute = false;
  bool beams = false;
};

/// Alternating optimization from a given feasible point, skipping frozen blocks.
AOResult run_ao_from(const SystemModel& model, InitialPoint start, const AOOptions& opts, FreezeMask mask = {});

AOResult run_ao(const Scenario& scenario, const AOOptions& opts);

AOResult run_scheme(const Scenario& scenario, SchemeId scheme, const AOOptions& opts);

}  // namespace iscc
