#pragma once

#include <vector>

#include "iscc/core_model.hpp"

namespace iscc {

/// Per-user data of the task-allocation LP: objective slope and the
/// feasible interval for l_m implied by the local and offload deadlines.
struct TaskAllocCoefficients {
  std::vector<double> lambda;  // J/bit
  std::vector<double> lower;   // bits
  std::vector<double> upper;   // bits
};

/// lambda_m = p_m / r_m + kappa_A (f_m^A)^2 phi_A - kappa_m f_m^2 phi_m, and
/// [max(0, L_m - f_m tau / phi_m), min(L_m, tau / (1/r_m + phi_A / f_m^A))].
/// A user with f_m^A = 0 or r_m = 0 cannot offload (upper bound 0).
TaskAllocCoefficients task_alloc_coefficients(const SystemModel& model, const std::vector<double>& rates,
                                              const AllocationState& alloc);

/// Exact LP solve: each l_m sits at the interval endpoint selected by the
/// sign of lambda_m (lower endpoint on ties). Throws InfeasibleSubproblem for
/// an empty interval.
std::vector<double> solve_task_allocation(const SystemModel& model, const std::vector<double>& rates,
                                          const AllocationState& alloc);

struct ComputeAllocation {
  std::vector<double> local_hz;
  std::vector<double> alap_hz;
};

/// Minimizes sum mu_m f_m^2 + nu_m (f_m^A)^2 under the deadlines: the
/// objective is increasing in every variable, so each frequency takes its
/// deadline lower bound. Throws InfeasibleSubproblem naming the violated cap.
ComputeAllocation solve_compute_allocation(const SystemModel& model, const std::vector<double>& rates,
                                           const std::vector<double>& offload_bits);

}  // namespace iscc
