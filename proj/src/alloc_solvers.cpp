#include "iscc/alloc_solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "iscc/errors.hpp"

namespace iscc {

namespace {
constexpr double kRelTol = 1e-9;
}

TaskAllocCoefficients task_alloc_coefficients(const SystemModel& model, const std::vector<double>& rates,
                                              const AllocationState& alloc) {
  const Scenario& s = model.scenario();
  const double tau = s.slot_s;
  const AlapParams& a = s.alap;
  TaskAllocCoefficients c;
  const std::size_t n = s.n_users();
  c.lambda.resize(n);
  c.lower.resize(n);
  c.upper.resize(n);
  for (std::size_t m = 0; m < n; ++m) {
    const UserParams& u = s.users[m];
    const double f = alloc.local_hz[m];
    const double fa = alloc.alap_hz[m];
    const double r = rates[m];
    const double tx_cost = r > 0.0 ? u.tx_power_w / r : std::numeric_limits<double>::infinity();
    c.lambda[m] = tx_cost + a.kappa * fa * fa * a.cycles_per_bit - u.kappa * f * f * u.cycles_per_bit;
    c.lower[m] = std::max(0.0, u.task_bits - f * tau / u.cycles_per_bit);
    c.upper[m] = (fa > 0.0 && r > 0.0)
                     ? std::min(u.task_bits, tau / (1.0 / r + a.cycles_per_bit / fa))
                     : 0.0;
  }
  return c;
}

std::vector<double> solve_task_allocation(const SystemModel& model, const std::vector<double>& rates,
                                          const AllocationState& alloc) {
  const TaskAllocCoefficients c = task_alloc_coefficients(model, rates, alloc);
  std::vector<double> l(c.lambda.size());
  for (std::size_t m = 0; m < l.size(); ++m) {
    const double tol = kRelTol * std::max(1.0, model.scenario().users[m].task_bits);
    if (c.lower[m] > c.upper[m] + tol) {
      throw InfeasibleSubproblem("task allocation interval of user " + std::to_string(m) + " is empty", m,
                                 "local_deadline/offload_deadline");
    }
    l[m] = c.lambda[m] < 0.0 ? c.upper[m] : c.lower[m];
  }
  return l;
}

ComputeAllocation solve_compute_allocation(const SystemModel& model, const std::vector<double>& rates,
                                           const std::vector<double>& offload_bits) {
  const Scenario& s = model.scenario();
  const double tau = s.slot_s;
  const AlapParams& a = s.alap;
  ComputeAllocation out;
  const std::size_t n = s.n_users();
  out.local_hz.resize(n);
  out.alap_hz.resize(n);
  double alap_sum = 0.0;
  for (std::size_t m = 0; m < n; ++m) {
    const UserParams& u = s.users[m];
    const double l = offload_bits[m];
    double f = u.cycles_per_bit * std::max(0.0, u.task_bits - l) / tau;
    if (f > u.f_max_hz * (1.0 + kRelTol)) {
      throw InfeasibleSubproblem("local frequency of user " + std::to_string(m) + " exceeds its cap", m, "local_cpu_cap");
    }
    out.local_hz[m] = std::min(f, u.f_max_hz);

    if (l > 0.0) {
      const double remaining = rates[m] > 0.0 ? tau - l / rates[m] : -1.0;
      if (!(remaining > 0.0)) {
        throw InfeasibleSubproblem("transmission of user " + std::to_string(m) + " exhausts the slot", m, "offload_deadline");
      }
      out.alap_hz[m] = a.cycles_per_bit * l / remaining;
    } else {
      out.alap_hz[m] = 0.0;
    }
    alap_sum += out.alap_hz[m];
  }
  if (alap_sum > a.f_max_hz * (1.0 + kRelTol)) {
    throw InfeasibleSubproblem("platform computation budget exceeded", n, "platform_cpu_budget");
  }
  return out;
}

}  // namespace iscc
