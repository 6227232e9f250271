#include <doctest.h>

#include <random>

#include "iscc/alloc_solvers.hpp"
#include "iscc/errors.hpp"
#include "support/oracles.hpp"

using namespace iscc;

namespace {

struct Instance {
  Scenario scenario;
  std::vector<double> rates;
  AllocationState alloc;
};

// Random scenario with random (feasible-ish) frequencies; rates are drawn
// directly since the allocation blocks only see them as numbers.
Instance random_instance(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Instance in;
  in.scenario = Scenario::default_scenario(n);
  for (auto& u : in.scenario.users) {
    u.task_bits = 2e4 + 1.5e5 * u01(rng);
    u.cycles_per_bit = 50 + 100 * u01(rng);
    u.tx_power_w = 0.02 + 0.3 * u01(rng);
    u.kappa = 1e-20 * (0.5 + u01(rng));
  }
  in.alloc.offload_bits.assign(n, 0.0);
  for (std::size_t m = 0; m < n; ++m) {
    const auto& u = in.scenario.users[m];
    in.rates.push_back(1e5 + 5e6 * u01(rng));
    in.alloc.local_hz.push_back(u.f_max_hz * (0.3 + 0.7 * u01(rng)));
    in.alloc.alap_hz.push_back(in.scenario.alap.f_max_hz / n * (0.05 + 0.95 * u01(rng)));
  }
  return in;
}

oracle::UserSlice slice(const Instance& in, std::size_t m) {
  const auto& u = in.scenario.users[m];
  return {u.task_bits, u.cycles_per_bit, u.kappa, u.f_max_hz, u.tx_power_w, in.rates[m]};
}

}  // namespace

TEST_CASE("task allocation matches a dense grid over each user's offload volume") {
  std::mt19937_64 rng(101);
  int solved = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const Instance in = random_instance(rng, 1 + trial % 4);
    const SystemModel model(in.scenario);
    std::vector<double> l;
    try {
      l = solve_task_allocation(model, in.rates, in.alloc);
    } catch (const InfeasibleSubproblem&) {
      // the grid must agree that no l works for some user
      bool some_empty = false;
      for (std::size_t m = 0; m < in.rates.size(); ++m) {
        some_empty |= !std::isfinite(oracle::grid_task_allocation(slice(in, m), in.scenario.alap, in.scenario.slot_s,
                                                                  in.alloc.local_hz[m], in.alloc.alap_hz[m], 20001));
      }
      CHECK(some_empty);
      continue;
    }
    ++solved;
    for (std::size_t m = 0; m < l.size(); ++m) {
      const auto us = slice(in, m);
      const double f = in.alloc.local_hz[m], fa = in.alloc.alap_hz[m];
      const double grid = oracle::grid_task_allocation(us, in.scenario.alap, in.scenario.slot_s, f, fa, 20001);
      const double closed = oracle::user_energy(us, in.scenario.alap, in.scenario.slot_s, l[m], f, fa);
      REQUIRE(std::isfinite(closed));
      CHECK(closed <= grid * (1 + 1e-9));
      CHECK(closed >= grid * (1 - 1e-3));
    }
  }
  CHECK(solved > 10);
}

TEST_CASE("task allocation endpoints follow the sign of lambda") {
  const Instance in = [] {
    std::mt19937_64 rng(7);
    return random_instance(rng, 2);
  }();
  const SystemModel model(in.scenario);
  const TaskAllocCoefficients c = task_alloc_coefficients(model, in.rates, in.alloc);
  for (std::size_t m = 0; m < 2; ++m) {
    const auto& u = in.scenario.users[m];
    const double f = in.alloc.local_hz[m], fa = in.alloc.alap_hz[m];
    CHECK(c.lambda[m] == doctest::Approx(u.tx_power_w / in.rates[m] + 1e-20 * fa * fa * 50 - u.kappa * f * f * u.cycles_per_bit));
    CHECK(c.lower[m] == doctest::Approx(std::max(0.0, u.task_bits - f * 2.0 / u.cycles_per_bit)));
  }
}

TEST_CASE("a user without platform compute or rate cannot offload") {
  Instance in = [] {
    std::mt19937_64 rng(8);
    return random_instance(rng, 2);
  }();
  in.alloc.alap_hz[0] = 0.0;
  in.rates[1] = 0.0;
  const SystemModel model(in.scenario);
  const TaskAllocCoefficients c = task_alloc_coefficients(model, in.rates, in.alloc);
  CHECK(c.upper[0] == 0.0);
  CHECK(c.upper[1] == 0.0);
}

TEST_CASE("empty offload interval is reported with the user index") {
  Instance in = [] {
    std::mt19937_64 rng(9);
    return random_instance(rng, 3);
  }();
  in.alloc.local_hz[2] = 1e3;  // forces nearly all bits off the device
  in.rates[2] = 1e3;           // but the link is far too slow
  const SystemModel model(in.scenario);
  try {
    solve_task_allocation(model, in.rates, in.alloc);
    FAIL("expected InfeasibleSubproblem");
  } catch (const InfeasibleSubproblem& e) {
    CHECK(e.user() == 2);
  }
}

TEST_CASE("compute allocation matches a zoomed 300x300 grid") {
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    const Instance in = random_instance(rng, 1 + trial % 4);
    const SystemModel model(in.scenario);
    std::vector<double> l;
    for (std::size_t m = 0; m < in.rates.size(); ++m) {
      // an offload volume that the link can carry in a quarter of the slot
      const auto& u = in.scenario.users[m];
      const double lo = std::max(0.0, u.task_bits - u.f_max_hz * 2.0 / u.cycles_per_bit);
      l.push_back(std::min(u.task_bits, std::max(lo, 0.5 * std::min(u.task_bits, in.rates[m] * 0.5))));
    }
    ComputeAllocation f;
    try {
      f = solve_compute_allocation(model, in.rates, l);
    } catch (const InfeasibleSubproblem&) {
      continue;
    }
    for (std::size_t m = 0; m < l.size(); ++m) {
      const auto us = slice(in, m);
      const double closed =
          oracle::user_energy(us, in.scenario.alap, in.scenario.slot_s, l[m], f.local_hz[m], f.alap_hz[m]);
      const double grid = oracle::grid_compute_allocation(us, in.scenario.alap, in.scenario.slot_s, l[m],
                                                          in.scenario.alap.f_max_hz, 300);
      REQUIRE(std::isfinite(closed));
      CHECK(closed <= grid * (1 + 1e-9) + 1e-15);
      CHECK(closed >= grid * (1 - 5e-3) - 1e-15);
    }
  }
}

TEST_CASE("compute allocation puts both deadlines at equality") {
  Instance in = [] {
    std::mt19937_64 rng(12);
    return random_instance(rng, 3);
  }();
  std::vector<double> l;
  for (const auto& u : in.scenario.users) {
    const double lo = std::max(0.0, u.task_bits - u.f_max_hz * 2.0 / u.cycles_per_bit);
    l.push_back(lo + 0.3 * (u.task_bits - lo));
  }
  l[2] = 0.0;
  in.scenario.users[2].task_bits = 1e4;  // small enough to stay fully local
  const SystemModel model(in.scenario);
  const ComputeAllocation f = solve_compute_allocation(model, in.rates, l);
  for (std::size_t m = 0; m < 3; ++m) {
    const auto& u = in.scenario.users[m];
    CHECK(u.cycles_per_bit * (u.task_bits - l[m]) / f.local_hz[m] == doctest::Approx(2.0));
    if (l[m] > 0) CHECK(l[m] / in.rates[m] + 50.0 * l[m] / f.alap_hz[m] == doctest::Approx(2.0));
  }
  CHECK(f.alap_hz[2] == 0.0);
}

TEST_CASE("compute allocation surfaces each cap violation") {
  Instance in = [] {
    std::mt19937_64 rng(13);
    return random_instance(rng, 2);
  }();
  auto constraint_of = [](const Scenario& s, const std::vector<double>& rates, const std::vector<double>& l) {
    const SystemModel model(s);
    try {
      solve_compute_allocation(model, rates, l);
    } catch (const InfeasibleSubproblem& e) {
      return e.constraint();
    }
    return std::string("none");
  };
  const double l0 = in.scenario.users[0].task_bits;
  const double l1 = in.scenario.users[1].task_bits;
  CHECK(constraint_of(in.scenario, in.rates, {l0, l1 * 0.999}) == "none");

  Scenario heavy = in.scenario;
  heavy.users[0].task_bits = 1e6;  // keeping it all local needs 100 * 1e6 / 2 Hz > f_max
  heavy.users[0].cycles_per_bit = 100.0;
  CHECK(constraint_of(heavy, in.rates, {0.0, l1}) == "local_cpu_cap");

  std::vector<double> slow = in.rates;
  slow[0] = l0 / 2.0;  // transmission alone takes the whole slot
  CHECK(constraint_of(in.scenario, slow, {l0, l1}) == "offload_deadline");

  Scenario small_platform = in.scenario;
  small_platform.alap.f_max_hz = 1e5;
  const std::vector<double> fast(2, 1e9);
  CHECK(constraint_of(small_platform, fast, {l0, l1}) == "platform_cpu_budget");
}
