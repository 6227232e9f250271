#include "iscc/ao_orchestrator.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>

#include "iscc/alloc_solvers.hpp"
#include "iscc/errors.hpp"

namespace iscc {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

// Offload interval with local frequency at its cap and an equal platform split.
std::vector<Interval> offload_intervals(const SystemModel& model, const std::vector<double>& rates) {
  const Scenario& s = model.scenario();
  const std::size_t n = s.n_users();
  AllocationState probe;
  probe.offload_bits.assign(n, 0.0);
  probe.alap_hz.assign(n, s.alap.f_max_hz / static_cast<double>(n));
  probe.local_hz.resize(n);
  for (std::size_t m = 0; m < n; ++m) probe.local_hz[m] = s.users[m].f_max_hz;
  const TaskAllocCoefficients c = task_alloc_coefficients(model, rates, probe);
  std::vector<Interval> out(n);
  for (std::size_t m = 0; m < n; ++m) {
    if (c.lower[m] > c.upper[m] + 1e-9 * std::max(1.0, s.users[m].task_bits)) {
      throw ScenarioInfeasible("user " + std::to_string(m) + " has an empty offload interval");
    }
    out[m] = {c.lower[m], std::max(c.lower[m], c.upper[m])};
  }
  return out;
}

AllocationState allocation_for(const SystemModel& model, const std::vector<double>& rates,
                               std::vector<double> offload) {
  AllocationState a;
  try {
    ComputeAllocation f = solve_compute_allocation(model, rates, offload);
    a.local_hz = std::move(f.local_hz);
    a.alap_hz = std::move(f.alap_hz);
  } catch (const InfeasibleSubproblem& e) {
    throw ScenarioInfeasible(std::string("initial compute allocation: ") + e.what());
  }
  a.offload_bits = std::move(offload);
  return a;
}

void require_feasible(const SystemModel& model, const InitialPoint& p, const std::string& what) {
  const ConstraintReport rep = model.check_feasibility(p.alloc, p.beam);
  for (const auto& c : rep.checks) {
    if (!c.pass) {
      std::string who = c.user ? " (user " + std::to_string(*c.user) + ")" : "";
      throw ScenarioInfeasible(what + " violates " + c.id + who);
    }
  }
}

ComplexVector random_unit_vector(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ComplexVector v(n);
  do {
    for (Eigen::Index k = 0; k < n; ++k) v(k) = Complex(normal(rng), normal(rng));
  } while (!(v.norm() > 0.0));
  return v.normalized();
}

double total_energy(const SystemModel& model, const AllocationState& a, const BeamformingState& b) {
  return model.energy_breakdown(a, b).total;
}

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

void AOOptions::validate() const {
  if (!(epsilon > 0.0)) throw ValidationError("options.epsilon must be positive");
  if (max_iter < 1) throw ValidationError("options.max_iter must be at least 1");
  if (beam.randomization_samples < 1) throw ValidationError("options.randomization_samples must be at least 1");
  if (!(beam.floor_relaxation >= 0.0 && beam.floor_relaxation < 1e-2)) {
    throw ValidationError("options.floor_relaxation must lie in [0, 0.01)");
  }
}

const char* to_string(SchemeId s) {
  switch (s) {
    case SchemeId::Proposed: return "Proposed";
    case SchemeId::FT: return "FT";
    case SchemeId::RT: return "RT";
    case SchemeId::FC: return "FC";
    case SchemeId::RC: return "RC";
    case SchemeId::RB: return "RB";
  }
  return "?";
}

SchemeId scheme_from_string(const std::string& name) {
  const std::string key = lowercase(name);
  for (SchemeId s : all_schemes()) {
    if (lowercase(to_string(s)) == key) return s;
  }
  throw ValidationError("unknown scheme '" + name + "'");
}

const std::vector<SchemeId>& all_schemes() {
  static const std::vector<SchemeId> v{SchemeId::Proposed, SchemeId::FT, SchemeId::RT,
                                       SchemeId::FC,       SchemeId::RC, SchemeId::RB};
  return v;
}

const char* to_string(Block b) {
  switch (b) {
    case Block::TaskAllocation: return "task_allocation";
    case Block::ComputeAllocation: return "compute_allocation";
    case Block::TxBeamforming: return "tx_beamforming";
    case Block::RxBeamforming: return "rx_beamforming";
  }
  return "?";
}

const char* to_string(AOStatus s) { return s == AOStatus::Converged ? "Converged" : "MaxIter"; }

AllocationState initial_allocation(const SystemModel& model, const BeamformingState& beam) {
  const std::vector<double> rates = model.rates(beam);
  const std::vector<Interval> iv = offload_intervals(model, rates);
  std::vector<double> l(iv.size());
  for (std::size_t m = 0; m < iv.size(); ++m) l[m] = std::clamp(0.5 * (iv[m].lower + iv[m].upper), iv[m].lower, iv[m].upper);
  return allocation_for(model, rates, std::move(l));
}

InitialPoint initialize_feasible(const SystemModel& model, std::uint64_t /*seed*/) {
  // The construction is deterministic; the seed is accepted for interface symmetry
  // with the randomized benchmarks.
  InitialPoint p;
  const Scenario& s = model.scenario();
  const ComplexVector v = std::sqrt(model.sensing_threshold()) * model.target_tx_steering();
  p.beam.tx_vec = v;
  p.beam.tx_cov = outer_product(v);
  for (std::size_t m = 0; m < s.n_users(); ++m) p.beam.rx_vecs.push_back(model.user_steering(m));
  p.alloc = initial_allocation(model, p.beam);
  require_feasible(model, p, "initial point");
  return p;
}

AOResult run_ao_from(const SystemModel& model, InitialPoint start, const AOOptions& opts, FreezeMask mask) {
  opts.validate();
  const auto t_start = Clock::now();
  AOResult res;
  AllocationState alloc = std::move(start.alloc);
  BeamformingState beam = std::move(start.beam);
  BeamformingOptions bopts = opts.beam;
  bopts.seed = opts.seed;

  IterationRecord rec0;
  rec0.energy = model.energy_breakdown(alloc, beam);
  rec0.phi = rec0.energy.total;
  rec0.wall_ms = elapsed_ms(t_start);
  res.trace.iterations.push_back(rec0);
  double phi = rec0.phi;

  // Accept a candidate block only if it is feasible and does not raise the
  // total energy; otherwise the previous block value stays.
  auto try_block = [&](Block block, IterationRecord& rec,
                       const std::function<void(AllocationState&, BeamformingState&)>& update) {
    BlockRecord br;
    br.block = block;
    br.phi_before = phi;
    br.phi_after = phi;
    AllocationState a = alloc;
    BeamformingState b = beam;
    try {
      update(a, b);
      const double cand = total_energy(model, a, b);
      br.phi_after = cand;
      if (!model.check_feasibility(a, b).all_pass()) {
        br.note = "candidate violates a constraint";
      } else if (!(cand <= phi * (1.0 + 1e-12))) {
        br.note = "candidate raises the total energy";
      } else {
        alloc = std::move(a);
        beam = std::move(b);
        phi = cand;
        br.accepted = true;
      }
    } catch (const std::exception& e) {
      br.note = e.what();
    }
    rec.blocks.push_back(br);
  };

  for (int it = 1; it <= opts.max_iter; ++it) {
    const auto t_it = Clock::now();
    IterationRecord rec;
    rec.iteration = it;
    const double phi_prev = phi;

    if (!mask.task) {
      try_block(Block::TaskAllocation, rec, [&](AllocationState& a, BeamformingState& b) {
        a.offload_bits = solve_task_allocation(model, model.rates(b), a);
      });
    }
    if (!mask.compute) {
      try_block(Block::ComputeAllocation, rec, [&](AllocationState& a, BeamformingState& b) {
        ComputeAllocation f = solve_compute_allocation(model, model.rates(b), a.offload_bits);
        a.local_hz = std::move(f.local_hz);
        a.alap_hz = std::move(f.alap_hz);
      });
    }
    if (!mask.beams) {
      try_block(Block::TxBeamforming, rec, [&](AllocationState& a, BeamformingState& b) {
        TxSolution tx = solve_tx_beamforming(model, a, b, std::nullopt, bopts);
        res.diagnostics.tx_residual_ratios.push_back(tx.residual_ratio);
        res.diagnostics.solver_reports.push_back(tx.report);
        const TxSubproblemContext ctx = make_tx_context(model, a, b, std::nullopt, bopts.floor_relaxation);
        res.diagnostics.last_certificate = rank_one_certificate(tx.tx_cov_relaxed, tx.duals, ctx);
        b.tx_cov = tx.tx_cov;
        b.tx_vec = tx.tx_vec;
      });
      try_block(Block::RxBeamforming, rec, [&](AllocationState& a, BeamformingState& b) {
        RxSolution rx = solve_rx_beamforming(model, a, b, bopts);
        for (const auto& u : rx.users) {
          if (!u.active) continue;
          res.diagnostics.solver_reports.push_back(u.report);
          if (u.randomized) ++res.diagnostics.rx_randomizations;
        }
        b.rx_vecs = std::move(rx.rx_vecs);
      });
    }

    rec.energy = model.energy_breakdown(alloc, beam);
    rec.phi = rec.energy.total;
    rec.wall_ms = elapsed_ms(t_it);
    res.trace.iterations.push_back(rec);
    if (std::abs(phi_prev - phi) / std::max(phi_prev, 1e-12) < opts.epsilon) {
      res.trace.status = AOStatus::Converged;
      break;
    }
  }

  res.alloc = std::move(alloc);
  res.beam = std::move(beam);
  res.energy = model.energy_breakdown(res.alloc, res.beam);
  return res;
}

AOResult run_ao(const Scenario& scenario, const AOOptions& opts) {
  const SystemModel model(scenario);
  return run_ao_from(model, initialize_feasible(model, opts.seed), opts);
}

AOResult run_scheme(const Scenario& scenario, SchemeId scheme, const AOOptions& opts) {
  const SystemModel model(scenario);
  const Scenario& s = model.scenario();
  const std::size_t n = s.n_users();
  std::mt19937_64 rng(opts.seed);
  std::string note;
  InitialPoint p;
  FreezeMask mask;

  switch (scheme) {
    case SchemeId::Proposed:
      return run_ao_from(model, initialize_feasible(model, opts.seed), opts);

    case SchemeId::FT: {
      p = initialize_feasible(model, opts.seed);
      mask.task = true;
      note = "offload bits frozen at the interval midpoint";
      break;
    }

    case SchemeId::RT: {
      p = initialize_feasible(model, opts.seed);
      const std::vector<double> rates = model.rates(p.beam);
      const std::vector<Interval> iv = offload_intervals(model, rates);
      std::vector<double> l(n);
      for (std::size_t m = 0; m < n; ++m) {
        l[m] = std::uniform_real_distribution<double>(iv[m].lower, iv[m].upper)(rng);
      }
      p.alloc = allocation_for(model, rates, std::move(l));
      mask.task = true;
      note = "offload bits drawn uniformly in the feasible interval";
      break;
    }

    case SchemeId::FC: {
      p = initialize_feasible(model, opts.seed);
      for (std::size_t m = 0; m < n; ++m) {
        p.alloc.local_hz[m] = s.users[m].f_max_hz;
        p.alloc.alap_hz[m] = s.alap.f_max_hz / static_cast<double>(n);
      }
      mask.compute = true;
      note = "local frequencies at their caps, platform budget split equally";
      break;
    }

    case SchemeId::RC: {
      p = initialize_feasible(model, opts.seed);
      const std::vector<double> rates = model.rates(p.beam);
      for (std::size_t m = 0; m < n; ++m) {
        const double lo = p.alloc.local_hz[m];
        const double lo_a = p.alloc.alap_hz[m];
        const double cap_a = s.alap.f_max_hz / static_cast<double>(n);
        p.alloc.local_hz[m] = std::uniform_real_distribution<double>(lo, std::max(lo, s.users[m].f_max_hz))(rng);
        p.alloc.alap_hz[m] = std::uniform_real_distribution<double>(lo_a, std::max(lo_a, cap_a))(rng);
      }
      mask.compute = true;
      note = "frequencies drawn uniformly between their deadline minimum and cap";
      break;
    }

    case SchemeId::RB: {
      // A random combiner can leave a user too slow to meet its deadline; such
      // draws are discarded and redrawn from the same stream.
      const ComplexVector at = model.target_tx_steering();
      constexpr int kMaxDraws = 100;
      int draw = 0;
      for (; draw < kMaxDraws; ++draw) {
        ComplexVector v = random_unit_vector(rng, s.n_tx);
        v *= std::sqrt(model.sensing_threshold() / std::norm(at.dot(v)));
        p.beam = BeamformingState{};
        p.beam.tx_vec = v;
        p.beam.tx_cov = outer_product(v);
        for (std::size_t m = 0; m < n; ++m) p.beam.rx_vecs.push_back(random_unit_vector(rng, s.n_rx));
        try {
          p.alloc = initial_allocation(model, p.beam);
          require_feasible(model, p, "RB draw");
          break;
        } catch (const ScenarioInfeasible&) {
        }
      }
      if (draw == kMaxDraws) throw ScenarioInfeasible("RB: no feasible random beams in 100 draws");
      mask.beams = true;
      note = "random beams (" + std::to_string(draw + 1) + " draws), transmit beam rescaled to meet the sensing threshold";
      break;
    }
  }

  require_feasible(model, p, std::string(to_string(scheme)) + " frozen point");
  AOResult r = run_ao_from(model, std::move(p), opts, mask);
  r.freeze_note = note;
  return r;
}

}  // namespace iscc
