#include "iscc/beamforming_solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "iscc/errors.hpp"

namespace iscc {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

const double kLog2e = 1.0 / std::log(2.0);

// l / (tau - T_comp) for an active user; throws when no transmission time is left.
double rate_floor(const SystemModel& model, const AllocationState& alloc, std::size_t m) {
  const Scenario& s = model.scenario();
  const double l = alloc.offload_bits[m];
  const double fa = alloc.alap_hz[m];
  if (!(fa > 0.0)) {
    throw InfeasibleSubproblem("user " + std::to_string(m) + " offloads without ALAP compute", m, "offload_deadline");
  }
  const double remaining = s.slot_s - s.alap.cycles_per_bit * l / fa;
  if (!(remaining > 0.0)) {
    throw InfeasibleSubproblem("ALAP computation of user " + std::to_string(m) + " fills the slot", m, "offload_deadline");
  }
  return l / remaining;
}

// log2(g + e + b) - log2(g_i + e) - log2(e) (g - g_i) / (g_i + e), all scaled by sigma^2.
double scaled_rate_bound(double g, double g_i, double b, double e) {
  return std::log2(g + e + b) - std::log2(g_i + e) - kLog2e * (g - g_i) / (g_i + e);
}

}  // namespace

double rate_lower_bound_g(double g, double g_i, double b, double e, double bandwidth_hz) {
  return bandwidth_hz * scaled_rate_bound(g, g_i, b, e);
}

double rate_lower_bound_W(const HermitianMatrix& w, const HermitianMatrix& w_i, const HermitianMatrix& omega,
                          const HermitianMatrix& lambda, double bandwidth_hz) {
  const double lin = trace_product(lambda, w_i);
  const double total = trace_product(omega + lambda, w);
  if (!(lin > 0.0) || !(total > 0.0)) {
    throw ValidationError("rate_lower_bound_W: trace arguments must be positive");
  }
  const double delta_term = kLog2e * trace_product(lambda, w - w_i) / lin;
  return bandwidth_hz * (std::log2(total) - std::log2(lin) - delta_term);
}

// ---------------------------------------------------------------------------
// Transmit covariance subproblem

TxSubproblemContext make_tx_context(const SystemModel& model, const AllocationState& alloc,
                                    const BeamformingState& beam, const std::optional<std::vector<double>>& g_prev,
                                    double floor_relaxation) {
  const Scenario& s = model.scenario();
  TxSubproblemContext ctx;
  ctx.n_tx = s.n_tx;
  ctx.slot_s = s.slot_s;
  ctx.bandwidth_hz = s.bandwidth_hz;
  ctx.noise_w = s.noise_w;
  ctx.threshold = model.sensing_threshold();
  ctx.a_t = model.target_tx_steering();
  const double gain_now = quad_form(beam.tx_cov, ctx.a_t);
  for (std::size_t m = 0; m < model.n_users(); ++m) {
    if (!(alloc.offload_bits[m] > 0.0)) continue;
    const ComplexVector& w = beam.rx_vecs[m];
    TxUserTerm t;
    t.user = m;
    t.b = quad_form(model.signal_matrix(m), w);
    t.e = quad_form(model.interference_without_echo(m), w);
    t.echo_gain = s.target_amp_sq * std::norm(w.dot(model.target_rx_steering()));
    if (g_prev) {
      if ((*g_prev)[m] < 0.0) throw ValidationError("g_prev must be nonnegative");
      t.g_lin = (*g_prev)[m];
    } else {
      t.g_lin = t.echo_gain * gain_now;
    }
    t.rate_floor = rate_floor(model, alloc, m) * (1.0 - floor_relaxation);
    t.weight = s.users[m].tx_power_w * alloc.offload_bits[m];
    ctx.users.push_back(t);
  }
  return ctx;
}

TxProblem build_tx_problem(const TxSubproblemContext& ctx, double objective_scale) {
  const Index n = ctx.n_tx;
  const Index k_users = static_cast<Index>(ctx.users.size());
  TxProblem tp;
  tp.objective_scale = objective_scale;
  tp.rate_offset = n * n;
  tp.interference_offset = n * n + k_users;
  ipm::SmoothConvexProblem& p = tp.problem;
  p.n_vars = n * n + 2 * k_users;
  p.psd_blocks.push_back({0, n});
  p.eq_matrix.resize(0, p.n_vars);
  p.eq_rhs.resize(0);

  const VectorXd sens = ipm::trace_gradient(outer_product(ctx.a_t));
  VectorXd trace_coeffs = VectorXd::Zero(p.n_vars);
  trace_coeffs.head(n).setOnes();
  VectorXd sens_full = VectorXd::Zero(p.n_vars);
  sens_full.head(n * n) = sens;

  const double tau_thr = ctx.slot_s * ctx.threshold;
  const double B = ctx.bandwidth_hz;
  const Index r0 = tp.rate_offset;
  std::vector<double> weights;
  for (const auto& u : ctx.users) weights.push_back(u.weight / B);
  p.objective = [=](const VectorXd& x, VectorXd* grad, MatrixXd* hess) {
    double v = tau_thr * x.head(n).sum();
    if (grad) *grad = (tau_thr / objective_scale) * trace_coeffs;
    if (hess) *hess = MatrixXd::Zero(x.size(), x.size());
    for (Index k = 0; k < k_users; ++k) {
      const double r = x(r0 + k);
      const double c = weights[static_cast<std::size_t>(k)];
      v += c / r;
      if (grad) (*grad)(r0 + k) = -c / (r * r) / objective_scale;
      if (hess) (*hess)(r0 + k, r0 + k) = 2.0 * c / (r * r * r) / objective_scale;
    }
    return v / objective_scale;
  };

  const double sigma2 = ctx.noise_w;
  for (Index k = 0; k < k_users; ++k) {
    const TxUserTerm& u = ctx.users[static_cast<std::size_t>(k)];
    const double b = u.b / sigma2;
    const double e = u.e / sigma2;
    const double gi = u.g_lin / sigma2;
    const Index ri = r0 + k;
    const Index gidx = tp.interference_offset + k;
    p.inequalities.push_back([=](const VectorXd& x, VectorXd* grad, MatrixXd* hess) {
      const double g = x(gidx);
      const double s = g + e + b;
      if (grad) {
        *grad = VectorXd::Zero(x.size());
        (*grad)(ri) = 1.0;
        (*grad)(gidx) = -kLog2e / s + kLog2e / (gi + e);
      }
      if (hess) {
        *hess = MatrixXd::Zero(x.size(), x.size());
        (*hess)(gidx, gidx) = kLog2e / (s * s);
      }
      if (!(s > 0.0)) return std::numeric_limits<double>::infinity();
      return x(ri) - scaled_rate_bound(g, gi, b, e);
    });
    VectorXd coup = (u.echo_gain * ctx.threshold / sigma2) * sens_full;
    coup(gidx) = -1.0;
    tp.coupling_index.push_back(p.inequalities.size());
    p.inequalities.push_back(ipm::linear_fn(coup, 0.0));
    p.bounds.push_back({ri, u.rate_floor / B, std::nullopt});
    p.bounds.push_back({gidx, 0.0, std::nullopt});
  }
  tp.sensing_index = p.inequalities.size();
  p.inequalities.push_back(ipm::linear_fn(-sens_full, 1.0));
  return tp;
}

std::optional<VectorXd> tx_start_point(const TxSubproblemContext& ctx, const TxProblem& tp) {
  const Index n = ctx.n_tx;
  const HermitianMatrix at = outer_product(ctx.a_t);
  const double sigma2 = ctx.noise_w;
  for (int k = 0; k <= 9; ++k) {
    const double delta = 1e-3 * std::pow(10.0, -k);
    const double eps = 1e-5 * delta;
    const HermitianMatrix v0 = (1.0 + delta) * at + eps * HermitianMatrix::identity(n);
    const double gain = quad_form(v0, ctx.a_t);
    VectorXd x = VectorXd::Zero(tp.problem.n_vars);
    ipm::write_block(x, tp.problem.psd_blocks[0], v0);
    bool room = true;
    for (std::size_t u = 0; u < ctx.users.size(); ++u) {
      const TxUserTerm& t = ctx.users[u];
      const double e = t.e / sigma2;
      const double interf = t.echo_gain * ctx.threshold * gain / sigma2;
      const double g0 = interf + delta * (interf + 1e-6 * e);
      const double ceiling = scaled_rate_bound(g0, t.g_lin / sigma2, t.b / sigma2, e);
      const double floor = t.rate_floor / ctx.bandwidth_hz;
      if (!(ceiling > floor)) {
        room = false;
        break;
      }
      x(tp.rate_offset + static_cast<Index>(u)) = 0.5 * (floor + ceiling);
      x(tp.interference_offset + static_cast<Index>(u)) = g0;
    }
    if (room && ipm::strictly_feasible(tp.problem, x)) return x;
  }
  return std::nullopt;
}

TxSolution solve_tx_beamforming(const SystemModel& model, const AllocationState& alloc, const BeamformingState& beam,
                                const std::optional<std::vector<double>>& g_prev, const BeamformingOptions& opts) {
  const TxSubproblemContext ctx = make_tx_context(model, alloc, beam, g_prev, opts.floor_relaxation);
  const TxProblem unit = build_tx_problem(ctx, 1.0);
  const auto x0 = tx_start_point(ctx, unit);
  if (!x0) throw StartInfeasible("no strictly feasible start for the transmit subproblem");
  const double scale = unit.problem.objective(*x0, nullptr, nullptr);
  const TxProblem tp = build_tx_problem(ctx, scale);

  const ipm::SolveResult res = ipm::solve_smooth_convex(tp.problem, *x0, opts.ipm);
  if (res.report.status != ipm::SolveStatus::Optimal) {
    throw NumericalFailure("transmit subproblem: " + res.report.message);
  }

  TxSolution sol;
  sol.report = res.report;
  const double thr = ctx.threshold;
  sol.tx_cov_relaxed = thr * ipm::block_matrix(res.x, tp.problem.psd_blocks[0]);
  const RankOneExtraction r1 = principal_rank_one(sol.tx_cov_relaxed);
  sol.residual_ratio = r1.residual_ratio;
  // Rescale so the sensing constraint is met with equality: the echo term
  // depends on V only through a_t^H V a_t, so this is the least interference
  // any sensing-feasible V can cause.
  const double gain = std::norm(ctx.a_t.dot(r1.vector));
  if (!(gain > 0.0)) throw NumericalFailure("transmit beam is orthogonal to the target");
  sol.tx_vec = r1.vector * std::sqrt(thr / gain);
  sol.tx_cov = outer_product(sol.tx_vec);

  const std::size_t n_users = model.n_users();
  sol.surrogate_rates.assign(n_users, 0.0);
  sol.interference.assign(n_users, 0.0);
  sol.duals.coupling.assign(ctx.users.size(), 0.0);
  for (std::size_t k = 0; k < ctx.users.size(); ++k) {
    const std::size_t m = ctx.users[k].user;
    sol.surrogate_rates[m] = ctx.bandwidth_hz * res.x(tp.rate_offset + static_cast<Index>(k));
    sol.interference[m] = ctx.noise_w * res.x(tp.interference_offset + static_cast<Index>(k));
    sol.duals.coupling[k] = scale * res.duals.inequality(static_cast<Index>(tp.coupling_index[k])) / ctx.noise_w;
  }
  sol.duals.sensing = scale * res.duals.inequality(static_cast<Index>(tp.sensing_index)) / thr;
  sol.duals.psd = (scale / thr) * res.duals.psd[0];
  return sol;
}

RankOneCertificate rank_one_certificate(const HermitianMatrix& v_star, const TxDuals& duals,
                                        const TxSubproblemContext& ctx) {
  double coeff = -duals.sensing;
  for (std::size_t k = 0; k < ctx.users.size() && k < duals.coupling.size(); ++k) {
    coeff += duals.coupling[k] * ctx.users[k].echo_gain;
  }
  RankOneCertificate c;
  c.z = ctx.slot_s * HermitianMatrix::identity(ctx.n_tx) + coeff * outer_product(ctx.a_t);
  const double denom = c.z.frobenius_norm() * v_star.frobenius_norm();
  c.zv_residual = denom > 0.0 ? (c.z.matrix() * v_star.matrix()).norm() / denom : 0.0;
  const EigenDecomposition eig = herm_eig(c.z);
  const double lmax = eig.eigenvalues(0);
  Index count = 0;
  for (Index i = 0; i < eig.eigenvalues.size(); ++i) {
    if (eig.eigenvalues(i) > 1e-8 * lmax) ++count;
  }
  c.z_rank_lower_ok = lmax > 0.0 && count >= ctx.n_tx - 1;
  return c;
}

// ---------------------------------------------------------------------------
// Receive combiner subproblems

RxSubproblemContext make_rx_context(const SystemModel& model, const AllocationState& alloc,
                                    const BeamformingState& beam, std::size_t m, double floor_relaxation) {
  const Scenario& s = model.scenario();
  RxSubproblemContext ctx;
  ctx.user = m;
  ctx.omega = model.signal_matrix(m);
  ctx.lambda = model.interference_matrix(beam.tx_cov, m);
  ctx.w_lin = outer_product(beam.rx_vecs[m]);
  ctx.rate_floor = rate_floor(model, alloc, m) * (1.0 - floor_relaxation);
  ctx.weight = s.users[m].tx_power_w * alloc.offload_bits[m];
  ctx.bandwidth_hz = s.bandwidth_hz;
  ctx.noise_w = s.noise_w;
  return ctx;
}

RxProblem build_rx_problem(const RxSubproblemContext& ctx, double objective_scale) {
  const Index n = ctx.omega.dim();
  RxProblem rp;
  rp.objective_scale = objective_scale;
  ipm::SmoothConvexProblem& p = rp.problem;
  p.n_vars = n * n + 1;
  p.psd_blocks.push_back({0, n});
  p.eq_matrix.resize(0, p.n_vars);
  p.eq_rhs.resize(0);
  const Index si = n * n;

  const double c = ctx.weight / ctx.bandwidth_hz;
  p.objective = [=](const VectorXd& x, VectorXd* grad, MatrixXd* hess) {
    const double s = x(si);
    if (grad) {
      *grad = VectorXd::Zero(x.size());
      (*grad)(si) = -c / (s * s) / objective_scale;
    }
    if (hess) {
      *hess = MatrixXd::Zero(x.size(), x.size());
      (*hess)(si, si) = 2.0 * c / (s * s * s) / objective_scale;
    }
    return c / s / objective_scale;
  };

  const double inv_sigma2 = 1.0 / ctx.noise_w;
  const HermitianMatrix lam = inv_sigma2 * ctx.lambda;
  const HermitianMatrix tot = inv_sigma2 * (ctx.omega + ctx.lambda);
  const double lin = trace_product(lam, ctx.w_lin);
  if (!(lin > 0.0)) throw ValidationError("receive subproblem: linearization point has zero interference trace");
  VectorXd g_tot = VectorXd::Zero(p.n_vars);
  g_tot.head(n * n) = ipm::trace_gradient(tot);
  VectorXd g_lam = VectorXd::Zero(p.n_vars);
  g_lam.head(n * n) = ipm::trace_gradient(lam);
  const double lam_at_lin = g_lam.head(n * n).dot([&] {
    VectorXd wl = VectorXd::Zero(n * n);
    ipm::write_block(wl, {0, n}, ctx.w_lin);
    return wl;
  }());
  p.inequalities.push_back([=](const VectorXd& x, VectorXd* grad, MatrixXd* hess) {
    const double t = g_tot.dot(x);
    if (grad) {
      *grad = -kLog2e * g_tot / t + kLog2e * g_lam / lin;
      (*grad)(si) = 1.0;
    }
    if (hess) *hess = (kLog2e / (t * t)) * (g_tot * g_tot.transpose());
    if (!(t > 0.0)) return std::numeric_limits<double>::infinity();
    const double bound = std::log2(t) - std::log2(lin) - kLog2e * (g_lam.dot(x) - lam_at_lin) / lin;
    return x(si) - bound;
  });
  VectorXd trace_coeffs = VectorXd::Zero(p.n_vars);
  trace_coeffs.head(n).setOnes();
  p.inequalities.push_back(ipm::linear_fn(trace_coeffs, -1.0));
  p.bounds.push_back({si, ctx.rate_floor / ctx.bandwidth_hz, std::nullopt});
  return rp;
}

std::optional<VectorXd> rx_start_point(const RxSubproblemContext& ctx, const RxProblem& rp) {
  const Index n = ctx.omega.dim();
  const RankOneExtraction prev = principal_rank_one(ctx.w_lin);
  const ComplexVector w_hat = prev.vector.normalized();
  const double rho = std::min(ctx.w_lin.trace(), 1.0 - 1e-4);
  const HermitianMatrix lam = (1.0 / ctx.noise_w) * ctx.lambda;
  const HermitianMatrix omg = (1.0 / ctx.noise_w) * ctx.omega;
  const HermitianMatrix lin_point = ctx.w_lin;
  for (int k = 0; k <= 8; ++k) {
    const double eps = 1e-1 * std::pow(10.0, -k);
    const HermitianMatrix w0 =
        rho * ((1.0 - eps) * outer_product(w_hat) + (eps / static_cast<double>(n)) * HermitianMatrix::identity(n));
    const double ceiling = rate_lower_bound_W(w0, lin_point, omg, lam, 1.0);
    const double floor = ctx.rate_floor / ctx.bandwidth_hz;
    if (!(ceiling > floor)) continue;
    VectorXd x = VectorXd::Zero(rp.problem.n_vars);
    ipm::write_block(x, rp.problem.psd_blocks[0], w0);
    x(n * n) = 0.5 * (floor + ceiling);
    if (ipm::strictly_feasible(rp.problem, x)) return x;
  }
  return std::nullopt;
}

ComplexVector gaussian_randomization(const HermitianMatrix& w_star, const SystemModel& model,
                                     const HermitianMatrix& tx_cov, std::size_t m, int n_samples,
                                     std::uint64_t seed) {
  if (n_samples < 1) throw ValidationError("gaussian_randomization: n_samples must be positive");
  const EigenDecomposition eig = herm_eig(w_star);
  if (!(eig.eigenvalues(0) > 0.0)) throw ValidationError("gaussian_randomization: zero covariance");
  const Index n = w_star.dim();
  Eigen::MatrixXcd color = eig.eigenvectors;
  for (Index k = 0; k < n; ++k) color.col(k) *= std::sqrt(std::max(eig.eigenvalues(k), 0.0));

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(m)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));

  ComplexVector best;
  double best_rate = -1.0;
  ComplexVector z(n);
  for (int s = 0; s < n_samples; ++s) {
    for (Index k = 0; k < n; ++k) z(k) = Complex(normal(rng), normal(rng));
    ComplexVector w = color * z;
    const double norm = w.norm();
    if (!(norm > 0.0)) continue;
    if (norm > 1.0) w /= norm;
    const double r = model.achievable_rate(tx_cov, w, m);
    if (r > best_rate) {
      best_rate = r;
      best = w;
    }
  }
  if (best_rate < 0.0) throw NumericalFailure("gaussian_randomization: every candidate vanished");
  return best;
}

RxSolution solve_rx_beamforming(const SystemModel& model, const AllocationState& alloc, const BeamformingState& beam,
                                const BeamformingOptions& opts) {
  const std::size_t n_users = model.n_users();
  RxSolution sol;
  sol.rx_vecs.resize(n_users);
  sol.users.resize(n_users);
  for (std::size_t m = 0; m < n_users; ++m) {
    RxUserResult& out = sol.users[m];
    if (!(alloc.offload_bits[m] > 0.0)) {
      sol.rx_vecs[m] = model.user_steering(m);
      out.w = sol.rx_vecs[m];
      continue;
    }
    out.active = true;
    const RxSubproblemContext ctx = make_rx_context(model, alloc, beam, m, opts.floor_relaxation);
    const RxProblem unit = build_rx_problem(ctx, 1.0);
    const auto x0 = rx_start_point(ctx, unit);
    if (!x0) throw StartInfeasible("no strictly feasible start for the receive subproblem of user " + std::to_string(m));
    const double scale = unit.problem.objective(*x0, nullptr, nullptr);
    const RxProblem rp = build_rx_problem(ctx, scale);
    const ipm::SolveResult res = ipm::solve_smooth_convex(rp.problem, *x0, opts.ipm);
    out.report = res.report;
    if (res.report.status != ipm::SolveStatus::Optimal) {
      throw NumericalFailure("receive subproblem of user " + std::to_string(m) + ": " + res.report.message);
    }
    const Index n = ctx.omega.dim();
    out.w_relaxed = ipm::block_matrix(res.x, rp.problem.psd_blocks[0]);
    out.surrogate_rate = ctx.bandwidth_hz * res.x(n * n);
    const RankOneExtraction r1 = principal_rank_one(out.w_relaxed);
    out.residual_ratio = r1.residual_ratio;
    ComplexVector w;
    if (r1.residual_ratio <= 1e-4) {
      w = r1.vector.normalized();
    } else {
      out.randomized = true;
      w = gaussian_randomization(out.w_relaxed, model, beam.tx_cov, m, opts.randomization_samples, opts.seed);
    }
    // The previous combiner is always a candidate, which keeps the true rate
    // from dropping when extraction loses accuracy.
    const ComplexVector& prev = beam.rx_vecs[m];
    if (model.achievable_rate(beam.tx_cov, prev, m) > model.achievable_rate(beam.tx_cov, w, m)) {
      w = prev;
      out.kept_previous = true;
    }
    out.w = canonical_phase(w);
    sol.rx_vecs[m] = out.w;
  }
  return sol;
}

}  // namespace iscc
