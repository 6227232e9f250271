#include "iscc/ipm_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "iscc/errors.hpp"

namespace iscc::ipm {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

Index pair_slot(Index i, Index j, Index n) {
  // position of (i, j), i < j, among strictly-upper pairs in row-major order
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

Index total_barrier_weight(const SmoothConvexProblem& p) {
  Index m = static_cast<Index>(p.inequalities.size());
  for (const auto& b : p.bounds) m += (b.lower ? 1 : 0) + (b.upper ? 1 : 0);
  for (const auto& blk : p.psd_blocks) m += blk.dim;
  return m;
}

struct BarrierEval {
  double value = kInf;
  VectorXd grad;
  MatrixXd hess;
};

// psi_t(x) = t f(x) - sum log(-g) - sum log det X_b; value only if want_derivs false.
// Returns false when x is outside the strict interior.
// log det and inverse from the spectrum. A Cholesky-based inverse of a
// nearly singular block is off by about cond * eps * |X^-1| in every entry,
// which swamps the barrier gradient once t is large.
struct BlockSpectrum {
  bool positive = false;
  double log_det = 0.0;
  HermitianMatrix inverse;
};

BlockSpectrum block_spectrum(const HermitianMatrix& xb) {
  BlockSpectrum out;
  const EigenDecomposition eig = herm_eig(xb);
  const Index n = xb.dim();
  if (!(eig.eigenvalues(n - 1) > 0.0) || !eig.eigenvalues.allFinite()) return out;
  out.positive = true;
  out.log_det = eig.eigenvalues.array().log().sum();
  const Eigen::VectorXd inv = eig.eigenvalues.cwiseInverse();
  out.inverse = HermitianMatrix::symmetrized(eig.eigenvectors * inv.asDiagonal() * eig.eigenvectors.adjoint());
  return out;
}

bool barrier_eval(const SmoothConvexProblem& p, const VectorXd& x, double t, bool want_derivs,
                  BarrierEval& out) {
  const Index n = p.n_vars;
  VectorXd g;
  MatrixXd h;
  double value = 0.0;
  if (want_derivs) {
    out.grad = VectorXd::Zero(n);
    out.hess = MatrixXd::Zero(n, n);
  }

  for (const auto& blk : p.psd_blocks) {
    const HermitianMatrix xb = block_matrix(x, blk);
    const BlockSpectrum spec = block_spectrum(xb);
    if (!spec.positive) return false;
    value -= spec.log_det;
    if (want_derivs) {
      const HermitianMatrix& y = spec.inverse;
      out.grad.segment(blk.offset, blk.size()) -= trace_gradient(y);
      out.hess.block(blk.offset, blk.offset, blk.size(), blk.size()) += neg_logdet_hessian(y);
    }
  }
  for (const auto& b : p.bounds) {
    const double xi = x(b.index);
    if (b.lower) {
      const double s = xi - *b.lower;
      if (!(s > 0.0)) return false;
      value -= std::log(s);
      if (want_derivs) {
        out.grad(b.index) -= 1.0 / s;
        out.hess(b.index, b.index) += 1.0 / (s * s);
      }
    }
    if (b.upper) {
      const double s = *b.upper - xi;
      if (!(s > 0.0)) return false;
      value -= std::log(s);
      if (want_derivs) {
        out.grad(b.index) += 1.0 / s;
        out.hess(b.index, b.index) += 1.0 / (s * s);
      }
    }
  }
  for (const auto& ineq : p.inequalities) {
    const double gv = ineq(x, want_derivs ? &g : nullptr, want_derivs ? &h : nullptr);
    if (!(gv < 0.0) || !std::isfinite(gv)) return false;
    value -= std::log(-gv);
    if (want_derivs) {
      out.grad += g / (-gv);
      out.hess += (g * g.transpose()) / (gv * gv) + h / (-gv);
    }
  }
  const double fv = p.objective(x, want_derivs ? &g : nullptr, want_derivs ? &h : nullptr);
  if (!std::isfinite(fv)) return false;
  value += t * fv;
  if (want_derivs) {
    out.grad += t * g;
    out.hess += t * h;
    out.hess = 0.5 * (out.hess + out.hess.transpose());
  }
  out.value = value;
  return std::isfinite(value);
}

struct NewtonStep {
  VectorXd dx;
  VectorXd nu;  // equality multipliers of the t-scaled problem
  bool ok = false;
};

NewtonStep newton_direction_raw(const MatrixXd& hess, const VectorXd& grad, const MatrixXd& eq);

// Symmetric diagonal equilibration before factoring.
NewtonStep newton_direction(const MatrixXd& hess, const VectorXd& grad, const MatrixXd& eq) {
  const Index n = hess.rows();
  VectorXd d(n);
  for (Index i = 0; i < n; ++i) d(i) = hess(i, i) > 0.0 ? 1.0 / std::sqrt(hess(i, i)) : 1.0;
  const MatrixXd hs = d.asDiagonal() * hess * d.asDiagonal();
  const MatrixXd es = eq.rows() > 0 ? MatrixXd(eq * d.asDiagonal()) : eq;
  NewtonStep step = newton_direction_raw(hs, d.cwiseProduct(grad), es);
  if (step.ok) step.dx = d.cwiseProduct(step.dx);
  return step;
}

NewtonStep newton_direction_raw(const MatrixXd& hess, const VectorXd& grad, const MatrixXd& eq) {
  NewtonStep step;
  const Index n = hess.rows();
  const double hnorm = hess.norm();
  const Index meq = eq.rows();
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double reg = attempt == 0 ? 0.0 : 1e-12 * (1.0 + hnorm) * std::pow(10.0, attempt - 1);
    MatrixXd hr = hess;
    hr.diagonal().array() += reg;
    if (meq == 0) {
      Eigen::LDLT<MatrixXd> ldlt(hr);
      if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) continue;
      step.dx = ldlt.solve(-grad);
      step.nu.resize(0);
    } else {
      // Equality rows are scaled to the Hessian so LU pivoting stays meaningful at large t.
      const double es = std::max(1.0, hnorm) / std::max(eq.norm(), 1e-300);
      MatrixXd kkt = MatrixXd::Zero(n + meq, n + meq);
      kkt.topLeftCorner(n, n) = hr;
      kkt.topRightCorner(n, meq) = es * eq.transpose();
      kkt.bottomLeftCorner(meq, n) = es * eq;
      VectorXd rhs = VectorXd::Zero(n + meq);
      rhs.head(n) = -grad;
      Eigen::FullPivLU<MatrixXd> lu(kkt);
      if (!lu.isInvertible()) continue;
      const VectorXd sol = lu.solve(rhs);
      step.dx = sol.head(n);
      step.nu = es * sol.tail(meq);
    }
    if (step.dx.allFinite()) {
      step.ok = true;
      return step;
    }
  }
  return step;
}

DualEstimates barrier_duals(const SmoothConvexProblem& p, const VectorXd& x, double t, const VectorXd& nu) {
  DualEstimates d;
  d.inequality.resize(static_cast<Index>(p.inequalities.size()));
  for (std::size_t k = 0; k < p.inequalities.size(); ++k) {
    const double gv = p.inequalities[k](x, nullptr, nullptr);
    d.inequality(static_cast<Index>(k)) = 1.0 / (t * (-gv));
  }
  d.bound_lower = VectorXd::Zero(static_cast<Index>(p.bounds.size()));
  d.bound_upper = VectorXd::Zero(static_cast<Index>(p.bounds.size()));
  for (std::size_t k = 0; k < p.bounds.size(); ++k) {
    const auto& b = p.bounds[k];
    if (b.lower) d.bound_lower(static_cast<Index>(k)) = 1.0 / (t * (x(b.index) - *b.lower));
    if (b.upper) d.bound_upper(static_cast<Index>(k)) = 1.0 / (t * (*b.upper - x(b.index)));
  }
  for (const auto& blk : p.psd_blocks) d.psd.push_back((1.0 / t) * block_spectrum(block_matrix(x, blk)).inverse);
  d.equality = nu.size() > 0 ? VectorXd(nu / t) : VectorXd::Zero(p.eq_matrix.rows());
  return d;
}

// Multipliers recovered as 1 / (t * slack) and Z = X^-1 / t lose digits once
// slacks and eigenvalues are tiny. Refit all of them to the stationarity
// equation by least squares, with each Z_b restricted to the near-null space
// of X_b (where complementarity puts it), then clip to the dual cone. The refit
// is kept only if it lowers the KKT residual.
void refine_duals(const SmoothConvexProblem& p, const VectorXd& x, double t, DualEstimates& d) {
  const Index n = p.n_vars;
  const double active = 1.0 / std::sqrt(t);  // barrier multiplier of a constraint with slack t^-1/2
  VectorXd g;
  p.objective(x, &g, nullptr);
  VectorXd rhs = -g;

  // Each fitted multiplier: which dual it writes and its stationarity column.
  enum class Kind { Inequality, Lower, Upper, Equality };
  struct Slot {
    Kind kind;
    Index index;
  };
  std::vector<Slot> slots;
  std::vector<VectorXd> cols;
  for (std::size_t k = 0; k < p.inequalities.size(); ++k) {
    const Index kk = static_cast<Index>(k);
    p.inequalities[k](x, &g, nullptr);
    if (d.inequality(kk) >= active) {
      slots.push_back({Kind::Inequality, kk});
      cols.push_back(g);
    } else {
      rhs -= d.inequality(kk) * g;
    }
  }
  for (std::size_t k = 0; k < p.bounds.size(); ++k) {
    const auto& b = p.bounds[k];
    const Index kk = static_cast<Index>(k);
    if (b.lower) {
      if (d.bound_lower(kk) >= active) {
        slots.push_back({Kind::Lower, kk});
        cols.push_back(-VectorXd::Unit(n, b.index));
      } else {
        rhs(b.index) += d.bound_lower(kk);
      }
    }
    if (b.upper) {
      if (d.bound_upper(kk) >= active) {
        slots.push_back({Kind::Upper, kk});
        cols.push_back(VectorXd::Unit(n, b.index));
      } else {
        rhs(b.index) -= d.bound_upper(kk);
      }
    }
  }
  for (Index r = 0; r < p.eq_matrix.rows(); ++r) {
    slots.push_back({Kind::Equality, r});
    cols.push_back(p.eq_matrix.row(r).transpose());
  }
  const std::size_t n_scalar = slots.size();

  std::vector<Eigen::MatrixXcd> null_bases;
  for (const auto& blk : p.psd_blocks) {
    const EigenDecomposition xe = herm_eig(block_matrix(x, blk));
    Index keep = 0;
    while (keep < blk.dim && xe.eigenvalues(blk.dim - 1 - keep) <= 1e-4 * xe.eigenvalues(0)) ++keep;
    const Eigen::MatrixXcd u = xe.eigenvectors.rightCols(keep);
    null_bases.push_back(u);
    const PsdBlock local{0, keep};
    for (Index k = 0; k < keep * keep; ++k) {
      const HermitianMatrix e = block_matrix(VectorXd::Unit(keep * keep, k), local);
      VectorXd col = VectorXd::Zero(n);
      col.segment(blk.offset, blk.size()) = -trace_gradient(HermitianMatrix::symmetrized(u * e.matrix() * u.adjoint()));
      cols.push_back(col);
    }
  }
  if (cols.empty()) return;

  MatrixXd a(n, static_cast<Index>(cols.size()));
  for (Index c = 0; c < a.cols(); ++c) a.col(c) = cols[static_cast<std::size_t>(c)];
  const VectorXd coef = a.colPivHouseholderQr().solve(rhs);
  if (!coef.allFinite()) return;

  DualEstimates cand = d;
  for (std::size_t k = 0; k < n_scalar; ++k) {
    const double v = coef(static_cast<Index>(k));
    const Slot& sl = slots[k];
    switch (sl.kind) {
      case Kind::Inequality: cand.inequality(sl.index) = std::max(0.0, v); break;
      case Kind::Lower: cand.bound_lower(sl.index) = std::max(0.0, v); break;
      case Kind::Upper: cand.bound_upper(sl.index) = std::max(0.0, v); break;
      case Kind::Equality: cand.equality(sl.index) = v; break;
    }
  }
  Index c = static_cast<Index>(n_scalar);
  for (std::size_t b = 0; b < p.psd_blocks.size(); ++b) {
    const Eigen::MatrixXcd& u = null_bases[b];
    const Index keep = u.cols();
    if (keep == 0) {
      cand.psd[b] = HermitianMatrix(p.psd_blocks[b].dim);
      continue;
    }
    const HermitianMatrix m = block_matrix(coef.segment(c, keep * keep), PsdBlock{0, keep});
    c += keep * keep;
    const EigenDecomposition me = herm_eig(m);
    const Eigen::VectorXd clipped = me.eigenvalues.cwiseMax(0.0);
    const Eigen::MatrixXcd basis = u * me.eigenvectors;
    cand.psd[b] = HermitianMatrix::symmetrized(basis * clipped.asDiagonal() * basis.adjoint());
  }
  if (kkt_residuals(p, x, cand).max() < kkt_residuals(p, x, d).max()) d = std::move(cand);
}

}  // namespace

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal:
      return "Optimal";
    case SolveStatus::MaxIter:
      return "MaxIter";
    case SolveStatus::NumericalFailure:
      return "NumericalFailure";
  }
  return "?";
}

HermitianMatrix block_matrix(const VectorXd& x, const PsdBlock& block) {
  const Index n = block.dim;
  Eigen::MatrixXcd m(n, n);
  for (Index i = 0; i < n; ++i) m(i, i) = x(block.offset + i);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const Index k = block.offset + n + 2 * pair_slot(i, j, n);
      m(i, j) = Complex(x(k), x(k + 1));
      m(j, i) = Complex(x(k), -x(k + 1));
    }
  }
  return HermitianMatrix::symmetrized(m);
}

void write_block(VectorXd& x, const PsdBlock& block, const HermitianMatrix& m) {
  const Index n = block.dim;
  if (m.dim() != n) throw ValidationError("write_block: dimension mismatch");
  for (Index i = 0; i < n; ++i) x(block.offset + i) = m(i, i).real();
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const Index k = block.offset + n + 2 * pair_slot(i, j, n);
      x(k) = m(i, j).real();
      x(k + 1) = m(i, j).imag();
    }
  }
}

VectorXd trace_gradient(const HermitianMatrix& c) {
  const Index n = c.dim();
  VectorXd g(n * n);
  for (Index i = 0; i < n; ++i) g(i) = c(i, i).real();
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const Index k = n + 2 * pair_slot(i, j, n);
      g(k) = 2.0 * c(i, j).real();
      g(k + 1) = 2.0 * c(i, j).imag();
    }
  }
  return g;
}

MatrixXd neg_logdet_hessian(const HermitianMatrix& x_inv) {
  const Index n = x_inv.dim();
  const Eigen::MatrixXcd& y = x_inv.matrix();
  MatrixXd h(n * n, n * n);
  const Complex iu(0.0, 1.0);
  for (Index i = 0; i < n; ++i) {
    h.col(i) = trace_gradient(HermitianMatrix::symmetrized(y.col(i) * y.row(i)));
  }
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const Index k = n + 2 * pair_slot(i, j, n);
      const Eigen::MatrixXcd a = y.col(i) * y.row(j);
      const Eigen::MatrixXcd b = y.col(j) * y.row(i);
      h.col(k) = trace_gradient(HermitianMatrix::symmetrized(a + b));
      h.col(k + 1) = trace_gradient(HermitianMatrix::symmetrized(iu * (a - b)));
    }
  }
  return 0.5 * (h + h.transpose());
}

SmoothFn linear_fn(VectorXd coeffs, double constant) {
  return [coeffs = std::move(coeffs), constant](const VectorXd& x, VectorXd* grad, MatrixXd* hess) {
    if (grad) *grad = coeffs;
    if (hess) *hess = MatrixXd::Zero(x.size(), x.size());
    return coeffs.dot(x) + constant;
  };
}

bool strictly_feasible(const SmoothConvexProblem& problem, const VectorXd& x) {
  BarrierEval e;
  return barrier_eval(problem, x, 0.0, false, e);
}

KktResiduals kkt_residuals(const SmoothConvexProblem& p, const VectorXd& x, const DualEstimates& duals) {
  const Index n = p.n_vars;
  VectorXd g;
  KktResiduals r;
  VectorXd stat = VectorXd::Zero(n);
  p.objective(x, &g, nullptr);
  stat += g;

  double primal = 0.0;
  double comp = 0.0;
  for (std::size_t k = 0; k < p.inequalities.size(); ++k) {
    const double gv = p.inequalities[k](x, &g, nullptr);
    const double mu = duals.inequality.size() > 0 ? duals.inequality(static_cast<Index>(k)) : 0.0;
    stat += mu * g;
    primal = std::max(primal, gv);
    comp += std::abs(mu * gv);
  }
  for (std::size_t k = 0; k < p.bounds.size(); ++k) {
    const auto& b = p.bounds[k];
    const Index kk = static_cast<Index>(k);
    if (b.lower) {
      const double mu = duals.bound_lower.size() > kk ? duals.bound_lower(kk) : 0.0;
      stat(b.index) -= mu;
      primal = std::max(primal, *b.lower - x(b.index));
      comp += std::abs(mu * (x(b.index) - *b.lower));
    }
    if (b.upper) {
      const double mu = duals.bound_upper.size() > kk ? duals.bound_upper(kk) : 0.0;
      stat(b.index) += mu;
      primal = std::max(primal, x(b.index) - *b.upper);
      comp += std::abs(mu * (*b.upper - x(b.index)));
    }
  }
  for (std::size_t b = 0; b < p.psd_blocks.size(); ++b) {
    const auto& blk = p.psd_blocks[b];
    const HermitianMatrix xb = block_matrix(x, blk);
    const EigenDecomposition eig = herm_eig(xb);
    primal = std::max(primal, -eig.eigenvalues(blk.dim - 1));
    if (b < duals.psd.size()) {
      stat.segment(blk.offset, blk.size()) -= trace_gradient(duals.psd[b]);
      comp += std::abs(trace_product(duals.psd[b], xb));
    }
  }
  if (p.eq_matrix.rows() > 0) {
    if (duals.equality.size() == p.eq_matrix.rows()) stat += p.eq_matrix.transpose() * duals.equality;
    primal = std::max(primal, (p.eq_matrix * x - p.eq_rhs).lpNorm<Eigen::Infinity>());
  }
  r.stationarity = stat.norm();
  r.primal = primal;
  r.complementarity = comp;
  return r;
}

SolveResult solve_smooth_convex(const SmoothConvexProblem& p, const VectorXd& start, const BarrierParams& params) {
  const auto t0 = std::chrono::steady_clock::now();
  if (start.size() != p.n_vars) throw ValidationError("solve_smooth_convex: start has wrong size");
  if (!strictly_feasible(p, start)) throw StartInfeasible("barrier start point is not strictly feasible");
  if (p.eq_matrix.rows() > 0 && (p.eq_matrix * start - p.eq_rhs).lpNorm<Eigen::Infinity>() > 1e-9) {
    throw StartInfeasible("barrier start point violates the equality constraints");
  }

  SolveResult res;
  SolverReport& rep = res.report;
  VectorXd x = start;
  VectorXd nu;
  double t = 1.0 / params.mu0;
  const double weight = static_cast<double>(total_barrier_weight(p));

  auto finish = [&](SolveStatus status, const std::string& msg) {
    res.x = x;
    res.duals = barrier_duals(p, x, t, nu);
    rep.residuals = kkt_residuals(p, x, res.duals);
    rep.barrier_weight = 1.0 / t;
    rep.duality_gap = weight / t;
    rep.status = status;
    rep.message = msg;
    rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return res;
  };

  // Returns true when centered; false on a numerical breakdown.
  auto center = [&]() -> bool {
    for (int it = 0; it < params.max_newton; ++it) {
      BarrierEval cur;
      if (!barrier_eval(p, x, t, true, cur)) return false;
      const NewtonStep step = newton_direction(cur.hess, cur.grad, p.eq_matrix);
      if (!step.ok) return false;
      nu = step.nu;
      const double slope = cur.grad.dot(step.dx);
      // dx' H dx equals -g' dx in exact arithmetic; with equalities the
      // gradient is mostly absorbed by the multipliers and -g' dx cancels.
      const double dec2 = p.eq_matrix.rows() > 0 ? step.dx.dot(cur.hess * step.dx) : -slope;
      if (dec2 / 2.0 <= params.newton_tol) return true;

      // Inside the quadratic region a full step is safe; the barrier value is
      // too large at big t to referee it through Armijo.
      if (dec2 < 0.1) {
        const VectorXd full = x + step.dx;
        BarrierEval trial;
        if (barrier_eval(p, full, t, false, trial)) {
          ++rep.newton_iterations;
          if (trial.value > cur.value + 1e-12 * std::abs(cur.value)) rep.barrier_monotone = false;
          x = full;
          continue;
        }
      }

      double s = 1.0;
      BarrierEval trial;
      VectorXd xn;
      bool accepted = false;
      while (s > 1e-20) {
        xn = x + s * step.dx;
        if (barrier_eval(p, xn, t, false, trial) &&
            trial.value <= cur.value + params.armijo * s * slope) {
          accepted = true;
          break;
        }
        s *= params.backtrack;
      }
      ++rep.newton_iterations;
      if (!accepted || !(trial.value < cur.value)) {
        // No representable decrease left: centered to working precision.
        return dec2 < 1e-6;
      }
      x = xn;
    }
    return true;
  };

  // At large t the barrier value no longer resolves small improvements, so the
  // last few Newton steps are accepted on the KKT residual instead.
  auto polish = [&]() {
    double best = kkt_residuals(p, x, barrier_duals(p, x, t, nu)).max();
    for (int it = 0; it < 10 && best > 0.0; ++it) {
      BarrierEval cur;
      if (!barrier_eval(p, x, t, true, cur)) return;
      const NewtonStep step = newton_direction(cur.hess, cur.grad, p.eq_matrix);
      if (!step.ok) return;
      bool improved = false;
      for (double s = 1.0; s > 1e-9; s *= params.backtrack) {
        const VectorXd xn = x + s * step.dx;
        if (!strictly_feasible(p, xn)) continue;
        const double r = kkt_residuals(p, xn, barrier_duals(p, xn, t, step.nu)).max();
        if (r < best) {
          best = r;
          x = xn;
          nu = step.nu;
          improved = true;
          break;
        }
      }
      ++rep.newton_iterations;
      if (!improved) return;
    }
  };

  for (int outer = 1; outer <= params.max_outer; ++outer) {
    rep.outer_iterations = outer;
    if (!center()) return finish(SolveStatus::NumericalFailure, "Newton centering failed");
    if (weight / t <= params.final_gap) {
      polish();
      SolveResult done = finish(SolveStatus::Optimal, "converged");
      refine_duals(p, done.x, t, done.duals);
      done.report.residuals = kkt_residuals(p, done.x, done.duals);
      if (done.report.residuals.max() > params.kkt_tol) {
        done.report.status = SolveStatus::NumericalFailure;
        done.report.message = "KKT residuals above tolerance at the final barrier weight";
      }
      return done;
    }
    t /= params.mu_shrink;
  }
  return finish(SolveStatus::MaxIter, "outer iteration limit reached");
}

}  // namespace iscc::ipm
