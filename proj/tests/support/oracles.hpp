#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. Nothing here calls the closed forms under test.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "iscc/core_model.hpp"
#include "iscc/ipm_solver.hpp"

namespace oracle {

using iscc::Complex;
using iscc::ComplexVector;
using iscc::HermitianMatrix;

inline ComplexVector random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  ComplexVector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = Complex(g(rng), g(rng));
  return v;
}

/// Sum of `rank` random outer products (PSD, rank <= rank).
inline HermitianMatrix random_psd(std::mt19937_64& rng, Eigen::Index n, Eigen::Index rank, double scale = 1.0) {
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(n, n);
  for (Eigen::Index k = 0; k < rank; ++k) {
    const ComplexVector v = random_vector(rng, n, scale);
    m += v * v.adjoint();
  }
  return HermitianMatrix::symmetrized(m);
}

inline HermitianMatrix random_hermitian(std::mt19937_64& rng, Eigen::Index n) {
  const Eigen::MatrixXcd a = [&] {
    Eigen::MatrixXcd x(n, n);
    for (Eigen::Index j = 0; j < n; ++j) x.col(j) = random_vector(rng, n);
    return x;
  }();
  return HermitianMatrix::symmetrized(a + a.adjoint());
}

struct FdReport {
  double grad_rel = 0.0;
  double hess_rel = 0.0;
};

/// Central differences of value (for the gradient) and of the analytic
/// gradient (for the Hessian), relative to the analytic norms.
inline FdReport finite_difference(const iscc::ipm::SmoothFn& f, const Eigen::VectorXd& x, double rel_step = 1e-6) {
  const Eigen::Index n = x.size();
  Eigen::VectorXd g;
  Eigen::MatrixXd h;
  f(x, &g, &h);
  Eigen::VectorXd g_num(n);
  Eigen::MatrixXd h_num(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double step = rel_step * std::max(1.0, std::abs(x(i)));
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += step;
    xm(i) -= step;
    Eigen::VectorXd gp, gm;
    const double fp = f(xp, &gp, nullptr);
    const double fm = f(xm, &gm, nullptr);
    g_num(i) = (fp - fm) / (2.0 * step);
    h_num.col(i) = (gp - gm) / (2.0 * step);
  }
  FdReport r;
  r.grad_rel = (g_num - g).norm() / std::max(g.norm(), 1e-12);
  const double hn = h.norm();
  r.hess_rel = hn > 1e-12 ? (h_num - h).norm() / hn : (h_num - h).norm();
  return r;
}

/// Direct SINR: p|w^H h|^2 / (sum_{j!=m} p_j |w^H h_j|^2 + beta0^2 (a_t^H V a_t) |w^H a_r|^2 + sigma^2 |w|^2).
inline double direct_sinr(const iscc::SystemModel& model, const HermitianMatrix& v, const ComplexVector& w,
                          std::size_t m) {
  const iscc::Scenario& s = model.scenario();
  double interf = 0.0;
  for (std::size_t j = 0; j < model.n_users(); ++j) {
    if (j == m) continue;
    interf += s.users[j].tx_power_w * std::norm(w.dot(model.channel(j)));
  }
  const ComplexVector& at = model.target_tx_steering();
  const double gain = (at.adjoint() * v.matrix() * at)(0).real();
  interf += s.target_amp_sq * gain * std::norm(w.dot(model.target_rx_steering()));
  interf += s.noise_w * w.squaredNorm();
  return s.users[m].tx_power_w * std::norm(w.dot(model.channel(m))) / interf;
}

struct UserSlice {
  double task_bits, cycles, kappa, f_max, power;
  double rate;
};

/// Total energy of one user written out term by term; +inf if any deadline or cap fails
/// (relative tolerance 1e-12).
inline double user_energy(const UserSlice& u, const iscc::AlapParams& a, double tau, double l, double f, double fa) {
  const double tol = 1e-12;
  if (l < -tol * u.task_bits || l > u.task_bits * (1 + tol)) return std::numeric_limits<double>::infinity();
  if (f > u.f_max * (1 + tol)) return std::numeric_limits<double>::infinity();
  const double local_t = (u.task_bits - l) > 0 ? u.cycles * (u.task_bits - l) / f : 0.0;
  if (!(local_t <= tau * (1 + tol))) return std::numeric_limits<double>::infinity();
  if (l > 0) {
    const double off_t = l / u.rate + a.cycles_per_bit * l / fa;
    if (!(off_t <= tau * (1 + tol))) return std::numeric_limits<double>::infinity();
  }
  double e = u.kappa * f * f * u.cycles * std::max(0.0, u.task_bits - l);
  if (l > 0) e += u.power * l / u.rate + a.kappa * fa * fa * a.cycles_per_bit * l;
  return e;
}

/// Best objective over `points` evenly spaced values of l in [0, L].
inline double grid_task_allocation(const UserSlice& u, const iscc::AlapParams& a, double tau, double f, double fa,
                                   int points, double* arg = nullptr) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < points; ++i) {
    const double l = u.task_bits * static_cast<double>(i) / static_cast<double>(points - 1);
    const double e = user_energy(u, a, tau, l, f, fa);
    if (e < best) {
      best = e;
      if (arg) *arg = l;
    }
  }
  return best;
}

/// Task grid refined once: `points` values over [0, L], then `points` more
/// across the two cells either side of the best one. Resolves an optimum on an
/// interval endpoint to about L / points^2.
inline double zoomed_task_grid(const UserSlice& u, const iscc::AlapParams& a, double tau, double f, double fa,
                               int points) {
  double arg = 0.0;
  double best = grid_task_allocation(u, a, tau, f, fa, points, &arg);
  if (!std::isfinite(best)) return best;
  const double step = u.task_bits / (points - 1);
  const double lo = std::max(0.0, arg - 2 * step), hi = std::min(u.task_bits, arg + 2 * step);
  for (int i = 0; i < points; ++i) {
    const double l = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    best = std::min(best, user_energy(u, a, tau, l, f, fa));
  }
  return best;
}

/// n x n grid over (f, f_A) in [0, f_max] x [0, fa_cap], then one n x n zoom
/// around the best coarse cell.
inline double grid_compute_allocation(const UserSlice& u, const iscc::AlapParams& a, double tau, double l,
                                      double fa_cap, int n) {
  double lo_f = 0.0, hi_f = u.f_max, lo_a = 0.0, hi_a = fa_cap;
  double best = std::numeric_limits<double>::infinity();
  for (int level = 0; level < 2; ++level) {
    double bf = 0.0, ba = 0.0;
    const double df = (hi_f - lo_f) / (n - 1), da = (hi_a - lo_a) / (n - 1);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double f = lo_f + df * i;
        const double fa = lo_a + da * j;
        const double e = user_energy(u, a, tau, l, f, fa);
        if (e < best) {
          best = e;
          bf = f;
          ba = fa;
        }
      }
    }
    if (!std::isfinite(best)) return best;
    lo_f = std::max(0.0, bf - 2 * df);
    hi_f = std::min(u.f_max, bf + 2 * df);
    lo_a = std::max(0.0, ba - 2 * da);
    hi_a = std::min(fa_cap, ba + 2 * da);
  }
  return best;
}

/// Zooming grid search over 2x2 Hermitian X = [[x1, x3 + i x4], [x3 - i x4, x2]]
/// with X PSD and tr X <= 1, minimizing `obj`.
inline double grid_2x2(const std::function<double(const HermitianMatrix&)>& obj, int n = 21, int levels = 8) {
  double lo[4] = {0.0, 0.0, -0.5, -0.5};
  double hi[4] = {1.0, 1.0, 0.5, 0.5};
  double best = std::numeric_limits<double>::infinity();
  double arg[4] = {0, 0, 0, 0};
  for (int level = 0; level < levels; ++level) {
    double step[4];
    for (int k = 0; k < 4; ++k) step[k] = (hi[k] - lo[k]) / (n - 1);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
          for (int q = 0; q < n; ++q) {
            const double x1 = lo[0] + step[0] * i, x2 = lo[1] + step[1] * j;
            const double x3 = lo[2] + step[2] * k, x4 = lo[3] + step[3] * q;
            if (x1 < 0 || x2 < 0 || x1 + x2 > 1.0 || x3 * x3 + x4 * x4 > x1 * x2) continue;
            Eigen::MatrixXcd m(2, 2);
            m << x1, Complex(x3, x4), Complex(x3, -x4), x2;
            const double v = obj(HermitianMatrix::symmetrized(m));
            if (v < best) {
              best = v;
              arg[0] = x1;
              arg[1] = x2;
              arg[2] = x3;
              arg[3] = x4;
            }
          }
    for (int k = 0; k < 4; ++k) {
      const double w = 3 * step[k];
      lo[k] = arg[k] - w;
      hi[k] = arg[k] + w;
    }
  }
  return best;
}

/// min tr(C V) s.t. a^H V a >= c, V >= 0, whose optimum is c / (a^H C^-1 a).
struct SensingFamily {
  iscc::ipm::SmoothConvexProblem problem;
  Eigen::VectorXd start;
  double optimum = 0.0;
  double level = 0.0;
};

inline SensingFamily sensing_family(std::mt19937_64& rng, Eigen::Index n) {
  using namespace iscc::ipm;
  const HermitianMatrix c = random_psd(rng, n, n + 2) + HermitianMatrix::identity(n) * 0.1;
  const ComplexVector a = random_vector(rng, n);
  std::uniform_real_distribution<double> u(0.5, 3.0);
  SensingFamily f;
  f.level = u(rng);
  f.problem.n_vars = n * n;
  f.problem.psd_blocks = {PsdBlock{0, n}};
  f.problem.objective = linear_fn(trace_gradient(c), 0.0);
  f.problem.inequalities = {linear_fn(-trace_gradient(iscc::outer_product(a)), f.level)};
  f.start = Eigen::VectorXd::Zero(n * n);
  write_block(f.start, f.problem.psd_blocks[0], HermitianMatrix::identity(n) * (2.0 * f.level / a.squaredNorm()));
  // a^H C^-1 a from an explicit solve, independent of the solver's own inverse
  const Eigen::VectorXcd y = c.matrix().ldlt().solve(a);
  f.optimum = f.level / a.dot(y).real();
  return f;
}

/// f(X) = tr(C X) - 0.5 log(1 + b^H X b) on a single 2x2 block.
inline iscc::ipm::SmoothFn log_utility(const HermitianMatrix& c, const ComplexVector& b) {
  const Eigen::VectorXd gc = iscc::ipm::trace_gradient(c);
  const Eigen::VectorXd gb = iscc::ipm::trace_gradient(iscc::outer_product(b));
  return [gc, gb](const Eigen::VectorXd& x, Eigen::VectorXd* grad, Eigen::MatrixXd* hess) {
    const double q = 1.0 + gb.dot(x);
    if (grad) *grad = gc - 0.5 * gb / q;
    if (hess) *hess = 0.5 * gb * gb.transpose() / (q * q);
    return gc.dot(x) - 0.5 * std::log(q);
  };
}

}  // namespace oracle
