#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "iscc/hermitian_linalg.hpp"

namespace iscc::ipm {

/// A Hermitian PSD matrix variable occupying dim^2 consecutive real
/// coordinates: dim diagonal entries, then (Re, Im) of each strictly upper
/// entry in row-major order.
struct PsdBlock {
  Eigen::Index offset = 0;
  Eigen::Index dim = 0;

  Eigen::Index size() const { return dim * dim; }
};

/// Value of a smooth function; gradient and Hessian are written when the
/// pointers are non-null (resized by the callee to n and n x n).
using SmoothFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad, Eigen::MatrixXd* hess)>;

struct ScalarBound {
  Eigen::Index index = 0;
  std::optional<double> lower;
  std::optional<double> upper;
};

/// minimize f(x) s.t. g_k(x) <= 0, bounds, E x = e, every PSD block >= 0.
struct SmoothConvexProblem {
  Eigen::Index n_vars = 0;
  std::vector<PsdBlock> psd_blocks;
  std::vector<ScalarBound> bounds;
  SmoothFn objective;
  std::vector<SmoothFn> inequalities;
  Eigen::MatrixXd eq_matrix;  // may have zero rows
  Eigen::VectorXd eq_rhs;
};

struct BarrierParams {
  double mu0 = 1.0;          // initial barrier weight; t starts at 1 / mu0
  double mu_shrink = 0.2;    // t <- t / mu_shrink per outer step
  double newton_tol = 1e-8;  // on lambda^2 / 2
  int max_outer = 60;
  int max_newton = 50;
  double final_gap = 1e-7;
  double kkt_tol = 1e-6;
  double armijo = 1e-4;
  double backtrack = 0.5;
};

enum class SolveStatus { Optimal, MaxIter, NumericalFailure };

const char* to_string(SolveStatus s);

struct KktResiduals {
  double stationarity = 0.0;
  double primal = 0.0;
  double complementarity = 0.0;

  double max() const { return std::max({stationarity, primal, complementarity}); }
};

struct DualEstimates {
  Eigen::VectorXd inequality;            // one per g_k, >= 0
  Eigen::VectorXd bound_lower;           // one per ScalarBound (0 if absent)
  Eigen::VectorXd bound_upper;
  std::vector<HermitianMatrix> psd;      // Z_b, one per block
  Eigen::VectorXd equality;
};

struct SolverReport {
  SolveStatus status = SolveStatus::NumericalFailure;
  int outer_iterations = 0;
  int newton_iterations = 0;
  double barrier_weight = 0.0;  // final 1 / t
  double duality_gap = 0.0;     // (#constraints + sum block dims) / t
  KktResiduals residuals;
  double wall_ms = 0.0;
  /// Every accepted Newton step strictly decreased the barrier objective.
  bool barrier_monotone = true;
  /// Smallest constraint margin (min of -g_k and block eigenvalue floor via
  /// successful Cholesky) seen along the path; > 0 means strictly feasible.
  bool iterates_strictly_feasible = true;
  std::string message;
};

struct SolveResult {
  Eigen::VectorXd x;
  DualEstimates duals;
  SolverReport report;
};

/// Barrier path-following with damped Newton steps. `start` must be strictly
/// feasible (throws StartInfeasible otherwise) and satisfy E x = e.
SolveResult solve_smooth_convex(const SmoothConvexProblem& problem, const Eigen::VectorXd& start,
                                const BarrierParams& params = {});

KktResiduals kkt_residuals(const SmoothConvexProblem& problem, const Eigen::VectorXd& x,
                           const DualEstimates& duals);

/// True when every g_k < 0, bounds hold strictly, and every block is positive definite.
bool strictly_feasible(const SmoothConvexProblem& problem, const Eigen::VectorXd& x);

// Hermitian <-> real-coordinate helpers.

HermitianMatrix block_matrix(const Eigen::VectorXd& x, const PsdBlock& block);
void write_block(Eigen::VectorXd& x, const PsdBlock& block, const HermitianMatrix& m);
/// Coordinates of the gradient of X -> Re tr(C X) for a dim x dim block.
Eigen::VectorXd trace_gradient(const HermitianMatrix& c);
/// Hessian of -log det X in block coordinates.
Eigen::MatrixXd neg_logdet_hessian(const HermitianMatrix& x_inv);

/// f(x) = c . x + c0.
SmoothFn linear_fn(Eigen::VectorXd coeffs, double constant);

}  // namespace iscc::ipm
