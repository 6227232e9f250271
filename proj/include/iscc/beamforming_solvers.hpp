#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "iscc/core_model.hpp"
#include "iscc/ipm_solver.hpp"

namespace iscc {

/// Concave-in-g lower bound on B log2(1 + b / (g + e)), tangent at g = g_i.
double rate_lower_bound_g(double g, double g_i, double b, double e, double bandwidth_hz);

/// Lower bound on B log2(1 + tr(Omega W) / tr(Lambda W)), tangent at W = W_i.
/// Throws ValidationError for nonpositive trace arguments.
double rate_lower_bound_W(const HermitianMatrix& w, const HermitianMatrix& w_i, const HermitianMatrix& omega,
                          const HermitianMatrix& lambda, double bandwidth_hz);

struct BeamformingOptions {
  /// Rate floors inside the barrier subproblems are relaxed to floor * (1 - floor_relaxation).
  /// After a compute update the offload deadline is tight, so without this the
  /// subproblems have no strict interior.
  double floor_relaxation = 1e-6;
  int randomization_samples = 100;
  std::uint64_t seed = 1;
  ipm::BarrierParams ipm;
};

/// Per-user data of the transmit subproblem. Only users with l_m > 0 appear.
struct TxUserTerm {
  std::size_t user = 0;
  double b = 0.0;           // p_m |w^H h_m|^2
  double e = 0.0;           // other-user interference + sigma^2 ||w||^2
  double echo_gain = 0.0;   // beta_0^2 |w^H a_r|^2, so interference = echo_gain * a_t^H V a_t
  double g_lin = 0.0;       // linearization point
  double rate_floor = 0.0;  // l_m / (tau - T_comp,m), already relaxed
  double weight = 0.0;      // p_m l_m
};

struct TxSubproblemContext {
  Eigen::Index n_tx = 0;
  double slot_s = 0.0;
  double bandwidth_hz = 0.0;
  double noise_w = 0.0;
  double threshold = 0.0;  // d_0^2 Gamma_min
  ComplexVector a_t;
  std::vector<TxUserTerm> users;
};

/// Scaled barrier problem. Variables: V / threshold (PSD block), then per
/// active user R_m / B and g_m / sigma^2. The objective is divided by
/// `objective_scale` (its value at the start point).
struct TxProblem {
  ipm::SmoothConvexProblem problem;
  double objective_scale = 1.0;
  Eigen::Index rate_offset = 0;
  Eigen::Index interference_offset = 0;
  /// Index in problem.inequalities of each user's echo coupling; the sensing
  /// constraint comes last.
  std::vector<std::size_t> coupling_index;
  std::size_t sensing_index = 0;
};

TxSubproblemContext make_tx_context(const SystemModel& model, const AllocationState& alloc,
                                    const BeamformingState& beam, const std::optional<std::vector<double>>& g_prev,
                                    double floor_relaxation);

TxProblem build_tx_problem(const TxSubproblemContext& ctx, double objective_scale);

/// Strictly feasible start: V0 = (1 + delta) a_t a_t^H + eps I (scaled units),
/// delta backtracked from 1e-3 until the rate floors leave room.
std::optional<Eigen::VectorXd> tx_start_point(const TxSubproblemContext& ctx, const TxProblem& tp);

struct TxDuals {
  std::vector<double> coupling;  // per active user, original units
  double sensing = 0.0;
  HermitianMatrix psd;
};

struct TxSolution {
  HermitianMatrix tx_cov_relaxed;  // V* from the solver
  ComplexVector tx_vec;            // principal factor, rescaled so a_t^H v v^H a_t = threshold
  HermitianMatrix tx_cov;          // v v^H
  double residual_ratio = 0.0;
  std::vector<double> surrogate_rates;  // full length, 0 for inactive users
  std::vector<double> interference;     // g*, full length
  TxDuals duals;
  ipm::SolverReport report;
};

/// Throws InfeasibleSubproblem when an active user's deadline leaves no
/// transmission time, StartInfeasible when no interior start exists, and
/// NumericalFailure when the barrier solve does not reach Optimal.
TxSolution solve_tx_beamforming(const SystemModel& model, const AllocationState& alloc, const BeamformingState& beam,
                                const std::optional<std::vector<double>>& g_prev, const BeamformingOptions& opts);

struct RankOneCertificate {
  double zv_residual = 0.0;  // ||Z V|| / (||Z|| ||V||)
  bool z_rank_lower_ok = false;
  HermitianMatrix z;
};

/// Z = tau I + sum_m coupling_m echo_gain_m a_t a_t^H - sensing a_t a_t^H.
RankOneCertificate rank_one_certificate(const HermitianMatrix& v_star, const TxDuals& duals,
                                        const TxSubproblemContext& ctx);

struct RxSubproblemContext {
  std::size_t user = 0;
  HermitianMatrix omega;   // p_m h_m h_m^H
  HermitianMatrix lambda;  // interference + echo + sigma^2 I
  HermitianMatrix w_lin;   // linearization point
  double rate_floor = 0.0;
  double weight = 0.0;
  double bandwidth_hz = 0.0;
  double noise_w = 0.0;
};

/// Variables: W (PSD block, unscaled since tr W <= 1) then S_m / B.
struct RxProblem {
  ipm::SmoothConvexProblem problem;
  double objective_scale = 1.0;
};

RxSubproblemContext make_rx_context(const SystemModel& model, const AllocationState& alloc,
                                    const BeamformingState& beam, std::size_t m, double floor_relaxation);
RxProblem build_rx_problem(const RxSubproblemContext& ctx, double objective_scale);
std::optional<Eigen::VectorXd> rx_start_point(const RxSubproblemContext& ctx, const RxProblem& rp);

/// Candidate combiners drawn from CN(0, W*); returns the one with the highest
/// true rate. Throws ValidationError for a zero matrix.
ComplexVector gaussian_randomization(const HermitianMatrix& w_star, const SystemModel& model,
                                     const HermitianMatrix& tx_cov, std::size_t m, int n_samples,
                                     std::uint64_t seed);

struct RxUserResult {
  bool active = false;
  HermitianMatrix w_relaxed;
  ComplexVector w;
  double surrogate_rate = 0.0;
  double residual_ratio = 0.0;
  bool randomized = false;
  bool kept_previous = false;
  ipm::SolverReport report;
};

struct RxSolution {
  std::vector<ComplexVector> rx_vecs;
  std::vector<RxUserResult> users;
};

RxSolution solve_rx_beamforming(const SystemModel& model, const AllocationState& alloc, const BeamformingState& beam,
                                const BeamformingOptions& opts);

}  // namespace iscc
