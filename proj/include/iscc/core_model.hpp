#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "iscc/hermitian_linalg.hpp"

namespace iscc {

struct Position {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct UserParams {
  Position position;         // ground node, z = 0
  double tx_power_w = 0.1;   // p_m
  double task_bits = 1e5;    // L_m
  double cycles_per_bit = 100.0;
  double f_max_hz = 4e6;
  double kappa = 1e-20;
};

struct AlapParams {
  Position position{0.0, 0.0, 100.0};
  double cycles_per_bit = 50.0;
  double f_max_hz = 8e7;
  double kappa = 1e-20;
};

/// Immutable problem instance. All quantities in SI units (W, Hz, s, m, J).
struct Scenario {
  Eigen::Index n_tx = 6;
  Eigen::Index n_rx = 6;
  double slot_s = 2.0;
  double bandwidth_hz = 5e5;
  double beta_ref = 1e-6;       // channel power gain at 1 m
  double noise_w = 1e-14;       // sigma_r^2
  double target_amp_sq = 1e-14; // beta_0^2, linear
  double gamma_min = 1e-6;      // beampattern threshold before d_0^2 scaling
  AlapParams alap;
  Position target{250.0, 0.0, 0.0};
  std::vector<UserParams> users;

  std::size_t n_users() const { return users.size(); }

  /// Throws ValidationError naming the offending field.
  void validate() const;

  /// The reference four-user scenario; n_users truncates or extends the
  /// default layout (see default_user_position).
  static Scenario default_scenario(std::size_t n_users = 4);
};

/// Deterministic ground position of the k-th default user.
Position default_user_position(std::size_t k);

/// Resizes the user list; new users copy `prototype` and take default positions.
void resize_users(Scenario& s, std::size_t n_users, const UserParams& prototype);

struct NodeGeometry {
  double distance = 0.0;  // meters, 3D
  double angle = 0.0;     // radians, atan2(dx, altitude)
};

struct Geometry {
  std::vector<NodeGeometry> users;
  NodeGeometry target;
};

/// Half-wavelength ULA steering vector, unit norm.
ComplexVector steering_vector(double theta, Eigen::Index n);

/// Throws ValidationError if any node coincides with the platform.
Geometry geometry(const Scenario& s);

double beampattern_gain(const HermitianMatrix& tx_cov, double theta0);

struct AllocationState {
  std::vector<double> offload_bits;  // l_m
  std::vector<double> local_hz;      // f_m
  std::vector<double> alap_hz;       // f_m^A
};

struct BeamformingState {
  HermitianMatrix tx_cov;                 // V
  std::optional<ComplexVector> tx_vec;    // v, when V = v v^H was extracted
  std::vector<ComplexVector> rx_vecs;     // w_m
};

struct PhaseTimes {
  double local = 0.0;
  double transmit = 0.0;
  double compute = 0.0;
};

struct EnergyBreakdown {
  double e_loc = 0.0;
  double e_tran = 0.0;
  double e_comp_alap = 0.0;
  double e_tran_alap = 0.0;
  double total = 0.0;
};

struct ConstraintCheck {
  std::string id;                  // combiner_norm, offload_range, local_cpu_cap, platform_cpu_budget,
                                   // local_deadline, offload_deadline or sensing_gain
  std::optional<std::size_t> user;
  double slack = 0.0;              // >= 0 when satisfied
  double scale = 1.0;              // magnitude used for the relative tolerance
  bool pass = true;
};

struct ConstraintReport {
  std::vector<ConstraintCheck> checks;

  bool all_pass() const;
  /// max over checks of max(0, -slack) / scale.
  double worst_relative_violation() const;
  /// Checks with the given id.
  std::vector<ConstraintCheck> with_id(const std::string& id) const;
};

/// Scenario plus cached geometry and channels; evaluates every closed-form
/// quantity of the system model.
class SystemModel {
 public:
  explicit SystemModel(Scenario scenario);

  const Scenario& scenario() const { return scenario_; }
  const Geometry& geom() const { return geometry_; }
  std::size_t n_users() const { return scenario_.n_users(); }

  const ComplexVector& user_steering(std::size_t m) const { return user_steering_[m]; }
  const ComplexVector& channel(std::size_t m) const { return channels_[m]; }
  const ComplexVector& target_tx_steering() const { return a_t_; }
  const ComplexVector& target_rx_steering() const { return a_r_; }
  /// d_0^2 * Gamma_min.
  double sensing_threshold() const;

  /// A V A^H with A = a_r a_t^H.
  HermitianMatrix echo_covariance(const HermitianMatrix& tx_cov) const;
  /// p_m h_m h_m^H.
  HermitianMatrix signal_matrix(std::size_t m) const;
  /// sum_{j != m} p_j h_j h_j^H + beta_0^2 A V A^H + sigma^2 I.
  HermitianMatrix interference_matrix(const HermitianMatrix& tx_cov, std::size_t m) const;
  /// sum_{j != m} p_j h_j h_j^H + sigma^2 I (no echo term).
  HermitianMatrix interference_without_echo(std::size_t m) const;

  double receive_sinr(const HermitianMatrix& tx_cov, const ComplexVector& w, std::size_t m) const;
  double achievable_rate(const HermitianMatrix& tx_cov, const ComplexVector& w, std::size_t m) const;
  std::vector<double> rates(const BeamformingState& beam) const;

  /// Throws InfeasibleTiming for a zero denominator with a positive numerator.
  PhaseTimes phase_times(const AllocationState& alloc, double rate, std::size_t m) const;

  EnergyBreakdown energy_breakdown(const AllocationState& alloc, const BeamformingState& beam) const;
  EnergyBreakdown energy_breakdown(const AllocationState& alloc, const BeamformingState& beam,
                                   const std::vector<double>& rates) const;

  ConstraintReport check_feasibility(const AllocationState& alloc, const BeamformingState& beam) const;

 private:
  Scenario scenario_;
  Geometry geometry_;
  std::vector<ComplexVector> user_steering_;
  std::vector<ComplexVector> channels_;
  ComplexVector a_t_;
  ComplexVector a_r_;
};

/// B log2(1 + sinr).
double rate_from_sinr(double bandwidth_hz, double sinr);

}  // namespace iscc
