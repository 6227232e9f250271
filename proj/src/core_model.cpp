#include "iscc/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "iscc/errors.hpp"

namespace iscc {

namespace {

constexpr double kFeasRelTol = 1e-9;

void require_positive(double v, const std::string& field) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ValidationError(field + ": must be finite and strictly positive (got " + std::to_string(v) + ")");
  }
}

void require_finite(const Position& p, const std::string& field) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
    throw ValidationError(field + ": non-finite coordinate");
  }
}

NodeGeometry node_geometry(const Position& alap, const Position& node, const std::string& field) {
  const double dx = node.x - alap.x;
  const double dy = node.y - alap.y;
  const double dz = alap.z - node.z;
  NodeGeometry g;
  g.distance = std::sqrt(dx * dx + dy * dy + dz * dz);
  if (!(g.distance > 0.0)) throw ValidationError(field + ": coincides with the platform position");
  g.angle = std::atan2(dx, dz);
  return g;
}

}  // namespace

void Scenario::validate() const {
  if (users.empty()) throw ValidationError("users: at least one user is required");
  if (n_tx < 1) throw ValidationError("n_tx: must be >= 1");
  if (n_rx < 1) throw ValidationError("n_rx: must be >= 1");
  require_positive(slot_s, "slot_s");
  require_positive(bandwidth_hz, "bandwidth_hz");
  require_positive(beta_ref, "beta_ref");
  require_positive(noise_w, "noise_w");
  if (!(target_amp_sq >= 0.0) || !std::isfinite(target_amp_sq)) {
    throw ValidationError("target_amp_sq: must be finite and nonnegative");
  }
  require_positive(gamma_min, "gamma_min");
  require_finite(alap.position, "alap.position");
  require_positive(alap.position.z, "alap.position.z");
  require_positive(alap.cycles_per_bit, "alap.cycles_per_bit");
  require_positive(alap.f_max_hz, "alap.f_max_hz");
  require_positive(alap.kappa, "alap.kappa");
  require_finite(target, "target.position");
  node_geometry(alap.position, target, "target.position");
  for (std::size_t m = 0; m < users.size(); ++m) {
    const std::string path = "users[" + std::to_string(m) + "]";
    const UserParams& u = users[m];
    require_finite(u.position, path + ".position");
    node_geometry(alap.position, u.position, path + ".position");
    require_positive(u.tx_power_w, path + ".tx_power_w");
    if (!(u.task_bits >= 0.0) || !std::isfinite(u.task_bits)) {
      throw ValidationError(path + ".task_bits: must be finite and nonnegative");
    }
    require_positive(u.cycles_per_bit, path + ".cycles_per_bit");
    require_positive(u.f_max_hz, path + ".f_max_hz");
    require_positive(u.kappa, path + ".kappa");
  }
}

Position default_user_position(std::size_t k) {
  static constexpr double kBaseX[4] = {-150.0, -50.0, 50.0, 150.0};
  const auto ring = static_cast<double>(k / 4);
  return Position{kBaseX[k % 4] + 25.0 * ring, 50.0 * ring, 0.0};
}

void resize_users(Scenario& s, std::size_t n_users, const UserParams& prototype) {
  const std::size_t old = s.users.size();
  s.users.resize(n_users, prototype);
  for (std::size_t k = old; k < n_users; ++k) s.users[k].position = default_user_position(k);
}

Scenario Scenario::default_scenario(std::size_t n_users) {
  Scenario s;
  resize_users(s, n_users, UserParams{});
  return s;
}

ComplexVector steering_vector(double theta, Eigen::Index n) {
  if (n < 1) throw ValidationError("steering_vector: n must be >= 1");
  ComplexVector a(n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  const double phase = std::numbers::pi * std::sin(theta);
  for (Eigen::Index k = 0; k < n; ++k) {
    a(k) = scale * std::polar(1.0, phase * static_cast<double>(k));
  }
  return a;
}

Geometry geometry(const Scenario& s) {
  Geometry g;
  g.users.reserve(s.users.size());
  for (std::size_t m = 0; m < s.users.size(); ++m) {
    g.users.push_back(node_geometry(s.alap.position, s.users[m].position,
                                    "users[" + std::to_string(m) + "].position"));
  }
  g.target = node_geometry(s.alap.position, s.target, "target.position");
  return g;
}

double beampattern_gain(const HermitianMatrix& tx_cov, double theta0) {
  return quad_form(tx_cov, steering_vector(theta0, tx_cov.dim()));
}

double rate_from_sinr(double bandwidth_hz, double sinr) {
  return bandwidth_hz * std::log2(1.0 + sinr);
}

bool ConstraintReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const ConstraintCheck& c) { return c.pass; });
}

double ConstraintReport::worst_relative_violation() const {
  double worst = 0.0;
  for (const auto& c : checks) worst = std::max(worst, std::max(0.0, -c.slack) / c.scale);
  return worst;
}

std::vector<ConstraintCheck> ConstraintReport::with_id(const std::string& id) const {
  std::vector<ConstraintCheck> out;
  for (const auto& c : checks) {
    if (c.id == id) out.push_back(c);
  }
  return out;
}

SystemModel::SystemModel(Scenario scenario) : scenario_(std::move(scenario)) {
  scenario_.validate();
  geometry_ = geometry(scenario_);
  const double sqrt_beta = std::sqrt(scenario_.beta_ref);
  for (std::size_t m = 0; m < scenario_.n_users(); ++m) {
    user_steering_.push_back(steering_vector(geometry_.users[m].angle, scenario_.n_rx));
    channels_.push_back(sqrt_beta / geometry_.users[m].distance * user_steering_.back());
  }
  a_t_ = steering_vector(geometry_.target.angle, scenario_.n_tx);
  a_r_ = steering_vector(geometry_.target.angle, scenario_.n_rx);
}

double SystemModel::sensing_threshold() const {
  return geometry_.target.distance * geometry_.target.distance * scenario_.gamma_min;
}

HermitianMatrix SystemModel::echo_covariance(const HermitianMatrix& tx_cov) const {
  if (tx_cov.dim() != scenario_.n_tx) throw ValidationError("tx covariance has wrong dimension");
  // A V A^H = (a_t^H V a_t) a_r a_r^H
  return quad_form(tx_cov, a_t_) * outer_product(a_r_);
}

HermitianMatrix SystemModel::signal_matrix(std::size_t m) const {
  return scenario_.users[m].tx_power_w * outer_product(channels_[m]);
}

HermitianMatrix SystemModel::interference_without_echo(std::size_t m) const {
  HermitianMatrix acc = scenario_.noise_w * HermitianMatrix::identity(scenario_.n_rx);
  for (std::size_t j = 0; j < n_users(); ++j) {
    if (j != m) acc += signal_matrix(j);
  }
  return acc;
}

HermitianMatrix SystemModel::interference_matrix(const HermitianMatrix& tx_cov, std::size_t m) const {
  return interference_without_echo(m) + scenario_.target_amp_sq * echo_covariance(tx_cov);
}

double SystemModel::receive_sinr(const HermitianMatrix& tx_cov, const ComplexVector& w,
                                 std::size_t m) const {
  if (w.size() != scenario_.n_rx) throw ValidationError("receive combiner has wrong dimension");
  const double signal = scenario_.users[m].tx_power_w * std::norm(w.dot(channels_[m]));
  double denom = scenario_.noise_w * w.squaredNorm();
  for (std::size_t j = 0; j < n_users(); ++j) {
    if (j != m) denom += scenario_.users[j].tx_power_w * std::norm(w.dot(channels_[j]));
  }
  denom += scenario_.target_amp_sq * quad_form(tx_cov, a_t_) * std::norm(w.dot(a_r_));
  if (!(denom > 0.0)) return 0.0;
  return signal / denom;
}

double SystemModel::achievable_rate(const HermitianMatrix& tx_cov, const ComplexVector& w,
                                    std::size_t m) const {
  return rate_from_sinr(scenario_.bandwidth_hz, receive_sinr(tx_cov, w, m));
}

std::vector<double> SystemModel::rates(const BeamformingState& beam) const {
  std::vector<double> r(n_users());
  for (std::size_t m = 0; m < n_users(); ++m) r[m] = achievable_rate(beam.tx_cov, beam.rx_vecs[m], m);
  return r;
}

PhaseTimes SystemModel::phase_times(const AllocationState& alloc, double rate, std::size_t m) const {
  const UserParams& u = scenario_.users[m];
  const double l = alloc.offload_bits[m];
  const double local_bits = u.task_bits - l;
  auto ratio = [&](double num, double den, const char* what) {
    if (num <= 0.0) return 0.0;
    if (!(den > 0.0)) {
      throw InfeasibleTiming(std::string(what) + " of user " + std::to_string(m) +
                             " has zero denominator with positive work");
    }
    return num / den;
  };
  PhaseTimes t;
  t.local = ratio(u.cycles_per_bit * local_bits, alloc.local_hz[m], "local computation");
  t.transmit = ratio(l, rate, "transmission");
  t.compute = ratio(scenario_.alap.cycles_per_bit * l, alloc.alap_hz[m], "platform computation");
  return t;
}

EnergyBreakdown SystemModel::energy_breakdown(const AllocationState& alloc,
                                              const BeamformingState& beam) const {
  return energy_breakdown(alloc, beam, rates(beam));
}

EnergyBreakdown SystemModel::energy_breakdown(const AllocationState& alloc, const BeamformingState& beam,
                                              const std::vector<double>& rates) const {
  EnergyBreakdown e;
  const AlapParams& a = scenario_.alap;
  for (std::size_t m = 0; m < n_users(); ++m) {
    const UserParams& u = scenario_.users[m];
    const double l = alloc.offload_bits[m];
    const double f = alloc.local_hz[m];
    const double fa = alloc.alap_hz[m];
    e.e_loc += u.kappa * f * f * u.cycles_per_bit * std::max(0.0, u.task_bits - l);
    if (l > 0.0) {
      if (!(rates[m] > 0.0)) {
        throw InfeasibleTiming("transmission of user " + std::to_string(m) + " has zero rate");
      }
      e.e_tran += u.tx_power_w * l / rates[m];
      e.e_comp_alap += a.kappa * fa * fa * a.cycles_per_bit * l;
    }
  }
  e.e_tran_alap = scenario_.slot_s * beam.tx_cov.trace();
  e.total = e.e_loc + e.e_tran + e.e_comp_alap + e.e_tran_alap;
  return e;
}

ConstraintReport SystemModel::check_feasibility(const AllocationState& alloc,
                                                const BeamformingState& beam) const {
  ConstraintReport rep;
  const double tau = scenario_.slot_s;
  auto add = [&](std::string id, std::optional<std::size_t> user, double slack, double scale) {
    ConstraintCheck c;
    c.id = std::move(id);
    c.user = user;
    c.slack = slack;
    c.scale = std::max(scale, std::numeric_limits<double>::min());
    c.pass = std::isfinite(slack) ? slack >= -kFeasRelTol * c.scale : slack > 0.0;
    rep.checks.push_back(c);
  };

  const std::vector<double> r = rates(beam);
  double alap_sum = 0.0;
  double alap_min = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < n_users(); ++m) {
    const UserParams& u = scenario_.users[m];
    const double l = alloc.offload_bits[m];
    const double f = alloc.local_hz[m];
    add("combiner_norm", m, 1.0 - beam.rx_vecs[m].squaredNorm(), 1.0);
    add("offload_range", m, std::min(l, u.task_bits - l), std::max(1.0, u.task_bits));
    add("local_cpu_cap", m, std::min(f, u.f_max_hz - f), u.f_max_hz);
    alap_sum += alloc.alap_hz[m];
    alap_min = std::min(alap_min, alloc.alap_hz[m]);

    constexpr double kInf = std::numeric_limits<double>::infinity();
    const double local_bits = std::max(0.0, u.task_bits - l);
    double loc_slack = tau;
    if (local_bits > 0.0) loc_slack = f > 0.0 ? tau - u.cycles_per_bit * local_bits / f : -kInf;
    double off_slack = tau;
    if (l > 0.0) {
      const double fa = alloc.alap_hz[m];
      off_slack = (r[m] > 0.0 && fa > 0.0) ? tau - l / r[m] - scenario_.alap.cycles_per_bit * l / fa : -kInf;
    }
    add("local_deadline", m, loc_slack, tau);
    add("offload_deadline", m, off_slack, tau);
  }
  add("platform_cpu_budget", std::nullopt, std::min(alap_min, scenario_.alap.f_max_hz - alap_sum), scenario_.alap.f_max_hz);
  const double thr = sensing_threshold();
  add("sensing_gain", std::nullopt, quad_form(beam.tx_cov, a_t_) - thr, thr);
  return rep;
}

}  // namespace iscc
