#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "iscc/core_model.hpp"
#include "iscc/errors.hpp"
#include "support/oracles.hpp"

using namespace iscc;

namespace {

BeamformingState matched_beams(const SystemModel& model) {
  BeamformingState b;
  const ComplexVector v = std::sqrt(model.sensing_threshold()) * model.target_tx_steering();
  b.tx_cov = outer_product(v);
  b.tx_vec = v;
  for (std::size_t m = 0; m < model.n_users(); ++m) b.rx_vecs.push_back(model.user_steering(m));
  return b;
}

}  // namespace

TEST_CASE("steering vectors are unit norm with a linear phase progression") {
  for (double theta : {-1.2, -0.3, 0.0, 0.7, 1.5}) {
    const ComplexVector a = steering_vector(theta, 6);
    CHECK(a.norm() == doctest::Approx(1.0).epsilon(1e-14));
    for (int k = 1; k < 6; ++k) {
      const Complex ratio = a(k) / a(k - 1);
      CHECK(std::arg(ratio) == doctest::Approx(std::remainder(std::numbers::pi * std::sin(theta), 2 * std::numbers::pi)).epsilon(1e-12));
    }
  }
  const ComplexVector broadside = steering_vector(0.0, 4);
  for (int k = 0; k < 4; ++k) CHECK(broadside(k) == Complex(0.5, 0.0));
  CHECK_THROWS_AS(steering_vector(0.0, 0), ValidationError);
}

TEST_CASE("geometry uses the horizontal offset over the altitude") {
  Scenario s = Scenario::default_scenario(4);
  const Geometry g = geometry(s);
  // user 0 at (-150, 0, 0), platform at (0, 0, 100)
  CHECK(g.users[0].distance == doctest::Approx(std::sqrt(150.0 * 150.0 + 100.0 * 100.0)));
  CHECK(g.users[0].angle == doctest::Approx(std::atan2(-150.0, 100.0)));
  CHECK(g.target.angle == doctest::Approx(std::atan2(250.0, 100.0)));
  s.users[1].position = s.alap.position;
  CHECK_THROWS_AS(geometry(s), ValidationError);
}

TEST_CASE("default user layout and its deterministic extension") {
  CHECK(default_user_position(0).x == -150.0);
  CHECK(default_user_position(3).x == 150.0);
  CHECK(default_user_position(5).x == -50.0 + 25.0);
  CHECK(default_user_position(5).y == 50.0);
  Scenario s = Scenario::default_scenario(2);
  UserParams proto;
  proto.tx_power_w = 0.3;
  resize_users(s, 5, proto);
  CHECK(s.users.size() == 5);
  CHECK(s.users[1].tx_power_w == 0.1);
  CHECK(s.users[4].tx_power_w == 0.3);
  CHECK(s.users[4].position.y == 50.0);
}

TEST_CASE("validation names the offending field") {
  Scenario s = Scenario::default_scenario(3);
  s.bandwidth_hz = -1.0;
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("bandwidth_hz"), ValidationError);
  s = Scenario::default_scenario(3);
  s.users[2].f_max_hz = 0.0;
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("users[2].f_max_hz"), ValidationError);
  s = Scenario::default_scenario(3);
  s.users.clear();
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("SINR and rate agree with a term-by-term evaluation") {
  std::mt19937_64 rng(17);
  const SystemModel model(Scenario::default_scenario(4));
  for (int trial = 0; trial < 20; ++trial) {
    const HermitianMatrix v = oracle::random_psd(rng, 6, 1 + trial % 3, 0.1);
    const ComplexVector w = oracle::random_vector(rng, 6).normalized();
    const std::size_t m = static_cast<std::size_t>(trial % 4);
    const double ref = oracle::direct_sinr(model, v, w, m);
    CHECK(model.receive_sinr(v, w, m) == doctest::Approx(ref).epsilon(1e-12));
    CHECK(model.achievable_rate(v, w, m) == doctest::Approx(5e5 * std::log2(1.0 + ref)).epsilon(1e-12));
  }
}

TEST_CASE("echo covariance equals A V A^H with A = a_r a_t^H") {
  std::mt19937_64 rng(9);
  const SystemModel model(Scenario::default_scenario(4));
  const HermitianMatrix v = oracle::random_psd(rng, 6, 2);
  const Eigen::MatrixXcd a = model.target_rx_steering() * model.target_tx_steering().adjoint();
  const Eigen::MatrixXcd ref = a * v.matrix() * a.adjoint();
  CHECK((model.echo_covariance(v).matrix() - ref).norm() <= 1e-12 * ref.norm());
  CHECK(beampattern_gain(v, model.geom().target.angle) ==
        doctest::Approx(quad_form(v, model.target_tx_steering())).epsilon(1e-12));
}

TEST_CASE("energy breakdown on a hand-computed single user") {
  Scenario s = Scenario::default_scenario(1);
  const SystemModel model(s);
  AllocationState a;
  a.offload_bits = {4e4};
  a.local_hz = {3e6};
  a.alap_hz = {2e6};
  BeamformingState b = matched_beams(model);
  const double r = model.achievable_rate(b.tx_cov, b.rx_vecs[0], 0);
  const EnergyBreakdown e = model.energy_breakdown(a, b);
  CHECK(e.e_loc == doctest::Approx(1e-20 * 9e12 * 100.0 * 6e4));
  CHECK(e.e_tran == doctest::Approx(0.1 * 4e4 / r));
  CHECK(e.e_comp_alap == doctest::Approx(1e-20 * 4e12 * 50.0 * 4e4));
  CHECK(e.e_tran_alap == doctest::Approx(2.0 * 0.0725));
  CHECK(e.total == doctest::Approx(e.e_loc + e.e_tran + e.e_comp_alap + e.e_tran_alap));

  const PhaseTimes t = model.phase_times(a, r, 0);
  CHECK(t.local == doctest::Approx(100.0 * 6e4 / 3e6));
  CHECK(t.transmit == doctest::Approx(4e4 / r));
  CHECK(t.compute == doctest::Approx(50.0 * 4e4 / 2e6));
  a.alap_hz = {0.0};
  CHECK_THROWS_AS(model.phase_times(a, r, 0), InfeasibleTiming);
}

TEST_CASE("sensing threshold is d_0^2 Gamma_min") {
  const SystemModel model(Scenario::default_scenario(4));
  CHECK(model.sensing_threshold() == doctest::Approx((250.0 * 250.0 + 100.0 * 100.0) * 1e-6));
}

TEST_CASE("check_feasibility flags each violated constraint") {
  const SystemModel model(Scenario::default_scenario(2));
  BeamformingState b = matched_beams(model);
  AllocationState a;
  a.offload_bits = {5e4, 5e4};
  a.local_hz = {2.5e6, 2.5e6};
  a.alap_hz = {2e6, 2e6};
  CHECK(model.check_feasibility(a, b).all_pass());

  auto failing = [&](const AllocationState& aa, const BeamformingState& bb) {
    std::vector<std::string> ids;
    for (const auto& c : model.check_feasibility(aa, bb).checks)
      if (!c.pass) ids.push_back(c.id);
    return ids;
  };
  AllocationState bad = a;
  bad.local_hz[0] = 1e6;  // 100 * 5e4 / 1e6 = 5 s > 2 s
  CHECK(failing(bad, b) == std::vector<std::string>{"local_deadline"});
  bad = a;
  bad.local_hz[1] = 5e6;
  CHECK(failing(bad, b) == std::vector<std::string>{"local_cpu_cap"});
  bad = a;
  bad.alap_hz = {5e7, 5e7};
  CHECK(failing(bad, b) == std::vector<std::string>{"platform_cpu_budget"});
  bad = a;
  bad.alap_hz[0] = 1e6;  // 50 * 5e4 / 1e6 = 2.5 s
  CHECK(failing(bad, b) == std::vector<std::string>{"offload_deadline"});
  bad = a;
  bad.offload_bits[0] = -1.0;
  CHECK(failing(bad, b).front() == "offload_range");

  BeamformingState weak = b;
  weak.tx_cov *= 0.5;
  CHECK(failing(a, weak) == std::vector<std::string>{"sensing_gain"});
  BeamformingState big_w = b;
  big_w.rx_vecs[0] *= 1.1;
  CHECK(failing(a, big_w) == std::vector<std::string>{"combiner_norm"});
  const ConstraintReport rep = model.check_feasibility(a, weak);
  CHECK(rep.worst_relative_violation() == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(rep.with_id("local_deadline").size() == 2);
}
