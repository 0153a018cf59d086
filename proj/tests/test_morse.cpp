#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "akp/morse.hpp"
#include "doctest.h"

using akp::Error;
using akp::ErrorCode;
using akp::GammaEstimate;
using akp::HomogeneousPotential;
using akp::IntegratedTrajectory;
using akp::PotentialClassification;
using akp::PotentialJumps;
using akp::Vector;
using akp::Verdict;

namespace {

HomogeneousPotential<double> make(const std::string& name, double alpha) {
  return HomogeneousPotential<double>(akp::builtin_potential<double>(name), alpha);
}

// Kepler closed forms from the regularized arc (see test_bolza.cpp):
// the unit obstacle problem between antipodal endpoints has
//   m(eps)    = 4 sqrt(2) sqrt(1 + eps - sqrt(2 eps)),
//   dvel(eps) = 2 (1 - sqrt(2 eps)) / sqrt(1 + eps - sqrt(2 eps)),
// so gamma(eps) = (m(eps) - 4 sqrt 2) / sqrt(eps) with limit -4, and the
// receding-endpoint chain at radius R reads the jumps at eps / R.
double kepler_m_exact(double eps) {
  return 4.0 * std::sqrt(2.0) * std::sqrt(1.0 + eps - std::sqrt(2.0 * eps));
}
double kepler_dvel_exact(double eps) {
  return 2.0 * (1.0 - std::sqrt(2.0 * eps)) / std::sqrt(1.0 + eps - std::sqrt(2.0 * eps));
}
double kepler_gamma_exact(double eps) {
  return (kepler_m_exact(eps) - 4.0 * std::sqrt(2.0)) / std::sqrt(eps);
}

// Shared heavy computations (each test reads, none mutates).
const PotentialJumps<double>& iso_jumps() {
  static const PotentialJumps<double> pj = akp::jumps_of_potential(make("isotropic", 1.0));
  return pj;
}
const GammaEstimate<double>& iso_gamma() {
  static const GammaEstimate<double> ge = akp::gamma_zero_plus(make("isotropic", 1.0));
  return ge;
}
const PotentialClassification<double>& iso_class() {
  static const PotentialClassification<double> c = akp::classify(make("isotropic", 1.0));
  return c;
}
const PotentialClassification<double>& barrier_class() {
  static const PotentialClassification<double> c = akp::classify(make("barrier50", 0.2));
  return c;
}

// Radial zero-energy launch: |v| = sqrt(2 V(x)) pointed outward.
Vector<double> outward_velocity(const HomogeneousPotential<double>& p, const Vector<double>& x) {
  return std::sqrt(2.0 * akp::eval_v(p, x)) * (x / x.norm()).eval();
}

}  // namespace

TEST_CASE("collision level matches the homothetic closed form") {
  // m(V, 0) = (2 / alpha*) sqrt(2 V_min): two homothetic legs unit -> 0.
  const double r2 = std::sqrt(2.0);
  CHECK(akp::m_zero(make("isotropic", 1.0)) == doctest::Approx(4.0 * r2).epsilon(1e-12));
  CHECK(akp::m_zero(make("barrier50", 0.2)) == doctest::Approx(20.0 / 9.0 * r2).epsilon(1e-12));
  CHECK(akp::m_zero(make("devaney", 1.0)) == doctest::Approx(4.0 * r2).epsilon(1e-12));
  // Quadrupling the angular minimum doubles the level; alpha -> 0 halves the
  // isotropic value toward 2 sqrt 2.
  const HomogeneousPotential<double> soft = make("isotropic", 0.02);
  CHECK(akp::m_zero(soft) == doctest::Approx(2.0 * r2 * 2.0 / 1.98).epsilon(1e-12));
}

TEST_CASE("isotropic gamma curve tracks the regularized closed form") {
  const auto& ge = iso_gamma();
  REQUIRE(ge.curve.size() == 5);
  for (const auto& pt : ge.curve) {
    CHECK(std::abs(pt.m - kepler_m_exact(pt.eps)) < 2e-2);
    CHECK(std::abs(pt.gamma - kepler_gamma_exact(pt.eps)) < 2e-2);
    // The minimizer grazes: closest approach sits on the obstacle.
    CHECK(pt.min_radius == doctest::Approx(pt.eps).epsilon(1e-6));
  }
  // gamma decreases along the schedule toward the limit -4, never below it.
  for (size_t k = 1; k < ge.curve.size(); ++k) CHECK(ge.curve[k].gamma < ge.curve[k - 1].gamma);
  CHECK(ge.value == doctest::Approx(kepler_gamma_exact(0.025)).epsilon(5e-3));
  CHECK(ge.value > -4.0);
  CHECK(ge.value < -3.6);
  // One-sided uncertainty: gamma(2 eps) - gamma(eps) at the last level.
  CHECK(ge.uncertainty > 0.0);
  CHECK(std::abs(ge.uncertainty - (kepler_gamma_exact(0.05) - kepler_gamma_exact(0.025))) < 2e-2);

  // m(V, eps) is minimized over eps at 1/2 with value exactly 4.
  CHECK(akp::m_of_eps(make("isotropic", 1.0), 0.5) == doctest::Approx(4.0).epsilon(1e-3));
}

TEST_CASE("receding-endpoint jump chain stabilizes onto the reflection limit") {
  const auto& pj = iso_jumps();
  const auto& ap = pj.approx;
  REQUIRE(ap.radii.size() == 4);
  REQUIRE(ap.delta_vel_seq.size() == 4);
  for (size_t k = 0; k < ap.radii.size(); ++k) {
    CHECK(std::abs(ap.delta_vel_seq[k] - kepler_dvel_exact(0.2 / ap.radii[k])) < 5e-3);
    CHECK(ap.delta_pos_seq[k] < 5e-3);  // central symmetry: no position jump
  }
  for (size_t k = 1; k < ap.delta_vel_seq.size(); ++k)
    CHECK(ap.delta_vel_seq[k] > ap.delta_vel_seq[k - 1]);
  CHECK(pj.delta_vel == ap.delta_vel_seq.back());
  CHECK(std::abs(pj.delta_vel - kepler_dvel_exact(0.005)) < 5e-3);
  CHECK(pj.delta_vel < 2.0);  // the R -> infinity limit is the full reflection 2

  CHECK(ap.converged);
  CHECK(ap.stabilization_vel < ap.jump_tol);
  CHECK(pj.contact_tol > 1e-3);
  CHECK(pj.contact_tol < 2e-2);
  CHECK(ap.jump_tol >= pj.contact_tol);  // outer clock is the coarser scale

  // Stored solutions are blown back up to the real endpoints R xi+-.
  const auto& outer = ap.solutions.back();
  CHECK(outer.eps == doctest::Approx(0.2).epsilon(1e-12));
  CHECK((outer.path.nodes.col(0) - (-40.0) * Vector<double>::Unit(2, 0)).norm() < 1e-9);
  CHECK((outer.path.nodes.col(outer.path.segments()) - 40.0 * Vector<double>::Unit(2, 0)).norm() <
        1e-9);

  // The jumps of V do not depend on the obstacle radius used to read them.
  const PotentialJumps<double> pj01 = akp::jumps_of_potential(make("isotropic", 1.0), 0.1);
  CHECK(std::abs(pj01.delta_vel - pj.delta_vel) < 5e-2);
}

TEST_CASE("classification separates the reflecting and grazing regimes") {
  const auto& ci = iso_class();
  CHECK(ci.verdict == Verdict::Out);
  CHECK(std::string(akp::verdict_name(ci.verdict)) == "Out");
  CHECK_FALSE(ci.inconsistent);
  CHECK(ci.delta_vel_V > ci.jump_tol);
  CHECK(std::abs(ci.delta_vel_V - kepler_dvel_exact(0.005)) < 5e-3);
  CHECK(ci.gamma_zero_plus < -3.6);
  REQUIRE(ci.gamma_curve.size() == 5);
  // Dichotomy case 2: some obstacle level beats the collision level.  The
  // true minimum of m over eps is 4 at eps = 1/2; the schedule samples it
  // at eps = 0.4.
  CHECK(ci.dichotomy_case == 2);
  CHECK(ci.m_zero_value == doctest::Approx(4.0 * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(ci.c_V < ci.m_zero_value);
  CHECK(ci.c_V == doctest::Approx(kepler_m_exact(0.4)).epsilon(1e-3));
  CHECK(ci.achiever_min_radius == doctest::Approx(0.4).epsilon(1e-3));

  const auto& cb = barrier_class();
  CHECK(cb.verdict == Verdict::In);
  CHECK_FALSE(cb.inconsistent);
  CHECK(cb.delta_vel_V <= cb.jump_tol);
  CHECK(cb.delta_pos_V > 1.4);  // grazing arc slides along the obstacle
  CHECK(cb.delta_pos_V < 1.9);
  CHECK(cb.gamma_zero_plus > 17.0);
  CHECK(cb.gamma_zero_plus < 17.6);
  CHECK(cb.gamma_uncertainty < 5e-2);
  // Dichotomy case 1: the collision level is the infimum.
  CHECK(cb.dichotomy_case == 1);
  CHECK(cb.c_V == cb.m_zero_value);
  CHECK(cb.achiever_min_radius == 0.0);
}

TEST_CASE("critical exponent bisection brackets the crossing") {
  const auto U = akp::builtin_potential<double>("barrier50");
  const auto res = akp::find_alpha_bar<double>(U, 0.8, 1.6);
  CHECK(res.hi - res.lo <= 1e-2 + 1e-12);
  CHECK(res.lo < res.alpha_bar);
  CHECK(res.alpha_bar < res.hi);
  CHECK(res.alpha_bar > 0.87);
  CHECK(res.alpha_bar < 0.95);
  REQUIRE(res.probes.size() >= 7);
  CHECK(res.probes[0].alpha == 0.8);
  CHECK(res.probes[0].delta_vel <= res.probes[0].jump_tol);
  CHECK(res.probes[1].alpha == 1.6);
  CHECK(res.probes[1].delta_vel > 0.3);
  // The velocity jump grows with alpha across all probes.
  auto sorted = res.probes;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.alpha < b.alpha; });
  for (size_t k = 1; k < sorted.size(); ++k)
    CHECK(sorted[k].delta_vel >= sorted[k - 1].delta_vel - 2e-3);

  CHECK_THROWS_AS(akp::find_alpha_bar<double>(U, 1.3, 1.6), Error);  // both ends Out
  try {
    akp::find_alpha_bar<double>(U, 1.3, 1.6);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadBracket);
  }
  CHECK_THROWS_AS(akp::find_alpha_bar<double>(U, 1.6, 1.3), Error);
  CHECK_THROWS_AS(akp::find_alpha_bar<double>(U, 0.5, 2.0), Error);
}

TEST_CASE("schedule preconditions are enforced") {
  const auto iso = make("isotropic", 1.0);
  CHECK_THROWS_AS(akp::gamma_zero_plus(iso, std::vector<double>{0.4, 0.2}), Error);
  CHECK_THROWS_AS(akp::gamma_zero_plus(iso, std::vector<double>{0.4, 0.2, 0.3}), Error);
  CHECK_THROWS_AS(akp::gamma_zero_plus(iso, std::vector<double>{0.4, 0.2, 0.0}), Error);
  CHECK_THROWS_AS(akp::gamma_zero_plus(iso, std::vector<double>{1.5, 0.4, 0.2}), Error);
  CHECK_THROWS_AS(akp::jumps_of_potential(iso, 0.2, std::vector<double>{5.0, 10.0}), Error);
  CHECK_THROWS_AS(akp::jumps_of_potential(iso, 0.2, std::vector<double>{0.5, 5.0, 10.0}), Error);
  CHECK_THROWS_AS(akp::jumps_of_potential(iso, 0.2, std::vector<double>{5.0, 5.0, 10.0}), Error);
  CHECK_THROWS_AS(akp::jumps_of_potential(iso, 6.0, std::vector<double>{5.0, 10.0, 20.0}), Error);
  CHECK_THROWS_AS(akp::m_of_eps(iso, 1.5), Error);
  CHECK_THROWS_AS(akp::m_of_eps(iso, 0.0), Error);
}

TEST_CASE("zero-energy escape matches the parabolic asymptotics") {
  const auto iso = make("isotropic", 1.0);
  Vector<double> x0 = Vector<double>::Unit(2, 0);
  const auto traj = akp::integrate_zero_energy(iso, x0, outward_velocity(iso, x0), 1e4);
  CHECK(traj.energy_drift < 1e-8);
  const auto rep = akp::asymptotic_diagnostics(iso, traj);
  CHECK(rep.exponent_expected == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(std::abs(rep.fitted_exponent - 2.0 / 3.0) < 1e-3);
  // r(t) ~ (K t)^{2/3} with K = (3/2) sqrt(2): the ratio closes within 1%.
  CHECK(std::abs(rep.k_ratio - 1.0) < 1e-2);
  CHECK(rep.gamma_end == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(rep.radial_momentum - std::sqrt(2.0)) < 1e-4);
  CHECK(rep.radial_momentum_expected == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
  // Radial launch: the direction never moves off the minimal ray.
  CHECK(rep.tail_decay_last < 1e-9);
  CHECK(rep.decay_monotone);

  // Same audit along the anisotropic minimal direction.
  const auto dev = make("devaney", 1.0);
  Vector<double> a0 = dev.angular.xi_minus;
  const auto tr2 = akp::integrate_zero_energy(dev, a0, outward_velocity(dev, a0), 1e4);
  const auto rp2 = akp::asymptotic_diagnostics(dev, tr2);
  CHECK(std::abs(rp2.fitted_exponent - 2.0 / 3.0) < 1e-3);
  CHECK(std::abs(rp2.k_ratio - 1.0) < 1e-2);
  CHECK(std::abs(rp2.radial_momentum - std::sqrt(2.0)) < 1e-4);
  CHECK(rp2.tail_decay_last < 1e-9);
  CHECK(rp2.decay_monotone);
}

TEST_CASE("off-axis escape is diagnosed as non-minimal convergence") {
  // A generic zero-energy escape turns toward the angular maximum, not the
  // minimal directions; the audit must say so rather than report decay.
  const auto dev = make("devaney", 1.0);
  Vector<double> x0(2);
  x0 << std::cos(0.4), std::sin(0.4);
  const auto traj = akp::integrate_zero_energy(dev, x0, outward_velocity(dev, x0), 1e4);
  const auto rep = akp::asymptotic_diagnostics(dev, traj);
  // The growth exponent is universal ...
  CHECK(std::abs(rep.fitted_exponent - 2.0 / 3.0) < 2e-2);
  // ... but the terminal direction sits at the angular maximum (level 3)
  // and the scaled distance to the minimal directions does not decay.
  CHECK(rep.gamma_end > 2.5);
  CHECK(std::abs(rep.radial_momentum - std::sqrt(2.0 * rep.gamma_end)) < 0.1);
  CHECK_FALSE(rep.decay_monotone);
  CHECK(rep.tail_decay_last > rep.tail_decay_first);
}

TEST_CASE("integration guards reject unusable trajectories") {
  const auto iso = make("isotropic", 1.0);
  Vector<double> x0 = Vector<double>::Unit(2, 0);
  const Vector<double> vin = -outward_velocity(iso, x0);
  CHECK_THROWS_AS(akp::integrate_zero_energy(iso, x0, vin, 1.0), Error);  // collision in t ~ 0.47
  try {
    akp::integrate_zero_energy(iso, x0, vin, 1.0);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CollisionNode);
  }
  CHECK_THROWS_AS(akp::integrate_zero_energy(iso, x0, vin, -1.0), Error);
  CHECK_THROWS_AS(akp::integrate_zero_energy(iso, x0, vin, 1.0, -1e-2), Error);
  CHECK_THROWS_AS(akp::integrate_zero_energy(iso, x0, vin, 1.0, 1e-2, 0), Error);
  Vector<double> tiny = 1e-12 * Vector<double>::Unit(2, 0);
  CHECK_THROWS_AS(akp::integrate_zero_energy(iso, tiny, vin, 1.0), Error);

  // Too few samples for the tail fit.
  const auto short_traj = akp::integrate_zero_energy(iso, x0, outward_velocity(iso, x0), 1.0);
  CHECK_THROWS_AS(akp::asymptotic_diagnostics(iso, short_traj), Error);

  // A coarse step near the singularity wrecks energy conservation, and the
  // audit refuses to fit such a tail.
  Vector<double> close = 0.5 * Vector<double>::Unit(2, 0);
  const auto bad = akp::integrate_zero_energy(iso, close, outward_velocity(iso, close), 50.0, 0.2, 1);
  CHECK(bad.energy_drift > 1e-6);
  try {
    akp::asymptotic_diagnostics(iso, bad);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EnergyDrift);
  }
}

TEST_CASE("gamma evaluation is deterministic") {
  const auto bar = make("barrier50", 0.2);
  const std::vector<double> sched{0.4, 0.2, 0.1};
  const auto a = akp::gamma_zero_plus(bar, sched);
  const auto b = akp::gamma_zero_plus(bar, sched);
  REQUIRE(a.curve.size() == b.curve.size());
  for (size_t k = 0; k < a.curve.size(); ++k) {
    CHECK(a.curve[k].m == b.curve[k].m);
    CHECK(a.curve[k].gamma == b.curve[k].gamma);
  }
  CHECK(a.value == b.value);
  CHECK(a.uncertainty == b.uncertainty);
}
