#include <cmath>
#include <numbers>

#include "akp/bolza.hpp"
#include "doctest.h"

using akp::BolzaProblem;
using akp::BolzaSolution;
using akp::ContactKind;
using akp::DiscretePath;
using akp::Error;
using akp::ErrorCode;
using akp::HomogeneousPotential;
using akp::NodeMatrix;
using akp::Vector;

namespace {

HomogeneousPotential<double> make(const std::string& name, double alpha) {
  return HomogeneousPotential<double>(akp::builtin_potential<double>(name), alpha);
}

// Kepler obstacle problem between antipodal unit endpoints.  The regularized
// arc is explicit in parabolic coordinates, which gives closed forms for the
// minimal action and the normalized velocity jump at the contact:
//   m(eps)    = 4 sqrt(2) sqrt(1 + eps - sqrt(2 eps)),
//   dvel(eps) = 2 (1 - sqrt(2 eps)) / sqrt(1 + eps - sqrt(2 eps)).
double kepler_m_exact(double eps) {
  return 4.0 * std::sqrt(2.0) * std::sqrt(1.0 + eps - std::sqrt(2.0 * eps));
}
double kepler_dvel_exact(double eps) {
  return 2.0 * (1.0 - std::sqrt(2.0 * eps)) / std::sqrt(1.0 + eps - std::sqrt(2.0 * eps));
}

BolzaProblem<double> kepler_problem(double eps) {
  BolzaProblem<double> prob;
  prob.potential = make("isotropic", 1.0);
  prob.x1 = akp::unit2(-1.0, 0.0);
  prob.x2 = akp::unit2(1.0, 0.0);
  prob.eps = eps;
  prob.grid_size = 200;
  prob.restarts = 3;
  return prob;
}

// Solved once and shared: the velocity-jumping reference solution.
const BolzaSolution<double>& kepler_solution() {
  static const BolzaSolution<double> sol = akp::minimize_bolza(kepler_problem(0.2));
  return sol;
}

BolzaProblem<double> devaney_in_problem() {
  BolzaProblem<double> prob;
  prob.potential = make("devaney", 0.5);
  prob.x1 = prob.potential.angular.xi_plus;
  prob.x2 = prob.potential.angular.xi_minus;
  prob.eps = 0.2;
  prob.grid_size = 200;
  prob.restarts = 2;
  return prob;
}

// Solved once and shared: the position-jumping (contact-arc) solution.
const BolzaSolution<double>& devaney_in_solution() {
  static const BolzaSolution<double> sol = akp::minimize_bolza(devaney_in_problem());
  return sol;
}

}  // namespace

TEST_CASE("kelvin transform: involution, norm identity, reflection jacobian") {
  Vector<double> x(2);
  x << 0.3, -0.7;
  const Vector<double> kx = akp::kelvin_transform(x);
  CHECK(kx.norm() == doctest::Approx(1.0 / x.norm()).epsilon(1e-14));
  CHECK((akp::kelvin_transform(kx) - x).norm() < 1e-14);

  // Jacobian against central differences.
  const NodeMatrix<double> jac = akp::kelvin_jacobian(x);
  const double h = 1e-6;
  for (int j = 0; j < 2; ++j) {
    Vector<double> xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    const Vector<double> fd = (akp::kelvin_transform(xp) - akp::kelvin_transform(xm)) / (2 * h);
    CHECK((fd - Vector<double>(jac.col(j))).norm() < 1e-8);
  }

  // On the unit sphere the jacobian is the Householder reflection I - 2 s s^T.
  const Vector<double> s = akp::unit2(std::cos(0.4), std::sin(0.4));
  const NodeMatrix<double> refl = akp::kelvin_jacobian(s);
  CHECK((Vector<double>(refl * s) + s).norm() < 1e-12);
  Vector<double> t(2);
  t << -s[1], s[0];
  CHECK((Vector<double>(refl * t) - t).norm() < 1e-12);
}

TEST_CASE("boundary arc between obstacle endpoints is the great circle") {
  BolzaProblem<double> prob;
  prob.potential = make("isotropic", 1.0);
  prob.x1 = akp::unit2(-1.0, 0.0);
  prob.x2 = akp::unit2(1.0, 0.0);
  prob.eps = 1.0;
  const auto sol = akp::minimize_bolza(prob);

  // Action of the constrained half great circle: pi * sqrt(2 U) on S^1.
  CHECK(sol.converged);
  CHECK(sol.action == doctest::Approx(std::numbers::pi * std::sqrt(2.0)).epsilon(1e-4));
  CHECK(sol.constraint_active);
  CHECK(sol.contact_first == 0);
  CHECK(sol.contact_last == sol.path.segments());

  // Both endpoints stay on the sphere: position jump across the whole arc,
  // no measurable velocity jump (no bracketing one-sided pair exists).
  CHECK(sol.kind == ContactKind::PositionJumping);
  CHECK(sol.delta_pos == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(sol.delta_vel == 0.0);

  CHECK(sol.action <= akp::bound_above(prob.potential, prob.x1, prob.x2, prob.eps) + 1e-9);
}

TEST_CASE("radial chain collapses to the homothetic oracle") {
  BolzaProblem<double> prob;
  prob.potential = make("devaney", 1.0);  // U = 1 along the positive x axis
  prob.x1 = akp::unit2(1.0, 0.0);
  prob.x2 = akp::unit2(0.1, 0.0);
  prob.eps = 0.1;
  const auto sol = akp::minimize_bolza(prob);

  const double expect = akp::homothetic_action(0.1, 1.0, 1.0, 1.0);
  CHECK(sol.converged);
  CHECK(sol.action == doctest::Approx(expect).epsilon(1e-4));
  CHECK(sol.kind == ContactKind::Parabolic);
  CHECK(sol.constraint_active);
  CHECK(sol.monotone_outside_contact);
  CHECK(sol.t_bar > 0.0);
}

TEST_CASE("interior obstacle: velocity-jumping minimizer matches the regularized arc") {
  const auto& sol = kepler_solution();
  const double eps = 0.2;

  CHECK(sol.converged);
  CHECK(sol.action == doctest::Approx(kepler_m_exact(eps)).epsilon(5e-4));
  CHECK(sol.kind == ContactKind::VelocityJumping);
  CHECK(sol.delta_vel == doctest::Approx(kepler_dvel_exact(eps)).epsilon(5e-3));
  CHECK(sol.delta_pos <= 1e-8);

  // The free minimizer misses the sphere: the contact comes from the pin
  // protocol, sits at a single node, and lands at the symmetric midpoint.
  CHECK_FALSE(sol.constraint_active);
  CHECK(sol.pinned_node > 0);
  CHECK(sol.contact_last - sol.contact_first <= 1);
  CHECK(std::abs(sol.t_star) < 0.1);
  CHECK(sol.restart_actions.size() == 3);
  CHECK(sol.pin_sweep.size() >= 10);

  // Sweep bookkeeping: the winner is among the near-best set.
  bool found = false;
  for (int i : sol.near_best) found = found || i == sol.best_restart;
  CHECK(found);
}

TEST_CASE("pin sweep honours the contact-time hint") {
  auto prob = kepler_problem(0.2);
  prob.pin_time_hint = 0.0;
  const auto sol = akp::minimize_bolza(prob);
  CHECK(sol.action == doctest::Approx(kepler_solution().action).epsilon(1e-8));
  CHECK(sol.pin_sweep.size() <= 6);  // hint collapses the coarse sweep
  CHECK(sol.pinned_node == kepler_solution().pinned_node);
}

TEST_CASE("reflection law holds at a velocity-jumping contact") {
  const auto& sol = kepler_solution();
  const auto rep = akp::kelvin_regularity_check(make("isotropic", 1.0), sol);
  CHECK(rep.consistent);
  // Tangential velocity is continuous and the radial velocity reverses sign;
  // equivalently the Kelvin-folded continuation is C^1 through the sphere.
  CHECK(rep.tangential_jump < 1e-6);
  CHECK(rep.radial_antisymmetry < 1e-6);
  CHECK(rep.fold_velocity_jump < 1e-6);
  CHECK(rep.entry_radial_speed > 0.1);  // genuinely non-grazing contact
}

TEST_CASE("homothetic rescaling is exact and preserves the contact structure") {
  const auto& sol = kepler_solution();
  const double R = 4.0;
  const auto big = akp::rescale_solution(sol, R);

  const double action_scale = std::pow(R, 0.5);  // R^{(2-alpha)/2}, alpha = 1
  const double time_scale = std::pow(R, 1.5);    // R^{(2+alpha)/2}
  CHECK(big.eps == doctest::Approx(R * sol.eps).epsilon(1e-15));
  CHECK(big.action / sol.action == doctest::Approx(action_scale).epsilon(1e-12));
  CHECK(big.j_value / sol.j_value == doctest::Approx(action_scale * action_scale).epsilon(1e-12));
  CHECK(big.t_bar / sol.t_bar == doctest::Approx(time_scale).epsilon(1e-12));
  CHECK(big.t_star == doctest::Approx(time_scale * sol.t_star).epsilon(1e-12));

  // Normalized jumps are scale invariants; the bit pattern must survive.
  CHECK(big.delta_vel == sol.delta_vel);
  CHECK(big.delta_pos == sol.delta_pos);

  // The scaled path solves the scaled problem: contact interval unchanged.
  const auto info = akp::detect_contact(big.path, big.eps);
  CHECK(info.first == sol.contact_first);
  CHECK(info.last == sol.contact_last);
}

TEST_CASE("attracting potential at weak homogeneity produces a contact arc") {
  const auto& sol = devaney_in_solution();

  CHECK(sol.converged);
  CHECK(sol.constraint_active);
  CHECK(sol.kind == ContactKind::PositionJumping);
  CHECK(sol.delta_pos > sol.jump_tol);
  CHECK(sol.t_star < sol.t_star2);
  CHECK(sol.contact_last - sol.contact_first >= 10);

  // Regression value for this grid; the discretized minimum is stable far
  // below the tolerance used here.
  CHECK(sol.action == doctest::Approx(4.16040121).epsilon(5e-4));
}

TEST_CASE("contact arc satisfies the constrained equation of motion") {
  const auto& sol = devaney_in_solution();
  akp::ContactInfo<double> info;
  info.touches = true;
  info.first = sol.contact_first;
  info.last = sol.contact_last;
  const auto res = akp::constrained_el_residuals(make("devaney", 0.5), sol.path, info, sol.eps);
  REQUIRE(res.size() >= 10);
  CHECK(res.maxCoeff() < 2e-2);

  const auto rep = akp::kelvin_regularity_check(make("devaney", 0.5), sol);
  CHECK(rep.consistent);  // soft entry and exit: position-jumping signature
}

TEST_CASE("minimal action is sandwiched between the explicit bounds") {
  const auto& sol = devaney_in_solution();
  const auto p = make("devaney", 0.5);
  const auto prob = devaney_in_problem();

  const double above = akp::bound_above(p, prob.x1, prob.x2, prob.eps);
  CHECK(sol.action <= above + 1e-9);

  // Window on the approach leg, disjoint from the contact interval.
  const int w1 = sol.contact_last + 10;
  const int w2 = std::min(sol.path.segments() - 1, sol.contact_last + 50);
  REQUIRE(w1 < w2);
  const double below = akp::bound_below(p, sol.path, sol.eps, sol.contact_first, sol.contact_last, w1, w2);
  CHECK(below <= sol.action + 1e-9);
  CHECK(below > 0.5 * sol.action);  // the estimate is not vacuous
}

TEST_CASE("warm start reproduces the minimizer with a single restart") {
  auto prob = devaney_in_problem();
  prob.restarts = 1;
  prob.warm_times = devaney_in_solution().path.times;
  prob.warm_nodes = devaney_in_solution().path.nodes;
  const auto sol = akp::minimize_bolza(prob);
  CHECK(sol.action == doctest::Approx(devaney_in_solution().action).epsilon(1e-6));
  CHECK(sol.kind == ContactKind::PositionJumping);
}

TEST_CASE("repeated solves are bit-identical") {
  BolzaProblem<double> prob;
  prob.potential = make("isotropic", 1.0);
  prob.x1 = akp::unit2(1.0, 0.0);
  prob.x2 = Vector<double>(2);
  prob.x2 << 0.1, 0.0;
  prob.eps = 0.1;
  prob.grid_size = 200;
  prob.restarts = 2;
  const auto a = akp::minimize_bolza(prob);
  const auto b = akp::minimize_bolza(prob);
  CHECK(a.action == b.action);
  CHECK(a.iterations == b.iterations);

  const double expect = akp::homothetic_action(0.1, 1.0, 1.0, 1.0);
  CHECK(a.action == doctest::Approx(expect).epsilon(1e-4));
}

TEST_CASE("argument validation and failure codes") {
  BolzaProblem<double> prob;
  prob.potential = make("isotropic", 1.0);
  prob.x1 = akp::unit2(-1.0, 0.0);
  prob.x2 = akp::unit2(1.0, 0.0);

  SUBCASE("non-positive obstacle radius") {
    prob.eps = 0.0;
    CHECK_THROWS_WITH_AS(akp::minimize_bolza(prob), doctest::Contains("InvalidArgument"), Error);
  }
  SUBCASE("endpoint inside the obstacle") {
    prob.eps = 0.1;
    prob.x1 *= 0.05;
    try {
      akp::minimize_bolza(prob);
      FAIL("expected InfeasibleEndpoints");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InfeasibleEndpoints);
    }
  }
  SUBCASE("grid too coarse") {
    prob.eps = 0.2;
    prob.grid_size = 8;
    try {
      akp::minimize_bolza(prob);
      FAIL("expected InvalidArgument");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidArgument);
    }
  }
  SUBCASE("coincident endpoints on the obstacle") {
    prob.eps = 1.0;
    prob.x2 = prob.x1;
    try {
      akp::minimize_bolza(prob);
      FAIL("expected InvalidArgument");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidArgument);
    }
  }
  SUBCASE("rescaling by a non-positive factor") {
    try {
      akp::rescale_solution(kepler_solution(), 0.0);
      FAIL("expected InvalidArgument");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidArgument);
    }
  }
  SUBCASE("contact detection on a path clear of the obstacle") {
    try {
      akp::detect_contact(kepler_solution().path, 0.05);
      FAIL("expected NoContact");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoContact);
    }
  }
}
