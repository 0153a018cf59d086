#pragma once

// Action functionals on discrete paths: the fixed-time Lagrangian action, the
// time-free reformulation on [-1, 1], time recovery, zero-energy re-timing,
// the collision-homothetic closed forms, and the level estimates used to
// sandwich minimizers.
//
// Quadrature convention, shared with the minimizer gradients: the kinetic term
// integrates the exact energy of the piecewise-linear interpolant (midpoint
// rule per segment); the potential term is trapezoidal in the node values.

#include <cmath>
#include <numbers>

#include "akp/path.hpp"
#include "akp/potential.hpp"
#include "akp/types.hpp"

namespace akp {

template <typename S>
struct ActionBreakdown {
  S kinetic = S(0);
  S potential = S(0);
  S total = S(0);
  Vector<S> per_segment;
};

template <typename S>
inline ActionBreakdown<S> lagrangian_action(const HomogeneousPotential<S>& p, const DiscretePath<S>& path) {
  validate_path(path, "lagrangian_action");
  const int n = path.segments();
  Vector<S> vpot(n + 1);
  for (int i = 0; i <= n; ++i) {
    if (path.nodes.col(i).norm() < S(1e-12))
      fail(ErrorCode::CollisionNode, "node " + std::to_string(i) + " within 1e-12 of the singularity");
    vpot[i] = eval_v(p, Vector<S>(path.nodes.col(i)));
  }
  ActionBreakdown<S> out;
  out.per_segment.resize(n);
  for (int i = 0; i < n; ++i) {
    const S dt = path.times[i + 1] - path.times[i];
    const S kin = (path.nodes.col(i + 1) - path.nodes.col(i)).squaredNorm() / (S(2) * dt);
    const S pot = dt * (vpot[i] + vpot[i + 1]) / S(2);
    out.kinetic += kin;
    out.potential += pot;
    out.per_segment[i] = kin + pot;
  }
  out.total = out.kinetic + out.potential;
  return out;
}

template <typename S>
struct MaupertuisValue {
  S j = S(0);        // (int 1/2 |y'|^2) * (int V(y))
  S kinetic = S(0);  // int 1/2 |y'|^2
  S potential = S(0);
};

/// Time-free functional on the normalized interval [-1, 1].
template <typename S>
inline MaupertuisValue<S> maupertuis_j(const HomogeneousPotential<S>& p, const DiscretePath<S>& path) {
  validate_path(path, "maupertuis_j");
  const int n = path.segments();
  if (std::abs(path.times[0] + S(1)) > S(1e-12) || std::abs(path.times[n] - S(1)) > S(1e-12))
    fail(ErrorCode::BadDomain, "maupertuis functional requires the normalized span [-1, 1]");
  const ActionBreakdown<S> parts = lagrangian_action(p, path);
  return MaupertuisValue<S>{parts.kinetic * parts.potential, parts.kinetic, parts.potential};
}

template <typename S>
struct RecoveredTime {
  S t_bar = S(0);
  DiscretePath<S> path;  // on [-t_bar, t_bar]
};

/// Natural time of the zero-energy trajectory associated with a path on
/// [-1, 1]: x(tau) = y(tau / t_bar) has vanishing mean energy discretely.
template <typename S>
inline RecoveredTime<S> recover_time(const HomogeneousPotential<S>& p, const DiscretePath<S>& path) {
  const MaupertuisValue<S> m = maupertuis_j(p, path);
  if (m.kinetic < S(1e-14)) fail(ErrorCode::DegeneratePath, "kinetic integral below 1e-14");
  RecoveredTime<S> out;
  out.t_bar = std::sqrt(m.kinetic / m.potential);
  out.path.nodes = path.nodes;
  out.path.times = out.t_bar * path.times;
  return out;
}

/// Re-times a path so that every segment satisfies the discrete zero-energy
/// relation (kinetic density equals the segment-mean potential).  Fixed point:
/// applying it to its own output changes nothing.
template <typename S>
inline DiscretePath<S> zero_energy_reparam(const HomogeneousPotential<S>& p, const DiscretePath<S>& path) {
  validate_path(path, "zero_energy_reparam");
  const int n = path.segments();
  DiscretePath<S> out;
  out.nodes = path.nodes;
  out.times.resize(n + 1);
  out.times[0] = path.times[0];
  for (int i = 0; i < n; ++i) {
    const S dt = path.times[i + 1] - path.times[i];
    const S kin_density = (path.nodes.col(i + 1) - path.nodes.col(i)).squaredNorm() / (S(2) * dt * dt);
    if (kin_density < S(1e-12))
      fail(ErrorCode::StalledSegment, "segment " + std::to_string(i) + " is stationary");
    const S vm = (eval_v(p, Vector<S>(path.nodes.col(i))) + eval_v(p, Vector<S>(path.nodes.col(i + 1)))) / S(2);
    out.times[i + 1] = out.times[i] + dt * std::sqrt(kin_density / vm);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Collision-homothetic closed forms
// ---------------------------------------------------------------------------

/// Action of the monotone zero-energy radial solution between radii r_minus
/// and r_plus at angular level gamma: sqrt(2 gamma)/alpha* (r+^a* - r-^a*).
template <typename S>
inline S homothetic_action(S r_minus, S r_plus, S gamma_level, S alpha) {
  if (!(alpha > S(0) && alpha < S(2))) fail(ErrorCode::BadExponent, "homothetic_action requires 0 < alpha < 2");
  if (!(r_minus >= S(0) && r_plus >= r_minus)) fail(ErrorCode::InvalidArgument, "need 0 <= r_minus <= r_plus");
  if (!(gamma_level > S(0))) fail(ErrorCode::InvalidArgument, "gamma level must be positive");
  const S as = (S(2) - alpha) / S(2);
  return std::sqrt(S(2) * gamma_level) / as * (std::pow(r_plus, as) - std::pow(r_minus, as));
}

template <typename S>
inline S homothetic_half_time(S r_minus, S r_plus, S gamma_level, S alpha) {
  const S c = (S(2) + alpha) / S(2);
  return (std::pow(r_plus, c) - std::pow(r_minus, c)) / ((alpha + S(2)) * std::sqrt(S(2) * gamma_level));
}

/// Samples the explicit monotone radial solution r(t) on [-T, T] along the
/// unit direction xi.  r(-T) = r_minus, r(T) = r_plus,
/// r(t) = [ (alpha+2)/2 sqrt(2 gamma) t + (r+^c + r-^c)/2 ]^(1/c), c=(2+alpha)/2.
/// For r_minus at (or near) zero the grid is graded uniformly in r^{alpha*}
/// and the collision endpoint is replaced by a half-step start, which keeps
/// the trapezoidal action convergent despite the singular end.
template <typename S>
inline DiscretePath<S> homothetic_profile(S gamma_level, S alpha, S r_minus, S r_plus, int n,
                                          const Vector<S>& xi) {
  if (!(alpha > S(0) && alpha < S(2))) fail(ErrorCode::BadExponent, "homothetic_profile requires 0 < alpha < 2");
  if (!(r_minus >= S(0) && r_plus > r_minus)) fail(ErrorCode::InvalidArgument, "need 0 <= r_minus < r_plus");
  if (n < 2) fail(ErrorCode::InvalidArgument, "need at least 2 segments");
  detail::check_unit(xi, "homothetic_profile");
  const S c = (S(2) + alpha) / S(2);
  const S as = (S(2) - alpha) / S(2);
  const S speed = (alpha + S(2)) / S(2) * std::sqrt(S(2) * gamma_level);  // d (r^c) / dt
  const S center = (std::pow(r_plus, c) + std::pow(r_minus, c)) / S(2);
  auto time_of_radius = [&](S r) { return (std::pow(r, c) - center) / speed; };

  DiscretePath<S> path;
  path.times.resize(n + 1);
  path.nodes.resize(int(xi.size()), n + 1);
  if (r_minus > S(0.01) * r_plus) {
    // Smooth regime: uniform time grid.
    const S t_bar = homothetic_half_time(r_minus, r_plus, gamma_level, alpha);
    for (int i = 0; i <= n; ++i) {
      const S t = -t_bar + S(2) * t_bar * S(i) / S(n);
      const S r = std::pow(speed * t + center, S(1) / c);
      path.times[i] = t;
      path.nodes.col(i) = r * xi;
    }
  } else {
    // Near-collision regime: grade uniformly in u = r^{alpha*}, equal action
    // per segment; floor the first node half a grid step above the collision.
    const S u_hi = std::pow(r_plus, as);
    const S du = u_hi / S(n);
    const S u_lo = std::max(std::pow(r_minus, as), du / S(2));
    for (int i = 0; i <= n; ++i) {
      const S u = u_lo + (u_hi - u_lo) * S(i) / S(n);
      const S r = std::pow(u, S(1) / as);
      path.times[i] = time_of_radius(r);
      path.nodes.col(i) = r * xi;
    }
  }
  return path;
}

// ---------------------------------------------------------------------------
// Level estimates
// ---------------------------------------------------------------------------

/// Largest angular value, sampled on a quasi-uniform net.
template <typename S>
inline S angular_max(const HomogeneousPotential<S>& p, int n_samples = 10000) {
  SphereNet<S> net = sphere_net<S>(p.angular.dim, n_samples);
  S vmax = -std::numeric_limits<S>::infinity();
  for (const Vector<S>& s : net.points) vmax = std::max(vmax, p.angular.eval(s));
  return vmax;
}

/// Upper level estimate: two homothetic legs plus a great-circle arc crawled
/// at radius eps.
template <typename S>
inline S bound_above(const HomogeneousPotential<S>& p, const Vector<S>& x1, const Vector<S>& x2, S eps) {
  const S r1 = x1.norm(), r2 = x2.norm();
  if (!(eps > S(0)) || eps > std::min(r1, r2) * (S(1) + S(1e-12)))
    fail(ErrorCode::InvalidArgument, "bound_above requires 0 < eps <= min(|x1|, |x2|)");
  const Vector<S> s1 = x1 / r1, s2 = x2 / r2;
  const S as = p.alpha_star;
  const S vmax = angular_max(p);
  return homothetic_action(eps, r1, p.angular.eval(s1), p.alpha) +
         homothetic_action(eps, r2, p.angular.eval(s2), p.alpha) +
         S(std::numbers::pi) / S(2) * std::pow(eps, as) * (s2 - s1).norm() * std::sqrt(S(2) * vmax);
}

/// Lower level estimate evaluated on a concrete path: homothetic legs from the
/// obstacle to the endpoint radii, the angular crawl along the contact set
/// [a, b], and the sphere-distance term over an angular window [w1, w2]
/// disjoint from (a, b).  Node indices delimit the intervals.
template <typename S>
inline S bound_below(const HomogeneousPotential<S>& p, const DiscretePath<S>& path, S eps,
                     int contact_first, int contact_last, int window_first, int window_last) {
  validate_path(path, "bound_below");
  const int n = int(path.times.size());
  auto in_range = [n](int i) { return i >= 0 && i < n; };
  if (!in_range(contact_first) || !in_range(contact_last) || contact_first > contact_last)
    fail(ErrorCode::BadWindow, "contact interval out of range");
  if (!in_range(window_first) || !in_range(window_last) || window_first > window_last)
    fail(ErrorCode::BadWindow, "window out of range");
  const bool disjoint = window_last <= contact_first || window_first >= contact_last;
  if (!disjoint) fail(ErrorCode::BadWindow, "window overlaps the contact interval");

  const S as = p.alpha_star;
  const S v_min = p.angular.v_min;
  const Vector<S> radii = path_radii(path);
  auto dir = [&](int i) { return Vector<S>(path.nodes.col(i) / radii[i]); };

  S gamma_win = std::numeric_limits<S>::infinity();
  S rmin_win = std::numeric_limits<S>::infinity();
  for (int i = window_first; i <= window_last; ++i) {
    gamma_win = std::min(gamma_win, p.angular.eval(dir(i)) - v_min);
    rmin_win = std::min(rmin_win, radii[i]);
  }
  gamma_win = std::max(gamma_win, S(0));

  S value = homothetic_action(eps, radii[0], v_min, p.alpha) +
            homothetic_action(eps, radii[n - 1], v_min, p.alpha) +
            std::sqrt(S(2) * v_min) * std::pow(eps, as) * (dir(contact_last) - dir(contact_first)).norm();
  if (gamma_win > S(0))
    value += std::sqrt(S(2) * gamma_win) * std::pow(rmin_win, as) * (dir(window_last) - dir(window_first)).norm();
  return value;
}

/// Virial identity on a radially monotone stretch: the action equals
/// (1/alpha*) [r rdot] between the stretch ends, with one-sided difference
/// quotients for the boundary radial velocities.
template <typename S>
inline S virial_level(const HomogeneousPotential<S>& p, const DiscretePath<S>& path, int first, int last) {
  validate_path(path, "virial_level");
  if (first < 0 || last >= int(path.times.size()) || last - first < 2)
    fail(ErrorCode::InvalidArgument, "virial_level needs at least two segments in range");
  const Vector<S> radii = path_radii(path);
  const S dir0 = radii[first + 1] - radii[first];
  for (int i = first; i < last; ++i)
    if ((radii[i + 1] - radii[i]) * dir0 <= S(0))
      fail(ErrorCode::NotMonotone, "radius is not strictly monotone on the requested stretch");
  const S rdot_a = (radii[first + 1] - radii[first]) / (path.times[first + 1] - path.times[first]);
  const S rdot_b = (radii[last] - radii[last - 1]) / (path.times[last] - path.times[last - 1]);
  return (radii[last] * rdot_b - radii[first] * rdot_a) / p.alpha_star;
}

// ---------------------------------------------------------------------------
// Pointwise residual diagnostics
// ---------------------------------------------------------------------------

/// Relative Euler-Lagrange residual |xdd - grad V| / |grad V| at interior
/// nodes (endpoints get zero).
template <typename S>
inline Vector<S> el_residuals(const HomogeneousPotential<S>& p, const DiscretePath<S>& path) {
  const int n = int(path.times.size());
  Vector<S> res = Vector<S>::Zero(n);
  for (int i = 1; i + 1 < n; ++i) {
    const Vector<S> acc = second_difference_cols(path.times, path.nodes, i);
    const Vector<S> g = grad_v(p, Vector<S>(path.nodes.col(i)));
    res[i] = (acc - g).norm() / std::max(g.norm(), S(1e-12));
  }
  return res;
}

/// Relative defect of the radial convexity identity
/// (r^2)'' = 2 (2 - alpha) V(x) at interior nodes.
template <typename S>
inline Vector<S> lagrange_jacobi_residuals(const HomogeneousPotential<S>& p, const DiscretePath<S>& path) {
  const int n = int(path.times.size());
  Vector<S> r2(n);
  for (int i = 0; i < n; ++i) r2[i] = path.nodes.col(i).squaredNorm();
  Vector<S> res = Vector<S>::Zero(n);
  for (int i = 1; i + 1 < n; ++i) {
    const S lhs = second_difference(path.times, r2, i);
    const S rhs = S(2) * (S(2) - p.alpha) * eval_v(p, Vector<S>(path.nodes.col(i)));
    res[i] = std::abs(lhs - rhs) / std::abs(rhs);
  }
  return res;
}

/// Pointwise relative energy defect |1/2 |xdot|^2 - V| / V at nodes, with
/// one-sided velocities at the path ends and optionally at flagged nodes
/// (contact boundaries).
template <typename S>
inline Vector<S> energy_residuals(const HomogeneousPotential<S>& p, const DiscretePath<S>& path) {
  const NodeMatrix<S> vel = node_velocities(path);
  const int n = int(path.times.size());
  Vector<S> res(n);
  for (int i = 0; i < n; ++i) {
    const S v = eval_v(p, Vector<S>(path.nodes.col(i)));
    res[i] = std::abs(vel.col(i).squaredNorm() / S(2) - v) / v;
  }
  return res;
}

}  // namespace akp
