#pragma once

// Reduced planar system for zero-energy trajectories of anisotropic Kepler
// problems.  On the circle the potential is U(theta) = V(cos theta, sin theta)
// and, after the Devaney change of variables and time rescaling, parabolic
// orbits project onto the planar system
//
//   theta' = 2 U(theta) sin(phi - theta)
//   phi'   = U'(theta) cos(phi - theta) + alpha U(theta) sin(phi - theta).
//
// Stationary points have sin(phi* - theta*) = 0 and U'(theta*) = 0;
// nondegenerate minima of U give saddles, maxima give sinks/sources.
// The functional v = sqrt(U) cos(phi - theta) is nondecreasing along orbits,
// which makes the section v = 0 a clean place to measure saddle connections.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "akp/potential.hpp"

namespace akp {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Angular potential restricted to the circle: closures for U and U', the
/// range [u_min, u_max], and the polished local minima in [0, 2 pi).
template <typename S>
struct PlanarPotential {
  std::function<S(S)> u;   // 2 pi - periodic
  std::function<S(S)> du;  // derivative
  S u_min = S(0), u_max = S(0);
  std::vector<S> minima;
};

template <typename S>
struct PhasePoint {
  S theta = S(0);
  S phi = S(0);
};

enum class Termination { ReachedSink, ReachedTarget, LeftWindow, MaxTime };

inline const char* termination_name(Termination t) {
  switch (t) {
    case Termination::ReachedSink: return "ReachedSink";
    case Termination::ReachedTarget: return "ReachedTarget";
    case Termination::LeftWindow: return "LeftWindow";
    case Termination::MaxTime: return "MaxTime";
  }
  return "?";
}

template <typename S>
struct PlanarOrbit {
  std::vector<S> taus;  // pseudo-time grid (increasing)
  std::vector<PhasePoint<S>> states;
  std::vector<S> v_samples;  // nondecreasing along forward orbits
  Termination termination = Termination::MaxTime;
  // Linear event interpolation of theta at the (single, by monotonicity)
  // crossing of the section v = 0; NaN when the orbit never crosses.
  S theta_at_v0 = std::numeric_limits<S>::quiet_NaN();
};

enum class EquilibriumType { Saddle, Sink, Source };

inline const char* equilibrium_name(EquilibriumType t) {
  switch (t) {
    case EquilibriumType::Saddle: return "saddle";
    case EquilibriumType::Sink: return "sink";
    case EquilibriumType::Source: return "source";
  }
  return "?";
}

template <typename S>
struct Equilibrium {
  PhasePoint<S> point;
  EquilibriumType type = EquilibriumType::Saddle;
  S lambda1 = S(0), lambda2 = S(0);  // eigenvalue real parts, lambda1 <= lambda2
};

/// Event configuration for integrate(): a theta window, registered
/// equilibria (sinks terminate with ReachedSink, targets with ReachedTarget)
/// tested by proximity, the v boundary |v| >= sqrt(U) - margin attributed to
/// the nearest registered point within capture_radius, and optional hard
/// stop levels on v itself.
template <typename S>
struct PlanarEvents {
  S theta_min = -std::numeric_limits<S>::infinity();
  S theta_max = std::numeric_limits<S>::infinity();
  std::vector<PhasePoint<S>> sinks;
  std::vector<PhasePoint<S>> targets;
  S proximity = S(1e-6);
  S v_margin = S(1e-6);
  S capture_radius = S(0.5);
  S v_stop_high = std::numeric_limits<S>::quiet_NaN();  // v >= level -> ReachedTarget
  S v_stop_low = std::numeric_limits<S>::quiet_NaN();   // v <= level -> ReachedTarget
};

template <typename S>
struct IntegrateOptions {
  S step = S(1e-3);
  int stride = 10;        // sample every stride-th step (terminal always kept)
  bool reversed = false;  // integrate the time-reversed field
};

// ---------------------------------------------------------------------------
// Fields
// ---------------------------------------------------------------------------

template <typename S>
inline S v_of(const PlanarPotential<S>& u, const PhasePoint<S>& p) {
  return std::sqrt(u.u(p.theta)) * std::cos(p.phi - p.theta);
}

template <typename S>
inline std::pair<S, S> devaney_field(const PlanarPotential<S>& u, S alpha,
                                     const PhasePoint<S>& p) {
  if (!(alpha > S(0)) || !(alpha < S(2)))
    fail(ErrorCode::BadExponent, "homogeneity exponent must lie in (0, 2)");
  const S uu = u.u(p.theta);
  const S sd = std::sin(p.phi - p.theta);
  const S cd = std::cos(p.phi - p.theta);
  return {S(2) * uu * sd, u.du(p.theta) * cd + alpha * uu * sd};
}

/// Rescaled 4D system on (r, z, theta, phi); the set z = sqrt(2 U(theta)) is
/// invariant and carries the zero-energy orbits.  Physical time is recovered
/// by integrating dt/dtau = z r^{1 + alpha/2} alongside.
template <typename S>
inline std::array<S, 4> extended_field(const PlanarPotential<S>& u, S alpha,
                                       const std::array<S, 4>& state) {
  const S r = state[0], z = state[1], theta = state[2], phi = state[3];
  if (!(r > S(0)) || !(z > S(0)))
    fail(ErrorCode::NonPositiveRZ, "extended system requires r > 0 and z > 0");
  const S uu = u.u(theta);
  const S dd = u.du(theta);
  const S sd = std::sin(phi - theta);
  const S cd = std::cos(phi - theta);
  return {S(2) * r * uu * cd, z * dd * sd, S(2) * uu * sd, dd * cd + alpha * uu * sd};
}

template <typename S>
inline S time_factor(S alpha, const std::array<S, 4>& state) {
  return state[1] * std::pow(state[0], S(1) + alpha / S(2));
}

// ---------------------------------------------------------------------------
// Construction from an angular potential
// ---------------------------------------------------------------------------

/// Restricts a validated (d = 2) angular potential to closures on the angle,
/// scans the range, and polishes the local minima.  The flat (isotropic)
/// case yields an empty minima list with u_min = u_max.
template <typename S>
inline PlanarPotential<S> planar_potential(const AngularPotential<S>& ang) {
  if (ang.dim != 2)
    fail(ErrorCode::InvalidArgument, "planar reduction needs a potential on the circle");
  PlanarPotential<S> out;
  out.u = [ang](S theta) {
    Vector<S> s(2);
    s << std::cos(theta), std::sin(theta);
    return ang.eval(s);
  };
  out.du = [ang](S theta) {
    Vector<S> s(2), t(2);
    s << std::cos(theta), std::sin(theta);
    t << -std::sin(theta), std::cos(theta);
    return ang.grad(s).dot(t);
  };

  const int n = 4096;
  const S two_pi = S(2) * S(std::numbers::pi);
  out.u_min = std::numeric_limits<S>::infinity();
  out.u_max = -std::numeric_limits<S>::infinity();
  S du_scale = S(0);
  std::vector<S> dus(n + 1);
  for (int i = 0; i <= n; ++i) {
    const S th = two_pi * S(i) / S(n);
    const S val = out.u(th);
    out.u_min = std::min(out.u_min, val);
    out.u_max = std::max(out.u_max, val);
    dus[i] = out.du(th);
    du_scale = std::max(du_scale, std::abs(dus[i]));
  }
  if (du_scale < S(1e-10)) return out;  // flat: no isolated critical points

  auto ddu = [&](S th) { return (out.du(th + S(1e-5)) - out.du(th - S(1e-5))) / S(2e-5); };
  for (int i = 0; i < n; ++i) {
    if (!(dus[i] == S(0) || dus[i] * dus[i + 1] < S(0))) continue;
    S th = two_pi * (S(i) + S(0.5)) / S(n);
    for (int it = 0; it < 60; ++it) {
      const S d2 = ddu(th);
      if (std::abs(d2) < S(1e-12)) break;
      const S step = out.du(th) / d2;
      th -= step;
      if (std::abs(step) < S(1e-15)) break;
    }
    th = th - two_pi * std::floor(th / two_pi);
    if (th >= two_pi) th = S(0);  // seam: -eps wraps to 2 pi, canonicalize
    if (!(std::abs(out.du(th)) < S(1e-10)) || !(ddu(th) > S(0))) continue;
    bool dup = false;
    for (S prev : out.minima)
      if (std::abs(prev - th) < S(1e-8) || std::abs(std::abs(prev - th) - two_pi) < S(1e-8))
        dup = true;
    if (!dup) {
      out.minima.push_back(th);
      out.u_min = std::min(out.u_min, out.u(th));
    }
  }
  std::sort(out.minima.begin(), out.minima.end());
  return out;
}

// ---------------------------------------------------------------------------
// Integration
// ---------------------------------------------------------------------------

template <typename S>
inline PlanarOrbit<S> integrate(const PlanarPotential<S>& u, S alpha, const PhasePoint<S>& p0,
                                S horizon, const PlanarEvents<S>& ev = {},
                                const IntegrateOptions<S>& opt = {}) {
  if (!(horizon > S(0))) fail(ErrorCode::InvalidArgument, "horizon must be positive");
  if (!(opt.step > S(0)) || opt.stride < 1)
    fail(ErrorCode::InvalidArgument, "step must be positive and stride at least 1");
  const S h = opt.step;
  const S dir = opt.reversed ? S(-1) : S(1);
  const long steps = long(std::ceil(horizon / h));

  PlanarOrbit<S> out;
  auto field = [&](const PhasePoint<S>& p) {
    auto [dt, dp] = devaney_field(u, alpha, p);
    return PhasePoint<S>{dir * dt, dir * dp};
  };
  auto record = [&](S tau, const PhasePoint<S>& p, S v) {
    out.taus.push_back(tau);
    out.states.push_back(p);
    out.v_samples.push_back(v);
  };

  PhasePoint<S> p = p0;
  S v = v_of(u, p);
  record(S(0), p, v);

  auto near = [&](const PhasePoint<S>& a, const PhasePoint<S>& b, S rad) {
    return std::hypot(a.theta - b.theta, a.phi - b.phi) < rad;
  };
  auto capture = [&](const PhasePoint<S>& q, Termination& term) {
    const PhasePoint<S>* best = nullptr;
    S best_d = ev.capture_radius;
    for (const auto& s : ev.sinks) {
      const S d = std::hypot(q.theta - s.theta, q.phi - s.phi);
      if (d < best_d) best = &s, best_d = d, term = Termination::ReachedSink;
    }
    for (const auto& t : ev.targets) {
      const S d = std::hypot(q.theta - t.theta, q.phi - t.phi);
      if (d < best_d) best = &t, best_d = d, term = Termination::ReachedTarget;
    }
    return best != nullptr;
  };

  for (long s = 1; s <= steps; ++s) {
    const PhasePoint<S> k1 = field(p);
    const PhasePoint<S> p2{p.theta + h / S(2) * k1.theta, p.phi + h / S(2) * k1.phi};
    const PhasePoint<S> k2 = field(p2);
    const PhasePoint<S> p3{p.theta + h / S(2) * k2.theta, p.phi + h / S(2) * k2.phi};
    const PhasePoint<S> k3 = field(p3);
    const PhasePoint<S> p4{p.theta + h * k3.theta, p.phi + h * k3.phi};
    const PhasePoint<S> k4 = field(p4);
    const PhasePoint<S> pn{
        p.theta + h / S(6) * (k1.theta + S(2) * k2.theta + S(2) * k3.theta + k4.theta),
        p.phi + h / S(6) * (k1.phi + S(2) * k2.phi + S(2) * k3.phi + k4.phi)};
    const S tau = S(s) * h;
    const S vn = v_of(u, pn);

    if (!std::isfinite(out.theta_at_v0) && ((v < S(0) && vn >= S(0)) || (v > S(0) && vn <= S(0)))) {
      const S f = (S(0) - v) / (vn - v);
      out.theta_at_v0 = p.theta + f * (pn.theta - p.theta);
    }

    bool done = false;
    Termination term = Termination::MaxTime;
    for (const auto& q : ev.sinks)
      if (near(pn, q, ev.proximity)) done = true, term = Termination::ReachedSink;
    if (!done)
      for (const auto& q : ev.targets)
        if (near(pn, q, ev.proximity)) done = true, term = Termination::ReachedTarget;
    if (!done && std::abs(vn) >= std::sqrt(u.u(pn.theta)) - ev.v_margin) {
      Termination t2 = Termination::MaxTime;
      if (capture(pn, t2)) done = true, term = t2;
    }
    if (!done && std::isfinite(ev.v_stop_high) && vn >= ev.v_stop_high)
      done = true, term = Termination::ReachedTarget;
    if (!done && std::isfinite(ev.v_stop_low) && vn <= ev.v_stop_low)
      done = true, term = Termination::ReachedTarget;
    if (!done && (pn.theta < ev.theta_min || pn.theta > ev.theta_max))
      done = true, term = Termination::LeftWindow;

    p = pn;
    v = vn;
    if (done || s == steps || s % opt.stride == 0) record(tau, p, v);
    if (done) {
      out.termination = term;
      return out;
    }
  }
  out.termination = Termination::MaxTime;
  return out;
}

/// One-shot 4D integration of the rescaled system (fixed-step RK4, dense
/// output every stride steps), carrying physical time alongside.
template <typename S>
struct ExtendedOrbit {
  std::vector<S> taus, ts;  // pseudo and physical time
  std::vector<std::array<S, 4>> states;  // (r, z, theta, phi)
};

template <typename S>
inline ExtendedOrbit<S> integrate_extended(const PlanarPotential<S>& u, S alpha,
                                           const std::array<S, 4>& s0, S horizon,
                                           S h = S(1e-3), int stride = 10) {
  if (!(horizon > S(0)) || !(h > S(0)) || stride < 1)
    fail(ErrorCode::InvalidArgument, "need positive horizon and step, stride at least 1");
  extended_field(u, alpha, s0);  // validates r, z > 0
  ExtendedOrbit<S> out;
  std::array<S, 4> y = s0;
  S t_phys = S(0);
  out.taus.push_back(S(0));
  out.ts.push_back(t_phys);
  out.states.push_back(y);
  const long steps = long(std::ceil(horizon / h));
  auto add = [](const std::array<S, 4>& a, S c, const std::array<S, 4>& b) {
    return std::array<S, 4>{a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2], a[3] + c * b[3]};
  };
  for (long s = 1; s <= steps; ++s) {
    const auto k1 = extended_field(u, alpha, y);
    const auto k2 = extended_field(u, alpha, add(y, h / S(2), k1));
    const auto k3 = extended_field(u, alpha, add(y, h / S(2), k2));
    const auto k4 = extended_field(u, alpha, add(y, h, k3));
    // Trapezoid on the time factor is enough: dt/dtau is smooth and the
    // physical clock is diagnostic, not dynamical.
    const S tf0 = time_factor(alpha, y);
    for (int j = 0; j < 4; ++j)
      y[j] += h / S(6) * (k1[j] + S(2) * k2[j] + S(2) * k3[j] + k4[j]);
    t_phys += h / S(2) * (tf0 + time_factor(alpha, y));
    if (!(y[0] > S(0)) || !(y[1] > S(0)))
      fail(ErrorCode::NonPositiveRZ, "rescaled state left the positive cone");
    if (s % stride == 0 || s == steps) {
      out.taus.push_back(S(s) * h);
      out.ts.push_back(t_phys);
      out.states.push_back(y);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Equilibria
// ---------------------------------------------------------------------------

namespace detail {

/// Numeric Jacobian of the planar field (central differences, step 1e-6).
template <typename S>
inline std::array<S, 4> planar_jacobian(const PlanarPotential<S>& u, S alpha,
                                        const PhasePoint<S>& p) {
  const S h = S(1e-6);
  const auto ft = [&](S th, S ph) { return devaney_field(u, alpha, PhasePoint<S>{th, ph}); };
  const auto [a1, b1] = ft(p.theta + h, p.phi);
  const auto [a2, b2] = ft(p.theta - h, p.phi);
  const auto [a3, b3] = ft(p.theta, p.phi + h);
  const auto [a4, b4] = ft(p.theta, p.phi - h);
  return {(a1 - a2) / (S(2) * h), (a3 - a4) / (S(2) * h), (b1 - b2) / (S(2) * h),
          (b3 - b4) / (S(2) * h)};
}

/// Eigenvector of the 2x2 Jacobian [j0 j1; j2 j3] for eigenvalue lambda,
/// picking the better-conditioned row.
template <typename S>
inline PhasePoint<S> eigvec2(const std::array<S, 4>& j, S lambda) {
  PhasePoint<S> w;
  if (std::abs(j[1]) >= std::abs(j[2])) {
    w = PhasePoint<S>{j[1], lambda - j[0]};
  } else {
    w = PhasePoint<S>{lambda - j[3], j[2]};
  }
  const S nrm = std::hypot(w.theta, w.phi);
  if (nrm > S(0)) {
    w.theta /= nrm;
    w.phi /= nrm;
  }
  return w;
}

}  // namespace detail

/// All stationary points (theta*, phi*) with theta* in [theta_lo, theta_hi):
/// roots of U' (Newton-polished) paired with both momentum branches
/// phi* = theta* and theta* + pi, classified by the eigenvalues of the
/// numeric linearization.  Flat potentials (isotropic) have no isolated
/// critical points and raise DegenerateCritical, as does any root where the
/// curvature |U''| falls below 1e-8.
template <typename S>
inline std::vector<Equilibrium<S>> equilibria(const PlanarPotential<S>& u, S alpha,
                                              S theta_lo = S(0),
                                              S theta_hi = S(2) * S(std::numbers::pi)) {
  if (!(theta_hi > theta_lo)) fail(ErrorCode::InvalidArgument, "empty theta window");
  const int n = std::max(256, int(S(2048) * (theta_hi - theta_lo) / (S(2) * S(std::numbers::pi))));
  std::vector<S> dus(n + 1);
  S du_scale = S(0);
  for (int i = 0; i <= n; ++i) {
    dus[i] = u.du(theta_lo + (theta_hi - theta_lo) * S(i) / S(n));
    du_scale = std::max(du_scale, std::abs(dus[i]));
  }
  if (du_scale < S(1e-10))
    fail(ErrorCode::DegenerateCritical, "flat angular potential: every direction is critical");

  auto ddu = [&](S th) { return (u.du(th + S(1e-5)) - u.du(th - S(1e-5))) / S(2e-5); };
  std::vector<S> roots;
  for (int i = 0; i < n; ++i) {
    if (!(dus[i] == S(0) || dus[i] * dus[i + 1] < S(0))) continue;
    S th = theta_lo + (theta_hi - theta_lo) * (S(i) + S(0.5)) / S(n);
    for (int it = 0; it < 60; ++it) {
      const S d2 = ddu(th);
      if (std::abs(d2) < S(1e-12)) break;
      const S step = u.du(th) / d2;
      th -= step;
      if (std::abs(step) < S(1e-15)) break;
    }
    // Canonicalize by periodicity into [theta_lo, theta_lo + 2 pi) so a root
    // polished just past either edge of a full-period window is not lost.
    const S two_pi = S(2) * S(std::numbers::pi);
    S rel = std::fmod(th - theta_lo, two_pi);
    if (rel < S(0)) rel += two_pi;
    if (rel >= two_pi) rel = S(0);
    th = theta_lo + rel;
    if (th >= theta_hi) continue;
    bool dup = false;
    for (S prev : roots)
      if (std::abs(prev - th) < S(1e-8)) dup = true;
    if (dup) continue;
    if (std::abs(ddu(th)) < S(1e-8))
      fail(ErrorCode::DegenerateCritical, "degenerate critical direction of U");
    roots.push_back(th);
  }

  std::vector<Equilibrium<S>> out;
  for (S th : roots) {
    for (int branch = 0; branch < 2; ++branch) {
      Equilibrium<S> eq;
      eq.point = PhasePoint<S>{th, th + S(branch) * S(std::numbers::pi)};
      const auto j = detail::planar_jacobian(u, alpha, eq.point);
      const S tr = j[0] + j[3];
      const S det = j[0] * j[3] - j[1] * j[2];
      const S disc = tr * tr - S(4) * det;
      if (det < S(0)) {
        eq.type = EquilibriumType::Saddle;
        eq.lambda1 = (tr - std::sqrt(disc)) / S(2);
        eq.lambda2 = (tr + std::sqrt(disc)) / S(2);
      } else {
        eq.type = tr < S(0) ? EquilibriumType::Sink : EquilibriumType::Source;
        if (disc >= S(0)) {
          eq.lambda1 = (tr - std::sqrt(disc)) / S(2);
          eq.lambda2 = (tr + std::sqrt(disc)) / S(2);
        } else {
          eq.lambda1 = eq.lambda2 = tr / S(2);  // real part of the complex pair
        }
      }
      out.push_back(eq);
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.point.theta < b.point.theta ||
           (a.point.theta == b.point.theta && a.point.phi < b.point.phi);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Shooting and saddle connections
// ---------------------------------------------------------------------------

/// Integrates the unstable manifold of a saddle from saddle + offset * w,
/// where w is the unstable eigenvector.  direction = +1 / -1 forces the
/// perturbation sign; 0 picks the sign entering the half-plane
/// sin(phi - theta) > 0, the side that heads toward the next minimal
/// direction.
template <typename S>
inline PlanarOrbit<S> shoot_unstable(const PlanarPotential<S>& u, S alpha,
                                     const PhasePoint<S>& saddle, S offset = S(1e-8),
                                     int direction = 0, S horizon = S(100),
                                     const PlanarEvents<S>& ev = {},
                                     const IntegrateOptions<S>& opt = {}) {
  if (!(offset > S(0))) fail(ErrorCode::InvalidArgument, "offset must be positive");
  const auto j = detail::planar_jacobian(u, alpha, saddle);
  const S det = j[0] * j[3] - j[1] * j[2];
  if (!(det < S(0)))
    fail(ErrorCode::InvalidArgument, "shooting point is not a saddle of the planar field");
  const S tr = j[0] + j[3];
  const S lam_u = (tr + std::sqrt(tr * tr - S(4) * det)) / S(2);
  const PhasePoint<S> w = detail::eigvec2(j, lam_u);
  S sign = S(direction);
  if (direction == 0) {
    // sin(phi - theta) near the saddle ~ cos(phi* - theta*) (dphi - dtheta).
    const S cd = std::cos(saddle.phi - saddle.theta);
    sign = (cd * (w.phi - w.theta) > S(0)) ? S(1) : S(-1);
  }
  const PhasePoint<S> p0{saddle.theta + sign * offset * w.theta,
                         saddle.phi + sign * offset * w.phi};
  return integrate(u, alpha, p0, horizon, ev, opt);
}

template <typename S>
struct SaddleConnection {
  S alpha_bar = S(0);
  S lo = S(0), hi = S(0);        // final bracket
  S sep_lo = S(0), sep_hi = S(0);  // separation at the original bracket ends
  PlanarOrbit<S> forward;   // unstable manifold of the source at alpha_bar
  PlanarOrbit<S> backward;  // stable manifold of the target, forward in time
};

/// Bisection on alpha for a saddle connection source -> target.  The
/// separation functional is the signed theta gap, on the section v = 0,
/// between the source's unstable manifold (shot forward) and the target's
/// stable manifold (shot backward); v is strictly monotone along both, so
/// each crosses the section exactly once.
template <typename S>
inline SaddleConnection<S> saddle_connection_bisect(const PlanarPotential<S>& u, S alpha_lo,
                                                    S alpha_hi, const PhasePoint<S>& source,
                                                    const PhasePoint<S>& target,
                                                    S width = S(1e-4)) {
  if (!(S(0) < alpha_lo) || !(alpha_lo < alpha_hi) || !(alpha_hi < S(2)))
    fail(ErrorCode::InvalidArgument, "need 0 < alpha_lo < alpha_hi < 2");
  const S vstop = S(0.5) * std::sqrt(u.u_min);

  auto forward_orbit = [&](S alpha) {
    PlanarEvents<S> ev;
    ev.v_stop_high = vstop;
    return shoot_unstable(u, alpha, source, S(1e-8), 0, S(200), ev);
  };
  auto backward_orbit = [&](S alpha) {
    // The stable eigenvector of the forward field is the unstable one of the
    // reversed field; the half-plane rule is unchanged.
    const auto j = detail::planar_jacobian(u, alpha, target);
    const S det = j[0] * j[3] - j[1] * j[2];
    if (!(det < S(0)))
      fail(ErrorCode::InvalidArgument, "target point is not a saddle of the planar field");
    const S tr = j[0] + j[3];
    const S lam_s = (tr - std::sqrt(tr * tr - S(4) * det)) / S(2);
    const PhasePoint<S> w = detail::eigvec2(j, lam_s);
    const S cd = std::cos(target.phi - target.theta);
    const S sign = (cd * (w.phi - w.theta) > S(0)) ? S(1) : S(-1);
    const PhasePoint<S> p0{target.theta + sign * S(1e-8) * w.theta,
                           target.phi + sign * S(1e-8) * w.phi};
    PlanarEvents<S> ev;
    ev.v_stop_low = -vstop;
    IntegrateOptions<S> opt;
    opt.reversed = true;
    return integrate(u, alpha, p0, S(200), ev, opt);
  };
  auto separation = [&](S alpha) {
    const PlanarOrbit<S> f = forward_orbit(alpha);
    const PlanarOrbit<S> b = backward_orbit(alpha);
    if (!std::isfinite(f.theta_at_v0) || !std::isfinite(b.theta_at_v0))
      fail(ErrorCode::NoConvergence, "manifold orbit never crossed the section v = 0");
    return f.theta_at_v0 - b.theta_at_v0;
  };

  SaddleConnection<S> out;
  out.sep_lo = separation(alpha_lo);
  out.sep_hi = separation(alpha_hi);
  if (!(out.sep_lo * out.sep_hi < S(0)))
    fail(ErrorCode::BadBracket,
         "separation functional has the same sign at both bracket ends");
  S lo = alpha_lo, hi = alpha_hi;
  S s_lo = out.sep_lo;
  while (hi - lo > width) {
    const S mid = (lo + hi) / S(2);
    const S sm = separation(mid);
    if (sm * s_lo <= S(0)) {
      hi = mid;
    } else {
      lo = mid;
      s_lo = sm;
    }
  }
  out.alpha_bar = (lo + hi) / S(2);
  out.lo = lo;
  out.hi = hi;
  out.forward = forward_orbit(out.alpha_bar);
  out.backward = backward_orbit(out.alpha_bar);
  // Present the stable-manifold witness forward in time (it was integrated
  // in reverse), so v is nondecreasing along both orbits.
  std::reverse(out.backward.taus.begin(), out.backward.taus.end());
  for (auto& t : out.backward.taus) t = out.backward.taus.front() - t;
  std::reverse(out.backward.states.begin(), out.backward.states.end());
  std::reverse(out.backward.v_samples.begin(), out.backward.v_samples.end());
  return out;
}

// ---------------------------------------------------------------------------
// Apsidal angle
// ---------------------------------------------------------------------------

/// Bounds on the total theta sweep of a parabolic arc:
///   (4/(2-alpha)) arcsin sqrt(U_min/U_max)  <=  sweep  <=  2 pi / (2-alpha).
template <typename S>
inline std::pair<S, S> apsidal_bounds(const PlanarPotential<S>& u, S alpha) {
  if (!(alpha > S(0)) || !(alpha < S(2)))
    fail(ErrorCode::BadExponent, "homogeneity exponent must lie in (0, 2)");
  const S lower =
      S(4) / (S(2) - alpha) * std::asin(std::sqrt(u.u_min / u.u_max));
  const S upper = S(2) * S(std::numbers::pi) / (S(2) - alpha);
  return {lower, upper};
}

template <typename S>
struct SweepResult {
  S sweep = S(0);      // tail-completed total sweep
  S sweep_raw = S(0);  // measured between the delta_0 levels
  S theta_start = S(0), theta_end = S(0);
  S delta0 = S(0);
  PlanarOrbit<S> orbit;
};

/// Total theta sweep of the orbit through p0, integrated until v reaches
/// sqrt(U_min) - delta_0.  Reaching +-sqrt(U_min) is an asymptotic event, so
/// the measured sweep is completed with the closed-form tails of
/// dv/dtheta = ((2-alpha)/2) sqrt(U_min - v^2) on both sides; the delta_0
/// margin is reported with the result.  Each quadrature tail is capped by the
/// angular distance to the nearest minimal direction: on a saddle approach v
/// is quadratic in the remaining distance and the flat-bottom quadrature
/// badly overestimates the leftover sweep, while the distance to the limit
/// direction is asymptotically exact there.  Both caps are upper bounds on
/// the true remainder, so the minimum is the tighter completion; the flat
/// (isotropic) case has no isolated minima and keeps the exact quadrature.
template <typename S>
inline SweepResult<S> dv_dtheta_sweep(const PlanarPotential<S>& u, S alpha,
                                      const PhasePoint<S>& p0, S delta0 = S(1e-6),
                                      S horizon = S(500),
                                      const IntegrateOptions<S>& opt = {}) {
  if (!(delta0 > S(0)) || !(delta0 < std::sqrt(u.u_min)))
    fail(ErrorCode::InvalidArgument, "delta_0 must lie in (0, sqrt(U_min))");
  const S vm = std::sqrt(u.u_min);
  PlanarEvents<S> ev;
  ev.v_stop_high = vm - delta0;
  SweepResult<S> out;
  out.delta0 = delta0;
  out.orbit = integrate(u, alpha, p0, horizon, ev, opt);
  if (out.orbit.termination != Termination::ReachedTarget)
    fail(ErrorCode::NoConvergence, "orbit did not reach the upper level sqrt(U_min) - delta_0");
  out.theta_start = out.orbit.states.front().theta;
  out.theta_end = out.orbit.states.back().theta;
  out.sweep_raw = out.theta_end - out.theta_start;
  const S c = S(2) / (S(2) - alpha);
  auto clamp1 = [](S x) { return std::clamp(x, S(-1), S(1)); };
  auto minimum_dist = [&](S th) {
    if (u.minima.empty()) return std::numeric_limits<S>::infinity();
    const S two_pi = S(2) * S(std::numbers::pi);
    S thw = std::fmod(th, two_pi);
    if (thw < S(0)) thw += two_pi;
    S best = std::numeric_limits<S>::infinity();
    for (S m : u.minima) {
      S d = std::abs(thw - m);
      best = std::min(best, std::min(d, two_pi - d));
    }
    return best;
  };
  const S v_first = out.orbit.v_samples.front();
  const S v_last = out.orbit.v_samples.back();
  const S tail_in = std::min(
      c * (std::asin(clamp1(v_first / vm)) + S(std::numbers::pi) / S(2)),
      minimum_dist(out.theta_start));
  const S tail_out = std::min(
      c * (S(std::numbers::pi) / S(2) - std::asin(clamp1(v_last / vm))),
      minimum_dist(out.theta_end));
  out.sweep = out.sweep_raw + tail_in + tail_out;
  return out;
}

/// Sweep from the standard start: theta at a minimal direction (or 0 for a
/// flat potential), v = -sqrt(U_min) + delta_0 on the increasing branch.
template <typename S>
inline SweepResult<S> dv_dtheta_sweep(const PlanarPotential<S>& u, S alpha) {
  const S delta0 = S(1e-6);
  const S theta0 = u.minima.empty() ? S(0) : u.minima.front();
  const S vm = std::sqrt(u.u_min);
  const S c0 = std::clamp((-vm + delta0) / std::sqrt(u.u(theta0)), S(-1), S(1));
  const PhasePoint<S> p0{theta0, theta0 + std::acos(c0)};  // sin(phi - theta) > 0
  return dv_dtheta_sweep(u, alpha, p0, delta0);
}

}  // namespace akp
