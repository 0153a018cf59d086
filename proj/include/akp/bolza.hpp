#pragma once

// Obstacle-constrained fixed-endpoint problem: minimize the time-free
// functional J over discrete paths on [-1, 1] whose nodes stay outside the
// ball of radius eps, recover the physical time, locate the contact interval
// and extract the position/velocity jumps at the obstacle.
//
// The minimization variable is the set of interior nodes on a fixed time
// grid.  The grid is graded toward the expected contact region so that the
// turning time at radius eps is covered by a roughly constant number of nodes
// independently of eps; this keeps the discretization bias of the action
// comparable across an eps-schedule, which the renormalized-level
// computations downstream rely on.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "akp/action.hpp"
#include "akp/path.hpp"
#include "akp/potential.hpp"
#include "akp/types.hpp"

namespace akp {

enum class ContactKind { Parabolic, PositionJumping, VelocityJumping };

inline const char* contact_kind_name(ContactKind k) {
  switch (k) {
    case ContactKind::Parabolic: return "Parabolic";
    case ContactKind::PositionJumping: return "PositionJumping";
    case ContactKind::VelocityJumping: return "VelocityJumping";
  }
  return "?";
}

template <typename S>
struct BolzaProblem {
  HomogeneousPotential<S> potential;
  Vector<S> x1, x2;
  S eps = S(0.1);
  int grid_size = 400;  // base segment count; refined internally for small eps
  int restarts = 6;
  std::uint64_t seed = 2026;
  int max_iterations = 20000;
  S grad_tol = S(1e-8);  // scaled by the segment count
  // Optional warm start (any strictly increasing clock; nodes are
  // re-interpolated onto the problem grid).  Empty matrix disables it.
  Vector<S> warm_times;
  NodeMatrix<S> warm_nodes;
  // Optional normalized time (in [-1, 1]) near which the contact is expected
  // when the pin protocol runs; restricts the pin sweep to that
  // neighbourhood.  NaN sweeps the full coarse index set.
  S pin_time_hint = std::numeric_limits<S>::quiet_NaN();
};

template <typename S>
struct ContactInfo {
  bool touches = false;
  int first = -1, last = -1;  // node indices of the maximal contact interval
  S t_star = S(0), t_star2 = S(0);
  bool monotone_outside = true;  // radius non-increasing before, non-decreasing after
  S worst_monotonicity_defect = S(0);
};

template <typename S>
struct JumpEstimate {
  S delta_pos = S(0);
  S delta_vel = S(0);      // clamped at zero
  S delta_vel_raw = S(0);  // signed value before clamping
  S uncertainty = S(0);    // grid-induced estimate h * max |second difference|
};

template <typename S>
struct BolzaSolution {
  DiscretePath<S> path;  // zero-energy re-timed, clock centered on [-T, T]
  S action = S(0);
  S j_value = S(0);
  S t_bar = S(0);
  S eps = S(0);
  S alpha = S(1);

  S t_star = S(0), t_star2 = S(0);
  int contact_first = -1, contact_last = -1;
  S delta_pos = S(0), delta_vel = S(0), delta_vel_raw = S(0);
  S jump_uncertainty = S(0);
  S jump_tol = S(1e-3);
  ContactKind kind = ContactKind::Parabolic;

  bool constraint_active = true;  // false: free minimizer stayed off the sphere (pin used)
  int pinned_node = -1;
  bool converged = false;
  S grad_residual = S(0);
  int iterations = 0;
  int best_restart = 0;
  std::vector<S> restart_actions;
  std::vector<int> near_best;  // restarts within 1e-4 of the winner
  std::vector<std::pair<int, S>> pin_sweep;
  bool monotone_outside_contact = true;
  S monotonicity_defect = S(0);
};

namespace detail {

// One-sided derivative at (t0, f0) through two more samples; exact on
// quadratics, so the leading error at a turning point is O(h^2 f''').
template <typename S>
inline S one_sided_derivative(S t0, S f0, S t1, S f1, S t2, S f2) {
  return f0 * (S(2) * t0 - t1 - t2) / ((t0 - t1) * (t0 - t2)) +
         f1 * (t0 - t2) / ((t1 - t0) * (t1 - t2)) +
         f2 * (t0 - t1) / ((t2 - t0) * (t2 - t1));
}

template <typename S>
inline Vector<S> one_sided_derivative_cols(S t0, const Vector<S>& f0, S t1, const Vector<S>& f1,
                                           S t2, const Vector<S>& f2) {
  return f0 * ((S(2) * t0 - t1 - t2) / ((t0 - t1) * (t0 - t2))) +
         f1 * ((t0 - t2) / ((t1 - t0) * (t1 - t2))) +
         f2 * ((t0 - t1) / ((t2 - t0) * (t2 - t1)));
}

// Spherical interpolation between unit vectors; falls back to a fixed
// orthogonal axis for (near-)antipodal ends so the arc is deterministic.
template <typename S>
struct GreatCircle {
  Vector<S> a, b;  // orthonormal frame
  S angle;
  Vector<S> at(S f) const { return std::cos(f * angle) * a + std::sin(f * angle) * b; }
};

template <typename S>
inline GreatCircle<S> great_circle(const Vector<S>& s1, const Vector<S>& s2) {
  GreatCircle<S> gc;
  gc.a = s1;
  const S c = std::clamp(s1.dot(s2), S(-1), S(1));
  gc.angle = std::acos(c);
  Vector<S> perp = s2 - c * s1;
  if (perp.norm() > S(1e-9)) {
    gc.b = perp.normalized();
  } else if (c > S(0)) {  // coincident directions
    gc.b = tangent_basis(s1).col(0);
    gc.angle = S(0);
  } else {  // antipodal: rotate through a fixed tangent direction
    gc.b = tangent_basis(s1).col(0);
    gc.angle = S(std::numbers::pi);
  }
  return gc;
}

// Normalized time grid on [-1, 1], graded with exponent q toward the
// location of expected contact (center, or one end when an endpoint starts
// on the obstacle).
template <typename S>
inline Vector<S> graded_grid(int n, S q, bool start_on_eps, bool end_on_eps) {
  Vector<S> t(n + 1);
  for (int i = 0; i <= n; ++i) {
    const S w = S(-1) + S(2) * S(i) / S(n);
    if (start_on_eps == end_on_eps) {  // both or neither: symmetric center grading
      t[i] = (w < S(0) ? S(-1) : S(1)) * std::pow(std::abs(w), q);
    } else if (end_on_eps) {
      t[i] = S(1) - S(2) * std::pow((S(1) - w) / S(2), q);
    } else {
      t[i] = S(-1) + S(2) * std::pow((w + S(1)) / S(2), q);
    }
  }
  t[0] = S(-1);
  t[n] = S(1);
  return t;
}

// Discrete J = K * P and its gradient with respect to the interior nodes,
// plus a curvature-augmented metric  H = P * L + K * D  used as the Newton
// model.  L is the interior kinetic graph Laplacian (tridiagonal, SPD) and
// D a diagonal bound on the potential block of the Hessian.  Both pieces
// matter: stiff grid modes are kinetic-dominated, but smooth low-frequency
// displacements feel mostly the potential curvature (~ V / r^2 per node),
// and a kinetic-only solve overshoots them badly near close approaches.
template <typename S>
struct JWorkspace {
  Vector<S> dt;      // segment lengths
  Vector<S> weight;  // trapezoid node weights
  Vector<S> vpot;
  NodeMatrix<S> vgrad;
  Vector<S> met_den, met_low, met_off;  // Thomas factorization of H
  Vector<S> met_diag;                   // unfactored diagonal of H (Jacobi scale)
  S last_kin = S(0), last_pot = S(0);

  void bind(const Vector<S>& times) {
    const int n = int(times.size()) - 1;
    dt.resize(n);
    for (int i = 0; i < n; ++i) dt[i] = times[i + 1] - times[i];
    weight.resize(n + 1);
    weight[0] = dt[0] / S(2);
    weight[n] = dt[n - 1] / S(2);
    for (int i = 1; i < n; ++i) weight[i] = (dt[i - 1] + dt[i]) / S(2);
  }

  // Factors H = pot * L + kin * D for the current iterate, with
  // L_ii = 1/dt_{i-1} + 1/dt_i, off-diagonal -1/dt_i, and
  // D_ii = weight_i * cfac * V(y_i) / |y_i|^2 read from the vpot cache
  // (cfac absorbs the homogeneity constants of grad^2 V).  Arrays are
  // 1-based over interior nodes 1..n-1; refactoring is O(n).
  void factor_metric(const NodeMatrix<S>& y, S kin, S pot, S cfac) {
    const int n = int(dt.size());
    const int m = n - 1;
    met_den.resize(m + 1);
    met_low.resize(m + 1);
    met_off.resize(m + 1);
    met_diag.resize(m + 1);
    for (int i = 1; i <= m; ++i) {
      const S r2 = std::max(y.col(i).squaredNorm(), S(1e-300));
      const S diag = pot * (S(1) / dt[i - 1] + S(1) / dt[i]) +
                     kin * weight[i] * cfac * std::abs(vpot[i]) / r2;
      met_diag[i] = diag;
      met_off[i] = -pot / dt[i];
      if (i == 1) {
        met_den[1] = diag;
      } else {
        const S off = -pot / dt[i - 1];
        met_low[i] = off / met_den[i - 1];
        met_den[i] = diag - met_low[i] * off;
      }
    }
  }

  // Solves H z = rhs over interior columns 1..n-1 in place (each dimension
  // independently); endpoint columns are untouched.
  void metric_solve(NodeMatrix<S>& z) const {
    const int m = int(dt.size()) - 1;
    for (int i = 2; i <= m; ++i) z.col(i) -= met_low[i] * z.col(i - 1);
    z.col(m) /= met_den[m];
    for (int i = m - 1; i >= 1; --i)
      z.col(i) = (z.col(i) - met_off[i] * z.col(i + 1)) / met_den[i];
  }

  // Returns (K, P); fills vpot.
  std::pair<S, S> energies(const HomogeneousPotential<S>& p, const NodeMatrix<S>& y) {
    const int n = int(dt.size());
    vpot.resize(n + 1);
    for (int i = 0; i <= n; ++i) vpot[i] = eval_v(p, Vector<S>(y.col(i)));
    S kin = S(0), pot = S(0);
    for (int i = 0; i < n; ++i) kin += (y.col(i + 1) - y.col(i)).squaredNorm() / (S(2) * dt[i]);
    for (int i = 0; i <= n; ++i) pot += weight[i] * vpot[i];
    return {kin, pot};
  }

  S value(const HomogeneousPotential<S>& p, const NodeMatrix<S>& y) {
    const auto [kin, pot] = energies(p, y);
    return kin * pot;
  }

  // Gradient over interior nodes (columns 1..n-1); endpoint columns zeroed.
  void gradient(const HomogeneousPotential<S>& p, const NodeMatrix<S>& y, NodeMatrix<S>& g) {
    const int n = int(dt.size());
    const auto [kin, pot] = energies(p, y);
    last_kin = kin;
    last_pot = pot;
    g.resize(y.rows(), y.cols());
    g.setZero();
    for (int i = 1; i < n; ++i) {
      const Vector<S> dk = (y.col(i) - y.col(i - 1)) / dt[i - 1] - (y.col(i + 1) - y.col(i)) / dt[i];
      const Vector<S> dp = weight[i] * grad_v(p, Vector<S>(y.col(i)));
      g.col(i) = pot * dk + kin * dp;
    }
  }
};

// Radial feasibility projection; the pinned node (if any) is always mapped
// onto the sphere, realizing the equality constraint.  Nodes hovering within
// a hair of the sphere are retracted onto it: tangential sliding of a
// contact node lifts it off by O(step^2) through curvature, and without the
// retraction such nodes churn in and out of the active set instead of
// converging.
template <typename S>
inline void project_nodes(NodeMatrix<S>& y, S eps, int pinned) {
  const int last = int(y.cols()) - 1;
  const S snap = eps * (S(1) + S(1e-6));
  for (int i = 1; i < last; ++i) {
    const S r = y.col(i).norm();
    if (r < S(1e-14)) {  // degenerate; push along the previous direction
      y.col(i) = y.col(i - 1).norm() > S(1e-14) ? Vector<S>(eps * y.col(i - 1).normalized())
                                                : Vector<S>(eps * Vector<S>::Unit(y.rows(), 0));
    } else if (i == pinned || r < snap) {
      y.col(i) *= eps / r;
    }
  }
}

template <typename S>
struct SpgResult {
  NodeMatrix<S> nodes;
  S j = std::numeric_limits<S>::infinity();
  S residual = std::numeric_limits<S>::infinity();
  int iterations = 0;
  bool converged = false;
};

// Projected quasi-Newton descent on J.  The search direction solves the
// kinetic block of the Hessian, d = -(1/P) L^{-1} g, which is strictly
// descent (L is SPD) and removes the grid-grading stiffness; a nonmonotone
// Armijo search along the projection arc handles the obstacle constraint
// (the feasible set, radius >= eps per node, is not convex, so every trial
// point is re-projected before the sufficient-decrease test).
//
// Stationarity is tested with the first-order criticality measure for the
// exterior-of-ball constraint: at a node on the sphere only the tangential
// gradient plus any inward-pointing radial component counts (the outward
// radial part is balanced by the contact multiplier); at the pinned node
// only the tangential part counts.
template <typename S>
inline SpgResult<S> spg_minimize(const HomogeneousPotential<S>& p, JWorkspace<S>& ws,
                                 NodeMatrix<S> y, S eps, int pinned, int max_iter, S tol) {
  project_nodes(y, eps, pinned);
  const int cols = int(y.cols());
  NodeMatrix<S> g, dir, y_new, step;
  S j = ws.value(p, y);
  ws.gradient(p, y, g);

  auto criticality = [&](const NodeMatrix<S>& yy, const NodeMatrix<S>& gg) {
    S sum = S(0);
    for (int i = 1; i + 1 < cols; ++i) {
      const S r = yy.col(i).norm();
      if (i == pinned) {
        const Vector<S> s = yy.col(i) / r;
        sum += (gg.col(i) - gg.col(i).dot(s) * s).squaredNorm();
      } else if (r <= eps * (S(1) + S(1e-12))) {
        const Vector<S> s = yy.col(i) / r;
        const S g_rad = gg.col(i).dot(s);
        sum += (gg.col(i) - g_rad * s).squaredNorm() + std::min(g_rad, S(0)) * std::min(g_rad, S(0));
      } else {
        sum += gg.col(i).squaredNorm();
      }
    }
    return std::sqrt(sum);
  };

  // Reduced gradient: drop the radial component at the pinned node and any
  // blocked (outward) radial component at nodes sitting on the sphere, so the
  // preconditioned direction stays descent along the projection arc.  The
  // same blocked set is remembered so the search direction can be kept in
  // the tangent planes there (the Laplacian solve mixes dimensions and would
  // otherwise reintroduce radial pushes that fight the contact multipliers).
  NodeMatrix<S> gr;
  std::vector<int> blocked;
  auto reduce = [&](const NodeMatrix<S>& yy, const NodeMatrix<S>& gg) {
    gr = gg;
    blocked.clear();
    for (int i = 1; i + 1 < cols; ++i) {
      const S r = yy.col(i).norm();
      if (r > eps * (S(1) + S(1e-12)) && i != pinned) continue;
      const Vector<S> s = yy.col(i) / r;
      const S g_rad = gg.col(i).dot(s);
      if (i == pinned || g_rad > S(0)) {
        gr.col(i) -= g_rad * s;
        blocked.push_back(i);
      }
    }
  };
  auto tangentialize = [&](NodeMatrix<S>& d, const NodeMatrix<S>& yy) {
    for (int i : blocked) {
      const Vector<S> s = yy.col(i).normalized();
      d.col(i) -= d.col(i).dot(s) * s;
    }
  };

  SpgResult<S> out;
  const S cfac = (p.alpha + S(1)) * (p.alpha + S(2));
  S best_j = j;
  S best_res = std::numeric_limits<S>::infinity();
  // Conjugate-direction memory for the metric-preconditioned phase.  The
  // metric drops the mixed grad K x grad P Hessian terms, so the plain
  // step contracts only linearly along their near-null direction near a
  // pinned minimizer; Polak-Ribiere+ momentum removes that tail.  The
  // memory is reset whenever the contact active set changes or the
  // fallback phase runs.
  NodeMatrix<S> z, z_prev, cg_prev;
  S gz_cur = S(0), gz_prev = S(0);
  std::vector<int> blocked_prev;
  bool have_cg = false;
  int last_progress = 0;
  int it = 0;
  for (; it < max_iter; ++it) {
    const S res = criticality(y, g);
    best_res = std::min(best_res, res);
    if (res <= tol * std::max(S(1), j)) {
      out.converged = true;
      out.residual = res;
      break;
    }
    out.residual = res;
    if (it - last_progress > 250) {
      out.converged = best_res <= S(100) * tol * std::max(S(1), j);
      break;
    }

    reduce(y, g);
    S j_new = j;
    bool accepted = false;
    // Phase 0: metric-preconditioned conjugate direction (few halvings:
    // either it works near full step or the direction is poor); phase 1:
    // Jacobi-scaled gradient fallback on the same metric diagonal.
    int used_phase = -1;
    for (int phase = 0; phase < 2 && !accepted; ++phase) {
      if (phase == 0) {
        ws.factor_metric(y, ws.last_kin, ws.last_pot, cfac);
        z = gr;
        ws.metric_solve(z);
        gz_cur = S(0);
        for (int i = 1; i + 1 < cols; ++i) gz_cur += gr.col(i).dot(z.col(i));
        dir = -z;
        if (have_cg && blocked == blocked_prev && gz_prev > S(0)) {
          S gzp = S(0);
          for (int i = 1; i + 1 < cols; ++i) gzp += gr.col(i).dot(z_prev.col(i));
          const S beta_cg = std::max(S(0), (gz_cur - gzp) / gz_prev);
          if (beta_cg > S(0)) {
            S gd0 = S(0);
            step = dir + beta_cg * cg_prev;
            for (int i = 1; i + 1 < cols; ++i) gd0 += gr.col(i).dot(step.col(i));
            if (gd0 < S(0)) dir = step;  // keep the pure step if conjugacy broke descent
          }
        }
      } else {
        dir = gr;
        for (int i = 1; i + 1 < cols; ++i)
          dir.col(i) = -gr.col(i) / std::max(ws.met_diag[i], S(1e-300));
        dir.col(0).setZero();
        dir.col(cols - 1).setZero();
      }
      tangentialize(dir, y);
      S beta = S(1);
      const int max_back = phase == 0 ? 10 : 40;
      for (int back = 0; back < max_back; ++back) {
        y_new = y + beta * dir;
        project_nodes(y_new, eps, pinned);
        step = y_new - y;
        S gd = S(0);
        for (int i = 1; i + 1 < cols; ++i) gd += g.col(i).dot(step.col(i));
        if (gd < S(0)) {
          j_new = ws.value(p, y_new);
          if (j_new <= j + S(1e-4) * gd) {
            accepted = true;
            used_phase = phase;
            break;
          }
        }
        beta /= S(2);
      }
    }
    if (!accepted) {  // no feasible descent left at machine precision
      out.converged = best_res <= S(100) * tol * std::max(S(1), j);
      break;
    }
    if (used_phase == 0) {
      z_prev = z;
      cg_prev = dir;
      gz_prev = gz_cur;
      blocked_prev = blocked;
      have_cg = true;
    } else {
      have_cg = false;
    }

    // Progress is counted relative to the run tolerance: once the value
    // moves below that resolution, further residual polishing cannot change
    // any derived quantity, so the stagnation window is allowed to close.
    if (j_new < best_j - S(0.1) * tol * std::max(S(1), std::abs(best_j))) {
      best_j = j_new;
      last_progress = it;
    }

    y.swap(y_new);
    j = j_new;
    ws.gradient(p, y, g);
  }
  out.nodes = std::move(y);
  out.j = j;
  out.iterations = it;
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Contact detection and jumps
// ---------------------------------------------------------------------------

/// Maximal interval of nodes within contact tolerance of the obstacle;
/// also audits radial monotonicity outside the interval (reported, not
/// enforced).  Throws NoContact when no node reaches the sphere.
template <typename S>
inline ContactInfo<S> detect_contact(const DiscretePath<S>& path, S eps) {
  validate_path(path, "detect_contact");
  const int n = path.segments();
  const S h = S(2) / S(n);
  const S tol = (S(1e-6) + h * h) * std::max(S(1), eps);
  const Vector<S> radii = path_radii(path);

  ContactInfo<S> info;
  for (int i = 0; i <= n; ++i) {
    if (radii[i] - eps <= tol) {
      if (!info.touches) info.first = i;
      info.last = i;
      info.touches = true;
    }
  }
  if (!info.touches) fail(ErrorCode::NoContact, "no node within contact tolerance of the obstacle");
  info.t_star = path.times[info.first];
  info.t_star2 = path.times[info.last];

  S defect = S(0);
  for (int i = 0; i + 1 < info.first; ++i) defect = std::max(defect, radii[i + 1] - radii[i]);
  for (int i = info.last + 1; i < n; ++i) defect = std::max(defect, radii[i] - radii[i + 1]);
  info.worst_monotonicity_defect = defect;
  info.monotone_outside = defect <= tol;
  return info;
}

/// Normalized jumps at the contact interval boundaries.  Radial velocities
/// come from one-sided three-point fits on the adjacent segments; contact
/// intervals butting against a path end contribute zero radial speed (the
/// path begins or ends on the obstacle there).
template <typename S>
inline JumpEstimate<S> compute_jumps(const DiscretePath<S>& path, const ContactInfo<S>& info, S eps,
                                     S alpha) {
  validate_path(path, "compute_jumps");
  const int n = path.segments();
  const int a = info.first, b = info.last;
  const Vector<S> radii = path_radii(path);
  const Vector<S>& t = path.times;

  JumpEstimate<S> out;
  out.delta_pos = (path.nodes.col(b) / radii[b] - path.nodes.col(a) / radii[a]).norm();

  S rdot_in = S(0), rdot_out = S(0);
  if (a >= 2)
    rdot_in = detail::one_sided_derivative(t[a], radii[a], t[a - 1], radii[a - 1], t[a - 2], radii[a - 2]);
  else if (a == 1)
    rdot_in = (radii[1] - radii[0]) / (t[1] - t[0]);
  if (b <= n - 2)
    rdot_out = detail::one_sided_derivative(t[b], radii[b], t[b + 1], radii[b + 1], t[b + 2], radii[b + 2]);
  else if (b == n - 1)
    rdot_out = (radii[n] - radii[n - 1]) / (t[n] - t[n - 1]);

  // A contact interval that reaches a path end has no bracketing pair of
  // one-sided derivatives: no velocity discontinuity is measurable there.
  out.delta_vel_raw =
      (a == 0 || b == n) ? S(0) : std::pow(eps, alpha / S(2)) * (rdot_out - rdot_in);
  out.delta_vel = std::max(S(0), out.delta_vel_raw);

  // Grid uncertainty h * max |r''| over the stencils.
  S h = S(0), acc = S(0);
  int count = 0;
  for (int i = std::max(1, a - 2); i <= std::min(n - 1, b + 2); ++i) {
    acc = std::max(acc, std::abs(second_difference(t, radii, i)));
    h += (t[i + 1] - t[i - 1]) / S(2);
    ++count;
  }
  if (count > 0) out.uncertainty = (h / S(count)) * acc * std::pow(eps, alpha / S(2));
  return out;
}

// ---------------------------------------------------------------------------
// Kelvin transform
// ---------------------------------------------------------------------------

template <typename S>
inline Vector<S> kelvin_transform(const Vector<S>& x) {
  const S r2 = x.squaredNorm();
  if (r2 < S(1e-28)) fail(ErrorCode::ZeroRadius, "Kelvin transform at the origin");
  return x / r2;
}

template <typename S>
inline NodeMatrix<S> kelvin_jacobian(const Vector<S>& x) {
  const S r2 = x.squaredNorm();
  if (r2 < S(1e-28)) fail(ErrorCode::ZeroRadius, "Kelvin jacobian at the origin");
  const Vector<S> s = x / std::sqrt(r2);
  NodeMatrix<S> jac = NodeMatrix<S>::Identity(x.size(), x.size());
  jac -= S(2) * s * s.transpose();
  return jac / r2;
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

template <typename S>
inline BolzaSolution<S> minimize_bolza(const BolzaProblem<S>& prob) {
  const HomogeneousPotential<S>& p = prob.potential;
  const S eps = prob.eps;
  const S r1 = prob.x1.norm(), r2 = prob.x2.norm();
  if (!(eps > S(0))) fail(ErrorCode::InvalidArgument, "obstacle radius must be positive");
  if (r1 < eps * (S(1) - S(1e-12)) || r2 < eps * (S(1) - S(1e-12)))
    fail(ErrorCode::InfeasibleEndpoints, "endpoint inside the obstacle");
  const bool start_on = r1 <= eps * (S(1) + S(1e-9));
  const bool end_on = r2 <= eps * (S(1) + S(1e-9));
  if (start_on && end_on && (prob.x1 - prob.x2).norm() < S(1e-12))
    fail(ErrorCode::InvalidArgument, "coincident endpoints on the obstacle are degenerate");
  if (prob.grid_size < 16) fail(ErrorCode::InvalidArgument, "grid_size must be at least 16");

  // --- grid ------------------------------------------------------------
  const S v_min = p.angular.v_min;
  const S c_exp = (S(2) + p.alpha) / S(2);
  const int n = prob.grid_size * std::clamp(int(std::lround(std::sqrt(S(0.1) / eps))), 1, 8);
  S q = S(1);
  if (!(start_on && end_on)) {
    // Fraction of the full travel spent near the turning radius, vs the
    // homothetic dive times to the endpoint radii.
    const S tau_turn = std::pow(eps, c_exp) / std::sqrt(S(2) * v_min);
    const S travel = S(2) * (homothetic_half_time(eps, std::max(r1, eps * S(1.0000001)), v_min, p.alpha) +
                             homothetic_half_time(eps, std::max(r2, eps * S(1.0000001)), v_min, p.alpha));
    const S w_c = std::clamp(tau_turn / std::max(travel, S(1e-300)), S(1e-6), S(0.5));
    q = std::clamp(std::log(w_c) / std::log(S(40) / S(n)), S(1), S(4));
  }
  const Vector<S> times = detail::graded_grid(n, q, start_on, end_on);

  detail::JWorkspace<S> ws;
  ws.bind(times);

  // --- initial paths ---------------------------------------------------
  const int d = int(prob.x1.size());
  const Vector<S> s1 = prob.x1 / r1, s2 = prob.x2 / r2;
  const auto gc = detail::great_circle(s1, s2);

  auto chord_init = [&]() {
    NodeMatrix<S> y(d, n + 1);
    for (int i = 0; i <= n; ++i) {
      const S f = (times[i] + S(1)) / S(2);
      const S r = std::max(eps, ((S(1) - f) * prob.x1 + f * prob.x2).norm());
      y.col(i) = r * gc.at(f);
    }
    return y;
  };
  auto corridor_init = [&]() {
    NodeMatrix<S> y(d, n + 1);
    const S u1 = std::pow(r1, c_exp), u2 = std::pow(r2, c_exp), ue = std::pow(eps, c_exp);
    for (int i = 0; i <= n; ++i) {
      const S f = (times[i] + S(1)) / S(2);
      S r, fa;  // radius and angular progress
      if (f < S(0.4)) {
        r = std::pow(u1 + (ue - u1) * f / S(0.4), S(1) / c_exp);
        fa = S(0);
      } else if (f <= S(0.6)) {
        r = eps;
        fa = (f - S(0.4)) / S(0.2);
      } else {
        r = std::pow(ue + (u2 - ue) * (f - S(0.6)) / S(0.4), S(1) / c_exp);
        fa = S(1);
      }
      y.col(i) = r * gc.at(fa);
    }
    return y;
  };
  auto warm_init = [&]() {
    NodeMatrix<S> y(d, n + 1);
    const Vector<S>& tw = prob.warm_times;
    const int m = int(tw.size()) - 1;
    const S lo = tw[0], span = tw[m] - tw[0];
    int seg = 0;
    for (int i = 0; i <= n; ++i) {
      const S tn = lo + span * (times[i] + S(1)) / S(2);
      while (seg + 1 < m && tw[seg + 1] < tn) ++seg;
      const S f = std::clamp((tn - tw[seg]) / (tw[seg + 1] - tw[seg]), S(0), S(1));
      y.col(i) = (S(1) - f) * prob.warm_nodes.col(seg) + f * prob.warm_nodes.col(seg + 1);
    }
    y.col(0) = prob.x1;
    y.col(n) = prob.x2;
    return y;
  };

  const bool have_warm = prob.warm_nodes.cols() >= 2 && prob.warm_times.size() == prob.warm_nodes.cols();
  std::vector<NodeMatrix<S>> inits;
  if (have_warm) inits.push_back(warm_init());
  inits.push_back(chord_init());
  if (int(inits.size()) < prob.restarts) inits.push_back(corridor_init());
  std::mt19937_64 rng(prob.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  while (int(inits.size()) < prob.restarts) {
    NodeMatrix<S> y = inits[inits.size() % 2];  // alternate the two base shapes
    const S amp = S(0.08) * std::max(r1, r2);
    for (int k = 1; k <= 3; ++k) {
      Vector<S> dir(d);
      for (int j = 0; j < d; ++j) dir[j] = S(gauss(rng));
      dir.normalize();
      const S a = amp / S(k) * S(gauss(rng));
      for (int i = 1; i < n; ++i) {
        const S f = (times[i] + S(1)) / S(2);
        y.col(i) += a * std::sin(S(k) * S(std::numbers::pi) * f) * dir;
      }
    }
    inits.push_back(std::move(y));
  }

  // --- multistart ------------------------------------------------------
  const S tol = prob.grad_tol * S(n);
  std::vector<detail::SpgResult<S>> runs;
  runs.reserve(inits.size());
  for (auto& y0 : inits)
    runs.push_back(detail::spg_minimize(p, ws, std::move(y0), eps, -1, prob.max_iterations, tol));

  BolzaSolution<S> sol;
  sol.eps = eps;
  sol.alpha = p.alpha;
  int best = 0;
  std::vector<S> actions(runs.size());
  for (size_t i = 0; i < runs.size(); ++i) {
    actions[i] = S(2) * std::sqrt(runs[i].j);
    if (actions[i] < actions[best]) best = int(i);
  }
  // Tie-break equal-action restarts by jump regularity.
  auto jumps_of_nodes = [&](const NodeMatrix<S>& y) -> JumpEstimate<S> {
    DiscretePath<S> raw{times, y};
    try {
      const ContactInfo<S> ci = detect_contact(raw, eps);
      return compute_jumps(raw, ci, eps, p.alpha);
    } catch (const Error&) {
      return JumpEstimate<S>{};
    }
  };
  for (size_t i = 0; i < runs.size(); ++i) {
    if (int(i) == best || !(actions[i] <= actions[best] + S(1e-9))) continue;
    const auto ji = jumps_of_nodes(runs[i].nodes);
    const auto jb = jumps_of_nodes(runs[best].nodes);
    if (ji.delta_vel < jb.delta_vel - S(1e-12) ||
        (std::abs(ji.delta_vel - jb.delta_vel) <= S(1e-12) && ji.delta_pos < jb.delta_pos - S(1e-12)))
      best = int(i);
  }
  sol.restart_actions = actions;
  sol.best_restart = best;
  for (size_t i = 0; i < runs.size(); ++i)
    if (actions[i] <= actions[best] + S(1e-4)) sol.near_best.push_back(int(i));

  bool any_converged = false;
  for (const auto& r : runs) any_converged = any_converged || r.converged;

  detail::SpgResult<S>* winner = &runs[best];

  // --- active-contact protocol -----------------------------------------
  const S h_norm = S(2) / S(n);
  const S contact_tol = (S(1e-6) + h_norm * h_norm) * std::max(S(1), eps);
  auto touches = [&](const NodeMatrix<S>& y) {
    for (int i = 0; i <= n; ++i)
      if (y.col(i).norm() - eps <= contact_tol) return true;
    return false;
  };

  detail::SpgResult<S> pinned_run;
  if (!touches(winner->nodes)) {
    sol.constraint_active = false;
    // Equality constraint via a pinned node: sweep a coarse candidate set,
    // then refine around the best one.  Each candidate is a (time index,
    // turn mode) pair: mode 0 turns through the great-circle midpoint at the
    // pin, modes 1 and 2 pin at the x1 / x2 direction with the angular swing
    // spiralling out along the whole other leg.  The axis modes matter: for
    // weak angular barriers the global minimizer can wrap around the
    // obstacle at an endpoint direction instead of pressing onto it at the
    // turn, and polish alone migrates the pinned direction there only on
    // lucky grids.
    std::vector<std::pair<int, int>> candidates;
    int argmin = 1;
    for (int i = 1; i < n; ++i)
      if (winner->nodes.col(i).norm() < winner->nodes.col(argmin).norm()) argmin = i;
    if (std::isfinite(prob.pin_time_hint)) {
      int near = 1;
      for (int i = 2; i < n; ++i)
        if (std::abs(times[i] - prob.pin_time_hint) < std::abs(times[near] - prob.pin_time_hint))
          near = i;
      candidates.push_back({near, 0});
    } else {
      for (int k = 1; k <= 9; ++k) candidates.push_back({k * n / 10, 0});
    }
    candidates.push_back({argmin, 0});

    // Warm start: scale the winner's radii down through a smooth local dip
    // reaching the sphere at the pinned index; a hard radial snap would
    // start the run from a kinked path with an artificial gradient spike.
    auto pin_warm = [&](int idx) {
      NodeMatrix<S> y0 = winner->nodes;
      const S r_at = y0.col(idx).norm();
      const S drop = S(1) - eps / r_at;
      const S width = S(n) / S(6);
      for (int i = 1; i < n; ++i) {
        const S u = (S(i) - S(idx)) / width;
        y0.col(i) *= S(1) - drop * std::exp(S(-4) * u * u);
      }
      return y0;
    };
    // For a deep obstacle the free minimizer stays far from the sphere and
    // the dip start keeps its (wrong) time allocation; those runs spend
    // thousands of iterations migrating the turn through the graded grid.
    // Seed them instead from two homothetic-in-radius legs meeting on the
    // sphere at the pinned time, with the angular turn ramped locally.
    auto pin_corridor = [&](int idx, int mode) {
      NodeMatrix<S> y(d, n + 1);
      const S u1 = std::pow(r1, c_exp), u2 = std::pow(r2, c_exp), ue = std::pow(eps, c_exp);
      const S f_pin = (times[idx] + S(1)) / S(2);
      const S wa = std::max(S(0.02), S(0.2) * f_pin * (S(1) - f_pin));
      for (int i = 0; i <= n; ++i) {
        const S f = (times[i] + S(1)) / S(2);
        const S r = f <= f_pin
                        ? std::pow(ue + (u1 - ue) * (f_pin - f) / std::max(f_pin, S(1e-12)), S(1) / c_exp)
                        : std::pow(ue + (u2 - ue) * (f - f_pin) / std::max(S(1) - f_pin, S(1e-12)),
                                   S(1) / c_exp);
        S fa;
        if (mode == 0)
          fa = S(0.5) + (f - f_pin) / (S(2) * wa);
        else if (mode == 1)
          fa = (f - f_pin) / std::max(S(1) - f_pin, S(1e-12));
        else
          fa = f / std::max(f_pin, S(1e-12));
        y.col(i) = r * gc.at(std::clamp(fa, S(0), S(1)));
      }
      y.col(0) = prob.x1;
      y.col(n) = prob.x2;
      return y;
    };
    const bool deep = eps < S(0.12) * std::min(r1, r2);
    auto pin_init = [&](int idx, int mode) {
      if (mode != 0) return pin_corridor(idx, mode);
      return deep ? pin_corridor(idx, 0) : pin_warm(idx);
    };
    // Parametrization-invariant length of a discrete path in the Jacobi
    // metric; agrees with 2 sqrt(J) once the clock allocation is balanced
    // and stays meaningful when it is not.  Chords passing near the origin
    // need a refined quadrature: a single midpoint sample misses the 1/r
    // spike and lets an under-resolved turn score below paths it actually
    // cannot beat.
    auto seg_len = [&](const Vector<S>& a, const Vector<S>& b) {
      const Vector<S> ab = b - a;
      const S seg = ab.norm();
      if (!(seg > S(0))) return S(0);
      const S tq = std::clamp(-a.dot(ab) / (seg * seg), S(0), S(1));
      const S d_min = (a + tq * ab).norm();
      if (d_min < S(1e-9)) return std::numeric_limits<S>::max() / S(4);
      const int panels = std::clamp(int(seg / (S(0.2) * d_min)) + 1, 1, 16);
      S acc = S(0);
      for (int k = 0; k < panels; ++k) {
        const Vector<S> mid = a + (S(k) + S(0.5)) / S(panels) * ab;
        acc += std::sqrt(S(2) * eval_v(p, mid));
      }
      return seg * acc / S(panels);
    };
    auto length_of = [&](const NodeMatrix<S>& y) {
      S acc = S(0);
      for (int i = 0; i < n; ++i) acc += seg_len(y.col(i), y.col(i + 1));
      return acc;
    };
    // One axis candidate per side.  The curve a mode traces is independent
    // of the pin time, so pin where the clock share matches the curve's
    // length share up to the turn; a mismatched pin starts the run so far
    // from time balance that the coarse phase drags it into another basin.
    // A hinted solve is continuing an already-selected branch, so it skips
    // the insurance probes; a continuation that drifts between branches is
    // caught by its own stabilization check downstream.
    for (int mode : std::isfinite(prob.pin_time_hint) ? std::initializer_list<int>{}
                                                      : std::initializer_list<int>{1, 2}) {
      const NodeMatrix<S> probe = pin_corridor(n / 2, mode);
      S upto = S(0), total = S(0);
      for (int i = 0; i < n; ++i) {
        const S dl = seg_len(probe.col(i), probe.col(i + 1));
        total += dl;
        if (i < n / 2) upto += dl;
      }
      if (!(total > S(0))) continue;
      const S share = upto / total;
      int idx = 1;
      for (int i = 2; i < n; ++i)
        if (std::abs((times[i] + S(1)) / S(2) - share) <
            std::abs((times[idx] + S(1)) / S(2) - share))
          idx = i;
      candidates.push_back({idx, mode});
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    // Rank the candidates cheaply at loose tolerance, then polish the
    // winner and its immediate neighbours at full tolerance, warm-started
    // from the coarse winner.  Ranking uses the invariant length, not the
    // raw product functional: a run whose clock allocation is still off
    // scores a product value well above its geometric action and would
    // lose the sweep to a worse but better-balanced rival.
    int best_pin = -1;
    S best_len = S(0);
    detail::SpgResult<S> coarse;
    for (auto [idx, mode] : candidates) {
      // Axis probes only need enough descent to show whether their basin is
      // competitive; if one wins the sweep it still gets the full polish.
      const int cap = std::min(mode == 0 ? 3000 : 500, prob.max_iterations);
      auto res = detail::spg_minimize(p, ws, pin_init(idx, mode), eps, idx, cap, tol * S(30));
      const S len = length_of(res.nodes);
      sol.pin_sweep.emplace_back(idx, len);
      if (best_pin < 0 || len < best_len) {
        best_len = len;
        best_pin = idx;
        coarse = std::move(res);
      }
    }
    int polished_pin = -1;
    for (int off : {0, -1, 1}) {
      const int idx = best_pin + off;
      if (idx <= 0 || idx >= n) continue;
      auto res = detail::spg_minimize(p, ws, coarse.nodes, eps, idx, prob.max_iterations, tol);
      sol.pin_sweep.emplace_back(idx, S(2) * std::sqrt(res.j));
      if (polished_pin < 0 || res.j < pinned_run.j) {
        polished_pin = idx;
        pinned_run = std::move(res);
      }
    }
    sol.pinned_node = polished_pin;
    any_converged = any_converged || pinned_run.converged;
    winner = &pinned_run;
  }

  if (!any_converged)
    fail(ErrorCode::NoConvergence, "gradient residual above tolerance in every restart");

  sol.converged = winner->converged;
  sol.grad_residual = winner->residual;
  sol.iterations = winner->iterations;
  sol.j_value = winner->j;

  // --- re-timing --------------------------------------------------------
  DiscretePath<S> normalized{times, winner->nodes};
  const auto rec = recover_time(p, normalized);
  sol.t_bar = rec.t_bar;
  DiscretePath<S> timed = zero_energy_reparam(p, rec.path);
  const S mid = (timed.times[0] + timed.times[n]) / S(2);
  timed.times.array() -= mid;
  sol.path = std::move(timed);
  sol.action = lagrangian_action(p, sol.path).total;

  // --- contact and jumps ------------------------------------------------
  const ContactInfo<S> info = detect_contact(sol.path, eps);
  sol.contact_first = info.first;
  sol.contact_last = info.last;
  sol.t_star = info.t_star;
  sol.t_star2 = info.t_star2;
  sol.monotone_outside_contact = info.monotone_outside;
  sol.monotonicity_defect = info.worst_monotonicity_defect;

  const JumpEstimate<S> jumps = compute_jumps(sol.path, info, eps, p.alpha);
  sol.delta_pos = jumps.delta_pos;
  sol.delta_vel = jumps.delta_vel;
  sol.delta_vel_raw = jumps.delta_vel_raw;
  sol.jump_uncertainty = jumps.uncertainty;

  const S h_phys = (sol.path.times[n] - sol.path.times[0]) / S(n);
  sol.jump_tol = std::max(S(1e-3), S(5) * h_phys);
  if (sol.delta_pos > sol.jump_tol)
    sol.kind = ContactKind::PositionJumping;
  else if (sol.delta_vel > sol.jump_tol)
    sol.kind = ContactKind::VelocityJumping;
  else
    sol.kind = ContactKind::Parabolic;
  return sol;
}

// ---------------------------------------------------------------------------
// Exact homothetic rescaling and regularity cross-checks
// ---------------------------------------------------------------------------

/// z(t) = R x(R^{-(2+alpha)/2} t) maps a solution for (x1, x2, eps) onto one
/// for (R x1, R x2, R eps); action scales by R^{alpha*}, jumps are invariant.
template <typename S>
inline BolzaSolution<S> rescale_solution(const BolzaSolution<S>& sol, S R) {
  if (!(R > S(0))) fail(ErrorCode::InvalidArgument, "rescale factor must be positive");
  const S c = (S(2) + sol.alpha) / S(2);
  const S as = (S(2) - sol.alpha) / S(2);
  const S tc = std::pow(R, c), ac = std::pow(R, as);
  BolzaSolution<S> out = sol;
  out.path.nodes *= R;
  out.path.times *= tc;
  out.eps *= R;
  out.action *= ac;
  out.j_value *= ac * ac;
  out.t_bar *= tc;
  out.t_star *= tc;
  out.t_star2 *= tc;
  out.jump_tol = sol.jump_tol;  // invariant quantities keep their tolerance
  for (auto& a : out.restart_actions) a *= ac;
  for (auto& pr : out.pin_sweep) pr.second *= ac;
  return out;
}

struct RegularityReport {
  double fold_velocity_jump = 0;    // velocity defect of the Kelvin-folded path at t*
  double tangential_jump = 0;       // |tangential velocity difference| at t*
  double radial_antisymmetry = 0;   // |rdot(t*+) + rdot(t*-)|
  double entry_radial_speed = 0;    // |rdot(t*-)|
  double exit_radial_speed = 0;     // |rdot(t**+)|
  bool consistent = false;          // defects compatible with the declared kind
};

/// Folds the trajectory through the obstacle sphere with the Kelvin map and
/// measures the C^1 defect at first contact; the defects discriminate the
/// three contact cases.  Works on the eps = 1 normalization (rescales a copy
/// internally when needed).
template <typename S>
inline RegularityReport kelvin_regularity_check(const HomogeneousPotential<S>& p,
                                                const BolzaSolution<S>& sol_in) {
  const BolzaSolution<S> sol =
      std::abs(sol_in.eps - S(1)) > S(1e-12) ? rescale_solution(sol_in, S(1) / sol_in.eps) : sol_in;
  const DiscretePath<S>& path = sol.path;
  const int n = path.segments();
  const int a = sol.contact_first, b = sol.contact_last;
  const Vector<S>& t = path.times;

  auto velocity_before = [&](int i) -> Vector<S> {
    if (i >= 2)
      return detail::one_sided_derivative_cols(t[i], Vector<S>(path.nodes.col(i)), t[i - 1],
                                               Vector<S>(path.nodes.col(i - 1)), t[i - 2],
                                               Vector<S>(path.nodes.col(i - 2)));
    return Vector<S>((path.nodes.col(std::max(1, i)) - path.nodes.col(std::max(1, i) - 1)) /
                     (t[std::max(1, i)] - t[std::max(1, i) - 1]));
  };
  auto velocity_after = [&](int i) -> Vector<S> {
    if (i <= n - 2)
      return detail::one_sided_derivative_cols(t[i], Vector<S>(path.nodes.col(i)), t[i + 1],
                                               Vector<S>(path.nodes.col(i + 1)), t[i + 2],
                                               Vector<S>(path.nodes.col(i + 2)));
    const int j = std::min(n, i + 1);
    return Vector<S>((path.nodes.col(j) - path.nodes.col(j - 1)) / (t[j] - t[j - 1]));
  };

  const Vector<S> xa = path.nodes.col(a);
  const Vector<S> sa = xa / xa.norm();
  const S speed_scale = std::sqrt(S(2) * eval_v(p, xa));
  const Vector<S> v_in = velocity_before(a);
  const Vector<S> v_out = velocity_after(a);

  RegularityReport rep;
  const NodeMatrix<S> fold = kelvin_jacobian(Vector<S>(xa / xa.norm()));  // |x|=1 on contact
  rep.fold_velocity_jump = double((Vector<S>(fold * v_out) - v_in).norm() / speed_scale);
  const Vector<S> tan_in = v_in - v_in.dot(sa) * sa;
  const Vector<S> tan_out = v_out - v_out.dot(sa) * sa;
  rep.tangential_jump = double((tan_out - tan_in).norm() / speed_scale);
  rep.radial_antisymmetry = double(std::abs(v_out.dot(sa) + v_in.dot(sa)) / speed_scale);
  rep.entry_radial_speed = double(std::abs(v_in.dot(sa)) / speed_scale);
  const Vector<S> xb = path.nodes.col(b);
  rep.exit_radial_speed = double(std::abs(velocity_after(b).dot(xb / xb.norm())) / speed_scale);

  const double tol = 2e-2;  // one-sided fits at the contact limit the accuracy
  switch (sol.kind) {
    case ContactKind::Parabolic:
      rep.consistent = rep.fold_velocity_jump < tol;
      break;
    case ContactKind::VelocityJumping:
      rep.consistent = rep.tangential_jump < tol && rep.radial_antisymmetry < tol;
      break;
    case ContactKind::PositionJumping:
      rep.consistent = sol.t_star < sol.t_star2 && rep.entry_radial_speed < tol &&
                       rep.exit_radial_speed < tol;
      break;
  }
  return rep;
}

/// Residual of the constrained equation on the contact arc:
/// xdd = tangential grad V - |xdot|^2 x / eps^2, at interior contact nodes.
template <typename S>
inline Vector<S> constrained_el_residuals(const HomogeneousPotential<S>& p, const DiscretePath<S>& path,
                                          const ContactInfo<S>& info, S eps) {
  const int count = std::max(0, info.last - info.first - 1);
  Vector<S> res = Vector<S>::Zero(count);
  const NodeMatrix<S> vel = node_velocities(path);
  for (int k = 0; k < count; ++k) {
    const int i = info.first + 1 + k;
    const Vector<S> x = path.nodes.col(i);
    const Vector<S> s = x / x.norm();
    const Vector<S> acc = second_difference_cols(path.times, path.nodes, i);
    const Vector<S> grad_t = std::pow(eps, -p.alpha - S(1)) * tangential_grad(p, s);
    const Vector<S> rhs = grad_t - vel.col(i).squaredNorm() / (eps * eps) * x;
    res[k] = (acc - rhs).norm() / std::max(rhs.norm(), S(1e-12));
  }
  return res;
}

}  // namespace akp
