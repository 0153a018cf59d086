#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "akp/bolza.hpp"

namespace akp {

// ---------------------------------------------------------------------------
// Potential-level classification data
// ---------------------------------------------------------------------------

enum class Verdict { In, Out, PiCandidate };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::In: return "In";
    case Verdict::Out: return "Out";
    case Verdict::PiCandidate: return "Pi_candidate";
  }
  return "?";
}

/// Solver knobs shared by the classification drivers.  The defaults favour
/// speed; the obstacle solves behind these routines converge to a few parts
/// in 1e5 of the true action at grid_size 200.
template <typename S>
struct MorseOptions {
  int grid_size = 200;
  int restarts = 2;
  int max_iterations = 20000;
  S grad_tol = S(1e-8);
};

/// Receding-endpoint approximation of a constrained Morse minimizer: Bolza
/// solutions between R xi- and R xi+ with a fixed obstacle, for increasing R.
template <typename S>
struct MorseApproximation {
  std::vector<S> radii;
  std::vector<BolzaSolution<S>> solutions;  // endpoints R xi+-, obstacle eps
  std::vector<S> delta_pos_seq, delta_vel_seq;
  S stabilization_pos = std::numeric_limits<S>::infinity();
  S stabilization_vel = std::numeric_limits<S>::infinity();
  S jump_tol = S(1e-3);
  bool converged = false;
};

template <typename S>
struct PotentialJumps {
  S delta_pos = S(0);
  S delta_vel = S(0);
  // Finest-scale jump tolerance (from the contact-zone grid); the threshold
  // for calling a jump nonzero.  approx.jump_tol is the looser stabilization
  // tolerance measured on the outermost problem's clock.
  S contact_tol = S(1e-3);
  MorseApproximation<S> approx;
};

template <typename S>
struct GammaPoint {
  S eps = S(0);
  S m = S(0);           // m(V, eps)
  S gamma = S(0);       // (m(V, eps) - m(V, 0)) / eps^{alpha*}
  S min_radius = S(0);  // closest approach of the minimizer
};

template <typename S>
struct GammaEstimate {
  S value = S(0);        // last gamma of the schedule: an upper bound on the limit
  S uncertainty = S(0);  // gamma(2 eps_last) - gamma(eps_last), one-sided by monotonicity
  std::vector<GammaPoint<S>> curve;  // in schedule order (decreasing eps)
};

template <typename S>
struct PotentialClassification {
  S delta_pos_V = S(0), delta_vel_V = S(0);
  std::vector<std::pair<S, S>> gamma_curve;  // (eps, gamma), decreasing eps
  S gamma_zero_plus = S(0);
  S gamma_uncertainty = S(0);
  Verdict verdict = Verdict::PiCandidate;
  bool inconsistent = false;  // gamma criterion and jump criterion disagree
  S c_V = S(0);
  int dichotomy_case = 1;
  S achiever_min_radius = S(0);  // closest approach of the c_V minimizer (0 for collision)
  S jump_tol = S(1e-3);
  S gamma_tol = S(0);
  S m_zero_value = S(0);
};

template <typename S>
struct AlphaBarProbe {
  S alpha = S(0);
  S delta_vel = S(0);   // from the refined chain
  S jump_tol = S(0);    // contact tolerance widened by the refinement spread
  S gamma = S(0);
  S refine_gap = S(0);  // |delta_vel(2g) - delta_vel(g)| between the two grids
};

template <typename S>
struct AlphaBarResult {
  S alpha_bar = S(0);
  S lo = S(0), hi = S(0);  // final bracket
  std::vector<AlphaBarProbe<S>> probes;
  bool gamma_consistent = true;
};

template <typename S>
inline std::vector<S> default_eps_schedule() {
  return {S(0.4), S(0.2), S(0.1), S(0.05), S(0.025)};
}

template <typename S>
inline std::vector<S> default_radii_schedule() {
  return {S(5), S(10), S(20), S(40)};
}

// ---------------------------------------------------------------------------
// m(V, eps) and the renormalized level gamma
// ---------------------------------------------------------------------------

namespace detail {

/// Obstacle solve between the minimal directions at unit radius, optionally
/// warm-started from a previous solution (whose contact time also seeds the
/// pin sweep when the contact was inactive).
template <typename S>
inline BolzaSolution<S> solve_unit(const HomogeneousPotential<S>& p, S eps,
                                   const MorseOptions<S>& opt, const BolzaSolution<S>* warm) {
  BolzaProblem<S> prob;
  prob.potential = p;
  prob.x1 = p.angular.xi_minus;
  prob.x2 = p.angular.xi_plus;
  prob.eps = eps;
  prob.grid_size = opt.grid_size;
  prob.restarts = opt.restarts;
  prob.max_iterations = opt.max_iterations;
  prob.grad_tol = opt.grad_tol;
  if (warm != nullptr) {
    prob.warm_times = warm->path.times;
    prob.warm_nodes = warm->path.nodes;
    prob.restarts = 1;
    if (!warm->constraint_active) {
      const auto& t = warm->path.times;
      const S span = t[t.size() - 1] - t[0];
      prob.pin_time_hint = S(2) * (warm->t_star - t[0]) / span - S(1);
    }
  }
  BolzaSolution<S> sol = minimize_bolza(prob);
  if (!sol.converged && warm != nullptr) {
    // A stale warm start can steer the run into a slow valley; a cold
    // multistart is cheaper than trusting an unconverged chain stage.
    prob.warm_times.resize(0);
    prob.warm_nodes.resize(0, 0);
    prob.restarts = opt.restarts;
    prob.pin_time_hint = std::numeric_limits<S>::quiet_NaN();
    BolzaSolution<S> cold = minimize_bolza(prob);
    if (cold.converged || cold.action < sol.action) sol = std::move(cold);
  }
  return sol;
}

template <typename S>
inline S min_radius_of(const BolzaSolution<S>& sol) {
  S r = std::numeric_limits<S>::infinity();
  for (int i = 0; i <= sol.path.segments(); ++i) r = std::min(r, sol.path.nodes.col(i).norm());
  return r;
}

}  // namespace detail

/// m(V, eps): minimal Maupertuis action between the unit minimal directions
/// with an obstacle of radius eps.
template <typename S>
inline S m_of_eps(const HomogeneousPotential<S>& p, S eps, const MorseOptions<S>& opt = {}) {
  if (!(eps > S(0)) || !(eps <= S(1)))
    fail(ErrorCode::InvalidArgument, "m_of_eps requires 0 < eps <= 1");
  return detail::solve_unit(p, eps, opt, static_cast<const BolzaSolution<S>*>(nullptr)).action;
}

/// m(V, 0): two homothetic legs joining the unit sphere to the collision at
/// the minimal level, (2/alpha*) sqrt(2 V_min).
template <typename S>
inline S m_zero(const HomogeneousPotential<S>& p) {
  return S(2) * homothetic_action(S(0), S(1), p.angular.v_min, p.alpha);
}

/// gamma(V, eps) = (m(V, eps) - m(V, 0)) / eps^{alpha*}; increasing in eps.
template <typename S>
inline S gamma(const HomogeneousPotential<S>& p, S eps, const MorseOptions<S>& opt = {}) {
  return (m_of_eps(p, eps, opt) - m_zero(p)) / std::pow(eps, p.alpha_star);
}

/// Estimates gamma(V, 0+) = inf_eps gamma(V, eps) by walking a decreasing
/// eps schedule with warm-started solves.  The last value is an upper bound
/// of the limit; the uncertainty is the one-sided gap gamma(2 eps) - gamma(eps)
/// at the smallest eps, honest by monotonicity (no extrapolation model).
template <typename S>
inline GammaEstimate<S> gamma_zero_plus(const HomogeneousPotential<S>& p,
                                        const std::vector<S>& eps_schedule,
                                        const MorseOptions<S>& opt = {}) {
  if (eps_schedule.size() < 3)
    fail(ErrorCode::InvalidArgument, "eps schedule needs at least 3 values");
  for (size_t k = 0; k < eps_schedule.size(); ++k) {
    if (!(eps_schedule[k] > S(0)) || !(eps_schedule[k] <= S(1)))
      fail(ErrorCode::InvalidArgument, "eps schedule values must lie in (0, 1]");
    if (k > 0 && !(eps_schedule[k] < eps_schedule[k - 1]))
      fail(ErrorCode::InvalidArgument, "eps schedule must be strictly decreasing");
  }

  const S m0 = m_zero(p);
  GammaEstimate<S> est;
  BolzaSolution<S> prev;
  bool have_prev = false;
  for (S eps : eps_schedule) {
    const BolzaSolution<S> sol = detail::solve_unit(p, eps, opt, have_prev ? &prev : nullptr);
    GammaPoint<S> pt;
    pt.eps = eps;
    pt.m = sol.action;
    pt.gamma = (sol.action - m0) / std::pow(eps, p.alpha_star);
    pt.min_radius = detail::min_radius_of(sol);
    est.curve.push_back(pt);
    prev = sol;
    have_prev = true;
  }
  est.value = est.curve.back().gamma;

  const S eps_last = eps_schedule.back();
  const S eps_up = S(2) * eps_last;
  S gamma_up = std::numeric_limits<S>::quiet_NaN();
  for (const auto& pt : est.curve)
    if (std::abs(pt.eps - eps_up) <= S(1e-12) * eps_up) gamma_up = pt.gamma;
  if (!std::isfinite(gamma_up) && eps_up <= S(1))
    gamma_up = (detail::solve_unit(p, eps_up, opt, &prev).action - m0) / std::pow(eps_up, p.alpha_star);
  est.uncertainty = std::isfinite(gamma_up) ? gamma_up - est.value : S(0);
  return est;
}

template <typename S>
inline GammaEstimate<S> gamma_zero_plus(const HomogeneousPotential<S>& p,
                                        const MorseOptions<S>& opt = {}) {
  return gamma_zero_plus(p, default_eps_schedule<S>(), opt);
}

// ---------------------------------------------------------------------------
// Jumps of a potential: receding-endpoint chain
// ---------------------------------------------------------------------------

namespace detail {

/// The chain behind jumps_of_potential, shared with classify (which reports
/// a failed stabilization as a flag instead of an error).  The problem with
/// endpoints R xi+- and obstacle eps is the exact R-rescaling of the unit
/// problem with obstacle eps / R, so each stage solves at unit radius (the
/// jumps are scale invariants and can be read off directly) and only the
/// stored solutions are blown back up.
template <typename S>
inline PotentialJumps<S> jumps_chain(const HomogeneousPotential<S>& p, S eps,
                                     const std::vector<S>& radii, const MorseOptions<S>& opt) {
  if (radii.size() < 3) fail(ErrorCode::InvalidArgument, "radii schedule needs at least 3 values");
  for (size_t k = 0; k < radii.size(); ++k) {
    if (!(radii[k] > S(1))) fail(ErrorCode::InvalidArgument, "radii must exceed the unit sphere");
    if (k > 0 && !(radii[k] > radii[k - 1]))
      fail(ErrorCode::InvalidArgument, "radii schedule must be strictly increasing");
  }
  if (!(eps > S(0)) || !(eps < radii.front()))
    fail(ErrorCode::InvalidArgument, "obstacle must fit inside the smallest endpoint radius");

  PotentialJumps<S> out;
  out.approx.radii = radii;
  BolzaSolution<S> prev;
  bool have_prev = false;
  for (S R : radii) {
    BolzaSolution<S> unit = solve_unit(p, eps / R, opt, have_prev ? &prev : nullptr);
    out.approx.delta_pos_seq.push_back(unit.delta_pos);
    out.approx.delta_vel_seq.push_back(unit.delta_vel);
    out.contact_tol = unit.jump_tol;
    prev = unit;
    have_prev = true;
    out.approx.solutions.push_back(rescale_solution(unit, R));
  }
  // Stabilization is judged on the outermost problem's own clock (the grid a
  // direct solve between R xi+- would carry): mean spacing of the stored,
  // blown-up solution.  The jumps themselves are rescaling invariants, so
  // the values are unaffected by solving at unit radius.
  const auto& last = out.approx.solutions.back().path.times;
  const S h_outer = (last[last.size() - 1] - last[0]) / S(last.size() - 1);
  out.approx.jump_tol = std::max(S(1e-3), S(5) * h_outer);
  const size_t k = out.approx.delta_pos_seq.size();
  out.delta_pos = out.approx.delta_pos_seq.back();
  out.delta_vel = out.approx.delta_vel_seq.back();
  out.approx.stabilization_pos =
      std::abs(out.approx.delta_pos_seq[k - 1] - out.approx.delta_pos_seq[k - 2]);
  out.approx.stabilization_vel =
      std::abs(out.approx.delta_vel_seq[k - 1] - out.approx.delta_vel_seq[k - 2]);
  out.approx.converged = out.approx.stabilization_pos < out.approx.jump_tol &&
                         out.approx.stabilization_vel < out.approx.jump_tol;
  return out;
}

}  // namespace detail

/// Jumps of the potential via Bolza solutions with receding endpoints
/// R xi+- (R over the schedule) and a fixed obstacle.  The jump sequences
/// must stabilize: moving less than jump_tol between the last two radii
/// declares convergence, disagreement beyond 5x jump_tol is an error.
template <typename S>
inline PotentialJumps<S> jumps_of_potential(const HomogeneousPotential<S>& p, S eps,
                                            const std::vector<S>& radii,
                                            const MorseOptions<S>& opt = {}) {
  PotentialJumps<S> out = detail::jumps_chain(p, eps, radii, opt);
  const S cap = S(5) * out.approx.jump_tol;
  if (out.approx.stabilization_pos > cap || out.approx.stabilization_vel > cap) {
    std::string seq = "jump sequences did not stabilize:";
    for (size_t i = 0; i < out.approx.radii.size(); ++i)
      seq += " (R=" + std::to_string(double(out.approx.radii[i])) +
             " dpos=" + std::to_string(double(out.approx.delta_pos_seq[i])) +
             " dvel=" + std::to_string(double(out.approx.delta_vel_seq[i])) + ")";
    fail(ErrorCode::NotStabilized, seq);
  }
  return out;
}

template <typename S>
inline PotentialJumps<S> jumps_of_potential(const HomogeneousPotential<S>& p, S eps = S(0.2),
                                            const MorseOptions<S>& opt = {}) {
  return jumps_of_potential(p, eps, default_radii_schedule<S>(), opt);
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

/// Full In / Out / Pi_candidate classification. Two independent criteria are
/// computed: the sign of gamma(V, 0+) and the limiting velocity jump.  They
/// must agree; a disagreement beyond the tolerances raises the inconsistent
/// flag (never silently resolved, though the verdict then follows the jump
/// criterion, which is the robust one near the Pi boundary).
template <typename S>
inline PotentialClassification<S> classify(const HomogeneousPotential<S>& p,
                                           const MorseOptions<S>& opt = {},
                                           const std::vector<S>& eps_schedule = default_eps_schedule<S>(),
                                           S eps_jumps = S(0.2),
                                           const std::vector<S>& radii = default_radii_schedule<S>()) {
  const GammaEstimate<S> ge = gamma_zero_plus(p, eps_schedule, opt);
  const PotentialJumps<S> pj = detail::jumps_chain(p, eps_jumps, radii, opt);

  PotentialClassification<S> out;
  out.delta_pos_V = pj.delta_pos;
  out.delta_vel_V = pj.delta_vel;
  out.gamma_zero_plus = ge.value;
  out.gamma_uncertainty = ge.uncertainty;
  for (const auto& pt : ge.curve) out.gamma_curve.emplace_back(pt.eps, pt.gamma);
  out.jump_tol = pj.contact_tol;
  out.gamma_tol = std::max(S(2) * std::abs(ge.uncertainty), S(5e-2));
  out.m_zero_value = m_zero(p);

  const bool g_in = ge.value > out.gamma_tol;
  const bool g_out = ge.value < -out.gamma_tol;
  const bool v_out = pj.delta_vel > pj.contact_tol;
  if (g_in && !v_out) {
    out.verdict = Verdict::In;
  } else if (g_out && v_out) {
    out.verdict = Verdict::Out;
  } else if (!g_in && !g_out && !v_out && pj.delta_pos < pj.contact_tol) {
    out.verdict = Verdict::PiCandidate;
  } else {
    out.verdict = v_out ? Verdict::Out : Verdict::In;
    out.inconsistent = (g_in && v_out) || (g_out && !v_out);
  }

  // c(V): minimum of m over the sampled levels, capped by the collision value.
  out.c_V = out.m_zero_value;
  out.achiever_min_radius = S(0);
  for (const auto& pt : ge.curve) {
    if (pt.m < out.c_V) {
      out.c_V = pt.m;
      out.achiever_min_radius = pt.min_radius;
    }
  }
  const S ctol = S(1e-2) * std::max(S(1), out.m_zero_value);
  out.dichotomy_case = out.c_V >= out.m_zero_value - ctol ? 1 : 2;
  return out;
}

// ---------------------------------------------------------------------------
// Critical homogeneity exponent
// ---------------------------------------------------------------------------

/// Bisection for the critical exponent alpha_bar(U) where the angular
/// potential crosses from In to Out.  The iteration keys on the sign of the
/// limiting velocity jump: near the crossing gamma tends to 0 and its sign
/// drowns in solver noise, while on the Out side the velocity reflection is
/// bounded away from zero.  Each probe is audited against a once-refined
/// grid so that contact-arc discretization noise cannot pass for a jump.
/// gamma is still evaluated (on a short schedule) as a cross-check at every
/// probe.
template <typename S>
inline AlphaBarResult<S> find_alpha_bar(const AngularPotential<S>& U, S alpha_lo, S alpha_hi,
                                        const MorseOptions<S>& opt = {}, S width = S(1e-2)) {
  if (!(S(0) < alpha_lo) || !(alpha_lo < alpha_hi) || !(alpha_hi < S(2)))
    fail(ErrorCode::InvalidArgument, "need 0 < alpha_lo < alpha_hi < 2");
  const std::vector<S> probe_radii = {S(5), S(10), S(20)};
  const std::vector<S> probe_eps = {S(0.4), S(0.2), S(0.1)};
  const S eps_jumps = S(0.2);

  AlphaBarResult<S> out;
  auto probe = [&](S alpha) -> AlphaBarProbe<S> {
    const HomogeneousPotential<S> p(U, alpha);
    // Audit each measurement with a once-refined chain.  On the In side a
    // sliding contact arc leaves a raw velocity gap that is pure
    // discretization noise and shrinks under refinement; a genuine
    // reflection is grid-stable.  Keying on the refined value with the
    // threshold widened by the observed spread separates the two without
    // trusting any single grid.
    const PotentialJumps<S> pj = detail::jumps_chain(p, eps_jumps, probe_radii, opt);
    MorseOptions<S> fine = opt;
    fine.grid_size = 2 * opt.grid_size;
    const PotentialJumps<S> pf = detail::jumps_chain(p, eps_jumps, probe_radii, fine);
    const GammaEstimate<S> ge = gamma_zero_plus(p, probe_eps, opt);
    const S gap = std::abs(pf.delta_vel - pj.delta_vel);
    AlphaBarProbe<S> pr{alpha, pf.delta_vel, std::max(pf.contact_tol, S(3) * gap), ge.value, gap};
    out.probes.push_back(pr);
    // The cross-check tolerates a vanishing gamma but not a confident
    // opposite sign.
    const S slack = std::max(S(2) * std::abs(ge.uncertainty), S(0.1));
    const bool is_out = pr.delta_vel > pr.jump_tol;
    if ((is_out && ge.value > slack) || (!is_out && ge.value < -slack)) out.gamma_consistent = false;
    return pr;
  };

  const AlphaBarProbe<S> lo_probe = probe(alpha_lo);
  if (lo_probe.delta_vel > lo_probe.jump_tol)
    fail(ErrorCode::BadBracket, "lower alpha endpoint already has a velocity jump (not In)");
  const AlphaBarProbe<S> hi_probe = probe(alpha_hi);
  if (!(hi_probe.delta_vel > hi_probe.jump_tol))
    fail(ErrorCode::BadBracket, "upper alpha endpoint shows no velocity jump (not Out)");

  S lo = alpha_lo, hi = alpha_hi;
  while (hi - lo > width) {
    const S mid = (lo + hi) / S(2);
    const AlphaBarProbe<S> pr = probe(mid);
    if (pr.delta_vel > pr.jump_tol)
      hi = mid;
    else
      lo = mid;
  }
  out.alpha_bar = (lo + hi) / S(2);
  out.lo = lo;
  out.hi = hi;
  return out;
}

// ---------------------------------------------------------------------------
// Free-flight asymptotics
// ---------------------------------------------------------------------------

template <typename S>
struct IntegratedTrajectory {
  Vector<S> times;          // sample clock, starting at 0
  NodeMatrix<S> nodes;      // sampled positions
  NodeMatrix<S> velocities; // sampled velocities
  S energy_drift = S(0);    // max |E - E_0| relative to the initial potential scale
  S step = S(0);
};

/// Fixed-step RK4 integration of xdd = grad V from (x0, v0); meant for
/// zero-energy escape tails.  Samples every `stride` steps (plus the final
/// state) and tracks the worst energy drift.
template <typename S>
inline IntegratedTrajectory<S> integrate_zero_energy(const HomogeneousPotential<S>& p,
                                                     const Vector<S>& x0, const Vector<S>& v0,
                                                     S horizon, S h = S(1e-2), int stride = 500) {
  if (!(h > S(0)) || !(horizon > h)) fail(ErrorCode::InvalidArgument, "need 0 < h < horizon");
  if (stride < 1) fail(ErrorCode::InvalidArgument, "stride must be positive");
  if (!(x0.norm() > S(1e-8))) fail(ErrorCode::ZeroRadius, "initial point too close to the singularity");

  const int d = int(x0.size());
  const long steps = long(std::ceil(horizon / h));
  const long n_samples = steps / stride + 2;
  IntegratedTrajectory<S> out;
  out.step = h;
  out.times.resize(n_samples);
  out.nodes.resize(d, n_samples);
  out.velocities.resize(d, n_samples);

  auto energy = [&](const Vector<S>& x, const Vector<S>& v) {
    return v.squaredNorm() / S(2) - eval_v(p, x);
  };

  Vector<S> x = x0, v = v0;
  const S e0 = energy(x, v);
  const S e_scale = std::max({S(1e-12), std::abs(e0), eval_v(p, Vector<S>(x0))});
  long col = 0;
  auto record = [&](S t) {
    out.times[col] = t;
    out.nodes.col(col) = x;
    out.velocities.col(col) = v;
    ++col;
  };
  record(S(0));

  Vector<S> k1x(d), k1v(d), k2x(d), k2v(d), k3x(d), k3v(d), k4x(d), k4v(d);
  for (long s = 1; s <= steps; ++s) {
    k1x = v;
    k1v = grad_v(p, x);
    k2x = v + (h / S(2)) * k1v;
    k2v = grad_v(p, Vector<S>(x + (h / S(2)) * k1x));
    k3x = v + (h / S(2)) * k2v;
    k3v = grad_v(p, Vector<S>(x + (h / S(2)) * k2x));
    k4x = v + h * k3v;
    k4v = grad_v(p, Vector<S>(x + h * k3x));
    x += (h / S(6)) * (k1x + S(2) * k2x + S(2) * k3x + k4x);
    v += (h / S(6)) * (k1v + S(2) * k2v + S(2) * k3v + k4v);
    // A fixed step cannot resolve a close approach once it moves the state
    // by more than the current radius (it would silently tunnel through the
    // singularity), so that counts as a collision too.
    const S r_now = x.norm();
    if (!(r_now > S(1e-6)) || r_now < h * v.norm())
      fail(ErrorCode::CollisionNode, "trajectory fell into the singularity");
    out.energy_drift = std::max(out.energy_drift, std::abs(energy(x, v) - e0) / e_scale);
    if (s % stride == 0 || s == steps) record(S(s) * h);
  }
  out.times.conservativeResize(col);
  out.nodes.conservativeResize(d, col);
  out.velocities.conservativeResize(d, col);
  return out;
}

struct DiagnosticsReport {
  double horizon = 0;
  double energy_drift = 0;
  double fitted_exponent = 0;    // slope of log r vs log t over the last decade
  double exponent_expected = 0;  // 2 / (2 + alpha)
  double k_ratio = 0;            // r / (K t)^{2/(2+alpha)} at the horizon
  double radial_momentum = 0;    // r^{alpha/2} rdot at the horizon
  double radial_momentum_expected = 0;  // sqrt(2 gamma_end)
  double gamma_end = 0;                 // angular level at the terminal direction
  double tail_decay_first = 0, tail_decay_last = 0;  // r^{alpha*} |s - xi| over the decade
  bool decay_monotone = true;
};

/// Asymptotic audit of an escape tail: growth exponent of r(t), the radial
/// momentum limit, the Kepler-like constant K = (2+alpha)/2 sqrt(2 gamma),
/// and decay of the direction toward the nearest minimal direction.
template <typename S>
inline DiagnosticsReport asymptotic_diagnostics(const HomogeneousPotential<S>& p,
                                                const IntegratedTrajectory<S>& traj) {
  if (traj.energy_drift > S(1e-6))
    fail(ErrorCode::EnergyDrift, "relative energy drift above 1e-6: " + std::to_string(double(traj.energy_drift)));
  const long n = traj.times.size();
  if (n < 16) fail(ErrorCode::InvalidArgument, "too few samples for asymptotics");

  DiagnosticsReport rep;
  const S t_end = traj.times[n - 1];
  rep.horizon = double(t_end);
  rep.energy_drift = double(traj.energy_drift);
  rep.exponent_expected = 2.0 / (2.0 + double(p.alpha));

  long first = n - 1;
  while (first > 0 && traj.times[first - 1] >= t_end / S(10)) --first;

  // Least-squares slope of log r against log t over the last decade.
  S sx = 0, sy = 0, sxx = 0, sxy = 0;
  long cnt = 0;
  for (long i = first; i < n; ++i) {
    const S lx = std::log(traj.times[i]);
    const S ly = std::log(traj.nodes.col(i).norm());
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++cnt;
  }
  rep.fitted_exponent = double((S(cnt) * sxy - sx * sy) / (S(cnt) * sxx - sx * sx));

  const Vector<S> x_end = traj.nodes.col(n - 1);
  const S r_end = x_end.norm();
  const Vector<S> s_end = x_end / r_end;
  rep.gamma_end = double(p.angular.eval(s_end));
  const S K = (S(2) + p.alpha) / S(2) * std::sqrt(S(2) * S(rep.gamma_end));
  rep.k_ratio = double(r_end / std::pow(K * t_end, S(2) / (S(2) + p.alpha)));
  const S rdot_end = traj.velocities.col(n - 1).dot(s_end);
  rep.radial_momentum = double(std::pow(r_end, p.alpha / S(2)) * rdot_end);
  rep.radial_momentum_expected = double(std::sqrt(S(2) * S(rep.gamma_end)));

  const Vector<S>& xi = (s_end - p.angular.xi_plus).norm() <= (s_end - p.angular.xi_minus).norm()
                            ? p.angular.xi_plus
                            : p.angular.xi_minus;
  auto decay = [&](long i) {
    const S r = traj.nodes.col(i).norm();
    return std::pow(r, p.alpha_star) * (Vector<S>(traj.nodes.col(i) / r) - xi).norm();
  };
  rep.tail_decay_first = double(decay(first));
  rep.tail_decay_last = double(decay(n - 1));
  for (long i = first; i + 1 < n; ++i)
    if (decay(i + 1) > decay(i) + S(1e-6)) rep.decay_monotone = false;
  return rep;
}

}  // namespace akp
