#pragma once

// Angular potentials U on the unit sphere and their homogeneous extensions
// V(x) = U(x/|x|) / |x|^alpha, together with the shape checks used before any
// trajectory computation: the minimum/quadratic-growth validation and the
// barrier separation criterion on the sphere.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "akp/types.hpp"

namespace akp {

template <typename S>
struct AngularPotential {
  int dim = 2;
  std::function<S(const Vector<S>&)> eval;  // U at a unit vector
  // Ambient gradient of the degree-0 extension of U, evaluated at unit
  // vectors.  May be empty, in which case great-circle finite differences are
  // used.  Any radial component is projected away by the callers.
  std::function<Vector<S>(const Vector<S>&)> grad;
  Vector<S> xi_minus;
  Vector<S> xi_plus;
  S v_min = S(1);
  S mu = S(1);      // claimed quadratic-growth constant near xi_pm
  S delta = S(0.5); // radius of the claimed growth neighborhood
};

namespace detail {

template <typename S>
inline void check_unit(const Vector<S>& s, const char* who) {
  if (std::abs(s.norm() - S(1)) > S(1e-9))
    fail(ErrorCode::NotUnit, std::string(who) + ": |s| deviates from 1 beyond 1e-9");
}

// Orthonormal basis of the tangent space at unit vector s (d-1 columns).
template <typename S>
inline NodeMatrix<S> tangent_basis(const Vector<S>& s) {
  const int d = int(s.size());
  Eigen::HouseholderQR<NodeMatrix<S>> qr(s);
  NodeMatrix<S> q = qr.householderQ();
  return q.rightCols(d - 1);
}

}  // namespace detail

/// Gradient of U restricted to the sphere via central great-circle finite
/// differences.  Used as fallback when no analytic gradient is supplied.
template <typename S>
inline Vector<S> sphere_fd_gradient(const AngularPotential<S>& p, const Vector<S>& s, S step = S(1e-6)) {
  detail::check_unit(s, "sphere_fd_gradient");
  NodeMatrix<S> tb = detail::tangent_basis(s);
  Vector<S> g = Vector<S>::Zero(s.size());
  const S c = std::cos(step), sn = std::sin(step);
  for (int k = 0; k < tb.cols(); ++k) {
    Vector<S> e = tb.col(k);
    const S up = p.eval(c * s + sn * e);
    const S um = p.eval(c * s - sn * e);
    g += ((up - um) / (S(2) * step)) * e;
  }
  return g;
}

/// Spherical (tangential) gradient of U at unit s; equals the ambient
/// gradient of V plus alpha*V*s on the sphere, and is orthogonal to s.
template <typename S>
inline Vector<S> angular_gradient(const AngularPotential<S>& p, const Vector<S>& s) {
  detail::check_unit(s, "angular_gradient");
  Vector<S> g = p.grad ? p.grad(s) : sphere_fd_gradient(p, s);
  return g - g.dot(s) * s;  // drop any radial part of the extension
}

template <typename S>
struct HomogeneousPotential {
  AngularPotential<S> angular;
  S alpha = S(1);
  S alpha_star = S(0.5);  // (2 - alpha) / 2

  HomogeneousPotential() = default;
  HomogeneousPotential(AngularPotential<S> a, S alpha_in) : angular(std::move(a)), alpha(alpha_in) {
    if (!(alpha > S(0) && alpha < S(2)))
      fail(ErrorCode::BadExponent, "homogeneity degree must satisfy 0 < alpha < 2");
    alpha_star = (S(2) - alpha) / S(2);
  }
};

template <typename S>
inline S eval_v(const HomogeneousPotential<S>& p, const Vector<S>& x) {
  const S r = x.norm();
  if (r < S(1e-14)) fail(ErrorCode::ZeroRadius, "potential evaluated at |x| < 1e-14");
  return p.angular.eval(x / r) * std::pow(r, -p.alpha);
}

template <typename S>
inline Vector<S> grad_v(const HomogeneousPotential<S>& p, const Vector<S>& x) {
  const S r = x.norm();
  if (r < S(1e-14)) fail(ErrorCode::ZeroRadius, "gradient evaluated at |x| < 1e-14");
  const Vector<S> s = x / r;
  const Vector<S> gt = angular_gradient(p.angular, s);
  return std::pow(r, -p.alpha - S(1)) * (gt - p.alpha * p.angular.eval(s) * s);
}

/// Tangential gradient of V on the unit sphere: grad V(s) + alpha V(s) s.
template <typename S>
inline Vector<S> tangential_grad(const HomogeneousPotential<S>& p, const Vector<S>& s) {
  detail::check_unit(s, "tangential_grad");
  return angular_gradient(p.angular, s);
}

// ---------------------------------------------------------------------------
// Constructors for concrete potentials
// ---------------------------------------------------------------------------

/// Planar angular potential from a trigonometric polynomial
/// U(theta) = a0 + sum_k a_k cos(k theta) + sum_k b_k sin(k theta).
template <typename S>
struct FourierSeries {
  Vector<S> cos_coeffs;  // a0, a1, ..., an
  Vector<S> sin_coeffs;  // b1, ..., bm (may be empty)

  S value(S theta) const {
    S u = cos_coeffs.size() ? cos_coeffs[0] : S(0);
    for (int k = 1; k < cos_coeffs.size(); ++k) u += cos_coeffs[k] * std::cos(S(k) * theta);
    for (int k = 1; k <= sin_coeffs.size(); ++k) u += sin_coeffs[k - 1] * std::sin(S(k) * theta);
    return u;
  }
  S derivative(S theta) const {
    S u = S(0);
    for (int k = 1; k < cos_coeffs.size(); ++k) u -= S(k) * cos_coeffs[k] * std::sin(S(k) * theta);
    for (int k = 1; k <= sin_coeffs.size(); ++k) u += S(k) * sin_coeffs[k - 1] * std::cos(S(k) * theta);
    return u;
  }
};

template <typename S>
inline Vector<S> unit2(S x, S y) {
  Vector<S> v(2);
  v << x, y;
  return v;
}

/// d = 2 potential given as functions of the polar angle.
template <typename S>
inline AngularPotential<S> angular_from_theta(std::function<S(S)> u, std::function<S(S)> du,
                                              Vector<S> xi_minus, Vector<S> xi_plus, S mu, S delta) {
  AngularPotential<S> p;
  p.dim = 2;
  p.eval = [u](const Vector<S>& s) { return u(std::atan2(s[1], s[0])); };
  if (du) {
    p.grad = [du](const Vector<S>& s) {
      const S th = std::atan2(s[1], s[0]);
      Vector<S> e(2);
      e << -std::sin(th), std::cos(th);
      return Vector<S>(du(th) * e);
    };
  }
  p.xi_minus = std::move(xi_minus);
  p.xi_plus = std::move(xi_plus);
  detail::check_unit(p.xi_minus, "angular_from_theta");
  detail::check_unit(p.xi_plus, "angular_from_theta");
  p.v_min = p.eval(p.xi_minus);
  p.mu = mu;
  p.delta = delta;
  return p;
}

template <typename S>
inline AngularPotential<S> angular_from_fourier(const FourierSeries<S>& f, Vector<S> xi_minus,
                                                Vector<S> xi_plus, S mu, S delta) {
  return angular_from_theta<S>([f](S th) { return f.value(th); },
                               [f](S th) { return f.derivative(th); },
                               std::move(xi_minus), std::move(xi_plus), mu, delta);
}

/// Arbitrary-dimension potential from unit-sphere callables.  A missing
/// gradient enables the finite-difference fallback.
template <typename S>
inline AngularPotential<S> angular_from_sphere(int dim, std::function<S(const Vector<S>&)> eval,
                                               std::function<Vector<S>(const Vector<S>&)> grad,
                                               Vector<S> xi_minus, Vector<S> xi_plus, S mu, S delta) {
  if (dim < 2) fail(ErrorCode::InvalidArgument, "dim must be >= 2");
  AngularPotential<S> p;
  p.dim = dim;
  p.eval = std::move(eval);
  p.grad = std::move(grad);
  p.xi_minus = std::move(xi_minus);
  p.xi_plus = std::move(xi_plus);
  detail::check_unit(p.xi_minus, "angular_from_sphere");
  detail::check_unit(p.xi_plus, "angular_from_sphere");
  p.v_min = p.eval(p.xi_minus);
  p.mu = mu;
  p.delta = delta;
  return p;
}

/// Built-in planar potentials used throughout the test batteries:
///   isotropic : U = 1            (flat; fails the growth validation)
///   devaney   : U = 2 - cos 2t   (minima on the x axis, maxima on the y axis)
///   barrier50 : U = 1 + 50 sin^2 t = 26 - 25 cos 2t (strong equatorial wall)
template <typename S>
inline AngularPotential<S> builtin_potential(const std::string& name) {
  FourierSeries<S> f;
  if (name == "isotropic") {
    f.cos_coeffs = Vector<S>::Constant(1, S(1));
    return angular_from_fourier<S>(f, unit2<S>(-1, 0), unit2<S>(1, 0), S(0.1), S(0.5));
  }
  if (name == "devaney") {
    f.cos_coeffs = Vector<S>(3);
    f.cos_coeffs << S(2), S(0), S(-1);
    return angular_from_fourier<S>(f, unit2<S>(1, 0), unit2<S>(-1, 0), S(1), S(0.5));
  }
  if (name == "barrier50") {
    f.cos_coeffs = Vector<S>(3);
    f.cos_coeffs << S(26), S(0), S(-25);
    return angular_from_fourier<S>(f, unit2<S>(1, 0), unit2<S>(-1, 0), S(10), S(0.5));
  }
  fail(ErrorCode::InvalidArgument, "unknown built-in potential '" + name + "'");
}

// ---------------------------------------------------------------------------
// Deterministic quasi-uniform sphere sampling
// ---------------------------------------------------------------------------

/// Quasi-uniform deterministic point set on S^{d-1}.  d=2 uses uniform
/// angles, d=3 a Fibonacci lattice, d>=4 a fixed-seed random net.  The second
/// member reports the geodesic resolution (approximate covering radius).
template <typename S>
struct SphereNet {
  std::vector<Vector<S>> points;
  S resolution;
};

template <typename S>
inline SphereNet<S> sphere_net(int dim, int n) {
  SphereNet<S> net;
  net.points.reserve(n);
  if (dim == 2) {
    for (int i = 0; i < n; ++i) {
      const S th = S(2) * S(std::numbers::pi) * S(i) / S(n);
      net.points.push_back(unit2<S>(std::cos(th), std::sin(th)));
    }
    net.resolution = S(std::numbers::pi) / S(n);  // half the sample spacing
    return net;
  }
  if (dim == 3) {
    const S golden = S(std::numbers::pi) * (S(3) - std::sqrt(S(5)));
    for (int i = 0; i < n; ++i) {
      const S z = S(1) - (S(2) * S(i) + S(1)) / S(n);
      const S rho = std::sqrt(std::max(S(0), S(1) - z * z));
      const S phi = golden * S(i);
      Vector<S> v(3);
      v << rho * std::cos(phi), rho * std::sin(phi), z;
      net.points.push_back(std::move(v));
    }
    net.resolution = std::sqrt(S(4) * S(std::numbers::pi) / S(n));
    return net;
  }
  std::mt19937_64 rng(0x5EED5A17ull + 1000003ull * uint64_t(dim));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    Vector<S> v(dim);
    for (int k = 0; k < dim; ++k) v[k] = S(gauss(rng));
    v.normalize();
    net.points.push_back(std::move(v));
  }
  const double log_area = std::log(2.0) + (dim / 2.0) * std::log(std::numbers::pi) - std::lgamma(dim / 2.0);
  net.resolution = S(std::exp((log_area - std::log(double(n))) / double(dim - 1)));
  return net;
}

// ---------------------------------------------------------------------------
// Shape validation
// ---------------------------------------------------------------------------

struct ClassSReport {
  bool pass = false;
  bool endpoints_consistent = false;  // V(xi-) == V(xi+) == sampled minimum
  bool global_min_ok = false;
  bool growth_ok = false;
  bool gradient_ok = false;
  double worst_min_violation = 0;   // max over samples of v_min - V(s), if positive
  double worst_growth_margin = 0;   // min over near-xi samples of V - v_min - mu |s-xi|^2
  double worst_gradient_rel = 0;    // analytic vs finite-difference tangential gradient
  double resolution = 0;
  int samples = 0;
};

/// Sampled verification of the standing assumptions on U: the declared
/// endpoints realize the global minimum and V grows at least quadratically
/// (constant mu) within distance delta of each endpoint.
template <typename S>
inline ClassSReport validate_class_s(const HomogeneousPotential<S>& p, int n_samples = 10000) {
  if (n_samples < 100) fail(ErrorCode::InvalidArgument, "validate_class_s needs >= 100 samples");
  const AngularPotential<S>& a = p.angular;
  ClassSReport rep;
  rep.samples = n_samples;

  const S v_minus = a.eval(a.xi_minus);
  const S v_plus = a.eval(a.xi_plus);
  const S scale = std::max(S(1), std::abs(a.v_min));
  rep.endpoints_consistent = std::abs(v_minus - v_plus) <= S(1e-8) * scale &&
                             std::abs(v_minus - a.v_min) <= S(1e-8) * scale;

  SphereNet<S> net = sphere_net<S>(a.dim, n_samples);
  rep.resolution = double(net.resolution);

  S worst_min = S(0);
  S worst_growth = std::numeric_limits<S>::infinity();
  bool saw_growth_sample = false;
  for (const Vector<S>& s : net.points) {
    const S u = a.eval(s);
    worst_min = std::max(worst_min, a.v_min - u);
    for (const Vector<S>* xi : {&a.xi_minus, &a.xi_plus}) {
      const S d = (s - *xi).norm();
      if (d > S(1e-12) && d < a.delta) {
        saw_growth_sample = true;
        worst_growth = std::min(worst_growth, u - a.v_min - a.mu * d * d);
      }
    }
  }
  rep.worst_min_violation = double(worst_min);
  rep.global_min_ok = worst_min <= S(1e-8) * scale;
  rep.worst_growth_margin = saw_growth_sample ? double(worst_growth) : 0.0;
  rep.growth_ok = saw_growth_sample && worst_growth >= -S(1e-8) * scale;

  // Analytic gradient against great-circle differences on a coarse subset.
  S worst_grad = S(0);
  const int stride = std::max(1, n_samples / 64);
  for (size_t i = 0; i < net.points.size(); i += size_t(stride)) {
    const Vector<S>& s = net.points[i];
    const Vector<S> ga = angular_gradient(a, s);
    const Vector<S> gf = sphere_fd_gradient(a, s, S(1e-5));
    const S denom = std::max(gf.norm(), S(1e-6) * scale);
    worst_grad = std::max(worst_grad, (ga - gf).norm() / denom);
  }
  rep.worst_gradient_rel = double(worst_grad);
  rep.gradient_ok = worst_grad <= S(1e-5) || !a.grad;  // FD fallback is trivially consistent

  rep.pass = rep.endpoints_consistent && rep.global_min_ok && rep.growth_ok && rep.gradient_ok;
  return rep;
}

// ---------------------------------------------------------------------------
// Barrier separation criterion
// ---------------------------------------------------------------------------

template <typename S>
struct SphereRegion {
  std::function<bool(const Vector<S>&)> contains;
};

/// Open region {s : U(s) > threshold}.
template <typename S>
inline SphereRegion<S> region_above_threshold(const AngularPotential<S>& a, S threshold) {
  auto eval = a.eval;
  return SphereRegion<S>{[eval, threshold](const Vector<S>& s) { return eval(s) > threshold; }};
}

struct SigmaReport {
  double lhs = 0;         // sqrt(2 min_O (V - v_min)) * dist(F-, F+)
  double rhs = 0;         // 2 sqrt(2 v_min)
  bool in_sigma = false;  // sufficient condition satisfied
  double min_excess = 0;  // min over the closed region of V - v_min
  double dist = 0;        // distance between the complement components
  double resolution = 0;  // sampling resolution of the certificate
};

/// Sufficient criterion for topological separation by a potential barrier:
/// the complement of the open region must split into exactly two components,
/// one per endpoint, and the barrier must be high and wide enough.
template <typename S>
inline SigmaReport sigma_criterion(const HomogeneousPotential<S>& p, const SphereRegion<S>& region,
                                   int n_samples = 20000, S net_spacing = S(0.05)) {
  const AngularPotential<S>& a = p.angular;
  if (region.contains(a.xi_minus) || region.contains(a.xi_plus))
    fail(ErrorCode::BadTopology, "an endpoint direction lies inside the barrier region");

  SigmaReport rep;
  rep.rhs = double(S(2) * std::sqrt(S(2) * a.v_min));

  if (a.dim == 2) {
    // Exact arc treatment on the circle: locate the complement arcs and
    // refine their endpoints by bisection on the membership predicate.
    const int n = n_samples;
    const S two_pi = S(2) * S(std::numbers::pi);
    auto point = [&](S th) { return unit2<S>(std::cos(th), std::sin(th)); };
    std::vector<char> inside(n);
    for (int i = 0; i < n; ++i) inside[i] = region.contains(point(two_pi * S(i) / S(n))) ? 1 : 0;

    // Runs of complement samples, circularly: a run starts where an outside
    // sample follows an inside one.  Indices may exceed n for wrapped runs.
    std::vector<std::pair<int, int>> runs;  // [first, last] sample indices
    bool any_inside = false, any_outside = false;
    for (int i = 0; i < n; ++i) (inside[i] ? any_inside : any_outside) = true;
    if (!any_outside) fail(ErrorCode::BadTopology, "complement of the region is empty at this resolution");
    if (!any_inside) fail(ErrorCode::BadTopology, "region is empty at this resolution");
    for (int i = 0; i < n; ++i) {
      const bool out = !inside[i];
      const bool prev_out = !inside[(i + n - 1) % n];
      if (out && !prev_out) {
        int j = i;
        while (!inside[(j + 1) % n]) ++j;  // terminates: some sample is inside
        runs.emplace_back(i, j);
      }
    }
    if (runs.size() != 2)
      fail(ErrorCode::BadTopology, "complement has " + std::to_string(runs.size()) + " components, expected 2");

    // Bisection between an angle outside the region and one inside it.
    auto bisect = [&](S th_out, S th_in) {
      S lo = th_out, hi = th_in;
      for (int it = 0; it < 60; ++it) {
        const S mid = (lo + hi) / S(2);
        if (region.contains(point(mid))) hi = mid; else lo = mid;
      }
      return (lo + hi) / S(2);
    };

    struct Arc { S a, b; };  // complement arc from angle a to angle b (may wrap)
    std::vector<Arc> arcs;
    for (auto [f, l] : runs) {
      const S th_f = two_pi * S(f) / S(n);
      const S th_l = two_pi * S(l) / S(n);
      const S th_before = two_pi * S(f - 1) / S(n);  // neighboring inside samples
      const S th_after = two_pi * S(l + 1) / S(n);
      arcs.push_back(Arc{bisect(th_f, th_before), bisect(th_l, th_after)});
    }

    auto contains_angle = [&](const Arc& arc, S th) {
      // arc.a is the lower boundary, arc.b the upper; arc may wrap
      S lo = arc.a, hi = arc.b, x = th;
      while (hi < lo) hi += two_pi;
      while (x < lo) x += two_pi;
      return x <= hi;
    };
    const S th_minus = std::atan2(a.xi_minus[1], a.xi_minus[0]);
    const S th_plus = std::atan2(a.xi_plus[1], a.xi_plus[0]);
    const bool minus_in0 = contains_angle(arcs[0], th_minus);
    const bool plus_in0 = contains_angle(arcs[0], th_plus);
    const bool minus_in1 = contains_angle(arcs[1], th_minus);
    const bool plus_in1 = contains_angle(arcs[1], th_plus);
    if (!((minus_in0 && plus_in1 && !minus_in1 && !plus_in0) ||
          (minus_in1 && plus_in0 && !minus_in0 && !plus_in1)))
      fail(ErrorCode::BadTopology, "endpoint directions do not fall into distinct complement components");

    // Minimum of U - v_min over the closed region: interior samples plus the
    // refined boundary angles.
    S min_ex = std::numeric_limits<S>::infinity();
    for (int i = 0; i < n; ++i)
      if (inside[i]) min_ex = std::min(min_ex, a.eval(point(two_pi * S(i) / S(n))) - a.v_min);
    for (const Arc& arc : arcs) {
      min_ex = std::min(min_ex, a.eval(point(arc.a)) - a.v_min);
      min_ex = std::min(min_ex, a.eval(point(arc.b)) - a.v_min);
    }

    // Distance between the two closed arcs: the smaller of the two angular
    // gaps, converted to a chord.
    auto wrap_gap = [&](S from, S to) {
      S g = std::fmod(to - from, two_pi);
      if (g < S(0)) g += two_pi;
      return g;
    };
    const S gap1 = wrap_gap(arcs[0].b, arcs[1].a);
    const S gap2 = wrap_gap(arcs[1].b, arcs[0].a);
    const S g = std::min(gap1, gap2);
    rep.dist = double(S(2) * std::sin(std::min(g, S(std::numbers::pi)) / S(2)));
    rep.min_excess = double(min_ex);
    rep.resolution = double(two_pi / S(n));
  } else {
    // Net-based certificate: graph connectivity on a geodesic net.
    const int n = std::max(n_samples, int(std::ceil(4.0 * std::numbers::pi / double(net_spacing * net_spacing))));
    SphereNet<S> net = sphere_net<S>(a.dim, n);
    rep.resolution = double(net.resolution);
    const S link = S(1.6) * net.resolution;  // chord adjacency radius

    std::vector<int> comp_of(net.points.size(), -1);
    std::vector<int> outside_idx;
    for (size_t i = 0; i < net.points.size(); ++i)
      if (!region.contains(net.points[i])) outside_idx.push_back(int(i));
    if (outside_idx.empty()) fail(ErrorCode::BadTopology, "complement of the region is empty at this resolution");

    // Union-find over complement points.
    std::vector<int> parent(outside_idx.size());
    for (size_t i = 0; i < parent.size(); ++i) parent[i] = int(i);
    std::function<int(int)> find = [&](int i) { return parent[i] == i ? i : parent[i] = find(parent[i]); };
    for (size_t i = 0; i < outside_idx.size(); ++i)
      for (size_t j = i + 1; j < outside_idx.size(); ++j)
        if ((net.points[outside_idx[i]] - net.points[outside_idx[j]]).norm() <= link) {
          const int ri = find(int(i)), rj = find(int(j));
          if (ri != rj) parent[ri] = rj;
        }
    std::vector<int> roots;
    for (size_t i = 0; i < outside_idx.size(); ++i) {
      const int r = find(int(i));
      if (std::find(roots.begin(), roots.end(), r) == roots.end()) roots.push_back(r);
    }
    if (roots.size() != 2)
      fail(ErrorCode::BadTopology, "complement has " + std::to_string(roots.size()) + " components, expected 2");

    auto closest_root = [&](const Vector<S>& xi) {
      S best = std::numeric_limits<S>::infinity();
      int root = -1;
      for (size_t i = 0; i < outside_idx.size(); ++i) {
        const S d = (net.points[outside_idx[i]] - xi).norm();
        if (d < best) { best = d; root = find(int(i)); }
      }
      return root;
    };
    const int root_minus = closest_root(a.xi_minus);
    const int root_plus = closest_root(a.xi_plus);
    if (root_minus == root_plus)
      fail(ErrorCode::BadTopology, "endpoint directions fall into the same complement component");

    S min_ex = std::numeric_limits<S>::infinity();
    for (size_t i = 0; i < net.points.size(); ++i)
      if (region.contains(net.points[i])) min_ex = std::min(min_ex, a.eval(net.points[i]) - a.v_min);

    S dist = std::numeric_limits<S>::infinity();
    for (size_t i = 0; i < outside_idx.size(); ++i) {
      if (find(int(i)) != root_minus) continue;
      for (size_t j = 0; j < outside_idx.size(); ++j) {
        if (find(int(j)) != root_plus) continue;
        dist = std::min(dist, (net.points[outside_idx[i]] - net.points[outside_idx[j]]).norm());
      }
    }
    rep.dist = double(dist);
    rep.min_excess = double(min_ex);
  }

  rep.lhs = std::sqrt(2.0 * std::max(0.0, rep.min_excess)) * rep.dist;
  rep.in_sigma = rep.lhs > rep.rhs;
  return rep;
}

}  // namespace akp
