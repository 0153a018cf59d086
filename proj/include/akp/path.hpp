#pragma once

// Discrete timed polygonal paths in R^d.  Nodes are the columns of a d x (N+1)
// matrix; velocities are piecewise constant per segment.

#include "akp/types.hpp"

namespace akp {

template <typename S>
struct DiscretePath {
  Vector<S> times;      // strictly increasing, size N+1
  NodeMatrix<S> nodes;  // d x (N+1)

  int segments() const { return int(times.size()) - 1; }
  int dim() const { return int(nodes.rows()); }
};

template <typename S>
inline void validate_path(const DiscretePath<S>& path, const char* who) {
  const int n = int(path.times.size());
  if (n < 2) fail(ErrorCode::InvalidArgument, std::string(who) + ": path needs at least 2 nodes");
  if (path.nodes.cols() != n)
    fail(ErrorCode::InvalidArgument, std::string(who) + ": node/time count mismatch");
  for (int i = 0; i + 1 < n; ++i)
    if (!(path.times[i + 1] > path.times[i]))
      fail(ErrorCode::InvalidArgument, std::string(who) + ": times must increase strictly");
}

template <typename S>
inline Vector<S> path_radii(const DiscretePath<S>& path) {
  return path.nodes.colwise().norm();
}

template <typename S>
inline S path_min_radius(const DiscretePath<S>& path) {
  return path_radii(path).minCoeff();
}

/// Piecewise-constant segment velocities, d x N.
template <typename S>
inline NodeMatrix<S> segment_velocities(const DiscretePath<S>& path) {
  const int n = path.segments();
  NodeMatrix<S> v(path.dim(), n);
  for (int i = 0; i < n; ++i)
    v.col(i) = (path.nodes.col(i + 1) - path.nodes.col(i)) / (path.times[i + 1] - path.times[i]);
  return v;
}

/// Node velocities for diagnostics: mean of the adjacent segment velocities,
/// one-sided at the path ends.
template <typename S>
inline NodeMatrix<S> node_velocities(const DiscretePath<S>& path) {
  const NodeMatrix<S> sv = segment_velocities(path);
  const int n = int(path.times.size());
  NodeMatrix<S> v(path.dim(), n);
  v.col(0) = sv.col(0);
  v.col(n - 1) = sv.col(n - 2);
  for (int i = 1; i + 1 < n; ++i) v.col(i) = (sv.col(i - 1) + sv.col(i)) / S(2);
  return v;
}

/// Three-point second difference on a possibly nonuniform grid, at interior
/// node i of the scalar samples f.
template <typename S>
inline S second_difference(const Vector<S>& t, const Vector<S>& f, int i) {
  const S hm = t[i] - t[i - 1], hp = t[i + 1] - t[i];
  return S(2) * ((f[i + 1] - f[i]) / hp - (f[i] - f[i - 1]) / hm) / (hm + hp);
}

template <typename S>
inline Vector<S> second_difference_cols(const Vector<S>& t, const NodeMatrix<S>& x, int i) {
  const S hm = t[i] - t[i - 1], hp = t[i + 1] - t[i];
  return (S(2) / (hm + hp)) * ((x.col(i + 1) - x.col(i)) / hp - (x.col(i) - x.col(i - 1)) / hm);
}

}  // namespace akp
