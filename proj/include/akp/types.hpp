#pragma once

#include <Eigen/Dense>

#include <cstdio>
#include <stdexcept>
#include <string>

namespace akp {

template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Node block of a discrete path: one column per node, dim rows.
template <typename S>
using NodeMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

using Vectord = Vector<double>;

/// Failure categories used across the library.  The textual name is kept in
/// the exception message so callers (and the CLI) can map failures without
/// string matching on prose.
enum class ErrorCode {
  ZeroRadius,
  NotUnit,
  BadTopology,
  CollisionNode,
  BadDomain,
  DegeneratePath,
  StalledSegment,
  BadExponent,
  BadWindow,
  NotMonotone,
  NoContact,
  NoConvergence,
  InfeasibleEndpoints,
  NonPositiveRZ,
  DegenerateCritical,
  BadBracket,
  NotStabilized,
  EnergyDrift,
  InvalidArgument,
  IoError,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::ZeroRadius: return "ZeroRadius";
    case ErrorCode::NotUnit: return "NotUnit";
    case ErrorCode::BadTopology: return "BadTopology";
    case ErrorCode::CollisionNode: return "CollisionNode";
    case ErrorCode::BadDomain: return "BadDomain";
    case ErrorCode::DegeneratePath: return "DegeneratePath";
    case ErrorCode::StalledSegment: return "StalledSegment";
    case ErrorCode::BadExponent: return "BadExponent";
    case ErrorCode::BadWindow: return "BadWindow";
    case ErrorCode::NotMonotone: return "NotMonotone";
    case ErrorCode::NoContact: return "NoContact";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::InfeasibleEndpoints: return "InfeasibleEndpoints";
    case ErrorCode::NonPositiveRZ: return "NonPositiveRZ";
    case ErrorCode::DegenerateCritical: return "DegenerateCritical";
    case ErrorCode::BadBracket: return "BadBracket";
    case ErrorCode::NotStabilized: return "NotStabilized";
    case ErrorCode::EnergyDrift: return "EnergyDrift";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

/// Deterministic float formatting used for every emitted file: 9 significant
/// digits, shortest printf form, locale independent.
inline std::string format_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  // Normalize the rare "-0" so reruns cannot differ by signed zero.
  if (std::string(buf) == "-0") return "0";
  return buf;
}

}  // namespace akp
