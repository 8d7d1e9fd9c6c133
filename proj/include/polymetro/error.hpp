#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace polymetro {

enum class ErrorCode {
  EmptyPolytope,
  Unbounded,
  DegenerateForm,
  ZeroDirection,
  TooManySubsets,
  LPFailure,
  InvalidStart,
  BadSize,
  SamplerBoundViolated,
  InvalidFamily,
  TooManyCells,
  ResolutionTooCoarse,
  NoConvergence,
  DisconnectedStencil,
  SolverFailure,
  TooFewReplicas,
  WindowDegenerate,
  NotFound,
  InvalidArgument,
  Config,
  IO,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyPolytope: return "EmptyPolytope";
    case ErrorCode::Unbounded: return "Unbounded";
    case ErrorCode::DegenerateForm: return "DegenerateForm";
    case ErrorCode::ZeroDirection: return "ZeroDirection";
    case ErrorCode::TooManySubsets: return "TooManySubsets";
    case ErrorCode::LPFailure: return "LPFailure";
    case ErrorCode::InvalidStart: return "InvalidStart";
    case ErrorCode::BadSize: return "BadSize";
    case ErrorCode::SamplerBoundViolated: return "SamplerBoundViolated";
    case ErrorCode::InvalidFamily: return "InvalidFamily";
    case ErrorCode::TooManyCells: return "TooManyCells";
    case ErrorCode::ResolutionTooCoarse: return "ResolutionTooCoarse";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::DisconnectedStencil: return "DisconnectedStencil";
    case ErrorCode::SolverFailure: return "SolverFailure";
    case ErrorCode::TooFewReplicas: return "TooFewReplicas";
    case ErrorCode::WindowDegenerate: return "WindowDegenerate";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Config: return "Config";
    case ErrorCode::IO: return "IO";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace polymetro
