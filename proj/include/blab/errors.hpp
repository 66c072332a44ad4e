#pragma once

#include <complex>
#include <stdexcept>
#include <string>

namespace blab {

/// Base of every error thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Point outside the unit disk (or outside the rule's disk).
struct DomainError : Error {
  using Error::Error;
};

/// Weight specification with invalid parameters or a non-positive Laplacian.
struct WeightSpecError : Error {
  using Error::Error;
};

/// Empirical class constants came out unbounded on the sample.
struct ClassificationError : Error {
  using Error::Error;
};

struct PreconditionError : Error {
  using Error::Error;
};

/// Operation requested on the wrong kernel representation.
struct ModeError : Error {
  using Error::Error;
};

struct QuadratureError : Error {
  using Error::Error;
};

/// NaN or infinity produced by an integrand.
struct IntegrationError : Error {
  IntegrationError(const std::string& what, std::size_t node)
      : Error(what), node_index(node) {}
  std::size_t node_index;
};

struct EmptyRegionError : Error {
  using Error::Error;
};

/// Truncated series or local rule cannot resolve the requested point.
struct ResolutionError : Error {
  ResolutionError(const std::string& what, int suggested = 0)
      : Error(what), suggested_degree(suggested) {}
  int suggested_degree;
};

/// Gram matrix is numerically singular beyond `achievable_degree`.
struct DegreeReductionError : Error {
  DegreeReductionError(const std::string& what, int achievable)
      : Error(what), achievable_degree(achievable) {}
  int achievable_degree;
};

/// Covering condition violated; `witness` is a point where it fails.
struct CoveringError : Error {
  CoveringError(const std::string& what, std::complex<double> w = {}) : Error(what), witness(w) {}
  std::complex<double> witness;
};

/// Normalized kernel vanishes, or nearly, inside a disc where it is divided by.
struct DivisionGuardError : Error {
  DivisionGuardError(const std::string& what, std::complex<double> at = {}) : Error(what), point(at) {}
  std::complex<double> point;
};

/// Bad configuration or command line; maps to exit status 2.
struct UsageError : Error {
  using Error::Error;
};

}  // namespace blab
