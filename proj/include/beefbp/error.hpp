#pragma once

#include <stdexcept>
#include <string>

namespace beefbp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A quadrature or series could not meet the requested tolerance on the
/// given discretization.
class AccuracyError : public Error {
 public:
  using Error::Error;
};

/// A solve was requested with parameters that cannot deliver the requested
/// certified accuracy.
class PlanningError : public Error {
 public:
  PlanningError(const std::string& what, double required_delta)
      : Error(what), required_delta_(required_delta) {}
  double required_delta() const noexcept { return required_delta_; }

 private:
  double required_delta_;
};

/// Root bracketing or search failed.
class BracketError : public Error {
 public:
  BracketError(const std::string& what, double lo, double hi)
      : Error(what), lo_(lo), hi_(hi) {}
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }

 private:
  double lo_, hi_;
};

/// Iterative time stepping failed to converge at the requested step size.
class StepSizeError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw DomainError(msg);
}

}  // namespace detail
}  // namespace beefbp
