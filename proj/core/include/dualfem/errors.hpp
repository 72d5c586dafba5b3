#pragma once

#include <stdexcept>
#include <string>

namespace dualfem {

/// Argument outside the mathematical domain of an operation (negative or
/// non-finite input, invalid family parameters).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// The Kacanov weight phi'(t)/t is unbounded at the requested point; the
/// caller has to switch to a regularized integrand.
class SingularWeightError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A mesh operation would exceed the configured triangle budget.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AssemblyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Factorization breakdown, indefiniteness, or a residual check failure.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iteration scheme could not make progress (e.g. line search stagnation).
class SchemeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The dual field handed to the upper bound is not (discretely) feasible.
class CertificateError : public std::runtime_error {
 public:
  CertificateError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Quantity is mathematically undefined for the given inputs (efficiency index
/// at reference accuracy, degenerate regularization ratio).
class UndefinedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dualfem
