#pragma once

#include <string>
#include <variant>

namespace dualfem {

/// Replaces infinite Kacanov weights (Bingham below the yield stress).
inline constexpr double kWeightCap = 1e12;

enum class Family {
  shifted_p_laplace,
  optimal_design,
  bingham,
  bingham_regularized,
  quadratic,
};

/// phi'(s) = s (kappa + s)^(p-2).
struct ShiftedPLaplace {
  double kappa = 0.1;
  double p = 1.5;
};

/// Two-material torsion integrand: phi' = mu2 s below t1, constant mu2 t1 on
/// (t1, t2], mu1 s above t2. t2 is chosen so that phi' is continuous.
struct OptimalDesign {
  double lambda = 0.0145;
  double mu1 = 1.0;
  double mu2 = 2.0;

  double t1() const;
  double t2() const;
};

/// phi(t) = nu t^2 + sigma_y t. A Young function, not an N-function.
struct Bingham {
  double viscosity = 1.0;
  double yield_stress = 0.3;
};

/// phi(t) = nu t^2 + sigma_y (sqrt(t^2 + eps^2) - eps).
struct RegularizedBingham {
  double viscosity = 1.0;
  double yield_stress = 0.3;
  double epsilon = 1.0;
};

/// phi(t) = t^2 / 2.
struct Quadratic {};

using FamilyParams =
    std::variant<ShiftedPLaplace, OptimalDesign, Bingham, RegularizedBingham,
                 Quadratic>;

/// Radial convex integrand phi together with the scalar convex-analysis
/// operations used by the schemes and estimators. All evaluations are pure;
/// an instance is immutable after construction.
///
/// Inputs must be finite and non-negative; anything else raises DomainError.
class NFunction {
 public:
  explicit NFunction(FamilyParams params);

  static NFunction shifted_p_laplace(double kappa, double p);
  static NFunction optimal_design(double lambda, double mu1, double mu2);
  static NFunction bingham(double viscosity, double yield_stress);
  static NFunction bingham_regularized(double viscosity, double yield_stress,
                                       double epsilon);
  static NFunction quadratic();

  Family family() const;
  const FamilyParams& params() const { return params_; }
  std::string describe() const;

  /// Closed-form antiderivative of phi'; phi(0) = 0.
  double phi(double t) const;
  /// Right-continuous derivative.
  double phi_prime(double t) const;
  /// Second derivative (right limit at kinks), used by Newton.
  double phi_second(double t) const;
  /// sup{ s >= 0 : phi'(s) <= r }, with sup of the empty set taken as 0.
  double phi_prime_inverse(double r) const;
  /// phi*(r) = sup_s (r s - phi(s)), evaluated through the Young identity.
  double conjugate(double r) const;
  /// (phi*)'(r), which is the right-continuous inverse of phi'.
  double conjugate_prime(double r) const;
  /// phi'(t)/t with its limit at t = 0. Throws SingularWeightError for the
  /// unregularized Bingham integrand at t = 0.
  double primal_weight(double t) const;
  /// r/(phi*)'(r) with its limit at r = 0; capped at kWeightCap where
  /// (phi*)' vanishes.
  double dual_weight(double r) const;

  /// True when phi'(0) = 0 (N-function); false for Young functions.
  bool is_n_function() const;

 private:
  FamilyParams params_;
};

}  // namespace dualfem
