#pragma once

#include <optional>

#include "dualfem/fem.hpp"
#include "dualfem/nfunction.hpp"

namespace dualfem {

/// Feasibility gate of the certificate: one decade above the solver contract.
inline constexpr double kFeasibilityGate = 1e-6;
/// GUB/GUB_eps above this value triggers a halving of eps.
inline constexpr double kRatioThreshold = 100.0;

struct EnergyReport {
  double primal = 0.0;
  double dual = 0.0;
  double gub = 0.0;  // primal + dual
  double residual = 0.0;
  std::optional<double> efficiency;
  std::optional<double> ratio;
};

/// J(v) = sum_T |T| phi(|G v + lift|_T) - f int v, exact because the
/// discrete gradients are piecewise constant.
double primal_energy(const NFunction& model, const DiscreteProblem& problem, const Vector& v);
/// Same for a function that carries its own boundary payload.
double primal_energy(const NFunction& model, const FeFunction& v, double f);

/// J*(tau) = sum_T |T| (phi*(|tau_T|) - tau_T : lift_T).
double dual_energy(const NFunction& model, const Mesh& mesh, const P0Field& tau,
                   const P0Field* lift_field = nullptr);
double dual_energy(const NFunction& model, const DiscreteProblem& problem, const P0Field& tau);

/// J(v) + J*(tau), which bounds J(v) - min J from above when tau is feasible.
/// Throws CertificateError if tau misses the feasibility gate.
EnergyReport guaranteed_upper_bound(const NFunction& model, const DiscreteProblem& problem,
                                    const Vector& v, const P0Field& tau);

/// (J*(sigma) + J(v)) / (J(v) - j_ref). Throws UndefinedError when
/// J(v) <= j_ref + 1e-14.
double efficiency_index(double gub, double j_v, double j_ref);

/// GUB / GUB_eps evaluated on the same pair (v, tau).
double regularization_ratio(const NFunction& model, const NFunction& model_eps,
                            const DiscreteProblem& problem, const Vector& v, const P0Field& tau);

/// eps / 2 when ratio > kRatioThreshold, eps otherwise.
double adaptive_epsilon_policy(double eps, double ratio);

}  // namespace dualfem
