#include "dualfem/gub.hpp"

#include <cmath>
#include <sstream>

#include "dualfem/errors.hpp"

namespace dualfem {

namespace {

// Neumaier compensated sum, fixed order.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double integrand_sum(const NFunction& model, const Mesh& mesh, const P0Field& field) {
  CompensatedSum sum;
  for (std::size_t t = 0; t < field.size(); ++t)
    sum.add(mesh.area(static_cast<int>(t)) * model.phi(field.norm(t)));
  return sum.value();
}

}  // namespace

double primal_energy(const NFunction& model, const DiscreteProblem& problem, const Vector& v) {
  const P0Field g = problem.field(v);
  return integrand_sum(model, problem.space().mesh(), g) - problem.load_integral(v);
}

double primal_energy(const NFunction& model, const FeFunction& v, double f) {
  const P0Field g = discrete_gradient(v);
  const double load = f == 0.0 ? 0.0 : f * v.space->basis_integrals().dot(v.coefficients);
  return integrand_sum(model, v.space->mesh(), g) - load;
}

double dual_energy(const NFunction& model, const Mesh& mesh, const P0Field& tau,
                   const P0Field* lift_field) {
  if (tau.size() != mesh.triangle_count()) throw DomainError("dual_energy: field size mismatch");
  if (lift_field && (lift_field->size() != tau.size() || lift_field->components() != tau.components()))
    throw DomainError("dual_energy: lift field does not match tau");
  CompensatedSum sum;
  for (std::size_t t = 0; t < tau.size(); ++t) {
    double local = model.conjugate(tau.norm(t));
    if (lift_field) local -= tau.value(t).dot(lift_field->value(t));
    sum.add(mesh.area(static_cast<int>(t)) * local);
  }
  return sum.value();
}

double dual_energy(const NFunction& model, const DiscreteProblem& problem, const P0Field& tau) {
  return dual_energy(model, problem.space().mesh(), tau,
                     problem.lift() ? &problem.lift_field() : nullptr);
}

EnergyReport guaranteed_upper_bound(const NFunction& model, const DiscreteProblem& problem,
                                    const Vector& v, const P0Field& tau) {
  EnergyReport report;
  report.residual = problem.feasibility().residual(tau, problem.load());
  if (!(report.residual <= kFeasibilityGate)) {
    std::ostringstream os;
    os << "dual field is not feasible: residual " << report.residual << " exceeds "
       << kFeasibilityGate;
    throw CertificateError(os.str(), report.residual);
  }
  report.primal = primal_energy(model, problem, v);
  report.dual = dual_energy(model, problem, tau);
  report.gub = report.primal + report.dual;
  return report;
}

double efficiency_index(double gub, double j_v, double j_ref) {
  const double error = j_v - j_ref;
  if (!(error > 1e-14)) {
    std::ostringstream os;
    os << "efficiency index undefined: J(v) - j_ref = " << error;
    throw UndefinedError(os.str());
  }
  return gub / error;
}

double regularization_ratio(const NFunction& model, const NFunction& model_eps,
                            const DiscreteProblem& problem, const Vector& v, const P0Field& tau) {
  const double gub = primal_energy(model, problem, v) + dual_energy(model, problem, tau);
  const double primal_eps = primal_energy(model_eps, problem, v);
  const double dual_eps = dual_energy(model_eps, problem, tau);
  const double gub_eps = primal_eps + dual_eps;
  // Below this level GUB_eps is rounding noise of its two terms.
  const double floor = 1e-14 * (1.0 + std::abs(primal_eps) + std::abs(dual_eps));
  if (!(gub_eps > floor)) {
    std::ostringstream os;
    os << "regularization ratio undefined: GUB_eps = " << gub_eps;
    throw UndefinedError(os.str());
  }
  return gub / gub_eps;
}

double adaptive_epsilon_policy(double eps, double ratio) {
  if (!(eps > 0.0)) throw DomainError("adaptive_epsilon_policy: eps must be positive");
  return ratio > kRatioThreshold ? 0.5 * eps : eps;
}

}  // namespace dualfem
