#include "dualfem/nfunction.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dualfem/errors.hpp"

namespace dualfem {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_argument(double x, const char* op) {
  if (!std::isfinite(x) || x < 0.0) {
    std::ostringstream os;
    os << op << ": argument must be finite and non-negative, got " << x;
    throw DomainError(os.str());
  }
}

// Largest s >= 0 with f(s) <= r for continuous strictly increasing f with
// f(0) = 0 < r. Safeguarded Newton on a geometrically grown bracket.
template <class F, class DF>
double invert_increasing(F f, DF df, double r, double guess) {
  double lo = 0.0;
  double hi = guess > 0.0 ? guess : r;
  int grow = 0;
  while (f(hi) <= r) {
    lo = hi;
    hi *= 2.0;
    if (++grow > 2100) throw DomainError("phi_prime_inverse: bracket search failed");
  }
  double s = std::clamp(guess, lo, hi);
  if (!(s > lo && s < hi)) s = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double val = f(s) - r;
    if (val == 0.0) break;
    if (val < 0.0) {
      lo = s;
    } else {
      hi = s;
    }
    double next = s - val / df(s);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const bool done = std::abs(next - s) <= 1e-15 * next || hi - lo <= 4e-16 * hi;
    s = next;
    if (done) break;
  }
  // Newton converges to a few ulps; step down onto the feasible side.
  for (int k = 0; k < 64 && f(s) > r; ++k) s = std::nextafter(s, 0.0);
  return f(s) <= r ? s : lo;
}

// int_0^x y (1+y)^a dy, accurate for small x.
double scaled_shifted_antiderivative(double x, double p) {
  const double a = p - 2.0;
  if (x < 0.25) {
    double coeff = 1.0;  // binom(a, k)
    double power = x * x;
    double sum = 0.0;
    for (int k = 0; k < 80; ++k) {
      const double term = coeff * power / (k + 2);
      sum += term;
      if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
      coeff *= (a - k) / (k + 1);
      power *= x;
    }
    return sum;
  }
  const double u = 1.0 + x;
  return (std::pow(u, p) - 1.0) / p - (std::pow(u, p - 1.0) - 1.0) / (p - 1.0);
}

// sqrt(t^2 + eps^2) - eps without cancellation.
double soft_abs(double t, double eps) {
  return t * t / (std::sqrt(t * t + eps * eps) + eps);
}

}  // namespace

double OptimalDesign::t1() const { return std::sqrt(2.0 * lambda * mu1 / mu2); }
double OptimalDesign::t2() const { return mu2 * t1() / mu1; }

NFunction::NFunction(FamilyParams params) : params_(std::move(params)) {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  std::visit(
      Overloaded{
          [&](const ShiftedPLaplace& m) {
            if (!positive(m.kappa) || !std::isfinite(m.p) || m.p <= 1.0)
              throw DomainError("shifted-p-laplace requires kappa > 0 and p > 1");
          },
          [&](const OptimalDesign& m) {
            if (!positive(m.lambda) || !positive(m.mu1) || !positive(m.mu2))
              throw DomainError("optimal-design requires lambda, mu1, mu2 > 0");
            if (m.mu2 < m.mu1)
              throw DomainError("optimal-design requires mu2 >= mu1 for a monotone phi'");
          },
          [&](const Bingham& m) {
            if (!positive(m.viscosity) || !std::isfinite(m.yield_stress) ||
                m.yield_stress < 0.0)
              throw DomainError("bingham requires nu > 0 and sigma_y >= 0");
          },
          [&](const RegularizedBingham& m) {
            if (!positive(m.viscosity) || !std::isfinite(m.yield_stress) ||
                m.yield_stress < 0.0 || !positive(m.epsilon))
              throw DomainError("bingham-regularized requires nu > 0, sigma_y >= 0, eps > 0");
          },
          [](const Quadratic&) {},
      },
      params_);
}

NFunction NFunction::shifted_p_laplace(double kappa, double p) {
  return NFunction(ShiftedPLaplace{kappa, p});
}
NFunction NFunction::optimal_design(double lambda, double mu1, double mu2) {
  return NFunction(OptimalDesign{lambda, mu1, mu2});
}
NFunction NFunction::bingham(double viscosity, double yield_stress) {
  return NFunction(Bingham{viscosity, yield_stress});
}
NFunction NFunction::bingham_regularized(double viscosity, double yield_stress,
                                         double epsilon) {
  return NFunction(RegularizedBingham{viscosity, yield_stress, epsilon});
}
NFunction NFunction::quadratic() { return NFunction(Quadratic{}); }

Family NFunction::family() const {
  return std::visit(Overloaded{
                        [](const ShiftedPLaplace&) { return Family::shifted_p_laplace; },
                        [](const OptimalDesign&) { return Family::optimal_design; },
                        [](const Bingham&) { return Family::bingham; },
                        [](const RegularizedBingham&) { return Family::bingham_regularized; },
                        [](const Quadratic&) { return Family::quadratic; },
                    },
                    params_);
}

std::string NFunction::describe() const {
  std::ostringstream os;
  std::visit(Overloaded{
                 [&](const ShiftedPLaplace& m) {
                   os << "shifted-p-laplace(kappa=" << m.kappa << ", p=" << m.p << ")";
                 },
                 [&](const OptimalDesign& m) {
                   os << "optimal-design(lambda=" << m.lambda << ", mu1=" << m.mu1
                      << ", mu2=" << m.mu2 << ")";
                 },
                 [&](const Bingham& m) {
                   os << "bingham(nu=" << m.viscosity << ", sigma_y=" << m.yield_stress << ")";
                 },
                 [&](const RegularizedBingham& m) {
                   os << "bingham-regularized(nu=" << m.viscosity
                      << ", sigma_y=" << m.yield_stress << ", eps=" << m.epsilon << ")";
                 },
                 [&](const Quadratic&) { os << "quadratic"; },
             },
             params_);
  return os.str();
}

bool NFunction::is_n_function() const {
  if (const auto* b = std::get_if<Bingham>(&params_)) return b->yield_stress == 0.0;
  return true;
}

double NFunction::phi(double t) const {
  require_argument(t, "phi");
  return std::visit(
      Overloaded{
          [&](const ShiftedPLaplace& m) {
            return std::pow(m.kappa, m.p) * scaled_shifted_antiderivative(t / m.kappa, m.p);
          },
          [&](const OptimalDesign& m) {
            const double t1 = m.t1();
            const double t2 = m.t2();
            if (t <= t1) return 0.5 * m.mu2 * t * t;
            const double plateau = 0.5 * m.mu2 * t1 * t1;
            if (t <= t2) return plateau + m.mu2 * t1 * (t - t1);
            return plateau + m.mu2 * t1 * (t2 - t1) + 0.5 * m.mu1 * (t - t2) * (t + t2);
          },
          [&](const Bingham& m) { return m.viscosity * t * t + m.yield_stress * t; },
          [&](const RegularizedBingham& m) {
            return m.viscosity * t * t + m.yield_stress * soft_abs(t, m.epsilon);
          },
          [&](const Quadratic&) { return 0.5 * t * t; },
      },
      params_);
}

double NFunction::phi_prime(double t) const {
  require_argument(t, "phi_prime");
  return std::visit(
      Overloaded{
          [&](const ShiftedPLaplace& m) { return t * std::pow(m.kappa + t, m.p - 2.0); },
          [&](const OptimalDesign& m) {
            const double t1 = m.t1();
            if (t <= t1) return m.mu2 * t;
            if (t <= m.t2()) return m.mu2 * t1;
            return m.mu1 * t;
          },
          [&](const Bingham& m) { return 2.0 * m.viscosity * t + m.yield_stress; },
          [&](const RegularizedBingham& m) {
            return 2.0 * m.viscosity * t +
                   m.yield_stress * t / std::sqrt(t * t + m.epsilon * m.epsilon);
          },
          [&](const Quadratic&) { return t; },
      },
      params_);
}

double NFunction::phi_second(double t) const {
  require_argument(t, "phi_second");
  return std::visit(
      Overloaded{
          [&](const ShiftedPLaplace& m) {
            return std::pow(m.kappa + t, m.p - 3.0) * (m.kappa + (m.p - 1.0) * t);
          },
          [&](const OptimalDesign& m) {
            if (t < m.t1()) return m.mu2;
            if (t < m.t2()) return 0.0;
            return m.mu1;
          },
          [&](const Bingham& m) { return 2.0 * m.viscosity; },
          [&](const RegularizedBingham& m) {
            const double e2 = m.epsilon * m.epsilon;
            const double root = std::sqrt(t * t + e2);
            return 2.0 * m.viscosity + m.yield_stress * e2 / (root * root * root);
          },
          [&](const Quadratic&) { return 1.0; },
      },
      params_);
}

double NFunction::phi_prime_inverse(double r) const {
  require_argument(r, "phi_prime_inverse");
  return std::visit(
      Overloaded{
          [&](const ShiftedPLaplace& m) {
            if (r == 0.0) return 0.0;
            if (m.p == 2.0) return r;
            // Solve x (1+x)^(p-2) = rho in the scaled variable x = s/kappa.
            const double a = m.p - 2.0;
            const double rho = r / std::pow(m.kappa, m.p - 1.0);
            auto g = [a](double x) { return x * std::pow(1.0 + x, a); };
            auto dg = [a](double x) { return std::pow(1.0 + x, a - 1.0) * (1.0 + (a + 1.0) * x); };
            const double guess = rho < 1.0 ? rho : std::pow(rho, 1.0 / (m.p - 1.0));
            return m.kappa * invert_increasing(g, dg, rho, guess);
          },
          [&](const OptimalDesign& m) {
            return r < m.mu2 * m.t1() ? r / m.mu2 : r / m.mu1;
          },
          [&](const Bingham& m) {
            return std::max(0.0, (r - m.yield_stress) / (2.0 * m.viscosity));
          },
          [&](const RegularizedBingham& m) {
            if (r == 0.0) return 0.0;
            auto f = [this](double s) { return phi_prime(s); };
            auto df = [this](double s) { return phi_second(s); };
            const double guess =
                std::min(r / (2.0 * m.viscosity),
                         r / (2.0 * m.viscosity + m.yield_stress / m.epsilon) * 2.0);
            return invert_increasing(f, df, r, guess);
          },
          [&](const Quadratic&) { return r; },
      },
      params_);
}

double NFunction::conjugate(double r) const {
  require_argument(r, "conjugate");
  return std::visit(
      Overloaded{
          [&](const Bingham& m) {
            const double excess = std::max(0.0, r - m.yield_stress);
            return excess * excess / (4.0 * m.viscosity);
          },
          [&](const Quadratic&) { return 0.5 * r * r; },
          [&](const auto&) {
            const double t = phi_prime_inverse(r);
            return std::max(0.0, r * t - phi(t));
          },
      },
      params_);
}

double NFunction::conjugate_prime(double r) const { return phi_prime_inverse(r); }

double NFunction::primal_weight(double t) const {
  require_argument(t, "primal_weight");
  return std::visit(
      Overloaded{
          [&](const ShiftedPLaplace& m) { return std::pow(m.kappa + t, m.p - 2.0); },
          [&](const OptimalDesign& m) {
            if (t <= m.t1()) return m.mu2;
            if (t <= m.t2()) return m.mu2 * m.t1() / t;
            return m.mu1;
          },
          [&](const Bingham& m) {
            if (t == 0.0) {
              if (m.yield_stress == 0.0) return 2.0 * m.viscosity;
              throw SingularWeightError(
                  "primal_weight: unregularized Bingham weight is unbounded at 0; "
                  "use bingham-regularized");
            }
            return std::min(2.0 * m.viscosity + m.yield_stress / t, kWeightCap);
          },
          [&](const RegularizedBingham& m) {
            return 2.0 * m.viscosity +
                   m.yield_stress / std::sqrt(t * t + m.epsilon * m.epsilon);
          },
          [&](const Quadratic&) { return 1.0; },
      },
      params_);
}

double NFunction::dual_weight(double r) const {
  require_argument(r, "dual_weight");
  if (r == 0.0) {
    if (const auto* b = std::get_if<Bingham>(&params_); b && b->yield_stress > 0.0)
      return kWeightCap;
    return primal_weight(0.0);
  }
  if (std::holds_alternative<Quadratic>(params_)) return 1.0;
  const double t = phi_prime_inverse(r);
  if (t == 0.0) return kWeightCap;
  return std::min(r / t, kWeightCap);
}

}  // namespace dualfem
