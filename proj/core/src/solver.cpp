#include "dualfem/solver.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "dualfem/errors.hpp"
#include "dualfem/gub.hpp"

namespace dualfem {

namespace {

constexpr int kRefinementSweeps = 6;
constexpr int kMaxHalvings = 60;
constexpr double kArmijo = 1e-4;
constexpr double kPenalty = 1e3;
constexpr int kSchurIterations = 50;
constexpr int kUzawaSweeps = 400;
constexpr double kSchurTolerance = 1e-8;

double relative(double r, double b) { return b > 0.0 ? r / b : r; }

std::vector<double> primal_weights(const NFunction& model, const P0Field& field) {
  std::vector<double> w(field.size());
  try {
    for (std::size_t t = 0; t < field.size(); ++t) w[t] = model.primal_weight(field.norm(t));
  } catch (const SingularWeightError& e) {
    throw SchemeError(std::string(e.what()) + "; use a regularized integrand for this step");
  }
  return w;
}

std::vector<double> dual_weights(const NFunction& model, const P0Field& sigma) {
  std::vector<double> w(sigma.size());
  for (std::size_t t = 0; t < sigma.size(); ++t) w[t] = model.dual_weight(sigma.norm(t));
  return w;
}

P0Field scaled(const P0Field& field, const std::vector<double>& w) {
  P0Field out = field;
  for (std::size_t t = 0; t < field.size(); ++t) out.value(t) *= w[t];
  return out;
}

// Solves sum_T w_T |T| G u . G v = b(v) - int w lift : G v and returns
// (u, w (G u + lift)).
StepResult weighted_solve(const DiscreteProblem& problem, const std::vector<double>& w,
                          LinearSolver& solver) {
  const Space& space = problem.space();
  const SparseMatrix a = assemble_weighted_stiffness(space, w);
  Vector rhs = problem.load_vector();
  if (problem.lift()) rhs -= assemble_field_functional(space, scaled(problem.lift_field(), w));
  StepResult out;
  out.u = solver.solve(problem, a, rhs);
  out.sigma = scaled(problem.field(out.u), w);
  return out;
}

// Rounding level of J near u, used to recognise a vanishing slope.
double energy_noise(double j0) { return 1e-14 * (1.0 + std::abs(j0)); }

}  // namespace

bool LinearSolver::Pattern::matches(const SparseMatrix& m) const {
  if (!m.isCompressed()) return false;
  const auto cols = static_cast<std::size_t>(m.outerSize());
  const auto nnz = static_cast<std::size_t>(m.nonZeros());
  if (outer.size() != cols + 1 || inner.size() != nnz) return false;
  for (std::size_t i = 0; i <= cols; ++i)
    if (outer[i] != m.outerIndexPtr()[i]) return false;
  for (std::size_t i = 0; i < nnz; ++i)
    if (inner[i] != m.innerIndexPtr()[i]) return false;
  return true;
}

void LinearSolver::Pattern::assign(const SparseMatrix& m) {
  outer.assign(m.outerIndexPtr(), m.outerIndexPtr() + m.outerSize() + 1);
  inner.assign(m.innerIndexPtr(), m.innerIndexPtr() + m.nonZeros());
}

Vector LinearSolver::solve_spd(const SparseMatrix& a, const Vector& b) {
  if (a.rows() != a.cols() || a.rows() != b.size())
    throw SolverError("solve_spd: inconsistent dimensions");
  if (a.rows() == 0) return Vector();
  SparseMatrix m = a;
  m.makeCompressed();
  if (!ldlt_analyzed_ || !ldlt_pattern_.matches(m)) {
    ldlt_.analyzePattern(m);
    ldlt_pattern_.assign(m);
    ldlt_analyzed_ = true;
  }
  ldlt_.factorize(m);
  if (ldlt_.info() != Eigen::Success) throw SolverError("solve_spd: factorization failed");
  if (!(ldlt_.vectorD().minCoeff() > 0.0))
    throw SolverError("solve_spd: matrix is not positive definite");

  const double bnorm = b.norm();
  if (bnorm == 0.0) return Vector::Zero(b.size());
  Vector x = ldlt_.solve(b);
  Vector r = b - m * x;
  double rnorm = r.norm();
  for (int k = 0; k < kRefinementSweeps && rnorm > kSolveTolerance * bnorm; ++k) {
    const Vector candidate = x + ldlt_.solve(r);
    const Vector rc = b - m * candidate;
    const double cnorm = rc.norm();
    if (!(cnorm < rnorm)) break;
    x = candidate;
    r = rc;
    rnorm = cnorm;
  }
  if (!std::isfinite(rnorm) || relative(rnorm, bnorm) > kSolveFailure) {
    std::ostringstream os;
    os << "solve_spd: relative residual " << relative(rnorm, bnorm) << " exceeds "
       << kSolveFailure;
    throw SolverError(os.str());
  }
  return x;
}

SaddleSolution LinearSolver::solve_saddle(const SparseMatrix& a, const SparseMatrix& b,
                                          const Vector& rhs) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || b.cols() != n || rhs.size() != n)
    throw SolverError("solve_saddle: inconsistent dimensions");
  SaddleSolution out;
  out.multipliers = Vector::Zero(b.rows());
  if (b.rows() == 0 || b.nonZeros() == 0) {
    out.velocity = solve_spd(a, rhs);
    return out;
  }

  // Row weights W_T = kPenalty * mean(A_jj) / |B_T|^2 make the penalty term
  // B^T W B comparable to A triangle by triangle.
  const SparseMatrix bt = b.transpose();
  const Vector diag = a.diagonal();
  Vector w = Vector::Zero(b.rows());
  Vector row_norm2 = Vector::Zero(b.rows());
  Vector row_diag = Vector::Zero(b.rows());
  Eigen::VectorXi row_count = Eigen::VectorXi::Zero(b.rows());
  double bmax = 0.0;
  for (int k = 0; k < b.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(b, k); it; ++it) {
      row_norm2[it.row()] += it.value() * it.value();
      row_diag[it.row()] += diag[it.col()];
      ++row_count[it.row()];
      bmax = std::max(bmax, std::abs(it.value()));
    }
  for (Eigen::Index t = 0; t < b.rows(); ++t)
    if (row_norm2[t] > 0.0) w[t] = kPenalty * row_diag[t] / row_count[t] / row_norm2[t];

  SparseMatrix k_aug = a + SparseMatrix(bt * w.asDiagonal() * b);
  k_aug.makeCompressed();
  if (!aug_analyzed_ || !aug_pattern_.matches(k_aug)) {
    aug_.analyzePattern(k_aug);
    aug_pattern_.assign(k_aug);
    aug_analyzed_ = true;
  }
  aug_.factorize(k_aug);
  if (aug_.info() != Eigen::Success || !(aug_.vectorD().minCoeff() > 0.0))
    throw SolverError("solve_saddle: augmented matrix is not positive definite");

  // Correction [du; dp] for residuals (r1, r2): CG on the augmented Schur
  // complement B K^-1 B^T, preconditioned with W.
  auto correct = [&](const Vector& r1, const Vector& r2, Vector& du, Vector& dp) {
    const Vector u0 = aug_.solve(r1 + bt * w.cwiseProduct(r2));
    const Vector g = b * u0 - r2;
    dp = Vector::Zero(b.rows());
    Vector r = g;
    // B^T 1 = 0: keep the search directions off the constant kernel
    auto precondition = [&](const Vector& v) {
      Vector z = w.cwiseProduct(v);
      return Vector(z.array() - z.mean());
    };
    Vector z = precondition(r);
    Vector d = z;
    double rz = r.dot(z);
    const double gnorm = g.norm();
    Vector best = dp;
    double best_norm = gnorm;
    for (int k = 0; k < kSchurIterations && best_norm > kSchurTolerance * gnorm; ++k) {
      const Vector sd = b * aug_.solve(bt * d);
      const double dsd = d.dot(sd);
      if (!(dsd > 0.0)) break;
      const double alpha = rz / dsd;
      dp += alpha * d;
      r -= alpha * sd;
      const double rnorm = r.norm();
      if (rnorm < best_norm) {
        best = dp;
        best_norm = rnorm;
      } else if (rnorm > 10.0 * best_norm) {
        break;
      }
      z = precondition(r);
      const double rz_next = r.dot(z);
      d = z + (rz_next / rz) * d;
      rz = rz_next;
    }
    dp = best;
    du = u0 - aug_.solve(bt * dp);
  };

  // normwise backward error of the momentum block
  const double bnorm = rhs.cwiseAbs().maxCoeff();
  double anorm = 0.0;
  {
    Vector row_sums = Vector::Zero(n);
    for (int k = 0; k < a.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(a, k); it; ++it) row_sums[it.row()] += std::abs(it.value());
    anorm = row_sums.maxCoeff();
  }
  struct Residual {
    Vector r1;
    Vector r2;
    double rel1 = 0.0;
    double rel2 = 0.0;
    double merit() const { return std::max(rel1, rel2); }
  };
  auto residual = [&](const Vector& u, const Vector& p) {
    Residual r{rhs - a * u - bt * p, -(b * u)};
    const double umax = u.cwiseAbs().maxCoeff();
    r.rel1 = relative(r.r1.cwiseAbs().maxCoeff(), anorm * umax + bnorm);
    const double r2max = r.r2.size() > 0 ? r.r2.cwiseAbs().maxCoeff() : 0.0;
    r.rel2 = umax > 0.0 ? r2max / (bmax * umax) : r2max;
    return r;
  };

  // CG corrections while they reduce the true residual, then plain Uzawa
  // sweeps on the augmented system.
  Vector u = Vector::Zero(n);
  Vector p = Vector::Zero(b.rows());
  Residual res = residual(u, p);
  bool use_cg = true;
  Vector du;
  Vector dp;
  for (int k = 0; k < kUzawaSweeps && !(res.rel1 <= kSolveTolerance && res.rel2 <= kSolveTolerance); ++k) {
    if (use_cg) {
      correct(res.r1, res.r2, du, dp);
      Residual next = residual(u + du, p + dp);
      if (next.merit() < res.merit()) {
        u += du;
        p += dp;
        res = std::move(next);
        continue;
      }
      use_cg = false;
    }
    u += aug_.solve(res.r1 + bt * w.cwiseProduct(res.r2));
    p += w.cwiseProduct(b * u);
    res = residual(u, p);
  }
  const double rel1 = res.rel1;
  const double rel2 = res.rel2;
  if (!std::isfinite(rel1) || !std::isfinite(rel2) || rel1 > kSolveFailure || rel2 > kSolveFailure) {
    std::ostringstream os;
    os << "solve_saddle: relative residuals " << rel1 << " (momentum) and " << rel2
       << " (constraint) exceed " << kSolveFailure;
    throw SolverError(os.str());
  }
  out.velocity = std::move(u);
  // B^T 1 = 0 for the divergence constraint, so the gauge shift is harmless.
  out.multipliers = p.array() - p[0];
  return out;
}

Vector LinearSolver::solve(const DiscreteProblem& problem, const SparseMatrix& a,
                           const Vector& rhs) {
  if (problem.constrained()) return solve_saddle(a, problem.constraint(), rhs).velocity;
  return solve_spd(a, rhs);
}

Vector solve_spd(const SparseMatrix& a, const Vector& b) { return LinearSolver().solve_spd(a, b); }

SaddleSolution solve_saddle(const SparseMatrix& a, const SparseMatrix& b, const Vector& rhs) {
  return LinearSolver().solve_saddle(a, b, rhs);
}

std::string_view scheme_name(Scheme scheme) {
  switch (scheme) {
    case Scheme::primal_kacanov: return "primal-kacanov";
    case Scheme::dual_kacanov: return "dual-kacanov";
    case Scheme::gradient_descent: return "gradient-descent";
    case Scheme::newton: return "newton";
  }
  return "unknown";
}

Scheme parse_scheme(std::string_view name) {
  for (Scheme s : {Scheme::primal_kacanov, Scheme::dual_kacanov, Scheme::gradient_descent,
                   Scheme::newton})
    if (scheme_name(s) == name) return s;
  throw ConfigError("unknown scheme '" + std::string(name) + "'");
}

Vector energy_gradient(const NFunction& model, const DiscreteProblem& problem, const Vector& u) {
  P0Field g = problem.field(u);
  for (std::size_t t = 0; t < g.size(); ++t) {
    const double len = g.norm(t);
    g.value(t) *= len > 0.0 ? model.phi_prime(len) / len : 0.0;
  }
  return assemble_field_functional(problem.space(), g) - problem.load_vector();
}

StepResult kacanov_step(const NFunction& model, const DiscreteProblem& problem, const Vector& u,
                        LinearSolver* solver) {
  LinearSolver local;
  const auto w = primal_weights(model, problem.field(u));
  return weighted_solve(problem, w, solver ? *solver : local);
}

StepResult dual_kacanov_step(const NFunction& model, const DiscreteProblem& problem,
                             const P0Field& sigma, LinearSolver* solver) {
  if (sigma.size() != problem.space().mesh().triangle_count() ||
      sigma.components() != problem.space().components())
    throw DomainError("dual_kacanov_step: sigma does not match the space");
  LinearSolver local;
  return weighted_solve(problem, dual_weights(model, sigma), solver ? *solver : local);
}

StepResult gradient_descent_step(const NFunction& model, const DiscreteProblem& problem,
                                 const Vector& u, LinearSolver* solver) {
  LinearSolver local;
  LinearSolver& ls = solver ? *solver : local;
  const Space& space = problem.space();
  const P0Field field = problem.field(u);
  const auto w = primal_weights(model, field);
  const P0Field flux = scaled(field, w);
  const Vector residual = assemble_field_functional(space, flux) - problem.load_vector();
  const std::vector<double> unit(space.mesh().triangle_count(), 1.0);
  const Vector g = ls.solve(problem, assemble_weighted_stiffness(space, unit), residual);

  StepResult out;
  out.sigma = flux;
  out.sigma.data() -= problem.increment_field(g).data();

  const double j0 = primal_energy(model, problem, u);
  const double slope = -residual.dot(g);
  if (!(slope < -energy_noise(j0))) {
    out.u = u;
    out.step = 0.0;
    return out;
  }
  double s = 1.0;
  for (int k = 0; k <= kMaxHalvings; ++k, s *= 0.5) {
    Vector candidate = u - s * g;
    if (primal_energy(model, problem, candidate) <= j0 + kArmijo * s * slope) {
      out.u = std::move(candidate);
      out.step = s;
      return out;
    }
  }
  throw SchemeError("gradient descent: line search stagnated after 60 halvings");
}

StepResult newton_step(const NFunction& model, const DiscreteProblem& problem, const Vector& u,
                       LinearSolver* solver) {
  LinearSolver local;
  LinearSolver& ls = solver ? *solver : local;
  const Space& space = problem.space();
  const P0Field field = problem.field(u);
  const auto w = primal_weights(model, field);
  std::vector<double> rank_one(field.size());
  for (std::size_t t = 0; t < field.size(); ++t) {
    const double len = field.norm(t);
    rank_one[t] = len > 0.0 ? model.phi_second(len) - w[t] : 0.0;
    if (!(w[t] + rank_one[t] > 0.0))
      throw SolverError("newton_step: linearization is not positive definite");
  }
  const P0Field flux = scaled(field, w);
  const Vector residual = assemble_field_functional(space, flux) - problem.load_vector();
  const SparseMatrix h = assemble_linearized_stiffness(space, w, rank_one, field);
  const Vector delta = ls.solve(problem, h, -residual);

  StepResult out;
  const P0Field gd = problem.increment_field(delta);
  out.sigma = P0Field(field.size(), field.components());
  for (std::size_t t = 0; t < field.size(); ++t) {
    auto s = out.sigma.value(t);
    s = w[t] * (field.value(t) + gd.value(t));
    const double len = field.norm(t);
    if (len > 0.0) {
      const Eigen::VectorXd n = field.value(t) / len;
      s += rank_one[t] * n.dot(gd.value(t)) * n;
    }
  }

  const double j0 = primal_energy(model, problem, u);
  const double slope = residual.dot(delta);
  if (!(slope < -energy_noise(j0))) {
    // Terminal phase: the decrease is below what J can resolve.
    out.u = u + delta;
    return out;
  }
  double s = 1.0;
  for (int k = 0; k <= kMaxHalvings; ++k, s *= 0.5) {
    Vector candidate = u + s * delta;
    if (primal_energy(model, problem, candidate) <= j0 + kArmijo * s * slope) {
      out.u = std::move(candidate);
      out.step = s;
      return out;
    }
  }
  throw SchemeError("newton: damping stagnated after 60 halvings");
}

std::vector<IterationRecord> iterate(Scheme scheme, const NFunction& model,
                                     const DiscreteProblem& problem,
                                     const IterationControls& controls) {
  if (controls.max_iterations < 1) throw DomainError("iterate: max_iterations must be positive");
  const Space& space = problem.space();
  Vector u = controls.initial_u.value_or(Vector::Zero(static_cast<Eigen::Index>(space.dof_count())));
  if (static_cast<std::size_t>(u.size()) != space.dof_count())
    throw DomainError("iterate: initial iterate does not match the space");
  P0Field sigma = controls.initial_sigma.value_or(
      P0Field(space.mesh().triangle_count(), space.components()));

  LinearSolver solver;
  std::vector<IterationRecord> records;
  for (int n = 1; n <= controls.max_iterations; ++n) {
    const StepIntegrand step_model =
        controls.integrand ? controls.integrand(n, records) : StepIntegrand{model, 0.0};
    StepResult step;
    switch (scheme) {
      case Scheme::primal_kacanov: step = kacanov_step(step_model.model, problem, u, &solver); break;
      case Scheme::dual_kacanov:
        step = dual_kacanov_step(step_model.model, problem, sigma, &solver);
        break;
      case Scheme::gradient_descent:
        step = gradient_descent_step(step_model.model, problem, u, &solver);
        break;
      case Scheme::newton: step = newton_step(step_model.model, problem, u, &solver); break;
    }
    u = std::move(step.u);
    sigma = std::move(step.sigma);

    const EnergyReport report = guaranteed_upper_bound(model, problem, u, sigma);
    if (!controls.keep_fields && !records.empty()) {
      records.back().u = Vector();
      records.back().sigma = P0Field();
    }
    records.push_back(IterationRecord{n, u, sigma, report.primal, report.dual, report.gub,
                                      report.residual, step_model.epsilon});
    if (report.gub <= controls.gub_tolerance) break;
  }
  return records;
}

}  // namespace dualfem
