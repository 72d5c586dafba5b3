#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "dualfem/errors.hpp"
#include "dualfem/gub.hpp"
#include "dualfem/solver.hpp"
#include "oracles.hpp"

using namespace dualfem;

namespace {

std::shared_ptr<const Space> make_space(const Mesh& mesh, SpaceKind kind) {
  return std::make_shared<const Space>(std::make_shared<const Mesh>(mesh), kind);
}

DiscreteProblem scalar_problem(const Mesh& mesh, double f = 2.0,
                               SpaceKind kind = SpaceKind::p1_lagrange_zero) {
  return DiscreteProblem(make_space(mesh, kind), f);
}

std::vector<double> ones(std::size_t n) { return std::vector<double>(n, 1.0); }

Vector random_vector(Eigen::Index n, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

// Scaled gradient of J; zero exactly at the discrete minimizer.
double gradient_norm(const NFunction& model, const DiscreteProblem& problem, const Vector& u) {
  return energy_gradient(model, problem, u).cwiseQuotient(problem.space().basis_seminorms()).cwiseAbs().maxCoeff();
}

Vector minimizer(const NFunction& model, const DiscreteProblem& problem) {
  IterationControls controls;
  controls.max_iterations = 200;
  controls.gub_tolerance = 1e-13;
  Vector u = iterate(Scheme::newton, model, problem, controls).back().u;
  // the certificate bounds the energy, not the coefficients; polish further
  double best = gradient_norm(model, problem, u);
  for (int k = 0; k < 10; ++k) {
    const Vector next = newton_step(model, problem, u).u;
    const double g = gradient_norm(model, problem, next);
    if (!(g < best)) break;
    u = next;
    best = g;
  }
  return u;
}

const NFunction kQuad = NFunction::quadratic();
const NFunction kP32 = NFunction::shifted_p_laplace(0.1, 1.5);
const NFunction kP4 = NFunction::shifted_p_laplace(0.1, 4.0);

}  // namespace

TEST(SolveSpd, IdentityAndDiagonal) {
  SparseMatrix eye(4, 4);
  eye.setIdentity();
  const Vector b = Vector::LinSpaced(4, -1.0, 3.0);
  EXPECT_LE((solve_spd(eye, b) - b).norm(), 1e-15);
  SparseMatrix d(2, 2);
  d.insert(0, 0) = 2.0;
  d.insert(1, 1) = 4.0;
  const Vector x = solve_spd(d, Vector::Constant(2, 1.0).cwiseProduct(Eigen::Vector2d(2, 4)));
  EXPECT_NEAR(x[0], 1.0, 1e-15);
  EXPECT_NEAR(x[1], 1.0, 1e-15);
}

TEST(SolveSpd, StiffnessResidual) {
  const auto space = make_space(lshape_mesh(2), SpaceKind::p1_lagrange_zero);
  const SparseMatrix a = assemble_weighted_stiffness(*space, ones(space->mesh().triangle_count()));
  const Vector b = assemble_load(*space, 2.0);
  const Vector u = solve_spd(a, b);
  EXPECT_LE((a * u - b).norm() / b.norm(), 1e-12);
}

TEST(SolveSpd, RejectsIndefinite) {
  SparseMatrix a(2, 2);
  a.insert(0, 0) = 1.0;
  a.insert(1, 1) = -1.0;
  EXPECT_THROW(solve_spd(a, Eigen::Vector2d(1, 1)), SolverError);
}

TEST(SolveSpd, ReusesAnalysisAcrossValues) {
  const auto space = make_space(lshape_mesh(2), SpaceKind::crouzeix_raviart_zero);
  LinearSolver solver;
  const Vector b = assemble_load(*space, 1.0);
  for (double scale : {1.0, 3.0, 0.25}) {
    const auto w = std::vector<double>(space->mesh().triangle_count(), scale);
    const SparseMatrix a = assemble_weighted_stiffness(*space, w);
    const Vector u = solver.solve_spd(a, b);
    EXPECT_LE((a * u - b).norm() / b.norm(), 1e-12);
  }
}

TEST(SolveSaddle, EmptyConstraintReducesToSpd) {
  const auto space = make_space(lshape_mesh(2), SpaceKind::p1_lagrange_zero);
  const SparseMatrix a = assemble_weighted_stiffness(*space, ones(space->mesh().triangle_count()));
  const Vector b = assemble_load(*space, 2.0);
  const SparseMatrix none(0, a.cols());
  const SaddleSolution s = solve_saddle(a, none, b);
  EXPECT_LE((s.velocity - solve_spd(a, b)).norm(), 1e-12 * s.velocity.norm());
  EXPECT_EQ(s.multipliers.size(), 0);
}

TEST(SolveSaddle, BlockResidualsAndDivergence) {
  const Mesh mesh = grade_toward(channel_mesh(1), Point(0, 0), 2);
  const auto space = make_space(mesh, SpaceKind::kouhia_stenberg);
  const SparseMatrix a = assemble_weighted_stiffness(*space, ones(mesh.triangle_count()));
  const SparseMatrix b = assemble_divergence_constraint(*space);
  std::mt19937_64 rng(3);
  const Vector rhs = random_vector(a.rows(), rng, 1.0);
  const SaddleSolution s = solve_saddle(a, b, rhs);
  ASSERT_EQ(s.multipliers.size(), b.rows());
  EXPECT_EQ(s.multipliers[0], 0.0);
  const Vector r1 = a * s.velocity + b.transpose() * s.multipliers - rhs;
  EXPECT_LE(r1.norm() / rhs.norm(), 1e-10);
  EXPECT_LE((b * s.velocity).cwiseAbs().maxCoeff(), 1e-10);
  const Vector div = triangle_divergence(FeFunction{space, s.velocity, std::nullopt});
  EXPECT_LE(div.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(SolveSaddle, WeightContrastOfTwelveDecades) {
  const Mesh mesh = channel_mesh(1);
  const auto space = make_space(mesh, SpaceKind::kouhia_stenberg);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> decade(0.0, 12.0);
  std::vector<double> weights(mesh.triangle_count());
  for (double& w : weights) w = std::pow(10.0, decade(rng));
  const SparseMatrix a = assemble_weighted_stiffness(*space, weights);
  const SparseMatrix b = assemble_divergence_constraint(*space);
  const Vector rhs = random_vector(a.rows(), rng, 1.0);
  const SaddleSolution s = solve_saddle(a, b, rhs);
  const Vector r1 = a * s.velocity + b.transpose() * s.multipliers - rhs;
  double anorm = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) anorm = std::max(anorm, a.row(i).cwiseAbs().sum());
  const double umax = s.velocity.cwiseAbs().maxCoeff();
  EXPECT_LE(r1.cwiseAbs().maxCoeff() / (anorm * umax + rhs.cwiseAbs().maxCoeff()), 1e-10);
  EXPECT_LE((b * s.velocity).cwiseAbs().maxCoeff(), 1e-10 * umax);
}

TEST(SolveSaddle, RigidRotationLiftGivesZeroVelocity) {
  const auto space = make_space(lshape_mesh(2), SpaceKind::kouhia_stenberg);
  // the lift is the full rotation field, interior values included
  const DiscreteProblem problem(
      space, 0.0, dualfem::testing::interpolate(space, [](const Point& x) { return Eigen::Vector2d(-x.y(), x.x()); }));
  EXPECT_LE(problem.lift_field().data().cwiseAbs().maxCoeff(), 1e-12);
  const StepResult step = kacanov_step(kQuad, problem, Vector::Zero(space->dof_count()));
  EXPECT_LE(step.u.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(step.sigma.data().cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Scheme, NamesRoundTrip) {
  for (Scheme s : {Scheme::primal_kacanov, Scheme::dual_kacanov, Scheme::gradient_descent, Scheme::newton})
    EXPECT_EQ(parse_scheme(scheme_name(s)), s);
  EXPECT_EQ(parse_scheme("dual-kacanov"), Scheme::dual_kacanov);
  EXPECT_THROW(parse_scheme("kacanov"), ConfigError);
}

TEST(KacanovStep, QuadraticIsExactInOneStep) {
  const DiscreteProblem problem = scalar_problem(*dualfem::testing::tiny_lshape());
  std::mt19937_64 rng(5);
  const Vector u0 = random_vector(problem.space().dof_count(), rng, 0.3);
  const StepResult step = kacanov_step(kQuad, problem, u0);
  const EnergyReport report = guaranteed_upper_bound(kQuad, problem, step.u, step.sigma);
  EXPECT_LE(std::abs(report.gub), 1e-10);
  const SparseMatrix a = assemble_weighted_stiffness(problem.space(), ones(problem.space().mesh().triangle_count()));
  EXPECT_LE((a * step.u - problem.load_vector()).norm(), 1e-12 * problem.load_vector().norm());
}

TEST(KacanovStep, FixedPointIsReproduced) {
  const DiscreteProblem problem = scalar_problem(lshape_mesh(2));
  const Vector uh = minimizer(kP32, problem);
  const StepResult step = kacanov_step(kP32, problem, uh);
  EXPECT_LE((step.u - uh).cwiseAbs().maxCoeff(), 1e-9 * (1 + uh.cwiseAbs().maxCoeff()));
}

TEST(KacanovStep, EnergyDescent) {
  const DiscreteProblem problem = scalar_problem(lshape_mesh(2));
  Vector u = Vector::Zero(problem.space().dof_count());
  double j = primal_energy(kP32, problem, u);
  for (int n = 0; n < 25; ++n) {
    const StepResult step = kacanov_step(kP32, problem, u);
    const double next = primal_energy(kP32, problem, step.u);
    EXPECT_LE(next, j + 1e-12) << "n=" << n;
    EXPECT_LE(problem.feasibility().residual(step.sigma, 2.0), 1e-8);
    u = step.u;
    j = next;
  }
}

TEST(KacanovStep, UnregularizedBinghamAtRestRequestsRegularization) {
  const auto space = make_space(lshape_mesh(1), SpaceKind::kouhia_stenberg);
  const DiscreteProblem problem(space, 0.0);
  try {
    kacanov_step(NFunction::bingham(1.0, 0.3), problem, Vector::Zero(space->dof_count()));
    FAIL() << "expected SchemeError";
  } catch (const SchemeError& e) {
    EXPECT_NE(std::string(e.what()).find("regularized"), std::string::npos);
  }
}

TEST(DualKacanovStep, QuadraticMatchesPrimal) {
  const DiscreteProblem problem = scalar_problem(lshape_mesh(2));
  const P0Field zero(problem.space().mesh().triangle_count(), 2);
  const StepResult d = dual_kacanov_step(kQuad, problem, zero);
  const StepResult p = kacanov_step(kQuad, problem, Vector::Zero(problem.space().dof_count()));
  EXPECT_LE((d.u - p.u).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LE((d.sigma.data() - p.sigma.data()).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(DualKacanovStep, FirstWeightIsKappaSquared) {
  const DiscreteProblem problem = scalar_problem(lshape_mesh(2));
  const P0Field zero(problem.space().mesh().triangle_count(), 2);
  const StepResult d = dual_kacanov_step(kP4, problem, zero);
  const Vector u_unit = solve_spd(assemble_weighted_stiffness(problem.space(), ones(zero.size())), problem.load_vector());
  EXPECT_LE((d.u - 100.0 * u_unit).cwiseAbs().maxCoeff(), 1e-9 * d.u.cwiseAbs().maxCoeff());
  const P0Field g = problem.field(d.u);
  EXPECT_LE((d.sigma.data() - 0.01 * g.data()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DualKacanovStep, DualEnergyDescent) {
  const DiscreteProblem problem = scalar_problem(lshape_mesh(2));
  P0Field sigma(problem.space().mesh().triangle_count(), 2);
  double previous = 0.0;
  for (int n = 0; n < 40; ++n) {
    const StepResult step = dual_kacanov_step(kP4, problem, sigma);
    const double jd = dual_energy(kP4, problem, step.sigma);
    if (n >= 1) EXPECT_LE(jd, previous + 1e-12) << "n=" << n;
    EXPECT_LE(problem.feasibility().residual(step.sigma, 2.0), 1e-8);
    sigma = step.sigma;
    previous = jd;
  }
}

TEST(GradientDescentStep, MinimizerIsStationary) {
  const DiscreteProblem problem = scalar_problem(lshape_mesh(2));
  const Vector uh = minimizer(kP32, problem);
  const StepResult step = gradient_descent_step(kP32, problem, uh);
  EXPECT_LE((step.u - uh).cwiseAbs().maxCoeff(), 1e-9);
  const StepResult k = kacanov_step(kP32, problem, uh);
  EXPECT_LE((step.sigma.data() - k.sigma.data()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(GradientDescentStep, QuadraticTakesFullStep) {
  const DiscreteProblem problem = scalar_problem(lshape_mesh(2));
  std::mt19937_64 rng(8);
  const Vector u0 = random_vector(problem.space().dof_count(), rng, 0.2);
  const StepResult step = gradient_descent_step(kQuad, problem, u0);
  EXPECT_EQ(step.step, 1.0);
  const StepResult exact = kacanov_step(kQuad, problem, u0);
  EXPECT_LE((step.u - exact.u).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GradientDescentStep, EnergyNeverIncreases) {
  const DiscreteProblem problem = scalar_problem(lshape_mesh(2));
  for (const auto& model : {kP32, kP4, NFunction::optimal_design(0.0145, 1.0, 2.0)}) {
    Vector u = Vector::Zero(problem.space().dof_count());
    for (int n = 0; n < 15; ++n) {
      const StepResult step = gradient_descent_step(model, problem, u);
      EXPECT_LE(primal_energy(model, problem, step.u), primal_energy(model, problem, u));
      EXPECT_LE(problem.feasibility().residual(step.sigma, 2.0), 1e-8);
      u = step.u;
    }
  }
}

TEST(NewtonStep, QuadraticIsExact) {
  const DiscreteProblem problem = scalar_problem(lshape_mesh(2));
  std::mt19937_64 rng(9);
  const Vector u0 = random_vector(problem.space().dof_count(), rng, 0.2);
  const StepResult step = newton_step(kQuad, problem, u0);
  EXPECT_LE(std::abs(guaranteed_upper_bound(kQuad, problem, step.u, step.sigma).gub), 1e-10);
}

TEST(NewtonStep, MinimizerGivesZeroUpdate) {
  const DiscreteProblem problem = scalar_problem(lshape_mesh(2));
  const Vector uh = minimizer(kP4, problem);
  const StepResult step = newton_step(kP4, problem, uh);
  EXPECT_LE((step.u - uh).cwiseAbs().maxCoeff(), 1e-10 * (1 + uh.cwiseAbs().maxCoeff()));
  const StepResult k = kacanov_step(kP4, problem, uh);
  EXPECT_LE((step.sigma.data() - k.sigma.data()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(NewtonStep, QuadraticContractionInTerminalPhase) {
  const DiscreteProblem problem = scalar_problem(lshape_mesh(2));
  Vector u = Vector::Zero(problem.space().dof_count());
  std::vector<double> residuals = {gradient_norm(kP4, problem, u)};
  for (int n = 0; n < 60 && residuals.back() > 1e-13; ++n) {
    u = newton_step(kP4, problem, u).u;
    residuals.push_back(gradient_norm(kP4, problem, u));
  }
  ASSERT_LE(residuals.back(), 1e-11);
  double worst = 0.0;
  int terminal = 0;
  for (std::size_t n = 0; n + 1 < residuals.size(); ++n) {
    if (residuals[n] > 1e-3 || residuals[n] < 1e-9) continue;
    worst = std::max(worst, residuals[n + 1] / (residuals[n] * residuals[n]));
    ++terminal;
  }
  EXPECT_GE(terminal, 1);
  EXPECT_LE(worst, 1e4) << "measured contraction constant";
  RecordProperty("newton_contraction_constant", std::to_string(worst));
}

TEST(Iterate, HugeToleranceGivesSingleRecord) {
  const DiscreteProblem problem = scalar_problem(lshape_mesh(2));
  IterationControls controls;
  controls.gub_tolerance = 1e30;
  const auto records = iterate(Scheme::primal_kacanov, kP32, problem, controls);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].n, 1);
}

TEST(Iterate, QuadraticStopsAfterFirstStep) {
  const DiscreteProblem problem = scalar_problem(lshape_mesh(2));
  IterationControls controls;
  controls.gub_tolerance = 1e-10;
  for (Scheme s : {Scheme::primal_kacanov, Scheme::dual_kacanov, Scheme::gradient_descent, Scheme::newton}) {
    const auto records = iterate(s, kQuad, problem, controls);
    ASSERT_EQ(records.size(), 1u) << scheme_name(s);
    EXPECT_EQ(records[0].n, 1);
  }
}

TEST(Iterate, RecordInvariants) {
  const DiscreteProblem problem = scalar_problem(grade_toward(lshape_mesh(2), Point(0, 0), 6));
  IterationControls controls;
  controls.max_iterations = 20;
  const auto records = iterate(Scheme::primal_kacanov, kP32, problem, controls);
  ASSERT_EQ(records.size(), 20u);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    EXPECT_EQ(r.n, static_cast<int>(i) + 1);
    EXPECT_EQ(r.gub, r.primal + r.dual);
    EXPECT_GE(r.gub, -1e-10);
    EXPECT_LE(r.residual, 1e-8);
    EXPECT_EQ(r.epsilon, 0.0);
    EXPECT_NEAR(r.primal, primal_energy(kP32, problem, r.u), 0.0);
    EXPECT_NEAR(r.dual, dual_energy(kP32, problem, r.sigma), 0.0);
  }
  for (std::size_t i = 1; i < records.size(); ++i)
    EXPECT_LE(records[i].gub, records[i - 1].gub + 1e-12) << "n=" << records[i].n;
}

TEST(Iterate, KeepFieldsFalseRetainsOnlyLast) {
  const DiscreteProblem problem = scalar_problem(lshape_mesh(2));
  IterationControls controls;
  controls.max_iterations = 5;
  controls.keep_fields = false;
  const auto records = iterate(Scheme::primal_kacanov, kP32, problem, controls);
  ASSERT_EQ(records.size(), 5u);
  for (std::size_t i = 0; i + 1 < records.size(); ++i) {
    EXPECT_EQ(records[i].u.size(), 0);
    EXPECT_EQ(records[i].sigma.size(), 0u);
  }
  EXPECT_EQ(static_cast<std::size_t>(records.back().u.size()), problem.space().dof_count());
}

TEST(Iterate, IntegrandHookDrivesSteps) {
  const DiscreteProblem problem = scalar_problem(lshape_mesh(1));
  IterationControls controls;
  controls.max_iterations = 3;
  std::vector<int> seen;
  controls.integrand = [&](int n, const std::vector<IterationRecord>& history) {
    EXPECT_EQ(history.size(), static_cast<std::size_t>(n - 1));
    seen.push_back(n);
    return StepIntegrand{kQuad, 0.5 / n};
  };
  const auto records = iterate(Scheme::primal_kacanov, kP32, problem, controls);
  EXPECT_EQ(seen, (std::vector<int>{1, 2, 3}));
  for (const auto& r : records) EXPECT_DOUBLE_EQ(r.epsilon, 0.5 / r.n);
}

TEST(Iterate, RejectsBadControls) {
  const DiscreteProblem problem = scalar_problem(lshape_mesh(1));
  IterationControls controls;
  controls.max_iterations = 0;
  EXPECT_THROW(iterate(Scheme::newton, kP32, problem, controls), DomainError);
  controls.max_iterations = 2;
  controls.initial_u = Vector::Zero(2);
  EXPECT_THROW(iterate(Scheme::newton, kP32, problem, controls), DomainError);
}

TEST(Properties, ByproductFeasibilityAllSchemes) {
  std::mt19937_64 rng(21);
  for (auto kind : {SpaceKind::p1_lagrange_zero, SpaceKind::crouzeix_raviart_zero}) {
    const DiscreteProblem problem = scalar_problem(*dualfem::testing::tiny_lshape(), 2.0, kind);
    const auto n = static_cast<Eigen::Index>(problem.space().dof_count());
    for (int sample = 0; sample < 5; ++sample) {
      const Vector u = random_vector(n, rng, 0.5);
      const P0Field sigma = problem.field(random_vector(n, rng, 0.5));
      for (const auto& model : {kP32, kP4}) {
        EXPECT_LE(problem.feasibility().residual(kacanov_step(model, problem, u).sigma, 2.0), 1e-8);
        EXPECT_LE(problem.feasibility().residual(dual_kacanov_step(model, problem, sigma).sigma, 2.0), 1e-8);
        EXPECT_LE(problem.feasibility().residual(gradient_descent_step(model, problem, u).sigma, 2.0), 1e-8);
        EXPECT_LE(problem.feasibility().residual(newton_step(model, problem, u).sigma, 2.0), 1e-8);
      }
    }
  }
}

TEST(Properties, StokesIteratesStayDivergenceFree) {
  const auto mesh = dualfem::testing::tiny_channel();
  const auto space = std::make_shared<const Space>(mesh, SpaceKind::kouhia_stenberg);
  const DiscreteProblem problem(
      space, 0.0, interpolate_boundary(space, [](const Point& x) { return Eigen::Vector2d(x.y() * (1 - x.y()), 0.1 * x.x()); }));
  IterationControls controls;
  controls.max_iterations = 6;
  for (Scheme s : {Scheme::primal_kacanov, Scheme::newton}) {
    for (const auto& r : iterate(s, kP32, problem, controls)) {
      const Vector div = problem.constraint() * r.u;
      EXPECT_LE(div.cwiseAbs().maxCoeff(), 1e-10) << scheme_name(s);
      EXPECT_LE(r.residual, 1e-8);
    }
  }
}

TEST(Properties, StrongDualityAtConvergence) {
  const DiscreteProblem problem = scalar_problem(grade_toward(lshape_mesh(2), Point(0, 0), 4));
  IterationControls controls;
  controls.max_iterations = 200;
  controls.gub_tolerance = 1e-10;
  const auto p32 = iterate(Scheme::primal_kacanov, kP32, problem, controls).back();
  EXPECT_LE(std::abs(p32.primal + p32.dual), 1e-8);
  const auto p4 = iterate(Scheme::dual_kacanov, kP4, problem, controls).back();
  EXPECT_LE(std::abs(p4.primal + p4.dual), 1e-8);
}

TEST(Properties, KacanovAndNewtonAgree) {
  const DiscreteProblem problem = scalar_problem(*dualfem::testing::tiny_lshape());
  IterationControls controls;
  controls.max_iterations = 300;
  controls.gub_tolerance = 1e-12;
  const auto k = iterate(Scheme::primal_kacanov, kP32, problem, controls).back();
  const auto n = iterate(Scheme::newton, kP32, problem, controls).back();
  EXPECT_NEAR(k.primal, n.primal, 1e-9);
}

TEST(Properties, GubBoundsEnergyErrorOfEveryIterate) {
  const DiscreteProblem problem = scalar_problem(*dualfem::testing::tiny_lshape());
  for (const auto& model : {kP32, kP4}) {
    const double j_ref = primal_energy(model, problem, minimizer(model, problem));
    IterationControls controls;
    controls.max_iterations = 30;
    for (Scheme s : {Scheme::primal_kacanov, Scheme::dual_kacanov, Scheme::gradient_descent, Scheme::newton}) {
      for (const auto& r : iterate(s, model, problem, controls))
        EXPECT_LE(r.primal - j_ref, r.gub + 1e-10) << scheme_name(s) << " n=" << r.n;
    }
  }
}
