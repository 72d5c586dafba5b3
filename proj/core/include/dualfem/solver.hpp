#pragma once

#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "dualfem/fem.hpp"
#include "dualfem/nfunction.hpp"

namespace dualfem {

/// Relative residual targeted by the direct solves.
inline constexpr double kSolveTolerance = 1e-12;
/// Residual above which a solve is reported as failed.
inline constexpr double kSolveFailure = 1e-10;

struct SaddleSolution {
  Vector velocity;
  Vector multipliers;  // one per constraint row, first one pinned to 0
};

/// Sparse direct solver that keeps the symbolic analysis as long as the
/// sparsity pattern does not change between calls.
class LinearSolver {
 public:
  /// LDL^T with iterative refinement. Throws SolverError on a non-positive
  /// pivot or a residual above kSolveFailure.
  Vector solve_spd(const SparseMatrix& a, const Vector& b);

  /// [A B^T; B 0] [u; p] = [b; 0] by an augmented Lagrangian method: one
  /// LDL^T factorization of A + B^T W B per call, preconditioned CG on the
  /// multipliers and refinement on the original residuals. The
  /// multipliers are returned with the first one fixed to 0. Throws
  /// SolverError if the momentum backward error |r|/(|A||u| + |b|) or the
  /// scaled constraint residual (max norms) stays above kSolveFailure.
  SaddleSolution solve_saddle(const SparseMatrix& a, const SparseMatrix& b, const Vector& rhs);

  /// solve_spd or, for constrained problems, the velocity of solve_saddle.
  Vector solve(const DiscreteProblem& problem, const SparseMatrix& a, const Vector& rhs);

 private:
  struct Pattern {
    std::vector<int> outer;
    std::vector<int> inner;
    bool matches(const SparseMatrix& m) const;
    void assign(const SparseMatrix& m);
  };

  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
  Pattern ldlt_pattern_;
  bool ldlt_analyzed_ = false;

  Eigen::SimplicialLDLT<SparseMatrix> aug_;
  Pattern aug_pattern_;
  bool aug_analyzed_ = false;
};

Vector solve_spd(const SparseMatrix& a, const Vector& b);
SaddleSolution solve_saddle(const SparseMatrix& a, const SparseMatrix& b, const Vector& rhs);

enum class Scheme { primal_kacanov, dual_kacanov, gradient_descent, newton };

std::string_view scheme_name(Scheme scheme);
/// Accepts the hyphenated names (primal-kacanov, dual-kacanov,
/// gradient-descent, newton). Throws ConfigError otherwise.
Scheme parse_scheme(std::string_view name);

struct StepResult {
  Vector u;       // homogeneous coefficients of u_{n+1}
  P0Field sigma;  // feasible byproduct
  double step = 1.0;
};

/// Gradient of J at u: r_i = int phi'(|G u|) (G u)/|G u| . G e_i - f int e_i.
Vector energy_gradient(const NFunction& model, const DiscreteProblem& problem, const Vector& u);

StepResult kacanov_step(const NFunction& model, const DiscreteProblem& problem, const Vector& u,
                        LinearSolver* solver = nullptr);
StepResult dual_kacanov_step(const NFunction& model, const DiscreteProblem& problem,
                             const P0Field& sigma, LinearSolver* solver = nullptr);
/// Throws SchemeError if Armijo backtracking fails within 60 halvings.
StepResult gradient_descent_step(const NFunction& model, const DiscreteProblem& problem,
                                 const Vector& u, LinearSolver* solver = nullptr);
StepResult newton_step(const NFunction& model, const DiscreteProblem& problem, const Vector& u,
                       LinearSolver* solver = nullptr);

struct IterationRecord {
  int n = 0;
  Vector u;
  P0Field sigma;
  double primal = 0.0;
  double dual = 0.0;
  double gub = 0.0;
  double residual = 0.0;
  double epsilon = 0.0;  // regularization used for the step, 0 when none
};

/// Integrand driving step n, which may differ from the energy model
/// (regularized Bingham).
struct StepIntegrand {
  NFunction model;
  double epsilon = 0.0;
};
using IntegrandHook =
    std::function<StepIntegrand(int n, const std::vector<IterationRecord>& history)>;

struct IterationControls {
  int max_iterations = 100;
  double gub_tolerance = 0.0;
  std::optional<Vector> initial_u;        // default 0 (lift only)
  std::optional<P0Field> initial_sigma;   // default 0
  IntegrandHook integrand;                // default: the energy model
  /// Drop u and sigma from all but the latest record.
  bool keep_fields = true;
};

/// Runs the scheme and returns records n = 1..N, evaluated with the energy
/// model. Stops once gub <= gub_tolerance or after max_iterations steps.
std::vector<IterationRecord> iterate(Scheme scheme, const NFunction& model,
                                     const DiscreteProblem& problem,
                                     const IterationControls& controls);

}  // namespace dualfem
