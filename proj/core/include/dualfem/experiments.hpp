#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dualfem/fem.hpp"
#include "dualfem/mesh.hpp"
#include "dualfem/nfunction.hpp"
#include "dualfem/solver.hpp"

namespace dualfem {

enum class Experiment { plaplace, optdesign, pstokes, bingham };
enum class EpsilonPolicy { fixed_inverse_n, adaptive, constant };

std::string_view experiment_name(Experiment e);
Experiment parse_experiment(std::string_view name);
std::string_view epsilon_policy_name(EpsilonPolicy policy);
EpsilonPolicy parse_epsilon_policy(std::string_view name);
std::string_view space_name(SpaceKind kind);
SpaceKind parse_space(std::string_view name);

struct ExperimentConfig {
  Experiment experiment = Experiment::plaplace;
  double p = 1.5;
  double kappa = 0.1;
  double lambda = 0.0145;
  double mu1 = 1.0;
  double mu2 = 2.0;
  double viscosity = 1.0;
  double yield_stress = 0.3;
  /// Initial (adaptive) or fixed (constant policy) regularization.
  double epsilon = 1.0;
  /// Unset: primal Kacanov for p <= 2, dual Kacanov for p > 2.
  std::optional<Scheme> scheme;
  SpaceKind space = SpaceKind::p1_lagrange_zero;
  int levels = 3;
  int grade_depth = 10;
  double f = 2.0;
  int max_iterations = 60;
  double gub_tolerance = 0.0;
  EpsilonPolicy epsilon_policy = EpsilonPolicy::adaptive;
  std::string output;
  std::uint64_t seed = 0;
  std::size_t triangle_budget = kDefaultTriangleBudget;

  Scheme resolved_scheme() const;
  /// Throws ConfigError on out-of-range parameters or an experiment/space
  /// mismatch.
  void validate() const;
};

/// Paper parameters with desk-scale meshes. Throws ConfigError for an
/// unknown name.
ExperimentConfig preset(std::string_view name);

/// Applies one "key = value" setting. Throws ConfigError for unknown keys
/// or malformed values.
void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value);
/// Flat key-value file; blank lines and '#' comments are skipped. An
/// "experiment" line selects the preset the remaining keys override.
ExperimentConfig parse_config(std::istream& in);

/// Boundary velocity of the channel experiments.
Eigen::Vector2d channel_boundary(const Point& x);

std::shared_ptr<const Mesh> build_mesh(const ExperimentConfig& config);
/// Energy integrand (unregularized for Bingham).
NFunction energy_model(const ExperimentConfig& config);
DiscreteProblem build_problem(const ExperimentConfig& config, std::shared_ptr<const Mesh> mesh);

/// Regularization for step n >= 1. Fixed: 1/n. Adaptive: previous halved when
/// ratio > 100, unchanged otherwise (no ratio available: unchanged).
/// Constant: previous.
double bingham_epsilon_schedule(EpsilonPolicy mode, int n, double previous,
                                std::optional<double> ratio = std::nullopt);

/// Step integrand for the configured experiment; regularized Bingham with the
/// configured epsilon policy, the energy model otherwise.
IntegrandHook make_integrand(const ExperimentConfig& config, const DiscreteProblem& problem);

struct ReferenceSolution {
  Vector u;
  double energy = 0.0;  // J(u)
  double gub = 0.0;     // certified distance of J(u) from the minimum
  int iterations = 0;
};

/// High-accuracy minimizer: up to 10x max_iterations steps of the configured
/// scheme, then damped Newton until gub <= tolerance for families with
/// phi'' > 0. Optimal design and Bingham use Kacanov only (adaptive eps).
ReferenceSolution compute_reference(const ExperimentConfig& config, const DiscreteProblem& problem,
                                    double tolerance = 1e-12);

struct RunSummary {
  std::vector<IterationRecord> records;
  double j_ref = 0.0;
  std::size_t triangles = 0;
};

RunSummary run(const ExperimentConfig& config);
/// Header, one row per record and the "# jref = <value>" footer.
void write_csv(std::ostream& os, const ExperimentConfig& config, const RunSummary& summary);

}  // namespace dualfem
