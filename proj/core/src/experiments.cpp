#include "dualfem/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <sstream>

#include "dualfem/errors.hpp"
#include "dualfem/gub.hpp"

namespace dualfem {

namespace {

constexpr double kNewtonHandoff = 1e-6;
constexpr int kNewtonIterations = 60;
constexpr int kReferenceFactor = 10;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(std::string_view key, std::string_view value) {
  const std::string text = trim(value);
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("invalid number for '" + std::string(key) + "': '" + text + "'");
}

long long parse_integer(std::string_view key, std::string_view value) {
  const std::string text = trim(value);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw ConfigError("invalid integer for '" + std::string(key) + "': '" + text + "'");
  return v;
}

bool uses_channel(Experiment e) { return e == Experiment::pstokes || e == Experiment::bingham; }

double min_primal(const std::vector<IterationRecord>& records) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : records) best = std::min(best, r.primal);
  return best;
}

double min_gub(const std::vector<IterationRecord>& records) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : records) best = std::min(best, r.gub);
  return best;
}

}  // namespace

std::string_view experiment_name(Experiment e) {
  switch (e) {
    case Experiment::plaplace: return "plaplace";
    case Experiment::optdesign: return "optdesign";
    case Experiment::pstokes: return "pstokes";
    case Experiment::bingham: return "bingham";
  }
  return "unknown";
}

Experiment parse_experiment(std::string_view name) {
  for (Experiment e :
       {Experiment::plaplace, Experiment::optdesign, Experiment::pstokes, Experiment::bingham})
    if (experiment_name(e) == name) return e;
  throw ConfigError("unknown experiment '" + std::string(name) + "'");
}

std::string_view epsilon_policy_name(EpsilonPolicy policy) {
  switch (policy) {
    case EpsilonPolicy::fixed_inverse_n: return "fixed-sequence-1-over-n";
    case EpsilonPolicy::adaptive: return "adaptive";
    case EpsilonPolicy::constant: return "constant";
  }
  return "unknown";
}

EpsilonPolicy parse_epsilon_policy(std::string_view name) {
  if (name == "fixed" || name == "1/n") return EpsilonPolicy::fixed_inverse_n;
  for (EpsilonPolicy p :
       {EpsilonPolicy::fixed_inverse_n, EpsilonPolicy::adaptive, EpsilonPolicy::constant})
    if (epsilon_policy_name(p) == name) return p;
  throw ConfigError("unknown epsilon policy '" + std::string(name) + "'");
}

std::string_view space_name(SpaceKind kind) {
  switch (kind) {
    case SpaceKind::p1_lagrange_zero: return "p1-lagrange-zero";
    case SpaceKind::crouzeix_raviart_zero: return "crouzeix-raviart-zero";
    case SpaceKind::kouhia_stenberg: return "kouhia-stenberg";
  }
  return "unknown";
}

SpaceKind parse_space(std::string_view name) {
  if (name == "p1") return SpaceKind::p1_lagrange_zero;
  if (name == "cr") return SpaceKind::crouzeix_raviart_zero;
  if (name == "ks") return SpaceKind::kouhia_stenberg;
  for (SpaceKind k : {SpaceKind::p1_lagrange_zero, SpaceKind::crouzeix_raviart_zero,
                      SpaceKind::kouhia_stenberg})
    if (space_name(k) == name) return k;
  throw ConfigError("unknown space '" + std::string(name) + "'");
}

Scheme ExperimentConfig::resolved_scheme() const {
  if (scheme) return *scheme;
  switch (experiment) {
    case Experiment::plaplace:
    case Experiment::pstokes: return p > 2.0 ? Scheme::dual_kacanov : Scheme::primal_kacanov;
    case Experiment::optdesign:
    case Experiment::bingham: return Scheme::primal_kacanov;
  }
  return Scheme::primal_kacanov;
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const char* message) {
    if (!ok) throw ConfigError(message);
  };
  require(std::isfinite(p) && p > 1.0, "p must lie in (1, inf)");
  require(std::isfinite(kappa) && kappa > 0.0, "kappa must be positive");
  require(std::isfinite(lambda) && lambda > 0.0, "lambda must be positive");
  require(std::isfinite(mu1) && mu1 > 0.0 && std::isfinite(mu2) && mu2 >= mu1,
          "optimal design needs 0 < mu1 <= mu2");
  require(std::isfinite(viscosity) && viscosity > 0.0, "viscosity must be positive");
  require(std::isfinite(yield_stress) && yield_stress >= 0.0, "yield stress must be non-negative");
  require(std::isfinite(epsilon) && epsilon > 0.0, "epsilon must be positive");
  require(levels >= 0, "levels must be non-negative");
  require(grade_depth >= 0, "grade depth must be non-negative");
  require(std::isfinite(f), "f must be finite");
  require(max_iterations >= 1, "max-iterations must be positive");
  require(std::isfinite(gub_tolerance) && gub_tolerance >= 0.0,
          "gub tolerance must be non-negative");
  if (uses_channel(experiment)) {
    require(space == SpaceKind::kouhia_stenberg,
            "pstokes and bingham run on the kouhia-stenberg space");
    require(f == 0.0, "pstokes and bingham take f = 0");
  } else {
    require(space != SpaceKind::kouhia_stenberg,
            "scalar experiments run on p1-lagrange-zero or crouzeix-raviart-zero");
  }
}

ExperimentConfig preset(std::string_view name) {
  ExperimentConfig c;
  c.experiment = parse_experiment(name);
  switch (c.experiment) {
    case Experiment::plaplace:
      c.p = 1.5;
      c.kappa = 0.1;
      c.f = 2.0;
      break;
    case Experiment::optdesign:
      c.f = 1.0;
      c.max_iterations = 100;
      break;
    case Experiment::pstokes:
      c.p = 1.5;
      c.kappa = 0.1;
      c.f = 0.0;
      c.space = SpaceKind::kouhia_stenberg;
      c.levels = 2;
      c.grade_depth = 4;
      break;
    case Experiment::bingham:
      c.f = 0.0;
      c.space = SpaceKind::kouhia_stenberg;
      c.levels = 2;
      c.grade_depth = 4;
      c.epsilon = 1.0;
      c.epsilon_policy = EpsilonPolicy::adaptive;
      c.max_iterations = 100;
      break;
  }
  return c;
}

void apply_setting(ExperimentConfig& c, std::string_view raw_key, std::string_view raw_value) {
  std::string key = trim(raw_key);
  std::replace(key.begin(), key.end(), '_', '-');
  const std::string value = trim(raw_value);
  if (key == "experiment") {
    c.experiment = parse_experiment(value);
  } else if (key == "p") {
    c.p = parse_double(key, value);
  } else if (key == "kappa") {
    c.kappa = parse_double(key, value);
  } else if (key == "lambda") {
    c.lambda = parse_double(key, value);
  } else if (key == "mu1") {
    c.mu1 = parse_double(key, value);
  } else if (key == "mu2") {
    c.mu2 = parse_double(key, value);
  } else if (key == "nu" || key == "viscosity") {
    c.viscosity = parse_double(key, value);
  } else if (key == "sigma-y" || key == "yield-stress") {
    c.yield_stress = parse_double(key, value);
  } else if (key == "eps" || key == "epsilon") {
    c.epsilon = parse_double(key, value);
  } else if (key == "scheme") {
    c.scheme = parse_scheme(value);
  } else if (key == "space") {
    c.space = parse_space(value);
  } else if (key == "levels") {
    c.levels = static_cast<int>(parse_integer(key, value));
  } else if (key == "grade-depth") {
    c.grade_depth = static_cast<int>(parse_integer(key, value));
  } else if (key == "f") {
    c.f = parse_double(key, value);
  } else if (key == "max-iter" || key == "max-iterations") {
    c.max_iterations = static_cast<int>(parse_integer(key, value));
  } else if (key == "tol" || key == "gub-tolerance") {
    c.gub_tolerance = parse_double(key, value);
  } else if (key == "eps-policy" || key == "epsilon-policy") {
    c.epsilon_policy = parse_epsilon_policy(value);
  } else if (key == "out" || key == "output") {
    c.output = value;
  } else if (key == "seed") {
    const long long s = parse_integer(key, value);
    if (s < 0) throw ConfigError("seed must be non-negative");
    c.seed = static_cast<std::uint64_t>(s);
  } else {
    throw ConfigError("unknown configuration key '" + key + "'");
  }
}

ExperimentConfig parse_config(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> settings;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(number) + ": expected 'key = value'");
    settings.emplace_back(trim(std::string_view(line).substr(0, eq)),
                          trim(std::string_view(line).substr(eq + 1)));
  }
  ExperimentConfig c;
  for (const auto& [k, v] : settings)
    if (k == "experiment") c = preset(v);
  for (const auto& [k, v] : settings)
    if (k != "experiment") apply_setting(c, k, v);
  return c;
}

Eigen::Vector2d channel_boundary(const Point& x) {
  constexpr double tol = 1e-12;
  const double y = x.y();
  if (std::abs(x.x() + 2.0) <= tol) return {(1.0 - y) * y / 10.0, 0.0};
  if (std::abs(x.x() - 8.0) <= tol) return {(1.0 + y) * (1.0 - y) / 80.0, 0.0};
  return {0.0, 0.0};
}

std::shared_ptr<const Mesh> build_mesh(const ExperimentConfig& config) {
  Mesh coarse = uses_channel(config.experiment)
                    ? channel_mesh(config.levels, config.triangle_budget)
                    : lshape_mesh(config.levels, config.triangle_budget);
  if (config.grade_depth == 0) return std::make_shared<const Mesh>(std::move(coarse));
  return std::make_shared<const Mesh>(
      grade_toward(coarse, Point(0.0, 0.0), config.grade_depth, config.triangle_budget));
}

NFunction energy_model(const ExperimentConfig& config) {
  switch (config.experiment) {
    case Experiment::plaplace:
    case Experiment::pstokes: return NFunction::shifted_p_laplace(config.kappa, config.p);
    case Experiment::optdesign: return NFunction::optimal_design(config.lambda, config.mu1, config.mu2);
    case Experiment::bingham: return NFunction::bingham(config.viscosity, config.yield_stress);
  }
  throw ConfigError("unknown experiment");
}

DiscreteProblem build_problem(const ExperimentConfig& config, std::shared_ptr<const Mesh> mesh) {
  auto space = std::make_shared<const Space>(std::move(mesh), config.space);
  if (!uses_channel(config.experiment)) return DiscreteProblem(space, config.f);
  return DiscreteProblem(space, config.f, interpolate_boundary(space, channel_boundary));
}

double bingham_epsilon_schedule(EpsilonPolicy mode, int n, double previous,
                                std::optional<double> ratio) {
  if (n < 1) throw DomainError("bingham_epsilon_schedule: n must be at least 1");
  switch (mode) {
    case EpsilonPolicy::fixed_inverse_n: return 1.0 / n;
    case EpsilonPolicy::adaptive:
      return ratio ? adaptive_epsilon_policy(previous, *ratio) : previous;
    case EpsilonPolicy::constant: return previous;
  }
  return previous;
}

IntegrandHook make_integrand(const ExperimentConfig& config, const DiscreteProblem& problem) {
  if (config.experiment != Experiment::bingham) return {};
  const NFunction energy = energy_model(config);
  auto current = std::make_shared<double>(config.epsilon);
  const DiscreteProblem* prob = &problem;
  return [config, energy, current, prob](int n, const std::vector<IterationRecord>& history) {
    const double nu = config.viscosity;
    const double sy = config.yield_stress;
    if (n == 1 || history.empty()) {
      *current = config.epsilon_policy == EpsilonPolicy::fixed_inverse_n ? 1.0 : config.epsilon;
    } else if (config.epsilon_policy == EpsilonPolicy::adaptive) {
      const IterationRecord& last = history.back();
      std::optional<double> ratio;
      try {
        ratio = regularization_ratio(energy, NFunction::bingham_regularized(nu, sy, *current),
                                     *prob, last.u, last.sigma);
      } catch (const UndefinedError&) {
        // GUB_eps at rounding level: the regularization dominates the bound.
        ratio = std::numeric_limits<double>::infinity();
      }
      *current = bingham_epsilon_schedule(config.epsilon_policy, n, *current, ratio);
    } else {
      *current = bingham_epsilon_schedule(config.epsilon_policy, n, *current);
    }
    return StepIntegrand{NFunction::bingham_regularized(nu, sy, *current), *current};
  };
}

ReferenceSolution compute_reference(const ExperimentConfig& config,
                                    const DiscreteProblem& problem, double tolerance) {
  const NFunction model = energy_model(config);
  ReferenceSolution ref;
  IterationControls controls;
  controls.keep_fields = false;

  if (config.experiment == Experiment::bingham) {
    ExperimentConfig adaptive = config;
    adaptive.epsilon_policy = EpsilonPolicy::adaptive;
    controls.integrand = make_integrand(adaptive, problem);
    controls.max_iterations = kReferenceFactor * config.max_iterations;
    controls.gub_tolerance = tolerance;
    const auto records = iterate(Scheme::primal_kacanov, model, problem, controls);
    ref.u = records.back().u;
    ref.energy = min_primal(records);
    ref.gub = min_gub(records);
    ref.iterations = static_cast<int>(records.size());
    return ref;
  }

  if (config.experiment == Experiment::optdesign) {
    controls.max_iterations = kReferenceFactor * config.max_iterations;
    controls.gub_tolerance = tolerance;
    const auto records = iterate(Scheme::primal_kacanov, model, problem, controls);
    ref.u = records.back().u;
    ref.energy = min_primal(records);
    ref.gub = min_gub(records);
    ref.iterations = static_cast<int>(records.size());
    return ref;
  }

  controls.max_iterations = kReferenceFactor * config.max_iterations;
  controls.gub_tolerance = std::max(tolerance, kNewtonHandoff);
  auto records = iterate(config.resolved_scheme(), model, problem, controls);
  ref.iterations = static_cast<int>(records.size());
  ref.energy = min_primal(records);
  ref.gub = min_gub(records);
  ref.u = records.back().u;
  if (ref.gub > tolerance) {
    IterationControls polish;
    polish.keep_fields = false;
    polish.max_iterations = kNewtonIterations;
    polish.gub_tolerance = tolerance;
    polish.initial_u = ref.u;
    const auto newton = iterate(Scheme::newton, model, problem, polish);
    ref.iterations += static_cast<int>(newton.size());
    ref.energy = std::min(ref.energy, min_primal(newton));
    ref.gub = std::min(ref.gub, min_gub(newton));
    ref.u = newton.back().u;
  }
  return ref;
}

RunSummary run(const ExperimentConfig& config) {
  config.validate();
  const auto mesh = build_mesh(config);
  const DiscreteProblem problem = build_problem(config, mesh);
  const NFunction model = energy_model(config);

  IterationControls controls;
  controls.max_iterations = config.max_iterations;
  controls.gub_tolerance = config.gub_tolerance;
  controls.keep_fields = false;
  controls.integrand = make_integrand(config, problem);

  RunSummary summary;
  summary.triangles = mesh->triangle_count();
  summary.records = iterate(config.resolved_scheme(), model, problem, controls);
  const ReferenceSolution ref = compute_reference(config, problem);
  summary.j_ref = std::min(ref.energy, min_primal(summary.records));

  if (!config.output.empty()) {
    std::ofstream out(config.output);
    if (!out) throw ConfigError("cannot open output file '" + config.output + "'");
    write_csv(out, config, summary);
    if (!out) throw ConfigError("failed writing '" + config.output + "'");
  }
  return summary;
}

void write_csv(std::ostream& os, const ExperimentConfig& config, const RunSummary& summary) {
  const bool bingham = config.experiment == Experiment::bingham;
  os << (bingham ? "Iter,Energy0Error,DualEnergy0Error,eps"
                 : "Iter,EnergyError,DualEnergyError,EfficiencyIndex")
     << '\n';
  std::ostringstream line;
  line << std::setprecision(17);
  for (const auto& r : summary.records) {
    line.str("");
    line << r.n << ',' << r.primal - summary.j_ref << ',' << r.dual + summary.j_ref << ',';
    if (bingham) {
      line << r.epsilon;
    } else {
      double index = std::numeric_limits<double>::quiet_NaN();
      try {
        index = efficiency_index(r.gub, r.primal, summary.j_ref);
      } catch (const UndefinedError&) {
      }
      line << index;
    }
    os << line.str() << '\n';
  }
  line.str("");
  line << "# jref = " << summary.j_ref;
  os << line.str() << '\n';
}

}  // namespace dualfem
