// Command line driver: runs one experiment and writes its convergence CSV.
#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dualfem/errors.hpp"
#include "dualfem/experiments.hpp"

int main(int argc, char** argv) {
  using namespace dualfem;

  CLI::App app{"Primal-dual iteration error bounds for convex minimization"};
  std::string experiment = "plaplace";
  std::string config_path;
  std::string dump_mesh;
  std::vector<std::pair<std::string, std::string>> overrides;

  app.add_option("--experiment", experiment, "plaplace, optdesign, pstokes or bingham");
  app.add_option("--config", config_path, "key = value file; flags override it");
  app.add_option("--dump-mesh", dump_mesh, "write the mesh in text format");

  auto add = [&](const char* flag, const char* key, const char* help) {
    app.add_option_function<std::string>(
        flag, [&overrides, key](const std::string& v) { overrides.emplace_back(key, v); }, help);
  };
  add("--p", "p", "exponent p");
  add("--kappa", "kappa", "shift kappa");
  add("--lambda", "lambda", "optimal design lambda");
  add("--mu1", "mu1", "optimal design mu1");
  add("--mu2", "mu2", "optimal design mu2");
  add("--nu", "nu", "Bingham viscosity");
  add("--sigma-y", "sigma-y", "Bingham yield stress");
  add("--eps", "eps", "initial (adaptive) or constant regularization");
  add("--scheme", "scheme", "primal-kacanov, dual-kacanov, gradient-descent or newton");
  add("--space", "space", "p1-lagrange-zero, crouzeix-raviart-zero or kouhia-stenberg");
  add("--levels", "levels", "uniform refinement levels of the coarse mesh");
  add("--grade-depth", "grade-depth", "grading rounds toward the re-entrant corner");
  add("--f", "f", "constant right-hand side");
  add("--max-iter", "max-iter", "maximal number of iterations");
  add("--tol", "tol", "stop once the upper bound is below this value");
  add("--eps-policy", "eps-policy", "fixed-sequence-1-over-n, adaptive or constant");
  add("--out", "out", "CSV output path");
  add("--seed", "seed", "random seed");

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig config = preset(experiment);
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot read config file '" + config_path + "'");
      std::stringstream text;
      text << in.rdbuf();
      if (app.count("--experiment")) text << "\nexperiment = " << experiment << '\n';
      config = parse_config(text);
    }
    for (const auto& [key, value] : overrides) apply_setting(config, key, value);
    config.validate();

    if (!dump_mesh.empty()) {
      std::ofstream out(dump_mesh);
      if (!out) throw ConfigError("cannot open mesh output '" + dump_mesh + "'");
      write_mesh(out, *build_mesh(config));
    }

    const auto start = std::chrono::steady_clock::now();
    const RunSummary summary = run(config);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (config.output.empty()) write_csv(std::cout, config, summary);
    const auto& last = summary.records.back();
    std::cerr << experiment_name(config.experiment) << ": " << summary.triangles
              << " triangles, " << summary.records.size() << " iterations, final gub " << last.gub
              << ", jref " << summary.j_ref << ", " << seconds << " s\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
