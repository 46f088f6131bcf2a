#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "resil/model.hpp"
#include "resil/spec.hpp"

namespace resil::scenario {

enum class Distribution { uniform, zero };

std::string to_string(Distribution d);
Distribution distribution_from_string(const std::string& name);

/// M normalized disturbance sequences, every component in [-1, 1].
struct ScenarioSet {
  std::vector<DisturbanceSequence> samples;
  std::uint64_t seed = 0;
  Distribution distribution = Distribution::uniform;

  std::size_t size() const { return samples.size(); }
};

/// Sample i is drawn from its own stream (seed, i), so any subset can be
/// regenerated independently and in parallel.
ScenarioSet sample_disturbances(std::size_t count, std::size_t horizon, Eigen::Index state_dim, std::uint64_t seed,
                                Distribution distribution = Distribution::uniform);

/// Parametrized controller family searched by the scenario solver.
struct ControllerTemplate {
  enum class Kind { linear, polynomial, open_loop };
  Kind kind = Kind::linear;
  int degree = 1;  // polynomial only

  /// linear: alpha1 row-major then alpha2; polynomial: coefficients
  /// row-major; open loop: u_0, ..., u_{N-1}.
  Eigen::Index parameter_count(Eigen::Index n, Eigen::Index m, std::size_t horizon) const;
  Controller controller(const Vector& params, Eigen::Index n, Eigen::Index m, std::size_t horizon) const;
  std::string name() const;
};

/// Which metric the sampled program optimizes: maximize w1 mu - w2 eps.
/// Resilience fixes eps at eps0 (+inf: no input bound); effort fixes mu at
/// mu0. When eps is not fixed it is the largest input magnitude over all
/// scenario rollouts.
struct ScenarioObjective {
  double w1 = 1.0;
  double w2 = 0.0;
  std::optional<double> mu0;
  std::optional<double> eps0;
};

struct ScenarioProblem {
  NonlinearSystem system;
  spec::TimedSets sets;
  Vector x0;
  ControllerTemplate controller;
  ScenarioObjective objective;
  /// Hard actuator limits enforced in every scenario, independent of eps.
  std::optional<Vector> input_lower;
  std::optional<Vector> input_upper;
};

struct SolverConfig {
  int restarts = 8;
  int screen = 32;
  int max_iterations = 2000;
  double tolerance = 1e-10;
  std::uint64_t seed = 0;
  /// Search center and per-coordinate spread of the controller parameters.
  Vector initial_params;
  Vector param_scale;
  double mu_initial = 0.01;
  double mu_scale = 0.01;
  double mu_ceiling = 1e6;
  double rho_initial = 1e3;
  double rho_factor = 10.0;
  double rho_max = 1e9;
  double feasibility_slack = 1e-8;
  /// Simplex size of the local polishing runs, as a fraction of the scales.
  double polish_step = 0.05;
  bool parallel = true;
};

struct ScenarioSolution {
  double mu = 0.0;
  double eps = 0.0;
  double objective = 0.0;
  Vector params;
  Controller controller;
  bool mu_capped = false;
  double rho = 0.0;
  double worst_margin = 0.0;
  long evaluations = 0;
};

/// Exact-penalty multi-start Nelder-Mead on the sampled program. The result
/// satisfies every scenario to within the feasibility slack; throws
/// NoFeasiblePointError otherwise.
ScenarioSolution solve_scenario(const ScenarioProblem& problem, const ScenarioSet& scenarios,
                                const SolverConfig& config = {});

/// Worst constraint margin of one scenario at a decision (negative: violated).
double scenario_margin(const ScenarioProblem& problem, const Vector& params, double mu, double eps,
                       const DisturbanceSequence& normalized);

/// Number of scenarios whose removal changes the polished solution by more
/// than `tolerance` in objective or (relative) decision.
std::size_t support_count(const ScenarioSolution& solution, const ScenarioProblem& problem,
                          const ScenarioSet& scenarios, const SolverConfig& config = {}, double tolerance = 1e-6);

/// b(k) = 1 - t(k), t the root in (0, 1) of
///   (beta / M) sum_{m=k}^{M-1} C(m, k) t^{m-k} - C(M, k) t^{M-k} = 0,
/// and b(M) = 1.
double risk_bound(std::size_t k, std::size_t count, double beta);

/// Fraction of `fresh` scenarios violated by the solution.
double empirical_violation(const ScenarioSolution& solution, const ScenarioProblem& problem,
                           const ScenarioSet& fresh);
double empirical_violation_serial(const ScenarioSolution& solution, const ScenarioProblem& problem,
                                  const ScenarioSet& fresh);

struct ScenarioCertificate {
  ScenarioSolution solution;
  std::size_t support = 0;
  double beta = 0.0;
  double bound = 1.0;
  std::size_t count = 0;
  std::uint64_t seed = 0;
};

/// Full pipeline: sample, solve, count support constraints, bound the risk.
ScenarioCertificate run_pipeline(const ScenarioProblem& problem, std::size_t count, std::uint64_t seed, double beta,
                                 Distribution distribution = Distribution::uniform, const SolverConfig& config = {});

/// Built-in plants addressable by name from problem files.
///
///   acc:       x = (h, v), u = F   (adaptive cruise control)
///   collision: x = (r_x, r_y, v), u = F
///
/// Unknown names or missing parameters throw InputError.
using Parameters = std::map<std::string, double>;
NonlinearSystem make_model(const std::string& name, const Parameters& parameters, std::size_t horizon);
std::vector<std::string> model_names();

}  // namespace resil::scenario
