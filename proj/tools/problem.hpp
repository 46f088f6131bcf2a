#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "resil/exact.hpp"
#include "resil/model.hpp"
#include "resil/scenario.hpp"
#include "resil/spec.hpp"

namespace resil::cli {

struct Query {
  std::string metric = "resilience";  // resilience | effort | pareto | scenario
  std::string controller = "open";    // open | linear | polynomial
  int degree = 2;
  std::optional<double> eps0;
  std::optional<double> mu0;
  std::vector<exact::Weights> weights;
  /// Objective of a scenario query: resilience, effort or pareto.
  std::string objective = "resilience";
  farkas::Formulation formulation = farkas::Formulation::l1;
};

struct ScenarioBlock {
  std::size_t count = 100;
  double beta = 1e-2;
  std::uint64_t seed = 0;
  scenario::Distribution distribution = scenario::Distribution::uniform;
  /// Fresh samples for the empirical violation estimate (0: skip).
  std::size_t fresh = 0;
  std::uint64_t fresh_seed = 1;
  scenario::SolverConfig solver;
  std::optional<Vector> input_lower;
  std::optional<Vector> input_upper;
};

struct Problem {
  std::size_t horizon = 0;
  Vector x0;
  std::string spec_text;
  spec::RegionTable regions;
  spec::TimedSets sets;
  /// Set for linear plants; nonlinear models only run through `scenario`.
  std::optional<LtvSystem> ltv;
  std::optional<NonlinearSystem> system;
  std::string model;
  Query query;
  exact::SearchConfig search;
  ScenarioBlock scenario;
  /// The parsed file as JSON, echoed into every record.
  nlohmann::json echo;
};

/// Reads and validates a problem file (TOML, or a JSON result record whose
/// echoed problem is rerun). Schema violations throw InputError naming the
/// offending field path.
Problem load_problem(const std::string& path);
Problem parse_problem(const std::string& text, const std::string& source = "<string>");
Problem problem_from_json(const nlohmann::json& echo);

/// Non-finite values become the strings "inf", "-inf" and "nan".
nlohmann::json number_json(double v);

}  // namespace resil::cli
