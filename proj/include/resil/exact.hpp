#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "resil/farkas.hpp"
#include "resil/model.hpp"
#include "resil/spec.hpp"

namespace resil::exact {

enum class Status { feasible, nominal_infeasible, unbounded };

std::string to_string(Status status);

/// Outer search over the feedback gain (closed loop only).
struct SearchConfig {
  int restarts = 8;
  int max_iterations = 500;
  double tolerance = 1e-6;
  std::uint64_t seed = 0;
  /// Random candidates screened per restart.
  int screen = 32;
  /// Random gains are drawn entrywise from [-scale, scale].
  double scale = 2.0;
  /// Extra starting gains (m x n), tried before the zero gain.
  std::vector<Matrix> initial_gains;
  bool parallel = true;
};

struct ExactOptions {
  farkas::Formulation formulation = farkas::Formulation::l1;
  /// Run the vertex/row-extreme certifier on feasible results.
  bool certify = true;
  farkas::CertifyOptions certify_options;
};

struct MetricResult {
  double value = 0.0;
  Status status = Status::nominal_infeasible;
  std::optional<Controller> controller;
  /// Input bound at the optimum for resilience queries; mu0 for effort.
  double companion = 0.0;
  std::optional<farkas::Certificate> certificate;
  /// Closed loop: the verdict rests on a finite search.
  bool search_incomplete = false;
  long evaluations = 0;
};

struct ParetoPoint {
  double w1 = 0.0;
  double w2 = 0.0;
  double mu = 0.0;
  double eps = 0.0;
  double objective = 0.0;
  Status status = Status::nominal_infeasible;
  std::optional<Controller> controller;
};

/// Optional clamps used to reduce the trade-off to the single metrics.
struct ParetoBounds {
  std::optional<double> eps_cap;   // eps <= cap
  std::optional<double> eps_fixed; // eps == value
  std::optional<double> mu_fixed;  // mu == value
};

MetricResult resilience_open(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0, double eps0,
                             const ExactOptions& options = {});

/// Throws InfeasibleAtMu0Error when mu0 exceeds what any input sequence
/// tolerates; nominal infeasibility is reported through the status.
MetricResult effort_open(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0, double mu0,
                         const ExactOptions& options = {});

ParetoPoint pareto_open(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0, double w1, double w2,
                        const ParetoBounds& bounds = {}, const ExactOptions& options = {});

/// eps0 = +inf drops the input rows.
MetricResult resilience_closed(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0, double eps0,
                               const SearchConfig& search = {}, const ExactOptions& options = {});

MetricResult effort_closed(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0, double mu0,
                           const SearchConfig& search = {}, const ExactOptions& options = {});

ParetoPoint pareto_closed(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0, double w1,
                          double w2, const SearchConfig& search = {}, const ParetoBounds& bounds = {},
                          const ExactOptions& options = {});

enum class Mode { open, closed };

struct Weights {
  double w1 = 0.0;
  double w2 = 0.0;
};

/// One point per weight pair, in the given order; a point whose (mu, eps)
/// repeats an earlier one within 1e-9 is dropped.
std::vector<ParetoPoint> pareto_sweep(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0,
                                      const std::vector<Weights>& weights, Mode mode, const SearchConfig& search = {},
                                      const ExactOptions& options = {});

/// Whether some input sequence meets the spec under every disturbance of
/// size mu with inputs bounded by eps (+inf: unbounded).
bool open_loop_feasible(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0, double mu, double eps,
                        const ExactOptions& options = {});

/// Same for u = alpha1 x + alpha2 with the given gain and some offset.
bool closed_loop_feasible(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0,
                          const Matrix& alpha1, double mu, double eps, const ExactOptions& options = {});

/// Inner problem of the closed-loop searches at a fixed gain.
struct InnerSolution {
  bool feasible = false;
  bool unbounded = false;
  double mu = 0.0;
  double eps = 0.0;
  Vector alpha2;
  /// Minimal uniform relaxation of the nominal rows when infeasible.
  double violation = 0.0;
};

enum class Goal { resilience, effort, pareto };

struct InnerQuery {
  Goal goal = Goal::resilience;
  double mu0 = 0.0;
  double eps0 = 0.0;
  double w1 = 0.0;
  double w2 = 0.0;
  ParetoBounds bounds;
};

InnerSolution solve_inner(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0,
                          const Matrix& alpha1, const InnerQuery& query, const ExactOptions& options = {});

}  // namespace resil::exact
