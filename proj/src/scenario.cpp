#include "resil/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "resil/error.hpp"
#include "resil/optim.hpp"

#ifdef RESIL_HAVE_OPENMP
#include <omp.h>
#endif

namespace resil::scenario {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

std::string to_string(Distribution d) { return d == Distribution::uniform ? "uniform" : "zero"; }

Distribution distribution_from_string(const std::string& name) {
  if (name == "uniform") return Distribution::uniform;
  if (name == "zero") return Distribution::zero;
  throw InputError("scenario", "unknown distribution '" + name + "' (expected uniform or zero)");
}

ScenarioSet sample_disturbances(std::size_t count, std::size_t horizon, Eigen::Index state_dim, std::uint64_t seed,
                                Distribution distribution) {
  if (count < 1) throw InputError("scenario", "scenario count must be at least 1");
  if (horizon < 1 || state_dim < 1) throw InputError("scenario", "horizon and state dimension must be positive");
  ScenarioSet set;
  set.seed = seed;
  set.distribution = distribution;
  set.samples.resize(count);
  const auto n = static_cast<long>(count);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    auto& d = set.samples[static_cast<std::size_t>(i)];
    d = DisturbanceSequence::zeros(state_dim, horizon);
    if (distribution == Distribution::zero) continue;
    auto engine = optim::stream_engine(seed, static_cast<std::uint64_t>(i));
    for (auto& step : d.steps)
      for (Eigen::Index c = 0; c < state_dim; ++c) step(c) = 2.0 * optim::unit_uniform(engine) - 1.0;
  }
  return set;
}

Eigen::Index ControllerTemplate::parameter_count(Eigen::Index n, Eigen::Index m, std::size_t horizon) const {
  switch (kind) {
    case Kind::linear:
      return m * (n + 1);
    case Kind::polynomial:
      return m * static_cast<Eigen::Index>(monomial_count(n, degree));
    case Kind::open_loop:
      return m * static_cast<Eigen::Index>(horizon);
  }
  return 0;
}

Controller ControllerTemplate::controller(const Vector& params, Eigen::Index n, Eigen::Index m,
                                          std::size_t horizon) const {
  if (params.size() != parameter_count(n, m, horizon))
    throw InputError("scenario", name() + " template expects " + std::to_string(parameter_count(n, m, horizon)) +
                                     " parameters, got " + std::to_string(params.size()));
  switch (kind) {
    case Kind::linear: {
      LinearFeedback c;
      c.gain.resize(m, n);
      for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < n; ++j) c.gain(i, j) = params(i * n + j);
      c.offset = params.tail(m);
      return c;
    }
    case Kind::polynomial: {
      PolynomialFeedback c;
      c.degree = degree;
      const auto cols = static_cast<Eigen::Index>(monomial_count(n, degree));
      c.coefficients.resize(m, cols);
      for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) c.coefficients(i, j) = params(i * cols + j);
      return c;
    }
    case Kind::open_loop: {
      OpenLoopSequence c;
      for (std::size_t k = 0; k < horizon; ++k) c.inputs.push_back(params.segment(m * static_cast<Eigen::Index>(k), m));
      return c;
    }
  }
  return OpenLoopSequence{};
}

std::string ControllerTemplate::name() const {
  switch (kind) {
    case Kind::linear:
      return "linear";
    case Kind::polynomial:
      return "polynomial(" + std::to_string(degree) + ")";
    case Kind::open_loop:
      return "open";
  }
  return "unknown";
}

namespace {

struct Evaluation {
  double margin = kInf;     // spec, fixed input bound and actuator limits
  double max_input = 0.0;
  bool overflow = false;
};

Evaluation evaluate(const ScenarioProblem& p, const Controller& controller, double mu, std::optional<double> eps,
                    const DisturbanceSequence& normalized) {
  DisturbanceSequence d = normalized;
  for (auto& s : d.steps) s *= mu;
  Evaluation e;
  Trajectory traj;
  try {
    traj = rollout(p.system, controller, p.x0, d);
  } catch (const OverflowError&) {
    e.overflow = true;
    e.margin = -kInf;
    return e;
  }
  e.margin = spec::margin(traj, p.sets);
  for (const auto& u : traj.inputs) {
    const double mag = u.cwiseAbs().maxCoeff();
    e.max_input = std::max(e.max_input, mag);
    if (eps) e.margin = std::min(e.margin, *eps - mag);
    if (p.input_lower) e.margin = std::min(e.margin, (u - *p.input_lower).minCoeff());
    if (p.input_upper) e.margin = std::min(e.margin, (*p.input_upper - u).minCoeff());
  }
  return e;
}

// Decision vector: [mu if free] ++ controller parameters.
class Program {
 public:
  Program(const ScenarioProblem& problem, const ScenarioSet& scenarios, const SolverConfig& config)
      : p_(problem), set_(scenarios), config_(config) {
    const auto& obj = p_.objective;
    if (obj.w1 < 0.0 || obj.w2 < 0.0) throw InputError("scenario", "weights must be non-negative");
    if (obj.mu0 && !(*obj.mu0 >= 0.0 && std::isfinite(*obj.mu0)))
      throw InputError("scenario", "fixed disturbance bound must be finite and non-negative");
    if (obj.eps0 && !(*obj.eps0 >= 0.0)) throw InputError("scenario", "input bound must be non-negative");
    if (obj.w2 > 0.0 && obj.eps0 && std::isinf(*obj.eps0))
      throw InputError("scenario", "an infinite input bound cannot carry a positive effort weight");
    if (p_.x0.size() != p_.system.state_dim()) throw InputError("scenario", "initial state has wrong length");
    if (p_.sets.horizon != p_.system.horizon() || p_.sets.state_dim != p_.system.state_dim())
      throw InputError("scenario", "specification does not match the system");
    for (const auto& s : set_.samples) {
      if (s.size() != p_.system.horizon() || s.steps.front().size() != p_.system.state_dim())
        throw InputError("scenario", "scenario shape does not match the system");
    }
    params_ = p_.controller.parameter_count(p_.system.state_dim(), p_.system.input_dim(), p_.system.horizon());
    mu_free_ = !obj.mu0.has_value();
    if (obj.eps0 && !std::isinf(*obj.eps0)) fixed_eps_ = *obj.eps0;
    active_.assign(set_.size(), true);
  }

  Eigen::Index dim() const { return params_ + (mu_free_ ? 1 : 0); }
  bool mu_free() const { return mu_free_; }
  void drop(std::size_t i) { active_[i] = false; }

  double mu_of(const Vector& z) const {
    if (!mu_free_) return *p_.objective.mu0;
    return std::min(std::abs(z(0)), config_.mu_ceiling);
  }
  Vector params_of(const Vector& z) const { return z.tail(params_); }
  Controller controller_of(const Vector& z) const {
    return p_.controller.controller(params_of(z), p_.system.state_dim(), p_.system.input_dim(), p_.system.horizon());
  }

  struct Totals {
    double mu = 0.0;
    double eps = 0.0;
    double value = 0.0;
    double violation_sum = 0.0;
    double worst = kInf;
    long overflow = 0;
  };

  Totals totals(const Vector& z) const {
    Totals t;
    t.mu = mu_of(z);
    const Controller c = controller_of(z);
    std::vector<Evaluation> evals(set_.size());
    const auto n = static_cast<long>(set_.size());
#pragma omp parallel for schedule(static) if (config_.parallel && !omp_nested())
    for (long i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      if (active_[idx]) evals[idx] = evaluate(p_, c, t.mu, fixed_eps_, set_.samples[idx]);
    }
    for (std::size_t i = 0; i < evals.size(); ++i) {
      if (!active_[i]) continue;
      if (evals[i].overflow) {
        ++t.overflow;
        continue;
      }
      t.worst = std::min(t.worst, evals[i].margin);
      t.violation_sum += std::max(0.0, -evals[i].margin);
      t.eps = std::max(t.eps, evals[i].max_input);
    }
    if (t.overflow > 0) t.worst = -kInf;
    if (fixed_eps_) t.eps = *fixed_eps_;
    if (p_.objective.eps0 && std::isinf(*p_.objective.eps0)) t.eps = kInf;
    t.value = p_.objective.w1 * t.mu - (p_.objective.w2 > 0.0 ? p_.objective.w2 * t.eps : 0.0);
    return t;
  }

  optim::Merit merit(const Vector& z, double rho) const {
    const Totals t = totals(z);
    return {static_cast<double>(t.overflow), -t.value + rho * t.violation_sum};
  }

  bool feasible(const Vector& z) const {
    const Totals t = totals(z);
    return t.overflow == 0 && t.worst >= -config_.feasibility_slack;
  }

  /// Largest feasible mu along the ray from 0 to the current value.
  std::optional<Vector> repair(const Vector& z) const {
    if (feasible(z)) return z;
    if (!mu_free_) return std::nullopt;
    Vector lo = z;
    lo(0) = 0.0;
    if (!feasible(lo)) return std::nullopt;
    double a = 0.0;
    double b = mu_of(z);
    for (int it = 0; it < 100 && b - a > 1e-14 * std::max(1.0, b); ++it) {
      const double mid = 0.5 * (a + b);
      Vector trial = z;
      trial(0) = mid;
      if (feasible(trial)) {
        a = mid;
      } else {
        b = mid;
      }
    }
    lo(0) = a;
    return lo;
  }

  Vector center() const {
    Vector c(dim());
    if (mu_free_) c(0) = config_.mu_initial;
    c.tail(params_) = config_.initial_params.size() == params_ ? config_.initial_params : Vector::Zero(params_);
    return c;
  }

  Vector scales() const {
    Vector s(dim());
    if (mu_free_) s(0) = config_.mu_scale;
    s.tail(params_) = config_.param_scale.size() == params_ ? config_.param_scale : Vector::Ones(params_);
    return s;
  }

  ScenarioSolution finish(const Vector& z, double rho, long evaluations) const {
    const Totals t = totals(z);
    ScenarioSolution s;
    s.mu = t.mu;
    s.eps = t.eps;
    s.objective = t.value;
    s.params = params_of(z);
    s.controller = controller_of(z);
    s.mu_capped = mu_free_ && t.mu >= config_.mu_ceiling;
    s.rho = rho;
    s.worst_margin = t.worst;
    s.evaluations = evaluations;
    return s;
  }

  Vector decision_of(const ScenarioSolution& s) const {
    Vector z(dim());
    if (mu_free_) z(0) = s.mu;
    z.tail(params_) = s.params;
    return z;
  }

 private:
  static bool omp_nested() {
#ifdef RESIL_HAVE_OPENMP
    return omp_in_parallel();
#else
    return true;
#endif
  }

  const ScenarioProblem& p_;
  const ScenarioSet& set_;
  const SolverConfig& config_;
  Eigen::Index params_ = 0;
  bool mu_free_ = true;
  std::optional<double> fixed_eps_;
  std::vector<bool> active_;
};

optim::NelderMeadOptions local_options(const SolverConfig& config, const Vector& steps) {
  optim::NelderMeadOptions o;
  o.max_iterations = config.max_iterations;
  o.tolerance = config.tolerance;
  o.steps = steps;
  return o;
}

struct Polished {
  Vector z;
  bool ok = false;
  long evaluations = 0;
};

Polished polish(const Program& program, const Vector& start, double rho, const SolverConfig& config) {
  const optim::MeritFunction f = [&](const Vector& z) { return program.merit(z, rho); };
  const auto r = optim::nelder_mead(f, start, local_options(config, config.polish_step * program.scales()));
  Polished out;
  out.evaluations = r.evaluations;
  if (auto fixed = program.repair(r.x)) {
    out.z = *fixed;
    out.ok = true;
  } else {
    out.z = r.x;
  }
  return out;
}

}  // namespace

double scenario_margin(const ScenarioProblem& problem, const Vector& params, double mu, double eps,
                       const DisturbanceSequence& normalized) {
  const Controller c = problem.controller.controller(params, problem.system.state_dim(), problem.system.input_dim(),
                                                     problem.system.horizon());
  std::optional<double> bound;
  if (!std::isinf(eps)) bound = eps;
  return evaluate(problem, c, mu, bound, normalized).margin;
}

ScenarioSolution solve_scenario(const ScenarioProblem& problem, const ScenarioSet& scenarios,
                                const SolverConfig& config) {
  if (scenarios.size() == 0) throw InputError("scenario", "empty scenario set");
  const Program program(problem, scenarios, config);
  const Vector center = program.center();
  const Vector scales = program.scales();

  std::vector<Vector> warm{center};
  long evaluations = 0;
  for (double rho = config.rho_initial; rho <= config.rho_max * (1.0 + 1e-12); rho *= config.rho_factor) {
    const optim::MeritFunction f = [&](const Vector& z) { return program.merit(z, rho); };
    optim::MultiStartOptions ms;
    ms.restarts = config.restarts;
    ms.screen = config.screen;
    ms.seed = config.seed;
    ms.center = center;
    ms.spread = scales;
    ms.include_zero = false;
    ms.initial_points = warm;
    ms.local = local_options(config, scales);
    const auto found = config.parallel ? optim::multi_start(f, program.dim(), ms)
                                       : optim::multi_start_serial(f, program.dim(), ms);
    evaluations += found.evaluations;
    const Polished best = polish(program, found.x, rho, config);
    evaluations += best.evaluations;
    if (best.ok) {
      // Repair can land below a feasible warm start; keep the better one.
      Vector z = best.z;
      if (auto start = program.repair(center); start && program.finish(*start, rho, 0).objective >
                                                          program.finish(z, rho, 0).objective)
        z = *start;
      return program.finish(z, rho, evaluations);
    }
    warm = {center, best.z};
  }
  throw NoFeasiblePointError("scenario", "no decision satisfies all " + std::to_string(scenarios.size()) +
                                             " scenarios after penalty escalation to " + std::to_string(config.rho_max));
}

std::size_t support_count(const ScenarioSolution& solution, const ScenarioProblem& problem,
                          const ScenarioSet& scenarios, const SolverConfig& config, double tolerance) {
  const Program full(problem, scenarios, config);
  const Vector start = full.decision_of(solution);
  const Polished baseline = polish(full, start, solution.rho, config);
  if (!baseline.ok) throw NoFeasiblePointError("scenario", "polishing the reported solution lost feasibility");
  const double base_value = full.finish(baseline.z, solution.rho, 0).objective;

  const auto n = static_cast<long>(scenarios.size());
  std::vector<char> support(scenarios.size(), 0);
  std::vector<std::string> failures(scenarios.size());
#pragma omp parallel for schedule(dynamic, 1) if (config.parallel)
  for (long i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      Program reduced(problem, scenarios, config);
      reduced.drop(idx);
      const Polished r = polish(reduced, start, solution.rho, config);
      if (!r.ok) throw NoFeasiblePointError("scenario", "re-solve lost feasibility");
      const double value = reduced.finish(r.z, solution.rho, 0).objective;
      bool moved = std::abs(value - base_value) > tolerance * (1.0 + std::abs(base_value));
      for (Eigen::Index j = 0; j < r.z.size() && !moved; ++j)
        moved = std::abs(r.z(j) - baseline.z(j)) > tolerance * (1.0 + std::abs(baseline.z(j)));
      support[idx] = moved ? 1 : 0;
    } catch (const std::exception& e) {
      failures[idx] = e.what();
    }
  }
  for (std::size_t i = 0; i < failures.size(); ++i)
    if (!failures[i].empty())
      throw NumericalError("scenario", "support re-solve without scenario " + std::to_string(i) + " failed: " + failures[i]);
  return static_cast<std::size_t>(std::count(support.begin(), support.end(), 1));
}

namespace {

double log_binomial(std::size_t n, std::size_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

}  // namespace

double risk_bound(std::size_t k, std::size_t count, double beta) {
  if (count < 1) throw InputError("scenario", "scenario count must be at least 1");
  if (k > count) throw InputError("scenario", "complexity exceeds the scenario count");
  if (!(beta > 0.0 && beta <= 1.0)) throw InputError("scenario", "confidence parameter must lie in (0, 1]");
  if (k == count) return 1.0;

  std::vector<double> log_c(count - k);
  for (std::size_t m = k; m < count; ++m) log_c[m - k] = log_binomial(m, k);
  const double log_scale = std::log(beta / static_cast<double>(count));
  const double log_last = log_binomial(count, k);

  // Sign of the polynomial, evaluated as a difference of logs.
  auto positive = [&](double t) {
    const double lt = std::log(t);
    double peak = -kInf;
    for (std::size_t j = 0; j < log_c.size(); ++j) peak = std::max(peak, log_c[j] + static_cast<double>(j) * lt);
    double acc = 0.0;
    for (std::size_t j = 0; j < log_c.size(); ++j) acc += std::exp(log_c[j] + static_cast<double>(j) * lt - peak);
    const double lhs = log_scale + peak + std::log(acc);
    const double rhs = log_last + static_cast<double>(count - k) * lt;
    return lhs > rhs;
  };

  double lo = 0.0;
  double hi = 1.0;
  if (positive(hi)) return 0.0;
  while (hi - lo > 1e-13) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= 0.0) break;
    if (positive(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 1.0 - 0.5 * (lo + hi);
}

namespace {

double violation_rate(const ScenarioSolution& solution, const ScenarioProblem& problem, const ScenarioSet& fresh,
                      bool parallel) {
  if (fresh.size() == 0) throw InputError("scenario", "empirical violation needs at least one fresh scenario");
  std::optional<double> bound;
  if (problem.objective.eps0 && !std::isinf(*problem.objective.eps0)) bound = *problem.objective.eps0;
  const auto n = static_cast<long>(fresh.size());
  long violated = 0;
#pragma omp parallel for schedule(static) reduction(+ : violated) if (parallel)
  for (long i = 0; i < n; ++i) {
    const Evaluation e = evaluate(problem, solution.controller, solution.mu, bound, fresh.samples[static_cast<std::size_t>(i)]);
    if (e.overflow || e.margin < 0.0 || (!bound && problem.objective.w2 > 0.0 && e.max_input > solution.eps)) ++violated;
  }
  return static_cast<double>(violated) / static_cast<double>(fresh.size());
}

}  // namespace

double empirical_violation(const ScenarioSolution& solution, const ScenarioProblem& problem, const ScenarioSet& fresh) {
  return violation_rate(solution, problem, fresh, true);
}

double empirical_violation_serial(const ScenarioSolution& solution, const ScenarioProblem& problem,
                                  const ScenarioSet& fresh) {
  return violation_rate(solution, problem, fresh, false);
}

ScenarioCertificate run_pipeline(const ScenarioProblem& problem, std::size_t count, std::uint64_t seed, double beta,
                                 Distribution distribution, const SolverConfig& config) {
  const ScenarioSet set = sample_disturbances(count, problem.system.horizon(), problem.system.state_dim(), seed,
                                              distribution);
  ScenarioCertificate cert;
  cert.solution = solve_scenario(problem, set, config);
  cert.support = support_count(cert.solution, problem, set, config);
  cert.beta = beta;
  cert.bound = risk_bound(cert.support, count, beta);
  cert.count = count;
  cert.seed = seed;
  return cert;
}

namespace {

double required(const Parameters& p, const std::string& model, const std::string& key) {
  auto it = p.find(key);
  if (it == p.end()) throw InputError("scenario", "model '" + model + "' needs parameter '" + key + "'");
  if (!std::isfinite(it->second)) throw InputError("scenario", "parameter '" + key + "' must be finite");
  return it->second;
}

double optional_param(const Parameters& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

void reject_unknown(const Parameters& p, const std::string& model, std::initializer_list<const char*> known) {
  for (const auto& [key, value] : p) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw InputError("scenario", "model '" + model + "' has no parameter '" + key + "'");
  }
}

}  // namespace

NonlinearSystem make_model(const std::string& name, const Parameters& parameters, std::size_t horizon) {
  if (name == "acc") {
    reject_unknown(parameters, name, {"mass", "f0", "f1", "f2", "tau", "v0"});
    const double mass = optional_param(parameters, "mass", 1370.0);
    const double f0 = optional_param(parameters, "f0", 51.0709);
    const double f1 = optional_param(parameters, "f1", 0.3494);
    const double f2 = optional_param(parameters, "f2", 0.4161);
    const double tau = required(parameters, name, "tau");
    const double v0 = required(parameters, name, "v0");
    if (!(mass > 0.0) || !(tau > 0.0)) throw InputError("scenario", "acc mass and tau must be positive");
    return NonlinearSystem(
        2, 1, horizon,
        [=](std::size_t, const Vector& x, const Vector& u) -> Vector {
          Vector next(2);
          next(0) = x(0) + tau * (v0 - x(1));
          next(1) = x(1) + tau / mass * (u(0) - f0 - f1 * x(1) - f2 * x(1) * x(1));
          return next;
        },
        "acc");
  }
  if (name == "collision") {
    reject_unknown(parameters, name, {"mass", "f1", "f2", "tau", "v_lead"});
    const double mass = optional_param(parameters, "mass", 1370.0);
    const double f1 = optional_param(parameters, "f1", 0.3494);
    const double f2 = optional_param(parameters, "f2", 0.4161);
    const double tau = required(parameters, name, "tau");
    const double v_lead = required(parameters, name, "v_lead");
    if (!(mass > 0.0) || !(tau > 0.0)) throw InputError("scenario", "collision mass and tau must be positive");
    return NonlinearSystem(
        3, 1, horizon,
        [=](std::size_t, const Vector& x, const Vector& u) -> Vector {
          Vector next(3);
          next(0) = x(0) - tau * v_lead;
          next(1) = x(1) + tau * x(2);
          next(2) = x(2) + tau / mass * (u(0) - f1 * x(2) - f2 * x(2) * x(2));
          return next;
        },
        "collision");
  }
  throw InputError("scenario", "unknown model '" + name + "'");
}

std::vector<std::string> model_names() { return {"acc", "collision"}; }

}  // namespace resil::scenario
