#include "resil/exact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "resil/error.hpp"
#include "resil/lp.hpp"
#include "resil/optim.hpp"

namespace resil::exact {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class EpsMode { none, fixed, free };

// Variables: 0 = mu, 1 = eps, 2.. = decision (alpha2 or v), then the phase-1
// relaxation t when requested, then the multiplier block.
struct RobustProgram {
  std::optional<double> mu_fixed;
  EpsMode eps_mode = EpsMode::none;
  double eps_value = 0.0;
  std::optional<double> eps_cap;
  double c_mu = 0.0;
  double c_eps = 0.0;
  bool phase1 = false;
};

constexpr Eigen::Index kMu = 0;
constexpr Eigen::Index kEps = 1;
constexpr Eigen::Index kDecision = 2;

lp::Solution solve_robust(const farkas::FarkasBlocks& blocks, const RobustProgram& spec,
                          farkas::Formulation formulation) {
  const Eigen::Index dd = blocks.decision_dim();
  Eigen::Index nv = kDecision + dd;
  const Eigen::Index slack = spec.phase1 ? nv++ : -1;
  const Eigen::Index mult = formulation == farkas::Formulation::multiplier ? nv : -1;
  if (mult >= 0) nv += farkas::multiplier_variable_count(blocks);

  lp::LinearProgram program(nv, lp::Sense::maximize);
  for (Eigen::Index j = kDecision; j < kDecision + dd; ++j) program.set_bounds(j, -lp::kInf, lp::kInf);
  if (spec.mu_fixed) {
    program.set_bounds(kMu, *spec.mu_fixed, *spec.mu_fixed);
  } else {
    program.set_bounds(kMu, 0.0, lp::kInf);
  }
  switch (spec.eps_mode) {
    case EpsMode::none:
      program.set_bounds(kEps, 0.0, 0.0);
      break;
    case EpsMode::fixed:
      program.set_bounds(kEps, spec.eps_value, spec.eps_value);
      break;
    case EpsMode::free:
      program.set_bounds(kEps, 0.0, spec.eps_cap ? *spec.eps_cap : lp::kInf);
      break;
  }
  if (spec.phase1) {
    program.set_bounds(slack, 0.0, lp::kInf);
    program.set_objective_coefficient(slack, -1.0);
  } else {
    program.set_objective_coefficient(kMu, spec.c_mu);
    program.set_objective_coefficient(kEps, spec.c_eps);
  }

  farkas::RobustLayout layout;
  layout.mu_var = kMu;
  layout.eps_var = kEps;
  layout.decision_offset = kDecision;
  layout.multiplier_offset = mult;
  layout.slack_var = slack;
  farkas::append_robust_rows(program, blocks, layout, formulation);

  // Open loop: |v_i| <= eps componentwise.
  if (!blocks.closed_loop && spec.eps_mode != EpsMode::none) {
    for (Eigen::Index j = 0; j < dd; ++j) {
      for (double sign : {1.0, -1.0}) {
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(nv);
        row(kDecision + j) = sign;
        row(kEps) = -1.0;
        program.add_inequality(row, 0.0);
      }
    }
  }
  return lp::solve(program);
}

OpenLoopSequence sequence_from(const Vector& x, const farkas::FarkasBlocks& blocks) {
  OpenLoopSequence seq;
  const Eigen::Index m = blocks.input_dim;
  for (std::size_t k = 0; k < blocks.horizon; ++k)
    seq.inputs.push_back(x.segment(kDecision + m * static_cast<Eigen::Index>(k), m));
  return seq;
}

std::optional<double> finite_or_none(double eps) {
  if (std::isinf(eps)) return std::nullopt;
  return eps;
}

void check_bound(double value, const char* what) {
  if (std::isnan(value) || value < 0.0) throw InputError("exact", std::string(what) + " must be non-negative");
}

void attach_certificate(MetricResult& r, const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0,
                        double mu, std::optional<double> eps, const ExactOptions& options) {
  if (!options.certify || !r.controller) return;
  r.certificate = farkas::certify(system, *r.controller, x0, mu, sets, eps, options.certify_options);
}

double max_abs_input(const OpenLoopSequence& seq) {
  double v = 0.0;
  for (const auto& u : seq.inputs) v = std::max(v, u.cwiseAbs().maxCoeff());
  return v;
}

Matrix gain_from(const Vector& x, Eigen::Index m, Eigen::Index n) {
  Matrix g(m, n);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = x(i * n + j);
  return g;
}

Vector flatten(const Matrix& g) {
  Vector x(g.size());
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) x(i * g.cols() + j) = g(i, j);
  return x;
}

}  // namespace

std::string to_string(Status status) {
  switch (status) {
    case Status::feasible:
      return "feasible";
    case Status::nominal_infeasible:
      return "nominal_infeasible";
    case Status::unbounded:
      return "unbounded";
  }
  return "unknown";
}

MetricResult resilience_open(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0, double eps0,
                             const ExactOptions& options) {
  check_bound(eps0, "input bound");
  const auto blocks = farkas::open_loop_blocks(system, sets, x0);
  RobustProgram p;
  p.eps_mode = std::isinf(eps0) ? EpsMode::none : EpsMode::fixed;
  p.eps_value = eps0;
  p.c_mu = 1.0;
  const auto sol = solve_robust(blocks, p, options.formulation);

  MetricResult r;
  if (sol.status == lp::Status::infeasible) return r;
  if (sol.status == lp::Status::unbounded) {
    r.status = Status::unbounded;
    r.value = kInf;
    r.companion = eps0;
    return r;
  }
  auto seq = sequence_from(sol.x, blocks);
  r.status = Status::feasible;
  r.value = sol.x(kMu);
  r.companion = std::isinf(eps0) ? max_abs_input(seq) : eps0;
  r.controller = std::move(seq);
  attach_certificate(r, system, sets, x0, r.value, finite_or_none(eps0), options);
  return r;
}

MetricResult effort_open(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0, double mu0,
                         const ExactOptions& options) {
  check_bound(mu0, "disturbance bound");
  if (std::isinf(mu0)) throw InputError("exact", "disturbance bound must be finite");
  const auto blocks = farkas::open_loop_blocks(system, sets, x0);
  RobustProgram p;
  p.mu_fixed = mu0;
  p.eps_mode = EpsMode::free;
  p.c_eps = -1.0;
  const auto sol = solve_robust(blocks, p, options.formulation);

  MetricResult r;
  r.companion = mu0;
  if (sol.status != lp::Status::optimal) {
    if (mu0 > 0.0) {
      p.mu_fixed = 0.0;
      if (solve_robust(blocks, p, options.formulation).status == lp::Status::optimal)
        throw InfeasibleAtMu0Error("exact", "no input sequence tolerates disturbances of size " + std::to_string(mu0));
    }
    return r;
  }
  r.status = Status::feasible;
  r.value = sol.x(kEps);
  r.controller = sequence_from(sol.x, blocks);
  attach_certificate(r, system, sets, x0, mu0, r.value, options);
  return r;
}

ParetoPoint pareto_open(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0, double w1, double w2,
                        const ParetoBounds& bounds, const ExactOptions& options) {
  check_bound(w1, "weight w1");
  check_bound(w2, "weight w2");
  const auto blocks = farkas::open_loop_blocks(system, sets, x0);
  RobustProgram p;
  p.mu_fixed = bounds.mu_fixed;
  if (bounds.eps_fixed && std::isinf(*bounds.eps_fixed)) {
    p.eps_mode = EpsMode::none;
  } else if (bounds.eps_fixed) {
    p.eps_mode = EpsMode::fixed;
    p.eps_value = *bounds.eps_fixed;
  } else {
    p.eps_mode = EpsMode::free;
    p.eps_cap = bounds.eps_cap;
  }
  p.c_mu = w1;
  p.c_eps = -w2;
  const auto sol = solve_robust(blocks, p, options.formulation);

  ParetoPoint pt;
  pt.w1 = w1;
  pt.w2 = w2;
  if (sol.status == lp::Status::infeasible) return pt;
  if (sol.status == lp::Status::unbounded) {
    pt.status = Status::unbounded;
    pt.objective = kInf;
    pt.mu = kInf;
    pt.eps = kInf;
    return pt;
  }
  pt.status = Status::feasible;
  pt.mu = sol.x(kMu);
  pt.eps = p.eps_mode == EpsMode::none ? max_abs_input(sequence_from(sol.x, blocks)) : sol.x(kEps);
  pt.objective = sol.objective;
  pt.controller = sequence_from(sol.x, blocks);
  return pt;
}

bool open_loop_feasible(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0, double mu, double eps,
                        const ExactOptions& options) {
  check_bound(mu, "disturbance bound");
  check_bound(eps, "input bound");
  const auto blocks = farkas::open_loop_blocks(system, sets, x0);
  RobustProgram p;
  p.mu_fixed = mu;
  p.eps_mode = std::isinf(eps) ? EpsMode::none : EpsMode::fixed;
  p.eps_value = eps;
  return solve_robust(blocks, p, options.formulation).status == lp::Status::optimal;
}

InnerSolution solve_inner(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0,
                          const Matrix& alpha1, const InnerQuery& query, const ExactOptions& options) {
  RobustProgram p;
  std::optional<double> relax_mu;
  switch (query.goal) {
    case Goal::resilience:
      p.eps_mode = std::isinf(query.eps0) ? EpsMode::none : EpsMode::fixed;
      p.eps_value = query.eps0;
      p.c_mu = 1.0;
      relax_mu = 0.0;
      break;
    case Goal::effort:
      p.mu_fixed = query.mu0;
      p.eps_mode = EpsMode::free;
      p.c_eps = -1.0;
      relax_mu = query.mu0;
      break;
    case Goal::pareto:
      p.mu_fixed = query.bounds.mu_fixed;
      if (query.bounds.eps_fixed && std::isinf(*query.bounds.eps_fixed)) {
        p.eps_mode = EpsMode::none;
      } else if (query.bounds.eps_fixed) {
        p.eps_mode = EpsMode::fixed;
        p.eps_value = *query.bounds.eps_fixed;
      } else {
        p.eps_mode = EpsMode::free;
        p.eps_cap = query.bounds.eps_cap;
      }
      p.c_mu = query.w1;
      p.c_eps = -query.w2;
      relax_mu = query.bounds.mu_fixed ? *query.bounds.mu_fixed : 0.0;
      break;
  }

  InnerSolution out;
  out.alpha2 = Vector::Zero(system.input_dim());
  out.violation = kInf;
  if (!alpha1.allFinite()) return out;
  const auto blocks = farkas::closed_loop_blocks(system, sets, x0, alpha1, p.eps_mode != EpsMode::none);
  // Gains this explosive are useless and only feed round-off into the simplex.
  if (!blocks.e.allFinite() || !blocks.f_const.allFinite() || !blocks.f_decision.allFinite() ||
      (blocks.e.size() > 0 && blocks.e.cwiseAbs().maxCoeff() > 1e12) ||
      (blocks.f_decision.size() > 0 && blocks.f_decision.cwiseAbs().maxCoeff() > 1e12))
    return out;

  try {
    const auto sol = solve_robust(blocks, p, options.formulation);
    if (sol.status == lp::Status::unbounded) {
      out.feasible = true;
      out.unbounded = true;
      out.violation = 0.0;
      out.mu = kInf;
      return out;
    }
    if (sol.status == lp::Status::optimal) {
      out.feasible = true;
      out.violation = 0.0;
      out.mu = sol.x(kMu);
      out.eps = p.eps_mode == EpsMode::fixed ? query.eps0 : sol.x(kEps);
      if (query.goal == Goal::pareto && p.eps_mode == EpsMode::fixed) out.eps = p.eps_value;
      out.alpha2 = sol.x.segment(kDecision, system.input_dim());
      if (p.eps_mode == EpsMode::none) {
        // Input bound this controller actually needs at the optimum.
        const auto with_inputs = farkas::closed_loop_blocks(system, sets, x0, alpha1, true);
        const Vector need = out.mu * farkas::l1_row_norms(with_inputs) - with_inputs.f_const -
                            with_inputs.f_decision * out.alpha2;
        double eps = 0.0;
        for (Eigen::Index i = 0; i < with_inputs.rows(); ++i)
          if (with_inputs.f_eps(i) > 0.0) eps = std::max(eps, need(i));
        out.eps = eps;
      }
      return out;
    }
    RobustProgram relax = p;
    relax.mu_fixed = relax_mu;
    relax.phase1 = true;
    const auto r = solve_robust(blocks, relax, options.formulation);
    // Phase 2 failed, so keep this point strictly behind every feasible one
    // even when the relaxation reports a touching (zero) slack.
    if (r.status == lp::Status::optimal) out.violation = std::max(-r.objective, 1e-12);
  } catch (const NumericalError&) {
    out.feasible = false;
    out.violation = kInf;
  }
  return out;
}

bool closed_loop_feasible(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0,
                          const Matrix& alpha1, double mu, double eps, const ExactOptions& options) {
  check_bound(mu, "disturbance bound");
  check_bound(eps, "input bound");
  const auto blocks = farkas::closed_loop_blocks(system, sets, x0, alpha1, !std::isinf(eps));
  RobustProgram p;
  p.mu_fixed = mu;
  p.eps_mode = std::isinf(eps) ? EpsMode::none : EpsMode::fixed;
  p.eps_value = eps;
  return solve_robust(blocks, p, options.formulation).status == lp::Status::optimal;
}

namespace {

struct SearchOutcome {
  Matrix gain;
  InnerSolution inner;
  long evaluations = 0;
};

double inner_objective(const InnerSolution& s, const InnerQuery& q) {
  switch (q.goal) {
    case Goal::resilience:
      return s.mu;
    case Goal::effort:
      return -s.eps;
    case Goal::pareto:
      return s.unbounded ? kInf : q.w1 * s.mu - q.w2 * s.eps;
  }
  return 0.0;
}

SearchOutcome search(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0, const InnerQuery& query,
                     const SearchConfig& config, const ExactOptions& options) {
  if (!sets.polytopic)
    throw UnsupportedSpecError("exact", "closed-loop synthesis needs one halfspace polytope per step");
  const Eigen::Index m = system.input_dim();
  const Eigen::Index n = system.state_dim();
  const optim::MeritFunction merit = [&](const Vector& x) {
    const InnerSolution s = solve_inner(system, sets, x0, gain_from(x, m, n), query, options);
    if (!s.feasible) return optim::Merit{s.violation, 0.0};
    return optim::Merit{0.0, s.unbounded ? -kInf : -inner_objective(s, query)};
  };

  optim::MultiStartOptions ms;
  ms.restarts = config.restarts;
  ms.screen = config.screen;
  ms.scale = config.scale;
  ms.seed = config.seed;
  ms.local.max_iterations = config.max_iterations;
  ms.local.tolerance = config.tolerance;
  for (const auto& g : config.initial_gains) {
    if (g.rows() != m || g.cols() != n) throw InputError("exact", "initial gain has wrong shape");
    ms.initial_points.push_back(flatten(g));
  }
  const auto best = config.parallel ? optim::multi_start(merit, m * n, ms) : optim::multi_start_serial(merit, m * n, ms);

  SearchOutcome out;
  out.gain = gain_from(best.x, m, n);
  out.inner = solve_inner(system, sets, x0, out.gain, query, options);
  out.evaluations = best.evaluations;
  return out;
}

MetricResult closed_result(const SearchOutcome& found, const LtvSystem& system, const spec::TimedSets& sets,
                           const Vector& x0, double value, double companion, double certify_mu,
                           std::optional<double> certify_eps, const ExactOptions& options) {
  MetricResult r;
  r.evaluations = found.evaluations;
  r.controller = LinearFeedback{found.gain, found.inner.alpha2};
  if (found.inner.unbounded) {
    r.status = Status::unbounded;
    r.value = kInf;
    r.companion = companion;
    return r;
  }
  r.status = Status::feasible;
  r.value = value;
  r.companion = companion;
  attach_certificate(r, system, sets, x0, certify_mu, certify_eps, options);
  return r;
}

}  // namespace

MetricResult resilience_closed(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0, double eps0,
                               const SearchConfig& search_config, const ExactOptions& options) {
  check_bound(eps0, "input bound");
  InnerQuery q;
  q.goal = Goal::resilience;
  q.eps0 = eps0;
  const auto found = search(system, sets, x0, q, search_config, options);
  if (!found.inner.feasible) {
    MetricResult r;
    r.search_incomplete = true;
    r.evaluations = found.evaluations;
    return r;
  }
  return closed_result(found, system, sets, x0, found.inner.mu, found.inner.eps, found.inner.mu, finite_or_none(eps0),
                       options);
}

MetricResult effort_closed(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0, double mu0,
                           const SearchConfig& search_config, const ExactOptions& options) {
  check_bound(mu0, "disturbance bound");
  if (std::isinf(mu0)) throw InputError("exact", "disturbance bound must be finite");
  InnerQuery q;
  q.goal = Goal::effort;
  q.mu0 = mu0;
  const auto found = search(system, sets, x0, q, search_config, options);
  if (!found.inner.feasible) {
    if (mu0 > 0.0) {
      InnerQuery nominal = q;
      nominal.mu0 = 0.0;
      if (search(system, sets, x0, nominal, search_config, options).inner.feasible)
        throw InfeasibleAtMu0Error("exact", "no searched gain tolerates disturbances of size " + std::to_string(mu0));
    }
    MetricResult r;
    r.companion = mu0;
    r.search_incomplete = true;
    r.evaluations = found.evaluations;
    return r;
  }
  return closed_result(found, system, sets, x0, found.inner.eps, mu0, mu0, found.inner.eps, options);
}

ParetoPoint pareto_closed(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0, double w1,
                          double w2, const SearchConfig& search_config, const ParetoBounds& bounds,
                          const ExactOptions& options) {
  check_bound(w1, "weight w1");
  check_bound(w2, "weight w2");
  InnerQuery q;
  q.goal = Goal::pareto;
  q.w1 = w1;
  q.w2 = w2;
  q.bounds = bounds;
  const auto found = search(system, sets, x0, q, search_config, options);
  ParetoPoint pt;
  pt.w1 = w1;
  pt.w2 = w2;
  if (!found.inner.feasible) return pt;
  pt.controller = LinearFeedback{found.gain, found.inner.alpha2};
  if (found.inner.unbounded) {
    pt.status = Status::unbounded;
    pt.mu = pt.eps = pt.objective = kInf;
    return pt;
  }
  pt.status = Status::feasible;
  pt.mu = found.inner.mu;
  pt.eps = found.inner.eps;
  pt.objective = w1 * pt.mu - w2 * pt.eps;
  return pt;
}

std::vector<ParetoPoint> pareto_sweep(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0,
                                      const std::vector<Weights>& weights, Mode mode, const SearchConfig& search_config,
                                      const ExactOptions& options) {
  std::vector<ParetoPoint> out;
  SearchConfig config = search_config;
  for (const auto& w : weights) {
    ParetoPoint pt = mode == Mode::open ? pareto_open(system, sets, x0, w.w1, w.w2, {}, options)
                                        : pareto_closed(system, sets, x0, w.w1, w.w2, config, {}, options);
    if (mode == Mode::closed && pt.controller) {
      config.initial_gains = search_config.initial_gains;
      config.initial_gains.push_back(std::get<LinearFeedback>(*pt.controller).gain);
    }
    const bool duplicate = std::any_of(out.begin(), out.end(), [&](const ParetoPoint& q) {
      return q.status == pt.status && std::abs(q.mu - pt.mu) <= 1e-9 && std::abs(q.eps - pt.eps) <= 1e-9;
    });
    if (!duplicate) out.push_back(std::move(pt));
  }
  return out;
}

}  // namespace resil::exact
