#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "problem.hpp"
#include "resil/error.hpp"
#include "resil/exact.hpp"
#include "resil/farkas.hpp"
#include "resil/scenario.hpp"

#ifdef RESIL_HAVE_OPENMP
#include <omp.h>
#endif

namespace resil::cli {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number_json(v(i)));
  return out;
}

json matrix_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vector_json(m.row(i).transpose()));
  return out;
}

double number_from(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw InputError("cli", "record: expected a number, got " + j.dump());
}

Vector vector_from(const json& j) {
  if (!j.is_array()) throw InputError("cli", "record: expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number_from(j[i]);
  return v;
}

Matrix matrix_from(const json& j) {
  if (!j.is_array() || j.empty()) throw InputError("cli", "record: expected a non-empty matrix");
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Vector row = vector_from(j[i]);
    if (row.size() != m.cols()) throw InputError("cli", "record: ragged matrix");
    m.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return m;
}

json certificate_json(const farkas::Certificate& c) {
  json out = {{"satisfied", c.satisfied},
              {"worst_margin", number_json(c.worst_margin)},
              {"method", c.method},
              {"checked", c.checked}};
  if (!c.satisfied) {
    json w = json::array();
    for (const auto& d : c.witness.steps) w.push_back(vector_json(d));
    out["witness"] = w;
  }
  return out;
}

json metric_json(const exact::MetricResult& r, const std::string& metric, const std::string& companion) {
  json out = {{"metric", metric},
              {"value", number_json(r.value)},
              {"status", exact::to_string(r.status)},
              {companion, number_json(r.companion)},
              {"search_incomplete", r.search_incomplete},
              {"evaluations", r.evaluations}};
  out["controller"] = r.controller ? controller_json(*r.controller) : json(nullptr);
  out["certificate"] = r.certificate ? certificate_json(*r.certificate) : json(nullptr);
  return out;
}

std::string params_text(const std::optional<Controller>& c) {
  if (!c) return "";
  std::string s;
  auto add = [&](double v) {
    if (!s.empty()) s += ' ';
    s += format_number(v);
  };
  std::visit(
      [&](const auto& ctrl) {
        using T = std::decay_t<decltype(ctrl)>;
        if constexpr (std::is_same_v<T, LinearFeedback>) {
          for (Eigen::Index i = 0; i < ctrl.gain.rows(); ++i)
            for (Eigen::Index j = 0; j < ctrl.gain.cols(); ++j) add(ctrl.gain(i, j));
          for (Eigen::Index i = 0; i < ctrl.offset.size(); ++i) add(ctrl.offset(i));
        } else if constexpr (std::is_same_v<T, PolynomialFeedback>) {
          for (Eigen::Index i = 0; i < ctrl.coefficients.rows(); ++i)
            for (Eigen::Index j = 0; j < ctrl.coefficients.cols(); ++j) add(ctrl.coefficients(i, j));
        } else {
          for (const auto& u : ctrl.inputs)
            for (Eigen::Index i = 0; i < u.size(); ++i) add(u(i));
        }
      },
      *c);
  return s;
}

std::string csv_cell(const json& v) {
  if (v.is_number_float()) return format_number(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "";
  return v.dump();
}

/// field,value rows for the scalar entries of a record's result.
std::string scalar_csv(const json& result, const std::string& prefix = "") {
  std::string out = prefix.empty() ? "field,value\n" : "";
  for (const auto& [k, v] : result.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      out += scalar_csv(v, key);
    } else if (!v.is_array()) {
      out += key + "," + csv_cell(v) + "\n";
    }
  }
  return out;
}

struct Options {
  std::string problem;
  std::string out;
  std::string format;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  bool timing = false;

  std::optional<double> eps0;
  std::optional<double> mu0;
  bool at_resilience = false;
  std::optional<double> mu;
  std::optional<double> eps;
  std::string record;
  std::size_t samples = 0;

  std::size_t k = 0;
  std::size_t count = 0;
  double beta = 1e-2;
};

struct Outcome {
  json record;
  int code = 0;
  std::string csv;
  std::string text;
  std::string summary;
};

Problem load(const Options& o) {
  if (o.problem.empty()) throw InputError("cli", "--problem is required");
  Problem p = load_problem(o.problem);
  if (o.seed) {
    p.search.seed = *o.seed;
    p.scenario.seed = *o.seed;
    p.echo["search"]["seed"] = *o.seed;
    p.echo["scenario"]["seed"] = *o.seed;
  }
  if (o.eps0) {
    p.query.eps0 = *o.eps0;
    p.echo["query"]["eps0"] = number_json(*o.eps0);
  }
  if (o.mu0) {
    p.query.mu0 = *o.mu0;
    p.echo["query"]["mu0"] = number_json(*o.mu0);
  }
  return p;
}

json skeleton(const std::string& command, const Problem& p) {
  return {{"tool", "resil"}, {"version", kVersion}, {"command", command}, {"problem", p.echo}};
}

const LtvSystem& require_ltv(const Problem& p, const std::string& command) {
  if (!p.ltv)
    throw InputError("cli", command + " needs a linear (ltv) system; nonlinear models run through the scenario command");
  return *p.ltv;
}

exact::ExactOptions exact_options(const Problem& p) {
  exact::ExactOptions o;
  o.formulation = p.query.formulation;
  return o;
}

bool closed_loop(const Problem& p) {
  if (p.query.controller == "polynomial")
    throw InputError("cli", "query.controller: polynomial controllers run through the scenario command");
  return p.query.controller == "linear";
}

exact::MetricResult resilience_of(const Problem& p) {
  const auto& sys = require_ltv(p, "resilience");
  const double eps0 = p.query.eps0.value_or(kInf);
  if (closed_loop(p)) return exact::resilience_closed(sys, p.sets, p.x0, eps0, p.search, exact_options(p));
  return exact::resilience_open(sys, p.sets, p.x0, eps0, exact_options(p));
}

Outcome cmd_resilience(const Problem& p) {
  Outcome o;
  const auto r = resilience_of(p);
  o.record = skeleton("resilience", p);
  o.record["status"] = exact::to_string(r.status);
  o.record["result"] = metric_json(r, "resilience", "eps");
  o.record["result"]["eps0"] = number_json(p.query.eps0.value_or(kInf));
  o.code = r.status == exact::Status::nominal_infeasible ? 2 : 0;
  o.summary = "resilience " + format_number(r.value) + " (" + exact::to_string(r.status) + ")";
  return o;
}

Outcome cmd_effort(const Problem& p, bool at_resilience) {
  Outcome o;
  o.record = skeleton("effort", p);
  const auto& sys = require_ltv(p, "effort");
  exact::SearchConfig search = p.search;
  double mu0 = 0.0;
  if (at_resilience) {
    const auto g = resilience_of(p);
    o.record["resilience"] = metric_json(g, "resilience", "eps");
    if (g.status != exact::Status::feasible) {
      o.record["status"] = exact::to_string(g.status);
      o.record["result"] = nullptr;
      o.code = g.status == exact::Status::nominal_infeasible ? 2 : 1;
      o.summary = "effort: resilience is " + exact::to_string(g.status);
      if (o.code == 1) throw InputError("cli", "effort at an unbounded resilience is undefined");
      return o;
    }
    mu0 = g.value;
    if (g.controller && std::holds_alternative<LinearFeedback>(*g.controller))
      search.initial_gains.insert(search.initial_gains.begin(), std::get<LinearFeedback>(*g.controller).gain);
  } else {
    if (!p.query.mu0) throw InputError("cli", "query.mu0: missing field (or pass --mu0 / --at-resilience)");
    mu0 = *p.query.mu0;
  }
  try {
    const auto r = closed_loop(p) ? exact::effort_closed(sys, p.sets, p.x0, mu0, search, exact_options(p))
                                  : exact::effort_open(sys, p.sets, p.x0, mu0, exact_options(p));
    o.record["status"] = exact::to_string(r.status);
    o.record["result"] = metric_json(r, "effort", "mu0");
    o.code = r.status == exact::Status::nominal_infeasible ? 2 : 0;
    o.summary = "effort " + format_number(r.value) + " at mu0 " + format_number(mu0) + " (" +
                exact::to_string(r.status) + ")";
  } catch (const InfeasibleAtMu0Error& e) {
    o.record["status"] = "infeasible_at_mu0";
    o.record["result"] = {{"metric", "effort"}, {"mu0", number_json(mu0)}, {"message", e.what()}};
    o.code = 2;
    o.summary = "effort: infeasible at mu0 " + format_number(mu0);
  }
  return o;
}

Outcome cmd_pareto(const Problem& p) {
  Outcome o;
  const auto& sys = require_ltv(p, "pareto");
  if (p.query.weights.empty()) throw InputError("cli", "query.weights: at least one [w1, w2] pair is required");
  const auto mode = closed_loop(p) ? exact::Mode::closed : exact::Mode::open;
  const auto points = exact::pareto_sweep(sys, p.sets, p.x0, p.query.weights, mode, p.search, exact_options(p));

  std::vector<std::size_t> order(points.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto key = [&](std::size_t i) {
    return points[i].status == exact::Status::feasible ? points[i].eps : kInf;
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });

  json list = json::array();
  std::string csv = "w1,w2,mu,eps,objective,status,controller\n";
  bool any = false;
  for (std::size_t i : order) {
    const auto& pt = points[i];
    any = any || pt.status != exact::Status::nominal_infeasible;
    list.push_back({{"w1", number_json(pt.w1)},
                    {"w2", number_json(pt.w2)},
                    {"mu", number_json(pt.mu)},
                    {"eps", number_json(pt.eps)},
                    {"objective", number_json(pt.objective)},
                    {"status", exact::to_string(pt.status)},
                    {"controller", pt.controller ? controller_json(*pt.controller) : json(nullptr)}});
    csv += format_number(pt.w1) + "," + format_number(pt.w2) + "," + format_number(pt.mu) + "," +
           format_number(pt.eps) + "," + format_number(pt.objective) + "," + exact::to_string(pt.status) + "," +
           params_text(pt.controller) + "\n";
  }
  o.record = skeleton("pareto", p);
  o.record["status"] = any ? "feasible" : "nominal_infeasible";
  o.record["result"] = {{"metric", "pareto"}, {"points", list}};
  o.csv = csv;
  o.code = any ? 0 : 2;
  o.summary = "pareto " + std::to_string(points.size()) + " points";
  return o;
}

scenario::ScenarioProblem scenario_problem(const Problem& p) {
  scenario::ScenarioProblem sp{*p.system, p.sets, p.x0, {}, {}, p.scenario.input_lower, p.scenario.input_upper};
  if (p.query.controller == "open") {
    sp.controller.kind = scenario::ControllerTemplate::Kind::open_loop;
  } else if (p.query.controller == "linear") {
    sp.controller.kind = scenario::ControllerTemplate::Kind::linear;
  } else {
    sp.controller.kind = scenario::ControllerTemplate::Kind::polynomial;
    sp.controller.degree = p.query.degree;
  }
  if (p.query.objective == "resilience") {
    sp.objective.eps0 = p.query.eps0.value_or(kInf);
  } else if (p.query.objective == "effort") {
    if (!p.query.mu0) throw InputError("cli", "query.mu0: required by the effort objective");
    sp.objective.w1 = 0.0;
    sp.objective.w2 = 1.0;
    sp.objective.mu0 = *p.query.mu0;
  } else {
    if (p.query.weights.empty()) throw InputError("cli", "query.weights: required by the pareto objective");
    sp.objective.w1 = p.query.weights.front().w1;
    sp.objective.w2 = p.query.weights.front().w2;
  }
  return sp;
}

Outcome cmd_scenario(const Problem& p) {
  Outcome o;
  o.record = skeleton("scenario", p);
  const auto sp = scenario_problem(p);
  auto config = p.scenario.solver;
  config.seed = p.scenario.seed;
  const auto& blk = p.scenario;
  try {
    const auto cert = scenario::run_pipeline(sp, blk.count, blk.seed, blk.beta, blk.distribution, config);
    const auto& s = cert.solution;
    json result = {{"metric", "scenario"},
                   {"objective_kind", p.query.objective},
                   {"template", sp.controller.name()},
                   {"mu", number_json(s.mu)},
                   {"eps", number_json(s.eps)},
                   {"objective", number_json(s.objective)},
                   {"params", vector_json(s.params)},
                   {"controller", controller_json(s.controller)},
                   {"mu_capped", s.mu_capped},
                   {"rho", number_json(s.rho)},
                   {"worst_margin", number_json(s.worst_margin)},
                   {"evaluations", s.evaluations},
                   {"M", cert.count},
                   {"seed", cert.seed},
                   {"distribution", scenario::to_string(blk.distribution)},
                   {"support", cert.support},
                   {"beta", number_json(cert.beta)},
                   {"bound", number_json(cert.bound)}};
    if (blk.fresh > 0) {
      const auto fresh = scenario::sample_disturbances(blk.fresh, p.horizon, p.x0.size(), blk.fresh_seed,
                                                       blk.distribution);
      result["fresh"] = blk.fresh;
      result["fresh_seed"] = blk.fresh_seed;
      result["empirical_violation"] = number_json(scenario::empirical_violation(s, sp, fresh));
    }
    o.record["status"] = "feasible";
    o.record["result"] = result;
    o.summary = "scenario mu " + format_number(s.mu) + " eps " + format_number(s.eps) + " support " +
                std::to_string(cert.support) + " bound " + format_number(cert.bound);
  } catch (const NoFeasiblePointError& e) {
    o.record["status"] = "no_feasible_point";
    o.record["result"] = {{"metric", "scenario"}, {"message", e.what()}};
    o.code = 2;
    o.summary = "scenario: no feasible point";
  }
  return o;
}

Outcome cmd_risk_bound(const Options& opt) {
  Outcome o;
  const double b = scenario::risk_bound(opt.k, opt.count, opt.beta);
  o.record = {{"tool", "resil"},
              {"version", kVersion},
              {"command", "risk-bound"},
              {"status", "ok"},
              {"result", {{"k", opt.k}, {"M", opt.count}, {"beta", number_json(opt.beta)}, {"bound", number_json(b)}}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f\n", b);
  o.text = buf;
  o.summary = "bound " + format_number(b);
  return o;
}

struct Chosen {
  Controller controller;
  std::optional<double> mu;
  json source;
};

/// Controller from a previous record, or synthesized from the problem's query.
Chosen choose_controller(const Problem& p, const Options& opt) {
  Chosen c;
  if (!opt.record.empty()) {
    std::ifstream in(opt.record, std::ios::binary);
    if (!in) throw InputError("cli", "cannot read record '" + opt.record + "'");
    json r;
    try {
      r = json::parse(in);
    } catch (const json::parse_error& e) {
      throw InputError("cli", opt.record + ": " + e.what());
    }
    const auto& res = r.value("result", json());
    if (!res.is_object() || !res.contains("controller") || res["controller"].is_null())
      throw InputError("cli", opt.record + ": record carries no controller");
    c.controller = controller_from_json(res["controller"]);
    if (res.contains("mu")) c.mu = number_from(res["mu"]);
    if (res.value("metric", "") == "resilience") c.mu = number_from(res["value"]);
    c.source = {{"record", opt.record}};
    return c;
  }
  if (p.ltv) {
    const auto r = resilience_of(p);
    if (!r.controller) throw InfeasibleAtMu0Error("cli", "the resilience query found no controller to use");
    c.controller = *r.controller;
    c.mu = r.value;
    c.source = {{"synthesized", "resilience"}};
    return c;
  }
  auto config = p.scenario.solver;
  config.seed = p.scenario.seed;
  const auto sp = scenario_problem(p);
  const auto set = scenario::sample_disturbances(p.scenario.count, p.horizon, p.x0.size(), p.scenario.seed,
                                                 p.scenario.distribution);
  const auto s = scenario::solve_scenario(sp, set, config);
  c.controller = s.controller;
  c.mu = s.mu;
  c.source = {{"synthesized", "scenario"}};
  return c;
}

Outcome cmd_rollout(const Problem& p, const Options& opt) {
  Outcome o;
  const auto chosen = choose_controller(p, opt);
  double mu = opt.mu.value_or(chosen.mu.value_or(0.0));
  if (!std::isfinite(mu)) mu = 0.0;
  const auto n = p.x0.size();
  const auto m = p.system->input_dim();
  check_controller(chosen.controller, n, m, p.horizon);

  std::vector<DisturbanceSequence> runs{DisturbanceSequence::zeros(n, p.horizon)};
  if (opt.samples > 0) {
    auto set = scenario::sample_disturbances(opt.samples, p.horizon, n, p.scenario.seed, p.scenario.distribution);
    for (auto& d : set.samples) {
      for (auto& s : d.steps) s *= mu;
      runs.push_back(std::move(d));
    }
  }
  json trajectories = json::array();
  std::string csv = "sample,k";
  for (Eigen::Index i = 0; i < n; ++i) csv += ",x" + std::to_string(i);
  for (Eigen::Index i = 0; i < m; ++i) csv += ",u" + std::to_string(i);
  csv += ",margin\n";
  for (std::size_t r = 0; r < runs.size(); ++r) {
    Trajectory t;
    double margin = -kInf;
    std::optional<std::size_t> overflow;
    try {
      t = rollout(*p.system, chosen.controller, p.x0, runs[r]);
      margin = spec::margin(t, p.sets);
    } catch (const OverflowError& e) {
      overflow = e.step();
    }
    json states = json::array();
    json inputs = json::array();
    for (const auto& x : t.states) states.push_back(vector_json(x));
    for (const auto& u : t.inputs) inputs.push_back(vector_json(u));
    json entry = {{"sample", r}, {"states", states}, {"inputs", inputs}, {"margin", number_json(margin)}};
    if (overflow) entry["overflow_step"] = *overflow;
    trajectories.push_back(entry);
    for (std::size_t k = 0; k < t.states.size(); ++k) {
      csv += std::to_string(r) + "," + std::to_string(k);
      for (Eigen::Index i = 0; i < n; ++i) csv += "," + format_number(t.states[k](i));
      for (Eigen::Index i = 0; i < m; ++i) csv += "," + (k < t.inputs.size() ? format_number(t.inputs[k](i)) : "");
      csv += "," + format_number(margin) + "\n";
    }
  }
  o.record = skeleton("rollout", p);
  o.record["status"] = "ok";
  o.record["result"] = {{"mu", number_json(mu)},
                        {"samples", opt.samples},
                        {"seed", p.scenario.seed},
                        {"controller", controller_json(chosen.controller)},
                        {"controller_source", chosen.source},
                        {"trajectories", trajectories}};
  o.csv = csv;
  o.summary = "rollout " + std::to_string(runs.size()) + " trajectories at mu " + format_number(mu);
  return o;
}

Outcome cmd_certify(const Problem& p, const Options& opt) {
  Outcome o;
  const auto& sys = require_ltv(p, "certify");
  if (!opt.mu) throw InputError("cli", "--mu is required");
  if (!(*opt.mu >= 0.0)) throw InputError("cli", "--mu must be non-negative");
  const auto chosen = choose_controller(p, opt);
  std::optional<double> eps = opt.eps;
  if (!eps && p.query.eps0 && std::isfinite(*p.query.eps0)) eps = *p.query.eps0;
  const auto cert = farkas::certify(sys, chosen.controller, p.x0, *opt.mu, p.sets, eps);
  o.record = skeleton("certify", p);
  o.record["status"] = cert.satisfied ? "satisfied" : "violated";
  o.record["result"] = {{"mu", number_json(*opt.mu)},
                        {"eps", eps ? number_json(*eps) : json(nullptr)},
                        {"controller", controller_json(chosen.controller)},
                        {"controller_source", chosen.source},
                        {"certificate", certificate_json(cert)}};
  o.code = cert.satisfied ? 0 : 2;
  o.summary = std::string("certify at mu ") + format_number(*opt.mu) + ": " +
              (cert.satisfied ? "satisfied" : "violated") + " (worst margin " + format_number(cert.worst_margin) + ")";
  return o;
}

void apply_thread_env() {
#ifdef RESIL_HAVE_OPENMP
  if (const char* env = std::getenv("RESIL_THREADS")) {
    int n = 0;
    const std::string s(env);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
    if (ec != std::errc() || ptr != s.data() + s.size() || n < 1)
      throw InputError("cli", "RESIL_THREADS must be a positive integer");
    omp_set_num_threads(n);
  }
#endif
}

void emit(Outcome& o, const Options& opt, bool plain_default, std::ostream& out) {
  std::string text;
  if (opt.format == "csv") {
    text = o.csv.empty() ? scalar_csv(o.record.value("result", json::object())) : o.csv;
  } else if (opt.format.empty() && plain_default && opt.out.empty()) {
    text = o.text;
  } else {
    text = o.record.dump(2) + "\n";
  }
  if (!opt.out.empty()) {
    write_atomic(opt.out, text);
    if (!opt.quiet) out << o.summary << " -> " << opt.out << "\n";
  } else if (!opt.quiet) {
    out << text;
  }
}

}  // namespace

json controller_json(const Controller& controller) {
  return std::visit(
      [](const auto& c) -> json {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, LinearFeedback>) {
          return {{"kind", "linear"}, {"gain", matrix_json(c.gain)}, {"offset", vector_json(c.offset)}};
        } else if constexpr (std::is_same_v<T, PolynomialFeedback>) {
          return {{"kind", "polynomial"}, {"degree", c.degree}, {"coefficients", matrix_json(c.coefficients)}};
        } else {
          json inputs = json::array();
          for (const auto& u : c.inputs) inputs.push_back(vector_json(u));
          return {{"kind", "open"}, {"inputs", inputs}};
        }
      },
      controller);
}

Controller controller_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw InputError("cli", "record: controller needs a kind");
  const auto kind = j["kind"].get<std::string>();
  if (kind == "linear") {
    LinearFeedback c;
    c.gain = matrix_from(j.at("gain"));
    c.offset = vector_from(j.at("offset"));
    return c;
  }
  if (kind == "polynomial") {
    PolynomialFeedback c;
    c.degree = j.at("degree").get<int>();
    c.coefficients = matrix_from(j.at("coefficients"));
    return c;
  }
  if (kind == "open") {
    OpenLoopSequence c;
    for (const auto& u : j.at("inputs")) c.inputs.push_back(vector_from(u));
    return c;
  }
  throw InputError("cli", "record: unknown controller kind '" + kind + "'");
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cli", "cannot write '" + tmp.string() + "'");
    f << content;
    f.flush();
    if (!f) throw InputError("cli", "write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw InputError("cli", "cannot rename onto '" + path + "': " + ec.message());
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options opt;
  CLI::App app{"Resilience and effort metrics for controlled systems", "resil"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);
  app.add_option("--problem", opt.problem, "Problem file (TOML) or a previous JSON record");
  app.add_option("--out", opt.out, "Write the result here (atomically) instead of stdout");
  app.add_option("--format", opt.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
  app.add_option("--seed", opt.seed, "Override the search and scenario seeds");
  app.add_flag("--quiet", opt.quiet, "Print nothing on success");
  app.add_flag("--timing", opt.timing, "Add wall-clock time to the record");

  auto* res = app.add_subcommand("resilience", "Maximal tolerable disturbance bound");
  res->add_option("--eps0", opt.eps0, "Input bound (default: the query's, else unbounded)");
  auto* eff = app.add_subcommand("effort", "Minimal input bound at a disturbance level");
  eff->add_option("--mu0", opt.mu0, "Disturbance bound");
  eff->add_flag("--at-resilience", opt.at_resilience, "Use the resilience value as the disturbance bound");
  eff->add_option("--eps0", opt.eps0, "Input bound for the resilience step");
  auto* par = app.add_subcommand("pareto", "Trade-off frontier over the query's weight grid");
  auto* sce = app.add_subcommand("scenario", "Sampled synthesis with a risk certificate");
  auto* rb = app.add_subcommand("risk-bound", "Violation bound for a support count");
  rb->add_option("--k", opt.k, "Support constraint count")->required();
  rb->add_option("--M", opt.count, "Scenario count")->required();
  rb->add_option("--beta", opt.beta, "Confidence parameter");
  auto* ro = app.add_subcommand("rollout", "Nominal and sampled trajectories for plotting");
  ro->add_option("--record", opt.record, "Take the controller from this result record");
  ro->add_option("--mu", opt.mu, "Disturbance bound for the sampled runs");
  ro->add_option("--samples", opt.samples, "Number of sampled disturbance sequences");
  auto* ce = app.add_subcommand("certify", "Vertex check of a controller at a disturbance bound");
  ce->add_option("--record", opt.record, "Take the controller from this result record");
  ce->add_option("--mu", opt.mu, "Disturbance bound")->required();
  ce->add_option("--eps", opt.eps, "Input bound to check as well");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    apply_thread_env();
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    bool plain = false;
    if (app.got_subcommand(rb)) {
      o = cmd_risk_bound(opt);
      plain = true;
    } else {
      const Problem p = load(opt);
      if (app.got_subcommand(res)) {
        o = cmd_resilience(p);
      } else if (app.got_subcommand(eff)) {
        o = cmd_effort(p, opt.at_resilience);
      } else if (app.got_subcommand(par)) {
        o = cmd_pareto(p);
      } else if (app.got_subcommand(sce)) {
        o = cmd_scenario(p);
      } else if (app.got_subcommand(ro)) {
        o = cmd_rollout(p, opt);
      } else {
        o = cmd_certify(p, opt);
      }
    }
    if (opt.timing)
      o.record["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    emit(o, opt, plain, out);
    return o.code;
  } catch (const Error& e) {
    err << "error [" << e.module() << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace resil::cli
