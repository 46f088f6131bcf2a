// One PASS/FAIL line per acceptance criterion. With arguments, only the listed
// criteria run; the exit status is non-zero if any of them fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "problem.hpp"
#include "resil/error.hpp"
#include "resil/exact.hpp"
#include "resil/farkas.hpp"
#include "resil/scenario.hpp"
#include "spec_oracle.hpp"
#include "support.hpp"

using namespace resil;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

struct Verdict {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "MISS ") + what;
  }
};

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool within(double v, double target, double tol) { return std::abs(v - target) <= tol; }

std::string case_path(const std::string& name) { return std::string(RESIL_CASES_DIR) + "/" + name; }

Verdict risk_table() {
  Verdict v;
  struct Row {
    std::size_t k, m;
    double beta, expected;
  };
  const Row rows[] = {{4, 10, 1e-2, 0.851}, {4, 10, 1e-4, 0.936}, {4, 10, 1e-6, 0.971},
                      {8, 100, 1e-2, 0.202}, {8, 100, 1e-4, 0.259}, {8, 100, 1e-6, 0.307},
                      {9, 500, 1e-2, 0.046}, {9, 500, 1e-4, 0.059}, {9, 500, 1e-6, 0.072}};
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, std::abs(scenario::risk_bound(r.k, r.m, r.beta) - r.expected));
  const double t = seconds_since(t0);
  v.check(worst <= 1e-3, "max deviation " + num(worst, 2));
  v.check(t < 1.0, "runtime " + num(t, 2) + " s");
  return v;
}

Verdict generator() {
  Verdict v;
  const auto p = cli::load_problem(case_path("generator_open.toml"));
  const auto& sys = *p.ltv;
  auto t0 = std::chrono::steady_clock::now();
  const auto g = exact::resilience_open(sys, p.sets, p.x0, p.query.eps0.value_or(kInf));
  double t = seconds_since(t0);
  v.check(g.status == exact::Status::feasible && within(g.value, 0.0031, 5e-4),
          "resilience " + num(g.value) + " in " + num(t, 2) + " s");
  v.check(t < 60.0, "resilience under 60 s");
  v.check(g.certificate && g.certificate->satisfied, "certified by " + (g.certificate ? g.certificate->method : "none"));
  t0 = std::chrono::steady_clock::now();
  const auto hg = exact::effort_open(sys, p.sets, p.x0, g.value);
  t = seconds_since(t0);
  v.check(within(hg.value, 0.397, 5e-3), "effort at resilience " + num(hg.value) + " in " + num(t, 2) + " s");
  v.check(t < 60.0, "effort under 60 s");
  t0 = std::chrono::steady_clock::now();
  const auto h0 = exact::effort_open(sys, p.sets, p.x0, 0.0);
  t = seconds_since(t0);
  v.check(within(h0.value, 0.367, 5e-3), "effort at 0 " + num(h0.value) + " in " + num(t, 2) + " s");
  v.check(t < 60.0, "effort under 60 s");
  return v;
}

Verdict robot_open() {
  Verdict v;
  const auto r = support::robot();
  const auto g = exact::resilience_open(r.system, r.sets, r.x0, kInf);
  v.check(within(g.value, 0.0458, 2e-3) && g.certificate->satisfied, "resilience " + num(g.value));
  const auto h0 = exact::effort_open(r.system, r.sets, r.x0, 0.0);
  v.check(within(h0.value, 0.25, 0.01), "effort at 0 " + num(h0.value));
  const auto hg = exact::effort_open(r.system, r.sets, r.x0, g.value);
  v.check(within(hg.value, 0.39, 0.01), "effort at resilience " + num(hg.value));
  return v;
}

Verdict robot_closed() {
  Verdict v;
  const auto p = cli::load_problem(case_path("robot_closed.toml"));
  const auto& sys = *p.ltv;
  auto search = p.search;
  const auto g = exact::resilience_closed(sys, p.sets, p.x0, kInf, search);
  v.check(g.status == exact::Status::feasible && g.value >= 0.065, "resilience " + num(g.value));
  const auto cert = farkas::certify_vertices(sys, *g.controller, p.x0, g.value, p.sets, std::nullopt);
  v.check(cert.satisfied, "vertex check over " + std::to_string(cert.checked) + " vertices");
  const auto h0 = exact::effort_closed(sys, p.sets, p.x0, 0.0, search);
  v.check(within(h0.value, 0.25, 0.01), "effort at 0 " + num(h0.value));
  auto warm = search;
  warm.initial_gains.insert(warm.initial_gains.begin(), std::get<LinearFeedback>(*g.controller).gain);
  const auto hg = exact::effort_closed(sys, p.sets, p.x0, g.value, warm);
  v.check(std::abs(hg.value - 1.001) <= 0.05 * 1.001, "effort at resilience " + num(hg.value));
  const auto pt = exact::pareto_closed(sys, p.sets, p.x0, 0.5, 0.05, search);
  v.check(std::abs(pt.mu - 0.053) <= 0.1 * 0.053 && std::abs(pt.eps - 0.559) <= 0.1 * 0.559,
          "pareto(0.5, 0.05) at (" + num(pt.mu) + ", " + num(pt.eps) + ")");
  return v;
}

Verdict maximality() {
  Verdict v;
  std::mt19937_64 rng(2024);
  int resilience = 0, effort = 0, closed = 0, failures = 0;
  exact::SearchConfig search;
  search.restarts = 2;
  search.max_iterations = 200;
  for (int trial = 0; trial < 400 && (resilience < 20 || effort < 20 || closed < 5); ++trial) {
    const auto inst = support::random_box_instance(rng);
    const double eps0 = trial % 3 == 0 ? kInf : 1.5;
    const std::optional<double> bound = std::isinf(eps0) ? std::nullopt : std::optional<double>(eps0);
    const auto g = exact::resilience_open(inst.system, inst.sets, inst.x0, eps0);
    if (g.status != exact::Status::feasible || !(g.value > 1e-6)) continue;
    const bool pass_at = farkas::certify_vertices(inst.system, *g.controller, inst.x0, g.value, inst.sets, bound).satisfied;
    const bool fail_above =
        !farkas::certify_vertices(inst.system, *g.controller, inst.x0, 1.05 * g.value, inst.sets, bound).satisfied &&
        !exact::open_loop_feasible(inst.system, inst.sets, inst.x0, 1.05 * g.value, eps0);
    failures += !(pass_at && fail_above);
    ++resilience;

    const double mu0 = 0.5 * g.value;
    const auto h = exact::effort_open(inst.system, inst.sets, inst.x0, mu0);
    if (h.status == exact::Status::feasible && h.value > 1e-6) {
      const bool ok_at = farkas::certify_vertices(inst.system, *h.controller, inst.x0, mu0, inst.sets, h.value).satisfied;
      const bool tight = !exact::open_loop_feasible(inst.system, inst.sets, inst.x0, mu0, 0.95 * h.value);
      failures += !(ok_at && tight);
      ++effort;
    }

    if (closed < 5) {
      const auto gc = exact::resilience_closed(inst.system, inst.sets, inst.x0, eps0, search);
      if (gc.status == exact::Status::feasible && gc.value > 1e-6) {
        const auto& lf = std::get<LinearFeedback>(*gc.controller);
        const bool c_at = farkas::certify_vertices(inst.system, lf, inst.x0, gc.value, inst.sets, bound).satisfied;
        const bool c_above =
            !farkas::certify_vertices(inst.system, lf, inst.x0, 1.05 * gc.value, inst.sets, bound).satisfied &&
            !exact::closed_loop_feasible(inst.system, inst.sets, inst.x0, lf.gain, 1.05 * gc.value, eps0);
        failures += !(c_at && c_above);
        ++closed;
      }
    }
  }
  v.check(resilience >= 20 && effort >= 20, std::to_string(resilience) + " resilience, " + std::to_string(effort) +
                                                " effort, " + std::to_string(closed) + " closed-loop instances");
  v.check(failures == 0, std::to_string(failures) + " certificate failures");
  return v;
}

Verdict farkas_equivalence() {
  Verdict v;
  std::mt19937_64 rng(77);
  exact::ExactOptions l1, mult;
  l1.certify = mult.certify = false;
  mult.formulation = farkas::Formulation::multiplier;
  int compared = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 400 && compared < 60; ++trial) {
    const auto inst = support::random_box_instance(rng);
    const auto a = exact::resilience_open(inst.system, inst.sets, inst.x0, 1.5, l1);
    const auto b = exact::resilience_open(inst.system, inst.sets, inst.x0, 1.5, mult);
    if (a.status != b.status) {
      worst = kInf;
      continue;
    }
    if (a.status != exact::Status::feasible) continue;
    worst = std::max(worst, std::abs(a.value - b.value));
    const auto n = inst.system.state_dim(), m = inst.system.input_dim();
    Matrix gain(m, n);
    for (Eigen::Index i = 0; i < gain.size(); ++i) gain(i) = support::uniform(rng, -0.5, 0.5);
    exact::InnerQuery q;
    q.eps0 = 1.5;
    const auto ia = exact::solve_inner(inst.system, inst.sets, inst.x0, gain, q, l1);
    const auto ib = exact::solve_inner(inst.system, inst.sets, inst.x0, gain, q, mult);
    if (ia.feasible != ib.feasible) worst = kInf;
    if (ia.feasible && ib.feasible) worst = std::max(worst, std::abs(ia.mu - ib.mu));
    ++compared;
  }
  v.check(compared >= 50, std::to_string(compared) + " instances (open loop and a fixed random gain)");
  v.check(worst <= 1e-7, "largest gap " + num(worst, 2));
  return v;
}

Verdict conservatism() {
  Verdict v;
  const auto r = support::robot();
  const auto exact_result = exact::resilience_open(r.system, r.sets, r.x0, kInf);
  const auto& inputs = std::get<OpenLoopSequence>(*exact_result.controller).inputs;
  Vector warm(12);
  for (int k = 0; k < 6; ++k) warm.segment(2 * k, 2) = inputs[static_cast<std::size_t>(k)];
  scenario::ScenarioProblem p{NonlinearSystem::from_ltv(r.system), r.sets, r.x0,
                              {scenario::ControllerTemplate::Kind::open_loop}, {}, {}, {}};
  p.objective.eps0 = kInf;
  scenario::SolverConfig cfg;
  cfg.restarts = 0;
  cfg.initial_params = warm;
  cfg.param_scale = Vector::Constant(12, 0.05);
  cfg.mu_initial = exact_result.value;
  cfg.mu_scale = 0.01;
  std::vector<double> medians;
  int below = 0;
  for (std::size_t count : {10u, 100u, 1000u}) {
    std::vector<double> gaps;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      cfg.seed = seed;
      const auto set = scenario::sample_disturbances(count, 6, 2, seed);
      const auto sol = scenario::solve_scenario(p, set, cfg);
      gaps.push_back(sol.mu - exact_result.value);
      below += sol.mu < exact_result.value - 1e-9;
    }
    std::sort(gaps.begin(), gaps.end());
    medians.push_back(0.5 * (gaps[9] + gaps[10]));
  }
  v.check(below == 0, "runs below the exact value: " + std::to_string(below) + " of 60");
  v.check(medians[0] > medians[1] && medians[1] > medians[2],
          "median gaps " + num(medians[0], 3) + " > " + num(medians[1], 3) + " > " + num(medians[2], 3));

  const auto acc = cli::load_problem(case_path("acc_scenario.toml"));
  scenario::ScenarioProblem sp{*acc.system, acc.sets, acc.x0, {scenario::ControllerTemplate::Kind::linear},
                               {}, acc.scenario.input_lower, acc.scenario.input_upper};
  sp.objective.eps0 = acc.query.eps0.value_or(kInf);
  auto acfg = acc.scenario.solver;
  acfg.seed = acc.scenario.seed;
  const auto cert = scenario::run_pipeline(sp, acc.scenario.count, acc.scenario.seed, 1e-2,
                                           acc.scenario.distribution, acfg);
  const auto fresh = scenario::sample_disturbances(10000, acc.horizon, 2, acc.scenario.fresh_seed);
  const double rate = scenario::empirical_violation(cert.solution, sp, fresh);
  v.check(cert.solution.mu > 0.0 && cert.support <= cert.count,
          "acc mu " + num(cert.solution.mu) + ", support " + std::to_string(cert.support) + " of " +
              std::to_string(cert.count));
  v.check(rate <= cert.bound, "fresh violation " + num(rate, 3) + " <= bound " + num(cert.bound, 3));
  return v;
}

Verdict spec_compiler() {
  Verdict v;
  std::mt19937_64 rng(99);
  const auto stats = spec_oracle::run_trials(rng, 200);
  v.check(stats.mismatches == 0, std::to_string(stats.trials) + " pairs (" + std::to_string(stats.satisfied) +
                                     " satisfied), " + std::to_string(stats.mismatches) + " sign mismatches");
  const auto r = support::robot();
  bool layout = r.sets.polytopic && r.sets.terms.size() == 1;
  const Eigen::Index expected[] = {4, 4, 8, 4, 8, 8, 8};
  for (std::size_t k = 0; k <= 6; ++k) layout = layout && r.sets.step_rows(k) == expected[k];
  // step 2 must carry exactly R1 and R3, steps 4..6 R2 and R3
  const auto regions = support::robot_regions();
  auto holds = [&](std::size_t k, const std::string& a, const std::string& b) {
    const auto& pa = std::get<spec::HalfspacePolytope>(regions.at(a));
    const auto& pb = std::get<spec::HalfspacePolytope>(regions.at(b));
    const auto& s = r.sets.step_polytope(k);
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      bool found = false;
      for (const auto* p : {&pa, &pb})
        for (Eigen::Index j = 0; j < p->rows() && !found; ++j) found = p->g.row(j) == s.g.row(i) && p->h(j) == s.h(i);
      if (!found) return false;
    }
    return true;
  };
  layout = layout && holds(2, "R1", "R3") && holds(4, "R2", "R3") && holds(5, "R2", "R3") && holds(6, "R2", "R3");
  v.check(layout, "robot rows per step 4,4,8,4,8,8,8 with R1+R3 at step 2 and R2+R3 at steps 4-6");
  return v;
}

Verdict determinism() {
  Verdict v;
  auto run_twice = [&](const std::vector<std::string>& args) {
    std::vector<std::string> full{"resil"};
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : full) argv.push_back(a.c_str());
    std::string outputs[2];
    int codes[2];
    for (int i = 0; i < 2; ++i) {
      std::ostringstream out, err;
      codes[i] = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
      outputs[i] = out.str();
    }
    std::string label = args[0] + " " + args[2].substr(args[2].rfind('/') + 1);
    v.check(codes[0] == codes[1] && outputs[0] == outputs[1] && !outputs[0].empty() && codes[0] != 1, label);
  };
  run_twice({"resilience", "--problem", case_path("robot_open.toml")});
  run_twice({"effort", "--problem", case_path("robot_open.toml"), "--at-resilience"});
  run_twice({"pareto", "--problem", case_path("robot_open.toml")});
  run_twice({"resilience", "--problem", case_path("generator_open.toml")});
  run_twice({"effort", "--problem", case_path("generator_open.toml"), "--mu0", "0"});
  run_twice({"resilience", "--problem", case_path("robot_closed.toml")});
  run_twice({"scenario", "--problem", case_path("acc_scenario.toml")});
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"risk-bound table", risk_table},
      {"generator open-loop metrics", generator},
      {"robot open-loop metrics", robot_open},
      {"robot closed-loop metrics", robot_closed},
      {"certificate maximality on random instances", maximality},
      {"multiplier and l1 programs agree", farkas_equivalence},
      {"scenario conservatism and acc certificate", conservatism},
      {"specification compiler", spec_compiler},
      {"byte-identical reruns", determinism},
  };
  std::vector<std::size_t> selected;
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k < 1 || k > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "unknown criterion '%s'\n", argv[i]);
      return 2;
    }
    selected.push_back(static_cast<std::size_t>(k - 1));
  }
  if (selected.empty())
    for (std::size_t i = 0; i < criteria.size(); ++i) selected.push_back(i);

  int failed = 0;
  for (std::size_t i : selected) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    failed += !v.pass;
    std::printf("criterion %zu %s: %s (%s; %.1f s)\n", i + 1, v.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                v.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
