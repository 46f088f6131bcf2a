// Parallel kernels against their serial references.

#include <benchmark/benchmark.h>

#include <cmath>

#include "resil/farkas.hpp"
#include "resil/optim.hpp"
#include "resil/scenario.hpp"

using namespace resil;

namespace {

struct VertexCase {
  LtvSystem system = LtvSystem::constant(Matrix::Identity(2, 2), Matrix::Identity(2, 2), 9);
  spec::TimedSets sets;
  Vector x0 = Vector::Zero(2);
  Controller controller;

  VertexCase() {
    spec::RegionTable regions{{"B", spec::HalfspacePolytope::box(Vector::Constant(2, -1.0), Vector::Constant(2, 1.0))}};
    sets = spec::compile(spec::parse("always[0,9](B)", regions, 9), regions, 9, 2);
    controller = LinearFeedback{-0.5 * Matrix::Identity(2, 2), Vector::Zero(2)};
  }
};

// 2^18 vertex rollouts
void certify_parallel(benchmark::State& state) {
  const VertexCase c;
  for (auto _ : state)
    benchmark::DoNotOptimize(farkas::certify_vertices(c.system, c.controller, c.x0, 0.1, c.sets, std::nullopt));
}

void certify_serial(benchmark::State& state) {
  const VertexCase c;
  for (auto _ : state)
    benchmark::DoNotOptimize(farkas::certify_vertices_serial(c.system, c.controller, c.x0, 0.1, c.sets, std::nullopt));
}

optim::Merit rastrigin(const Vector& x) {
  double s = 10.0 * static_cast<double>(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) s += x(i) * x(i) - 10.0 * std::cos(2.0 * M_PI * x(i));
  return {0.0, s};
}

optim::MultiStartOptions starts() {
  optim::MultiStartOptions o;
  o.restarts = 16;
  o.local.max_iterations = 2000;
  return o;
}

void multi_start_parallel(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(optim::multi_start(rastrigin, 6, starts()));
}

void multi_start_serial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(optim::multi_start_serial(rastrigin, 6, starts()));
}

struct AccCase {
  scenario::ScenarioProblem problem;
  scenario::ScenarioSolution solution;
  scenario::ScenarioSet fresh;

  static scenario::ScenarioProblem make() {
    Vector c1(2), c2(2);
    c1 << 58.75, 16.4;
    c2 << 57.75, 15.6;
    spec::RegionTable regions{{"B1", spec::NormBall{c1, std::sqrt(0.1), spec::BallNorm::euclidean, {}, false}},
                              {"B2", spec::NormBall{c2, std::sqrt(0.1), spec::BallNorm::euclidean, {}, false}}};
    auto sets = spec::compile(spec::parse("next^3(B1) & next^4(B2)", regions, 4), regions, 4, 2);
    scenario::ScenarioProblem p{scenario::make_model("acc", {{"tau", 0.5}, {"v0", 14.95}}, 4), std::move(sets),
                                Vector(2), {scenario::ControllerTemplate::Kind::linear}, {}, {}, {}};
    p.x0 << 60.0, 15.0;
    p.objective.eps0 = std::numeric_limits<double>::infinity();
    return p;
  }

  AccCase() : problem(make()), fresh(scenario::sample_disturbances(100000, 4, 2, 7)) {
    Matrix gain(1, 2);
    gain << 3377.689, -599.61;
    Vector offset(1);
    offset << -190979.28;
    solution.controller = LinearFeedback{gain, offset};
    solution.mu = 0.0367;
  }
};

void violation_parallel(benchmark::State& state) {
  const AccCase c;
  for (auto _ : state) benchmark::DoNotOptimize(scenario::empirical_violation(c.solution, c.problem, c.fresh));
}

void violation_serial(benchmark::State& state) {
  const AccCase c;
  for (auto _ : state) benchmark::DoNotOptimize(scenario::empirical_violation_serial(c.solution, c.problem, c.fresh));
}

}  // namespace

BENCHMARK(certify_parallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(certify_serial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(multi_start_parallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(multi_start_serial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(violation_parallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(violation_serial)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
