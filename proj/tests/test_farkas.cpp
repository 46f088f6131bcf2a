#include <doctest.h>

#include <random>

#include "resil/error.hpp"
#include "resil/exact.hpp"
#include "resil/farkas.hpp"
#include "support.hpp"

using namespace resil;
using support::mat;
using support::vec;

namespace {

Vector stack_normalized(const DisturbanceSequence& d, Eigen::Index n, double mu) {
  Vector y = Vector::Zero(n * static_cast<Eigen::Index>(d.size() + 1));
  for (std::size_t k = 0; k < d.size(); ++k) y.segment(n * static_cast<Eigen::Index>(k + 1), n) = d.steps[k] / mu;
  return y;
}

DisturbanceSequence random_disturbance(std::mt19937_64& rng, Eigen::Index n, std::size_t horizon, double mu) {
  DisturbanceSequence d;
  for (std::size_t k = 0; k < horizon; ++k) {
    Vector dk(n);
    for (Eigen::Index i = 0; i < n; ++i) dk(i) = support::uniform(rng, -mu, mu);
    d.steps.push_back(dk);
  }
  return d;
}

/// Constraint residual (<= 0 means satisfied) of each labelled row, read off
/// a rollout.
Vector rollout_residuals(const farkas::FarkasBlocks& b, const spec::TimedSets& sets, const Trajectory& t, double eps) {
  Vector r(b.rows());
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    const auto& label = b.labels[static_cast<std::size_t>(i)];
    if (label.kind == farkas::RowLabel::Kind::state) {
      const auto& p = sets.step_polytope(label.step);
      r(i) = p.g.row(label.row).dot(t.states[label.step]) - p.h(label.row);
    } else {
      const Eigen::Index m = b.input_dim;
      const double u = t.inputs[label.step](label.row % m);
      r(i) = (label.row < m ? u : -u) - eps;
    }
  }
  return r;
}

}  // namespace

TEST_SUITE("farkas") {

TEST_CASE("smallest closed-loop instance by hand") {
  const auto c = support::scalar_band(1);
  const auto b = farkas::closed_loop_blocks(c.system, c.sets, c.x0, mat(1, 1, {0.0}));
  REQUIRE(b.rows() == 6);
  // state rows come first: x(0) <= 1, -x(0) <= 1, x(1) <= 1, -x(1) <= 1
  CHECK(b.e.row(0).isZero());
  CHECK(b.e.row(1).isZero());
  CHECK(b.e.row(2) == vec({0.0, 1.0}).transpose());
  CHECK(b.e.row(3) == vec({0.0, -1.0}).transpose());
  CHECK(b.f_const.head(4) == Vector::Ones(4));
  CHECK(b.f_decision.col(0).head(4) == vec({0.0, 0.0, -1.0, 1.0}));
  CHECK(b.e.bottomRows(2).isZero());
  const Vector f = b.f(vec({0.25}), 0.5);
  CHECK(f(4) == doctest::Approx(0.5 - 0.25));
  CHECK(f(5) == doctest::Approx(0.5 + 0.25));
}

TEST_CASE("smallest open-loop instance by hand") {
  auto c = support::scalar_band(1);
  c.x0 = vec({0.2});
  const auto b = farkas::open_loop_blocks(c.system, c.sets, c.x0);
  REQUIRE(b.rows() == 4);
  CHECK(b.e.row(2) == vec({0.0, 1.0}).transpose());
  CHECK(b.f_const(2) == doctest::Approx(0.8));
  CHECK(b.f_decision(2, 0) == -1.0);
  CHECK(b.f_decision(0, 0) == 0.0);
}

TEST_CASE("zero input reproduces the autonomous blocks") {
  std::mt19937_64 rng(1);
  const auto inst = support::random_box_instance(rng);
  const auto n = inst.system.state_dim(), m = inst.system.input_dim();
  const auto ol = farkas::open_loop_blocks(inst.system, inst.sets, inst.x0);
  const auto cl = farkas::closed_loop_blocks(inst.system, inst.sets, inst.x0, Matrix::Zero(m, n), false);
  CHECK(ol.e.isApprox(cl.e));
  CHECK(ol.f_const.isApprox(cl.f_const));
}

TEST_CASE("closed-loop blocks match rollouts") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto inst = support::random_box_instance(rng);
    const auto n = inst.system.state_dim(), m = inst.system.input_dim();
    Matrix gain(m, n);
    Vector offset(m);
    for (Eigen::Index i = 0; i < gain.size(); ++i) gain(i) = support::uniform(rng, -1, 1);
    for (Eigen::Index i = 0; i < m; ++i) offset(i) = support::uniform(rng, -1, 1);
    const double mu = support::uniform(rng, 0.01, 0.5), eps = support::uniform(rng, 0.1, 2.0);
    const auto d = random_disturbance(rng, n, inst.system.horizon(), mu);
    const auto b = farkas::closed_loop_blocks(inst.system, inst.sets, inst.x0, gain);
    REQUIRE(static_cast<std::size_t>(b.rows()) == b.labels.size());
    const Vector lhs = mu * b.e * stack_normalized(d, n, mu) - b.f(offset, eps);
    const auto t = rollout(inst.system, LinearFeedback{gain, offset}, inst.x0, d);
    const Vector expected = rollout_residuals(b, inst.sets, t, eps);
    CHECK((lhs - expected).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(((lhs.array() <= 0).all()) == ((expected.array() <= 0).all()));
  }
}

TEST_CASE("open-loop blocks match rollouts") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = support::random_box_instance(rng);
    const auto n = inst.system.state_dim(), m = inst.system.input_dim();
    const std::size_t horizon = inst.system.horizon();
    const double mu = support::uniform(rng, 0.01, 0.5);
    OpenLoopSequence seq;
    Vector v(m * static_cast<Eigen::Index>(horizon));
    for (std::size_t k = 0; k < horizon; ++k) {
      Vector u(m);
      for (Eigen::Index i = 0; i < m; ++i) u(i) = support::uniform(rng, -1, 1);
      v.segment(m * static_cast<Eigen::Index>(k), m) = u;
      seq.inputs.push_back(u);
    }
    const auto d = random_disturbance(rng, n, horizon, mu);
    const auto b = farkas::open_loop_blocks(inst.system, inst.sets, inst.x0);
    const Vector lhs = mu * b.e * stack_normalized(d, n, mu) - b.f(v, 0.0);
    const auto t = rollout(inst.system, seq, inst.x0, d);
    CHECK((lhs - rollout_residuals(b, inst.sets, t, 0.0)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("block shapes and the zero leading column block") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const auto inst = support::random_box_instance(rng);
    const auto n = inst.system.state_dim(), m = inst.system.input_dim();
    const auto horizon = static_cast<Eigen::Index>(inst.system.horizon());
    Eigen::Index q = 0;
    for (std::size_t k = 0; k <= inst.system.horizon(); ++k) q += inst.sets.step_rows(k);
    const auto b = farkas::closed_loop_blocks(inst.system, inst.sets, inst.x0, Matrix::Random(m, n));
    CHECK(b.rows() == q + 2 * m * horizon);
    CHECK(b.disturbance_dim() == n * (horizon + 1));
    CHECK(b.e.leftCols(n).isZero());
    CHECK(b.a_b().rows() == 2 * n * (horizon + 1));
    CHECK(b.a_b().cols() == n * (horizon + 1));
    CHECK(b.b_b() == Vector::Ones(2 * n * (horizon + 1)));
    const auto o = farkas::open_loop_blocks(inst.system, inst.sets, inst.x0);
    CHECK(o.e.leftCols(n).isZero());
    CHECK(o.rows() == q);
    CHECK(o.decision_dim() == m * horizon);
  }
}

TEST_CASE("l1 row norms") {
  farkas::FarkasBlocks b;
  b.e = Matrix(2, 3);
  b.e << 0.0, 1.0, 0.0, 0.5, -0.5, 2.0;
  CHECK(farkas::l1_row_norms(b) == vec({1.0, 3.0}));
}

TEST_CASE("explicit multipliers realize the l1 form") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = support::random_box_instance(rng);
    const auto n = inst.system.state_dim(), m = inst.system.input_dim();
    const auto b = farkas::closed_loop_blocks(inst.system, inst.sets, inst.x0, Matrix::Random(m, n));
    const double mu = support::uniform(rng, 0.0, 1.0);
    Matrix p(b.rows(), 2 * b.disturbance_dim());
    p << (mu * b.e).cwiseMax(0.0), (-mu * b.e).cwiseMax(0.0);
    CHECK(p.minCoeff() >= 0.0);
    CHECK((p * b.a_b() - mu * b.e).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((p * b.b_b() - mu * farkas::l1_row_norms(b)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("multiplier and l1 programs agree") {
  std::mt19937_64 rng(6);
  exact::ExactOptions l1, mult;
  l1.certify = mult.certify = false;
  mult.formulation = farkas::Formulation::multiplier;
  int compared = 0;
  for (int trial = 0; trial < 40 && compared < 10; ++trial) {
    const auto inst = support::random_box_instance(rng);
    const auto a = exact::resilience_open(inst.system, inst.sets, inst.x0, 2.0, l1);
    const auto b = exact::resilience_open(inst.system, inst.sets, inst.x0, 2.0, mult);
    CHECK(a.status == b.status);
    if (a.status != exact::Status::feasible) continue;
    CHECK(a.value == doctest::Approx(b.value).epsilon(1e-7));
    ++compared;
  }
  CHECK(compared == 10);
}

TEST_CASE("scalar certifier boundary") {
  const auto c = support::scalar_band(1);
  const Controller zero = OpenLoopSequence{{vec({0.0})}};
  const auto nominal = farkas::certify_vertices(c.system, zero, c.x0, 0.0, c.sets, std::nullopt);
  CHECK(nominal.satisfied);
  CHECK(nominal.worst_margin == doctest::Approx(1.0));
  const auto edge = farkas::certify_vertices(c.system, zero, c.x0, 1.0, c.sets, std::nullopt);
  CHECK(edge.satisfied);
  CHECK(edge.worst_margin == doctest::Approx(0.0).epsilon(1e-12));
  const auto over = farkas::certify_vertices(c.system, zero, c.x0, 1.01, c.sets, std::nullopt);
  CHECK_FALSE(over.satisfied);
  REQUIRE(over.witness.size() == 1);
  CHECK(std::abs(over.witness.steps[0](0)) == doctest::Approx(1.01));
  CHECK(over.worst_margin == doctest::Approx(-0.01));
}

TEST_CASE("parallel, serial and row-extreme certifiers agree") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const auto inst = support::random_box_instance(rng);
    const auto n = inst.system.state_dim(), m = inst.system.input_dim();
    const Controller c = LinearFeedback{Matrix::Random(m, n) * 0.5, Vector::Random(m) * 0.2};
    const double mu = support::uniform(rng, 0.0, 0.3);
    const std::optional<double> eps = trial % 2 ? std::optional<double>(1.0) : std::nullopt;
    const auto a = farkas::certify_vertices(inst.system, c, inst.x0, mu, inst.sets, eps);
    const auto b = farkas::certify_vertices_serial(inst.system, c, inst.x0, mu, inst.sets, eps);
    const auto r = farkas::certify_row_extremes(inst.system, c, inst.x0, mu, inst.sets, eps);
    CHECK(a.satisfied == b.satisfied);
    CHECK(a.worst_margin == b.worst_margin);
    CHECK(a.checked == b.checked);
    for (std::size_t k = 0; k < a.witness.size(); ++k) CHECK(a.witness.steps[k] == b.witness.steps[k]);
    CHECK(r.satisfied == a.satisfied);
    CHECK(r.worst_margin == doctest::Approx(a.worst_margin).epsilon(1e-9));
  }
}

TEST_CASE("interior disturbances never beat the worst vertex") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = support::random_box_instance(rng);
    const auto n = inst.system.state_dim(), m = inst.system.input_dim();
    const Controller c = LinearFeedback{Matrix::Random(m, n) * 0.5, Vector::Random(m) * 0.2};
    const double mu = support::uniform(rng, 0.05, 0.3);
    const auto cert = farkas::certify_vertices(inst.system, c, inst.x0, mu, inst.sets, std::nullopt);
    for (int s = 0; s < 500; ++s) {
      const auto d = random_disturbance(rng, n, inst.system.horizon(), mu);
      const double margin = spec::margin(rollout(inst.system, c, inst.x0, d), inst.sets);
      CHECK(margin >= cert.worst_margin - 1e-9);
    }
  }
}

TEST_CASE("enumeration guard") {
  const auto sys = LtvSystem::constant(Matrix::Identity(3, 3), Matrix::Identity(3, 3), 9);
  spec::RegionTable regions{{"B", spec::HalfspacePolytope::box(Vector::Constant(3, -5), Vector::Constant(3, 5))}};
  const auto sets = spec::compile(spec::parse("always[0,9](B)", regions, 9), regions, 9, 3);
  OpenLoopSequence zero;
  for (int k = 0; k < 9; ++k) zero.inputs.push_back(Vector::Zero(3));
  try {
    farkas::certify_vertices(sys, zero, Vector::Zero(3), 0.1, sets, std::nullopt);
    FAIL("expected the guard to trip");
  } catch (const EnumerationGuardError& e) {
    CHECK(e.required_bits() == 27);
  }
  const auto cert = farkas::certify(sys, zero, Vector::Zero(3), 0.5, sets, std::nullopt);
  CHECK(cert.satisfied);
  CHECK(cert.worst_margin == doctest::Approx(0.5));
  CHECK_FALSE(farkas::certify(sys, zero, Vector::Zero(3), 0.6, sets, std::nullopt).satisfied);
}

TEST_CASE("union specifications are refused") {
  spec::RegionTable regions{{"A", spec::HalfspacePolytope::box(vec({0.5}), vec({1.0}))}};
  const auto sets = spec::compile(spec::parse("eventually[1,2](A)", regions, 2), regions, 2, 1);
  const auto sys = LtvSystem::constant(mat(1, 1, {1.0}), mat(1, 1, {1.0}), 2);
  CHECK_THROWS_AS(farkas::open_loop_blocks(sys, sets, vec({0.0})), UnsupportedSpecError);
}

}  // TEST_SUITE
