#include <doctest.h>

#include <random>

#include "resil/error.hpp"
#include "resil/spec.hpp"
#include "spec_oracle.hpp"
#include "support.hpp"

using namespace resil;
using support::vec;

TEST_SUITE("spec") {

TEST_CASE("robot formula parses into three conjuncts") {
  const auto regions = support::robot_regions();
  const auto f = spec::parse(support::robot_formula(), regions, 6);
  REQUIRE(f.kind == spec::Formula::Kind::conjunction);
  REQUIRE(f.children.size() == 3);
  CHECK(f.children[0].kind == spec::Formula::Kind::next);
  CHECK(f.children[0].from == 2);
  CHECK(f.children[0].region == "R1");
  CHECK(f.children[1].kind == spec::Formula::Kind::always);
  CHECK(f.children[1].from == 4);
  CHECK(f.children[1].to == 6);
  CHECK(f.children[2].region == "R3");
}

TEST_CASE("degenerate interval equals next") {
  spec::RegionTable regions{{"R", spec::HalfspacePolytope::box(vec({-1.0}), vec({1.0}))}};
  const auto a = spec::compile(spec::parse("always[0,0](R)", regions, 2), regions, 2, 1);
  const auto b = spec::compile(spec::parse("next^0(R)", regions, 2), regions, 2, 1);
  for (std::size_t k = 0; k <= 2; ++k) {
    CHECK(a.step_polytope(k).g == b.step_polytope(k).g);
    CHECK(a.step_polytope(k).h == b.step_polytope(k).h);
  }
  CHECK(a.step_rows(0) == 2);
  CHECK(a.step_rows(1) == 0);
}

TEST_CASE("eventually produces a union") {
  spec::RegionTable regions{{"A", spec::HalfspacePolytope::box(vec({0.5}), vec({1.0}))},
                            {"B", spec::HalfspacePolytope::box(vec({-2.0}), vec({2.0}))}};
  const auto f = spec::parse("eventually[1,2](A) & always[0,2](B)", regions, 2);
  REQUIRE(f.children.size() == 2);
  CHECK(f.children[0].kind == spec::Formula::Kind::eventually);
  const auto sets = spec::compile(f, regions, 2, 1);
  CHECK(sets.terms.size() == 2);
  CHECK_FALSE(sets.polytopic);
  CHECK(spec::margin(std::vector<Vector>{vec({0.0}), vec({0.0}), vec({0.75})}, sets) > 0.0);
  CHECK(spec::margin(std::vector<Vector>{vec({0.0}), vec({0.0}), vec({0.0})}, sets) < 0.0);
}

TEST_CASE("malformed text is rejected") {
  const auto regions = support::robot_regions();
  CHECK_THROWS_AS(spec::parse("next^2(R1", regions, 6), SyntaxError);
  CHECK_THROWS_AS(spec::parse("always[1](R1)", regions, 6), SyntaxError);
  CHECK_THROWS_AS(spec::parse("next^2(Nope)", regions, 6), InputError);
  CHECK_THROWS_AS(spec::parse("next^7(R1)", regions, 6), InputError);
  CHECK_THROWS_AS(spec::parse("always[3,2](R1)", regions, 6), InputError);
  try {
    spec::parse("next^2(R1) & @", regions, 6);
    FAIL("expected a syntax error");
  } catch (const SyntaxError& e) {
    CHECK(e.position() == 13);
  }
}

TEST_CASE("robot specification stacks the documented polytopes") {
  const auto r = support::robot();
  const auto& sets = r.sets;
  CHECK(sets.polytopic);
  CHECK(sets.convex);
  const auto regions = support::robot_regions();
  const auto& r1 = std::get<spec::HalfspacePolytope>(regions.at("R1"));
  const auto& r2 = std::get<spec::HalfspacePolytope>(regions.at("R2"));
  const auto& r3 = std::get<spec::HalfspacePolytope>(regions.at("R3"));
  auto stacked = [](const spec::HalfspacePolytope& a, const spec::HalfspacePolytope& b) {
    Matrix g(a.rows() + b.rows(), 2);
    Vector h(a.rows() + b.rows());
    g << a.g, b.g;
    h << a.h, b.h;
    return std::pair{g, h};
  };
  for (std::size_t k = 0; k <= 6; ++k) {
    const auto& p = sets.step_polytope(k);
    Matrix g;
    Vector h;
    if (k == 2) {
      std::tie(g, h) = stacked(r1, r3);
    } else if (k >= 4) {
      std::tie(g, h) = stacked(r2, r3);
    } else {
      g = r3.g;
      h = r3.h;
    }
    CAPTURE(k);
    REQUIRE(p.rows() == g.rows());
    // same rows up to order
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      bool found = false;
      for (Eigen::Index j = 0; j < p.rows() && !found; ++j)
        found = p.g.row(j) == g.row(i) && p.h(j) == h(i);
      CHECK(found);
    }
  }
}

TEST_CASE("acc balls are convex but not polytopic") {
  const double r = std::sqrt(0.1);
  spec::RegionTable regions{
      {"B1", spec::NormBall{vec({58.75, 16.4}), r, spec::BallNorm::euclidean, {}, false}},
      {"B2", spec::NormBall{vec({57.75, 15.6}), r, spec::BallNorm::euclidean, {}, false}}};
  const auto sets = spec::compile(spec::parse("next^3(B1) & next^4(B2)", regions, 4), regions, 4, 2);
  CHECK_FALSE(sets.polytopic);
  CHECK(sets.convex);
  REQUIRE(sets.terms.size() == 1);
  CHECK(sets.terms[0].steps[3].balls.size() == 1);
  CHECK(sets.terms[0].steps[4].balls.size() == 1);
  for (std::size_t k = 0; k < 3; ++k) CHECK(sets.terms[0].steps[k].unconstrained());
  CHECK_THROWS(sets.step_polytope(3));
}

TEST_CASE("empty conjunction accepts everything") {
  spec::RegionTable regions;
  const auto sets = spec::compile(spec::parse("", regions, 3), regions, 3, 2);
  std::vector<Vector> states(4, vec({1e6, -1e6}));
  CHECK(spec::margin(states, sets) == std::numeric_limits<double>::infinity());
}

TEST_CASE("margins of a band") {
  spec::RegionTable regions{{"S", spec::HalfspacePolytope::box(vec({-1.0}), vec({1.0}))}};
  const auto sets = spec::compile(spec::parse("always[0,1](S)", regions, 1), regions, 1, 1);
  CHECK(spec::margin(std::vector<Vector>{vec({0.0}), vec({0.5})}, sets) == doctest::Approx(0.5));
  CHECK(spec::margin(std::vector<Vector>{vec({0.0}), vec({1.0})}, sets) == 0.0);
  CHECK(spec::margin(std::vector<Vector>{vec({0.0}), vec({1.5})}, sets) == doctest::Approx(-0.5));
}

TEST_CASE("random robot trajectories agree with direct membership") {
  const auto r = support::robot();
  const auto regions = support::robot_regions();
  std::mt19937_64 rng(21);
  int inside = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Vector> states;
    Vector x = r.x0;
    states.push_back(x);
    for (int k = 0; k < 6; ++k) {
      const Vector target = k < 2 ? vec({0.0, 0.9}) : vec({1.1, 1.45});
      x = x + 0.6 * (target - x) + vec({support::uniform(rng, -0.25, 0.25), support::uniform(rng, -0.25, 0.25)});
      states.push_back(x);
    }
    auto in_box = [&](const std::string& name, const Vector& s) {
      return std::get<spec::HalfspacePolytope>(regions.at(name)).slack(s) >= 0;
    };
    bool ok = in_box("R1", states[2]);
    for (int k = 4; k <= 6; ++k) ok = ok && in_box("R2", states[k]);
    for (int k = 0; k <= 6; ++k) ok = ok && in_box("R3", states[k]);
    inside += ok;
    CHECK((spec::margin(states, r.sets) >= 0.0) == ok);
  }
  CHECK(inside > 0);
  CHECK(inside < 500);
}

TEST_CASE("compiled margin sign matches formula semantics") {
  std::mt19937_64 rng(8);
  const auto stats = spec_oracle::run_trials(rng, 400);
  CHECK(stats.mismatches == 0);
  CHECK(stats.satisfied > 20);
  CHECK(stats.violated > 20);
}

TEST_CASE("stacked polytopes satisfy iff every conjunct does") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t horizon = static_cast<std::size_t>(support::pick(rng, 1, 5));
    spec::RegionTable regions;
    std::vector<spec::Formula> parts;
    for (int i = 0; i < 3; ++i) {
      const std::string name = "P" + std::to_string(i);
      const double c0 = support::uniform(rng, -0.5, 0.5), c1 = support::uniform(rng, -0.5, 0.5);
      const double w = support::uniform(rng, 0.5, 1.5);
      regions[name] = support::box2(c0 - w, c0 + w, c1 - w, c1 + w);
      const auto a = static_cast<std::size_t>(support::pick(rng, 0, static_cast<int>(horizon)));
      const auto b = static_cast<std::size_t>(support::pick(rng, static_cast<int>(a), static_cast<int>(horizon)));
      parts.push_back(i == 0 ? spec::Formula::next(a, name) : spec::Formula::always(a, b, name));
    }
    const auto whole = spec::compile(spec::Formula::conjunction(parts), regions, horizon, 2);
    REQUIRE(whole.polytopic);
    std::vector<Vector> states;
    for (std::size_t k = 0; k <= horizon; ++k)
      states.push_back(vec({support::uniform(rng, -1.5, 1.5), support::uniform(rng, -1.5, 1.5)}));
    bool each = true;
    for (const auto& p : parts) each = each && spec::margin(states, spec::compile(p, regions, horizon, 2)) >= 0.0;
    CHECK((spec::margin(states, whole) >= 0.0) == each);
  }
}

TEST_CASE("infinity ball and its polytope give the same margin") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector c = vec({support::uniform(rng, -1, 1), support::uniform(rng, -1, 1), support::uniform(rng, -1, 1)});
    const spec::NormBall ball{c, support::uniform(rng, 0.1, 2.0), spec::BallNorm::infinity, {}, false};
    spec::RegionTable as_ball{{"O", ball}};
    spec::RegionTable as_poly{{"O", ball.to_polytope(3)}};
    const auto f = spec::Formula::always(0, 2, "O");
    const auto a = spec::compile(f, as_ball, 2, 3);
    const auto b = spec::compile(f, as_poly, 2, 3);
    std::vector<Vector> states;
    for (int k = 0; k < 3; ++k) states.push_back(Vector::Random(3) * 2.0);
    CHECK(spec::margin(states, a) == doctest::Approx(spec::margin(states, b)).epsilon(1e-12));
  }
}

}  // TEST_SUITE
