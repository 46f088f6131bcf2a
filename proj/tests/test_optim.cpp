#include <doctest.h>

#include "resil/optim.hpp"
#include "support.hpp"

using namespace resil;
using support::vec;

TEST_SUITE("optim") {

TEST_CASE("feasibility dominates the objective") {
  CHECK(optim::better({0.0, 5.0}, {1e-3, -100.0}));
  CHECK(optim::better({0.0, -1.0}, {0.0, 0.0}));
  CHECK_FALSE(optim::better({0.0, 0.0}, {0.0, 0.0}));
}

TEST_CASE("nelder-mead finds the minimum of a shifted bowl") {
  const optim::MeritFunction bowl = [](const Vector& x) {
    return optim::Merit{0.0, (x - vec({1.0, -2.0, 0.5})).squaredNorm()};
  };
  optim::NelderMeadOptions o;
  o.max_iterations = 2000;
  o.tolerance = 1e-14;
  const auto r = optim::nelder_mead(bowl, Vector::Zero(3), o);
  CHECK((r.x - vec({1.0, -2.0, 0.5})).norm() < 1e-5);
}

TEST_CASE("penalized search leaves the infeasible region") {
  // minimize x + y on the disk x^2 + y^2 <= 1, starting outside it
  const optim::MeritFunction f = [](const Vector& x) {
    return optim::Merit{std::max(0.0, x.squaredNorm() - 1.0), x.sum()};
  };
  optim::MultiStartOptions o;
  o.local.max_iterations = 3000;
  o.local.tolerance = 1e-12;
  const auto r = optim::multi_start(f, 2, o);
  CHECK(r.merit.violation == 0.0);
  CHECK(r.merit.objective == doctest::Approx(-std::sqrt(2.0)).epsilon(1e-3));
}

TEST_CASE("parallel multi-start equals the serial reference") {
  const optim::MeritFunction rastrigin = [](const Vector& x) {
    double s = 10.0 * static_cast<double>(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) s += x(i) * x(i) - 10.0 * std::cos(2.0 * M_PI * x(i));
    return optim::Merit{0.0, s};
  };
  optim::MultiStartOptions o;
  o.restarts = 6;
  o.seed = 4;
  o.initial_points.push_back(vec({2.2, -1.1}));
  const auto a = optim::multi_start(rastrigin, 2, o);
  const auto b = optim::multi_start_serial(rastrigin, 2, o);
  CHECK(a.best_start == b.best_start);
  CHECK((a.x.array() == b.x.array()).all());
  CHECK(a.merit.objective == b.merit.objective);
  REQUIRE(a.start_merits.size() == 8);
  CHECK(a.start_merits.size() == b.start_merits.size());
}

TEST_CASE("streams are reproducible and distinct") {
  auto a = optim::stream_engine(1, 2), b = optim::stream_engine(1, 2), c = optim::stream_engine(1, 3);
  const auto x = a(), y = b(), z = c();
  CHECK(x == y);
  CHECK(x != z);
  auto e = optim::stream_engine(9, 0);
  for (int i = 0; i < 1000; ++i) {
    const double u = optim::unit_uniform(e);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

}  // TEST_SUITE
