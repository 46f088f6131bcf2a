#pragma once

#include <cmath>
#include <initializer_list>
#include <random>
#include <string>

#include "resil/exact.hpp"
#include "resil/model.hpp"
#include "resil/spec.hpp"

namespace support {

using resil::Matrix;
using resil::Vector;

inline Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

inline Matrix mat(Eigen::Index rows, Eigen::Index cols, std::initializer_list<double> row_major) {
  Matrix a(rows, cols);
  auto it = row_major.begin();
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) a(i, j) = *it++;
  return a;
}

inline resil::spec::HalfspacePolytope box2(double x_lo, double x_hi, double y_lo, double y_hi) {
  return resil::spec::HalfspacePolytope::box(vec({x_lo, y_lo}), vec({x_hi, y_hi}));
}

inline const char* robot_formula() { return "next^2(R1) & always[4,6](R2) & always[0,6](R3)"; }

inline resil::spec::RegionTable robot_regions() {
  return {{"R1", box2(-0.3, 0.3, 0.6, 1.25)}, {"R2", box2(0.8, 1.5, 1.2, 1.75)}, {"R3", box2(-1.0, 1.7, 0.0, 2.0)}};
}

/// Single-integrator robot x(k+1) = x(k) + u(k) + d(k) in the plane.
struct Case {
  resil::LtvSystem system;
  resil::spec::TimedSets sets;
  Vector x0;
};

inline Case robot() {
  const auto regions = robot_regions();
  auto sets = resil::spec::compile(resil::spec::parse(robot_formula(), regions, 6), regions, 6, 2);
  return {resil::LtvSystem::constant(Matrix::Identity(2, 2), Matrix::Identity(2, 2), 6), std::move(sets),
          vec({0.0, 0.2})};
}

/// x(k+1) = x(k) + u(k) + d(k) on the line with |x(k)| <= 1 at every step.
inline Case scalar_band(std::size_t horizon = 1) {
  resil::spec::RegionTable regions{{"S", resil::spec::HalfspacePolytope::box(vec({-1.0}), vec({1.0}))}};
  const std::string text = "always[0," + std::to_string(horizon) + "](S)";
  auto sets = resil::spec::compile(resil::spec::parse(text, regions, horizon), regions, horizon, 1);
  return {resil::LtvSystem::constant(Matrix::Identity(1, 1), Matrix::Identity(1, 1), horizon), std::move(sets),
          vec({0.0})};
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int pick(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

/// Random LTV plant with n, m <= 2, N <= 4: stay in a wide box around the
/// origin and finish in a smaller random box.
inline Case random_box_instance(std::mt19937_64& rng) {
  const int n = pick(rng, 1, 2);
  const int m = pick(rng, 1, 2);
  const auto horizon = static_cast<std::size_t>(pick(rng, 1, 4));
  std::vector<Matrix> a, b;
  for (std::size_t k = 0; k < horizon; ++k) {
    Matrix ak(n, n), bk(n, m);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) ak(i, j) = uniform(rng, -1.0, 1.0);
      for (int j = 0; j < m; ++j) bk(i, j) = uniform(rng, -1.0, 1.0);
    }
    a.push_back(ak);
    b.push_back(bk);
  }
  Vector safe_hi(n), target_lo(n), target_hi(n), x0(n);
  for (int i = 0; i < n; ++i) {
    safe_hi(i) = uniform(rng, 1.5, 3.0);
    const double c = uniform(rng, -1.0, 1.0);
    const double w = uniform(rng, 0.3, 1.0);
    target_lo(i) = c - w;
    target_hi(i) = c + w;
    x0(i) = uniform(rng, -1.0, 1.0);
  }
  resil::spec::RegionTable regions{{"Safe", resil::spec::HalfspacePolytope::box(-safe_hi, safe_hi)},
                                   {"Target", resil::spec::HalfspacePolytope::box(target_lo, target_hi)}};
  const std::string text =
      "always[0," + std::to_string(horizon) + "](Safe) & next^" + std::to_string(horizon) + "(Target)";
  auto sets = resil::spec::compile(resil::spec::parse(text, regions, horizon), regions, horizon, n);
  return {resil::LtvSystem(a, b), std::move(sets), x0};
}

}  // namespace support
