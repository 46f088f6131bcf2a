#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "resil/model.hpp"

namespace resil::optim {

/// Lexicographic score: a smaller constraint violation always wins, the
/// objective (minimized) breaks ties. Feasible points carry violation 0.
struct Merit {
  double violation = 0.0;
  double objective = 0.0;
};

bool better(const Merit& a, const Merit& b);

using MeritFunction = std::function<Merit(const Vector&)>;

struct NelderMeadOptions {
  int max_iterations = 500;
  /// Converged once the simplex merits agree to this (relative) tolerance.
  double tolerance = 1e-6;
  double initial_step = 0.5;
  /// Per-coordinate absolute simplex offsets; overrides `initial_step`.
  Vector steps;
  /// Fresh simplices built around a converged point before giving up.
  int rebuilds = 2;
};

struct NelderMeadResult {
  Vector x;
  Merit merit;
  int iterations = 0;
  long evaluations = 0;
  bool converged = false;
};

NelderMeadResult nelder_mead(const MeritFunction& f, const Vector& start, const NelderMeadOptions& options = {});

struct MultiStartOptions {
  /// Random starts in addition to the zero start and any explicit starts.
  int restarts = 8;
  /// Uniform candidates screened per random start; the best seeds the simplex.
  int screen = 32;
  /// Random candidates are drawn from center + spread * [-1, 1]^dim; an empty
  /// center means the origin and an empty spread means `scale` everywhere.
  double scale = 2.0;
  Vector center;
  Vector spread;
  std::uint64_t seed = 0;
  bool include_zero = true;
  std::vector<Vector> initial_points;
  NelderMeadOptions local;
};

struct MultiStartResult {
  Vector x;
  Merit merit;
  int best_start = -1;
  long evaluations = 0;
  std::vector<Merit> start_merits;
};

/// Explicit starts first, then the zero vector, then the random starts. Ties
/// go to the lowest start index, so the result does not depend on the thread
/// count.
MultiStartResult multi_start(const MeritFunction& f, Eigen::Index dim, const MultiStartOptions& options);

/// Single-threaded reference for multi_start.
MultiStartResult multi_start_serial(const MeritFunction& f, Eigen::Index dim, const MultiStartOptions& options);

/// Independent 64-bit stream for (seed, stream); the same pair always yields
/// the same sequence.
std::mt19937_64 stream_engine(std::uint64_t seed, std::uint64_t stream);

/// Uniform double in [0, 1) from 53 random bits.
double unit_uniform(std::mt19937_64& engine);

}  // namespace resil::optim
