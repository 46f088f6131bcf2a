#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "resil/model.hpp"

namespace resil::spec {

/// {x | G x <= H}. Zero rows means the whole space.
struct HalfspacePolytope {
  Matrix g;
  Vector h;

  static HalfspacePolytope box(const Vector& lower, const Vector& upper);
  Eigen::Index rows() const { return g.rows(); }
  /// min_i (H_i - G_i x); +inf for an empty stack.
  double slack(const Vector& x) const;
};

enum class BallNorm { infinity, euclidean };

/// {x | ||P x - center|| <= radius}, P the projection onto `axes` (all
/// coordinates when empty). With `exterior` set the region is the closed
/// complement {x | ||P x - center|| >= radius}, which is not convex.
struct NormBall {
  Vector center;
  double radius = 0.0;
  BallNorm norm = BallNorm::euclidean;
  std::vector<Eigen::Index> axes;
  bool exterior = false;

  double slack(const Vector& x) const;
  /// Polytope form of an interior infinity-norm ball (2 rows per axis).
  HalfspacePolytope to_polytope(Eigen::Index state_dim) const;
};

using Region = std::variant<HalfspacePolytope, NormBall>;
using RegionTable = std::map<std::string, Region>;

/// Syntax tree of the supported finite-trace fragment.
struct Formula {
  enum class Kind { next, always, eventually, conjunction };
  Kind kind = Kind::conjunction;
  std::size_t from = 0;  // next: the step; intervals: first step
  std::size_t to = 0;    // intervals: last step (inclusive); next: == from
  std::string region;
  std::vector<Formula> children;  // conjunction only

  static Formula next(std::size_t step, std::string region);
  static Formula always(std::size_t from, std::size_t to, std::string region);
  static Formula eventually(std::size_t from, std::size_t to, std::string region);
  static Formula conjunction(std::vector<Formula> children);
};

std::string to_string(const Formula& formula);

/// Grammar (whitespace insignificant):
///
///   phi  ::= term ('&' term)*
///   term ::= ID                                 (x_0 in ID)
///          | 'next^' INT '(' ID ')'
///          | 'always[' INT ',' INT ']' '(' ID ')'
///          | 'eventually[' INT ',' INT ']' '(' ID ')'
///          | 'true'
///
/// Empty text is the empty conjunction. Throws SyntaxError (with position)
/// on malformed input and InputError on unknown regions, reversed intervals
/// or steps beyond the horizon.
Formula parse(const std::string& text, const RegionTable& regions, std::size_t horizon);

/// Intersection of polytope rows and balls constraining one state.
struct ConvexCell {
  HalfspacePolytope polytope;
  std::vector<NormBall> balls;

  bool unconstrained() const { return polytope.rows() == 0 && balls.empty(); }
  double slack(const Vector& x) const;
};

/// One product term Gamma_0 x ... x Gamma_N.
struct ProductTerm {
  std::vector<ConvexCell> steps;
};

/// Compiled specification: a union of product terms. Formulas without
/// `eventually` compile to a single term. `polytopic` holds when there is one
/// term and every step is a pure halfspace stack (the form the exact solvers
/// accept); `convex` when there is one term and no exterior ball.
struct TimedSets {
  std::size_t horizon = 0;
  Eigen::Index state_dim = 0;
  std::vector<ProductTerm> terms;
  bool polytopic = true;
  bool convex = true;

  /// Stacked (G_k, H_k); requires `polytopic`.
  const HalfspacePolytope& step_polytope(std::size_t k) const;
  /// Number of rows q_k of the stacked polytope at step k.
  Eigen::Index step_rows(std::size_t k) const { return step_polytope(k).rows(); }
};

struct CompileOptions {
  /// Upper bound on the number of product terms produced by conjunctions of
  /// `eventually` operators.
  std::size_t max_terms = 4096;
};

TimedSets compile(const Formula& formula, const RegionTable& regions, std::size_t horizon,
                  Eigen::Index state_dim, const CompileOptions& options = {});

/// Satisfaction margin of a state sequence (N + 1 states): max over terms of
/// min over steps of the cell slack. Non-negative iff the trajectory
/// satisfies the specification.
double margin(const std::vector<Vector>& states, const TimedSets& sets);
double margin(const Trajectory& trajectory, const TimedSets& sets);

}  // namespace resil::spec
