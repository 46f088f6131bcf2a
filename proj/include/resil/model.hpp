#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <string>
#include <variant>
#include <vector>

namespace resil {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// x(k+1) = A_k x(k) + B_k u(k) + d(k), k = 0..N-1.
class LtvSystem {
 public:
  LtvSystem(std::vector<Matrix> a, std::vector<Matrix> b);

  /// Time-invariant convenience constructor.
  static LtvSystem constant(const Matrix& a, const Matrix& b, std::size_t horizon);

  Eigen::Index state_dim() const { return a_.front().rows(); }
  Eigen::Index input_dim() const { return b_.front().cols(); }
  std::size_t horizon() const { return a_.size(); }
  const Matrix& a(std::size_t k) const { return a_.at(k); }
  const Matrix& b(std::size_t k) const { return b_.at(k); }

 private:
  std::vector<Matrix> a_;
  std::vector<Matrix> b_;
};

/// Black-box plant x(k+1) = f(k, x(k), u(k)) + d(k). The transition must be
/// deterministic; the disturbance is added by the caller.
class NonlinearSystem {
 public:
  using Transition = std::function<Vector(std::size_t k, const Vector& x, const Vector& u)>;

  NonlinearSystem(Eigen::Index state_dim, Eigen::Index input_dim, std::size_t horizon, Transition f,
                  std::string name = "custom");

  /// Wraps an LTV plant so that sampling-based code can treat both uniformly.
  static NonlinearSystem from_ltv(const LtvSystem& system);

  Eigen::Index state_dim() const { return n_; }
  Eigen::Index input_dim() const { return m_; }
  std::size_t horizon() const { return horizon_; }
  const std::string& name() const { return name_; }
  Vector step(std::size_t k, const Vector& x, const Vector& u) const { return f_(k, x, u); }

 private:
  Eigen::Index n_;
  Eigen::Index m_;
  std::size_t horizon_;
  Transition f_;
  std::string name_;
};

/// u = gain * x + offset.
struct LinearFeedback {
  Matrix gain;    // m x n  (alpha_1)
  Vector offset;  // m      (alpha_2)
};

/// u = coefficients * phi(x), phi the graded-lex monomial basis up to `degree`.
struct PolynomialFeedback {
  int degree = 1;
  Matrix coefficients;  // m x D(n, degree)
};

struct OpenLoopSequence {
  std::vector<Vector> inputs;  // u_0 .. u_{N-1}
};

using Controller = std::variant<LinearFeedback, PolynomialFeedback, OpenLoopSequence>;

struct DisturbanceSequence {
  std::vector<Vector> steps;  // d_0 .. d_{N-1}

  static DisturbanceSequence zeros(Eigen::Index n, std::size_t horizon);
  std::size_t size() const { return steps.size(); }
};

struct Trajectory {
  std::vector<Vector> states;  // x_0 .. x_N
  std::vector<Vector> inputs;  // u_0 .. u_{N-1}
};

/// Controller output at step k and state x.
Vector control_input(const Controller& controller, std::size_t k, const Vector& x);

/// Throws InputError if the controller's shape does not fit (n, m, N).
void check_controller(const Controller& controller, Eigen::Index n, Eigen::Index m, std::size_t horizon);

/// Simulates the closed loop. Throws InputError on dimension mismatch and
/// OverflowError (carrying the step index) on a non-finite state or input.
Trajectory rollout(const LtvSystem& system, const Controller& controller, const Vector& x0,
                   const DisturbanceSequence& disturbance);
Trajectory rollout(const NonlinearSystem& system, const Controller& controller, const Vector& x0,
                   const DisturbanceSequence& disturbance);

/// Table of state-transition products
///
///   P(k, i) = M_{k-1} M_{k-2} ... M_{i+1}   for k in 0..N, i in -1..k-1,
///
/// with M_j = A_j + B_j K (closed loop) or M_j = A_j (open loop). The empty
/// product is the identity, so P(k, k-1) = I and P(0, -1) = I; entries with
/// k = 0 and i >= 0 are zero. All block-matrix builders read their products
/// from here.
class TransitionProducts {
 public:
  TransitionProducts(const LtvSystem& system, const Matrix* gain);

  std::size_t horizon() const { return horizon_; }
  /// i ranges over -1..N-1; returns the zero matrix when i >= k.
  const Matrix& at(std::size_t k, long i) const;
  /// sum_{i=0}^{k-1} P(k, i) B_i  (n x m).
  const Matrix& input_response(std::size_t k) const { return input_response_.at(k); }
  /// M_j itself.
  const Matrix& step_matrix(std::size_t j) const { return step_.at(j); }

 private:
  std::size_t horizon_;
  Matrix zero_;
  std::vector<Matrix> step_;
  std::vector<std::vector<Matrix>> table_;  // table_[k][i + 1]
  std::vector<Matrix> input_response_;
};

TransitionProducts closed_loop_products(const LtvSystem& system, const Matrix& gain);
TransitionProducts open_loop_products(const LtvSystem& system);

/// Number of monomials of degree <= l in n variables, C(n + l, n).
std::size_t monomial_count(Eigen::Index n, int degree);

/// Exponent vectors in graded lexicographic order: degree 0 first, then within
/// each degree lexicographically descending in the first variable, e.g. for
/// n = 2, l = 2: 1, x1, x2, x1^2, x1 x2, x2^2.
std::vector<std::vector<int>> monomial_exponents(Eigen::Index n, int degree);

Vector monomial_basis(const Vector& x, int degree);

}  // namespace resil
