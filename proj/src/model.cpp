#include "resil/model.hpp"

#include <cmath>
#include <memory>
#include <utility>

#include "resil/error.hpp"

namespace resil {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

LtvSystem::LtvSystem(std::vector<Matrix> a, std::vector<Matrix> b) : a_(std::move(a)), b_(std::move(b)) {
  if (a_.empty()) throw InputError("model", "LTV system needs a horizon of at least one step");
  if (a_.size() != b_.size())
    throw InputError("model", "A and B sequences differ in length (" + std::to_string(a_.size()) + " vs " +
                                  std::to_string(b_.size()) + ")");
  const Eigen::Index n = a_.front().rows();
  const Eigen::Index m = b_.front().cols();
  if (n < 1 || m < 1) throw InputError("model", "state and input dimensions must be positive");
  for (std::size_t k = 0; k < a_.size(); ++k) {
    if (a_[k].rows() != n || a_[k].cols() != n)
      throw InputError("model", "A_" + std::to_string(k) + " is " + shape(a_[k]) + ", expected " +
                                    std::to_string(n) + "x" + std::to_string(n));
    if (b_[k].rows() != n || b_[k].cols() != m)
      throw InputError("model", "B_" + std::to_string(k) + " is " + shape(b_[k]) + ", expected " +
                                    std::to_string(n) + "x" + std::to_string(m));
    if (!a_[k].allFinite() || !b_[k].allFinite())
      throw InputError("model", "non-finite entry in A_" + std::to_string(k) + " or B_" + std::to_string(k));
  }
}

LtvSystem LtvSystem::constant(const Matrix& a, const Matrix& b, std::size_t horizon) {
  return LtvSystem(std::vector<Matrix>(horizon, a), std::vector<Matrix>(horizon, b));
}

NonlinearSystem::NonlinearSystem(Eigen::Index state_dim, Eigen::Index input_dim, std::size_t horizon,
                                 Transition f, std::string name)
    : n_(state_dim), m_(input_dim), horizon_(horizon), f_(std::move(f)), name_(std::move(name)) {
  if (n_ < 1 || m_ < 1 || horizon_ < 1)
    throw InputError("model", "nonlinear system dimensions and horizon must be positive");
  if (!f_) throw InputError("model", "nonlinear system needs a transition map");
}

NonlinearSystem NonlinearSystem::from_ltv(const LtvSystem& system) {
  // Copies the matrices so the wrapper does not depend on the source lifetime.
  auto a = std::make_shared<std::vector<Matrix>>();
  auto b = std::make_shared<std::vector<Matrix>>();
  for (std::size_t k = 0; k < system.horizon(); ++k) {
    a->push_back(system.a(k));
    b->push_back(system.b(k));
  }
  return NonlinearSystem(
      system.state_dim(), system.input_dim(), system.horizon(),
      [a, b](std::size_t k, const Vector& x, const Vector& u) -> Vector { return (*a)[k] * x + (*b)[k] * u; },
      "ltv");
}

DisturbanceSequence DisturbanceSequence::zeros(Eigen::Index n, std::size_t horizon) {
  return DisturbanceSequence{std::vector<Vector>(horizon, Vector::Zero(n))};
}

Vector control_input(const Controller& controller, std::size_t k, const Vector& x) {
  return std::visit(
      [&](const auto& c) -> Vector {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, LinearFeedback>) {
          return c.gain * x + c.offset;
        } else if constexpr (std::is_same_v<T, PolynomialFeedback>) {
          return c.coefficients * monomial_basis(x, c.degree);
        } else {
          return c.inputs.at(k);
        }
      },
      controller);
}

void check_controller(const Controller& controller, Eigen::Index n, Eigen::Index m, std::size_t horizon) {
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, LinearFeedback>) {
          if (c.gain.rows() != m || c.gain.cols() != n || c.offset.size() != m)
            throw InputError("model", "linear feedback gain is " + shape(c.gain) + " with offset of length " +
                                          std::to_string(c.offset.size()) + ", system needs " +
                                          std::to_string(m) + "x" + std::to_string(n));
          if (!c.gain.allFinite() || !c.offset.allFinite())
            throw InputError("model", "linear feedback has non-finite parameters");
        } else if constexpr (std::is_same_v<T, PolynomialFeedback>) {
          if (c.degree < 0) throw InputError("model", "polynomial degree must be non-negative");
          const auto count = static_cast<Eigen::Index>(monomial_count(n, c.degree));
          if (c.coefficients.rows() != m || c.coefficients.cols() != count)
            throw InputError("model", "polynomial coefficients are " + shape(c.coefficients) + ", expected " +
                                          std::to_string(m) + "x" + std::to_string(count));
          if (!c.coefficients.allFinite()) throw InputError("model", "polynomial feedback has non-finite parameters");
        } else {
          if (c.inputs.size() != horizon)
            throw InputError("model", "open-loop sequence has " + std::to_string(c.inputs.size()) +
                                          " inputs, horizon is " + std::to_string(horizon));
          for (std::size_t k = 0; k < c.inputs.size(); ++k) {
            if (c.inputs[k].size() != m)
              throw InputError("model", "open-loop input " + std::to_string(k) + " has wrong length");
            if (!c.inputs[k].allFinite())
              throw InputError("model", "open-loop input " + std::to_string(k) + " is not finite");
          }
        }
      },
      controller);
}

namespace {

template <class Step>
Trajectory simulate(Eigen::Index n, Eigen::Index m, std::size_t horizon, const Controller& controller,
                    const Vector& x0, const DisturbanceSequence& disturbance, Step&& step) {
  if (x0.size() != n)
    throw InputError("model", "initial state has length " + std::to_string(x0.size()) + ", expected " +
                                  std::to_string(n));
  if (!x0.allFinite()) throw InputError("model", "initial state is not finite");
  if (disturbance.size() != horizon)
    throw InputError("model", "disturbance has " + std::to_string(disturbance.size()) + " steps, horizon is " +
                                  std::to_string(horizon));
  for (std::size_t k = 0; k < horizon; ++k)
    if (disturbance.steps[k].size() != n)
      throw InputError("model", "disturbance step " + std::to_string(k) + " has wrong length");
  check_controller(controller, n, m, horizon);

  Trajectory traj;
  traj.states.reserve(horizon + 1);
  traj.inputs.reserve(horizon);
  traj.states.push_back(x0);
  for (std::size_t k = 0; k < horizon; ++k) {
    const Vector& x = traj.states.back();
    Vector u = control_input(controller, k, x);
    if (!u.allFinite()) throw OverflowError("non-finite control input at step " + std::to_string(k), k);
    Vector next = step(k, x, u) + disturbance.steps[k];
    if (!next.allFinite()) throw OverflowError("non-finite state at step " + std::to_string(k + 1), k + 1);
    traj.inputs.push_back(std::move(u));
    traj.states.push_back(std::move(next));
  }
  return traj;
}

}  // namespace

Trajectory rollout(const LtvSystem& system, const Controller& controller, const Vector& x0,
                   const DisturbanceSequence& disturbance) {
  return simulate(system.state_dim(), system.input_dim(), system.horizon(), controller, x0, disturbance,
                  [&](std::size_t k, const Vector& x, const Vector& u) -> Vector {
                    return system.a(k) * x + system.b(k) * u;
                  });
}

Trajectory rollout(const NonlinearSystem& system, const Controller& controller, const Vector& x0,
                   const DisturbanceSequence& disturbance) {
  return simulate(system.state_dim(), system.input_dim(), system.horizon(), controller, x0, disturbance,
                  [&](std::size_t k, const Vector& x, const Vector& u) -> Vector {
                    Vector next = system.step(k, x, u);
                    if (next.size() != system.state_dim())
                      throw InputError("model", "transition '" + system.name() + "' returned a state of length " +
                                                    std::to_string(next.size()));
                    return next;
                  });
}

TransitionProducts::TransitionProducts(const LtvSystem& system, const Matrix* gain)
    : horizon_(system.horizon()), zero_(Matrix::Zero(system.state_dim(), system.state_dim())) {
  const Eigen::Index n = system.state_dim();
  if (gain && (gain->rows() != system.input_dim() || gain->cols() != n))
    throw InputError("model", "feedback gain is " + shape(*gain) + ", expected " +
                                  std::to_string(system.input_dim()) + "x" + std::to_string(n));
  step_.reserve(horizon_);
  for (std::size_t j = 0; j < horizon_; ++j)
    step_.push_back(gain ? Matrix(system.a(j) + system.b(j) * *gain) : system.a(j));

  table_.resize(horizon_ + 1);
  input_response_.resize(horizon_ + 1);
  const Matrix identity = Matrix::Identity(n, n);
  for (std::size_t k = 0; k <= horizon_; ++k) {
    auto& row = table_[k];
    row.assign(k + 1, identity);  // i = -1 .. k-1
    // P(k, i) = P(k, i + 1) * M_{i+1}
    for (long i = static_cast<long>(k) - 2; i >= -1; --i)
      row[static_cast<std::size_t>(i + 1)] =
          row[static_cast<std::size_t>(i + 2)] * step_[static_cast<std::size_t>(i + 1)];
    Matrix response = Matrix::Zero(n, system.input_dim());
    for (std::size_t i = 0; i < k; ++i) response += row[i + 1] * system.b(i);
    input_response_[k] = std::move(response);
  }
}

const Matrix& TransitionProducts::at(std::size_t k, long i) const {
  if (k > horizon_ || i < -1 || i >= static_cast<long>(horizon_))
    throw InputError("model", "transition product index (" + std::to_string(k) + ", " + std::to_string(i) +
                                  ") out of range");
  if (i >= static_cast<long>(k)) return zero_;
  return table_[k][static_cast<std::size_t>(i + 1)];
}

TransitionProducts closed_loop_products(const LtvSystem& system, const Matrix& gain) {
  return TransitionProducts(system, &gain);
}

TransitionProducts open_loop_products(const LtvSystem& system) { return TransitionProducts(system, nullptr); }

std::size_t monomial_count(Eigen::Index n, int degree) {
  if (degree < 0) return 0;
  // C(n + l, l) computed incrementally; exact for the sizes that fit in memory.
  std::size_t result = 1;
  for (int i = 1; i <= degree; ++i)
    result = result * static_cast<std::size_t>(n + i) / static_cast<std::size_t>(i);
  return result;
}

std::vector<std::vector<int>> monomial_exponents(Eigen::Index n, int degree) {
  std::vector<std::vector<int>> out;
  const auto dim = static_cast<std::size_t>(n);
  std::vector<int> current(dim, 0);
  // Emits all exponent vectors of total degree `remaining` over variables
  // var..n-1, highest power of the earliest variable first.
  std::function<void(std::size_t, int)> emit = [&](std::size_t var, int remaining) {
    if (var + 1 == dim) {
      current[var] = remaining;
      out.push_back(current);
      current[var] = 0;
      return;
    }
    for (int p = remaining; p >= 0; --p) {
      current[var] = p;
      emit(var + 1, remaining - p);
    }
    current[var] = 0;
  };
  for (int d = 0; d <= degree; ++d) emit(0, d);
  return out;
}

Vector monomial_basis(const Vector& x, int degree) {
  if (degree < 0) throw InputError("model", "monomial degree must be non-negative");
  const auto exps = monomial_exponents(x.size(), degree);
  Vector phi(static_cast<Eigen::Index>(exps.size()));
  for (std::size_t r = 0; r < exps.size(); ++r) {
    double v = 1.0;
    for (Eigen::Index j = 0; j < x.size(); ++j)
      for (int p = 0; p < exps[r][static_cast<std::size_t>(j)]; ++p) v *= x(j);
    phi(static_cast<Eigen::Index>(r)) = v;
  }
  return phi;
}

}  // namespace resil
