#include "resil/farkas.hpp"

#include <cmath>
#include <limits>

#include "resil/error.hpp"

#ifdef RESIL_HAVE_OPENMP
#include <omp.h>
#endif

namespace resil::farkas {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_inputs(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0) {
  if (!sets.polytopic)
    throw UnsupportedSpecError("farkas", "the robust reformulation needs one halfspace polytope per step; "
                                         "route unions and balls through the scenario engine");
  if (sets.horizon != system.horizon())
    throw InputError("farkas", "specification horizon " + std::to_string(sets.horizon) + " differs from system horizon " +
                                   std::to_string(system.horizon()));
  if (sets.state_dim != system.state_dim()) throw InputError("farkas", "specification state dimension differs from system");
  if (x0.size() != system.state_dim()) throw InputError("farkas", "initial state has wrong length");
}

Eigen::Index total_state_rows(const spec::TimedSets& sets) {
  Eigen::Index r = 0;
  for (std::size_t k = 0; k <= sets.horizon; ++k) r += sets.step_rows(k);
  return r;
}

// E_k: maps the padded stack (0, d_0, ..., d_{N-1}) to the disturbance part of x(k).
Matrix disturbance_map(const TransitionProducts& products, std::size_t k, Eigen::Index n, std::size_t horizon) {
  Matrix ek = Matrix::Zero(n, n * static_cast<Eigen::Index>(horizon + 1));
  for (std::size_t i = 0; i < k; ++i)
    ek.middleCols(n * static_cast<Eigen::Index>(i + 1), n) = products.at(k, static_cast<long>(i));
  return ek;
}

FarkasBlocks allocate(const LtvSystem& system, Eigen::Index rows, Eigen::Index decision_cols, bool closed_loop) {
  FarkasBlocks b;
  b.closed_loop = closed_loop;
  b.state_dim = system.state_dim();
  b.input_dim = system.input_dim();
  b.horizon = system.horizon();
  b.e = Matrix::Zero(rows, system.state_dim() * static_cast<Eigen::Index>(system.horizon() + 1));
  b.f_const = Vector::Zero(rows);
  b.f_decision = Matrix::Zero(rows, decision_cols);
  b.f_eps = Vector::Zero(rows);
  b.labels.reserve(static_cast<std::size_t>(rows));
  return b;
}

}  // namespace

Matrix FarkasBlocks::a_b() const {
  const Eigen::Index c = disturbance_dim();
  Matrix a(2 * c, c);
  a << Matrix::Identity(c, c), -Matrix::Identity(c, c);
  return a;
}

Vector FarkasBlocks::b_b() const { return Vector::Ones(2 * disturbance_dim()); }

Vector FarkasBlocks::f(const Vector& decision, double eps) const {
  if (decision.size() != decision_dim()) throw InputError("farkas", "decision vector has wrong length");
  Vector out = f_const + f_decision * decision;
  if (has_input_rows) out += eps * f_eps;
  return out;
}

FarkasBlocks closed_loop_blocks(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0,
                                const Matrix& alpha1, bool include_inputs) {
  check_inputs(system, sets, x0);
  const Eigen::Index n = system.state_dim();
  const Eigen::Index m = system.input_dim();
  const std::size_t horizon = system.horizon();
  const TransitionProducts products = closed_loop_products(system, alpha1);

  const Eigen::Index input_rows = include_inputs ? 2 * m * static_cast<Eigen::Index>(horizon) : 0;
  FarkasBlocks b = allocate(system, total_state_rows(sets) + input_rows, m, true);
  b.has_input_rows = include_inputs;

  std::vector<Matrix> maps;
  maps.reserve(horizon + 1);
  for (std::size_t k = 0; k <= horizon; ++k) maps.push_back(disturbance_map(products, k, n, horizon));

  Eigen::Index row = 0;
  for (std::size_t k = 0; k <= horizon; ++k) {
    const auto& poly = sets.step_polytope(k);
    const Eigen::Index q = poly.rows();
    if (q == 0) continue;
    const Vector free_state = products.at(k, -1) * x0;
    b.e.middleRows(row, q) = poly.g * maps[k];
    b.f_const.segment(row, q) = poly.h - poly.g * free_state;
    b.f_decision.middleRows(row, q) = -poly.g * products.input_response(k);
    for (Eigen::Index i = 0; i < q; ++i) b.labels.push_back({RowLabel::Kind::state, k, i});
    row += q;
  }

  if (include_inputs) {
    const Matrix identity = Matrix::Identity(m, m);
    for (std::size_t k = 0; k < horizon; ++k) {
      const Matrix e_u = alpha1 * maps[k];
      const Vector f_u = -alpha1 * (products.at(k, -1) * x0);
      const Matrix f_a = -(alpha1 * products.input_response(k) + identity);
      for (int sign : {1, -1}) {
        b.e.middleRows(row, m) = sign * e_u;
        b.f_const.segment(row, m) = sign * f_u;
        b.f_decision.middleRows(row, m) = sign * f_a;
        b.f_eps.segment(row, m).setOnes();
        for (Eigen::Index i = 0; i < m; ++i)
          b.labels.push_back({RowLabel::Kind::input, k, sign > 0 ? i : m + i});
        row += m;
      }
    }
  }
  return b;
}

FarkasBlocks open_loop_blocks(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0) {
  check_inputs(system, sets, x0);
  const Eigen::Index n = system.state_dim();
  const Eigen::Index m = system.input_dim();
  const std::size_t horizon = system.horizon();
  const TransitionProducts products = open_loop_products(system);

  FarkasBlocks b = allocate(system, total_state_rows(sets), m * static_cast<Eigen::Index>(horizon), false);
  Eigen::Index row = 0;
  for (std::size_t k = 0; k <= horizon; ++k) {
    const auto& poly = sets.step_polytope(k);
    const Eigen::Index q = poly.rows();
    if (q == 0) continue;
    b.e.middleRows(row, q) = poly.g * disturbance_map(products, k, n, horizon);
    b.f_const.segment(row, q) = poly.h - poly.g * (products.at(k, -1) * x0);
    for (std::size_t i = 0; i < k; ++i)
      b.f_decision.block(row, m * static_cast<Eigen::Index>(i), q, m) =
          -poly.g * products.at(k, static_cast<long>(i)) * system.b(i);
    for (Eigen::Index i = 0; i < q; ++i) b.labels.push_back({RowLabel::Kind::state, k, i});
    row += q;
  }
  return b;
}

Vector l1_row_norms(const FarkasBlocks& blocks) { return blocks.e.cwiseAbs().rowwise().sum(); }

Eigen::Index multiplier_variable_count(const FarkasBlocks& blocks) {
  return blocks.rows() * 2 * blocks.disturbance_dim();
}

void append_robust_rows(lp::LinearProgram& program, const FarkasBlocks& blocks, const RobustLayout& layout,
                        Formulation formulation) {
  const Eigen::Index nv = program.num_vars();
  const Eigen::Index dd = blocks.decision_dim();
  if (layout.decision_offset < 0 || layout.decision_offset + dd > nv || layout.mu_var >= nv || layout.eps_var >= nv ||
      layout.slack_var >= nv)
    throw InputError("farkas", "robust layout does not fit the program");
  const bool eps_used = blocks.has_input_rows;
  const Vector norms = l1_row_norms(blocks);

  // Row i of the decision-dependent part, shared by both forms:
  //   [mu term] - f_decision_i z - f_eps_i eps <= f_const_i
  auto base_row = [&](Eigen::Index i, Eigen::RowVectorXd& a, double& rhs) {
    a.setZero(nv);
    rhs = blocks.f_const(i);
    a.segment(layout.decision_offset, dd) = -blocks.f_decision.row(i);
    if (layout.slack_var >= 0) a(layout.slack_var) = -1.0;
    if (eps_used) {
      if (layout.eps_var >= 0) {
        a(layout.eps_var) -= blocks.f_eps(i);
      } else {
        rhs += blocks.f_eps(i) * layout.eps_value;
      }
    }
  };

  Eigen::RowVectorXd a;
  double rhs = 0.0;
  if (formulation == Formulation::l1) {
    for (Eigen::Index i = 0; i < blocks.rows(); ++i) {
      base_row(i, a, rhs);
      if (layout.mu_var >= 0) {
        a(layout.mu_var) += norms(i);
      } else {
        rhs -= layout.mu_value * norms(i);
      }
      program.add_inequality(a, rhs);
    }
    return;
  }

  const Eigen::Index c = blocks.disturbance_dim();
  const Eigen::Index off = layout.multiplier_offset;
  if (off < 0 || off + multiplier_variable_count(blocks) > nv)
    throw InputError("farkas", "multiplier block does not fit the program");
  for (Eigen::Index v = off; v < off + multiplier_variable_count(blocks); ++v) program.set_bounds(v, 0.0, lp::kInf);
  for (Eigen::Index i = 0; i < blocks.rows(); ++i) {
    const Eigen::Index pi = off + i * 2 * c;
    // (P A_b)_{ij} = P_{i,j} - P_{i,c+j} = mu E_{ij}
    for (Eigen::Index j = 0; j < c; ++j) {
      Eigen::RowVectorXd eq = Eigen::RowVectorXd::Zero(nv);
      eq(pi + j) = 1.0;
      eq(pi + c + j) = -1.0;
      double eq_rhs = 0.0;
      if (layout.mu_var >= 0) {
        eq(layout.mu_var) = -blocks.e(i, j);
      } else {
        eq_rhs = layout.mu_value * blocks.e(i, j);
      }
      program.add_equality(eq, eq_rhs);
    }
    // (P B_b)_i <= F_i
    base_row(i, a, rhs);
    a.segment(pi, 2 * c).setOnes();
    program.add_inequality(a, rhs);
  }
}

namespace {

void check_certifiable(const LtvSystem& system, const Controller& controller, const Vector& x0, double mu,
                       const spec::TimedSets& sets) {
  if (std::holds_alternative<PolynomialFeedback>(controller))
    throw InputError("farkas", "vertex certification needs a controller affine in the state");
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw InputError("farkas", "disturbance bound must be finite and non-negative");
  if (sets.horizon != system.horizon() || sets.state_dim != system.state_dim())
    throw InputError("farkas", "specification does not match the system");
  check_controller(controller, system.state_dim(), system.input_dim(), system.horizon());
  if (x0.size() != system.state_dim()) throw InputError("farkas", "initial state has wrong length");
}

std::size_t vertex_bits(const LtvSystem& system, double mu) {
  return mu == 0.0 ? 0 : static_cast<std::size_t>(system.state_dim()) * system.horizon();
}

DisturbanceSequence vertex(std::uint64_t index, double mu, Eigen::Index n, std::size_t horizon) {
  DisturbanceSequence d = DisturbanceSequence::zeros(n, horizon);
  if (mu == 0.0) return d;
  std::size_t bit = 0;
  for (std::size_t k = 0; k < horizon; ++k)
    for (Eigen::Index c = 0; c < n; ++c, ++bit) d.steps[k](c) = ((index >> bit) & 1u) ? mu : -mu;
  return d;
}

double trajectory_margin(const Trajectory& traj, const spec::TimedSets& sets, std::optional<double> eps) {
  double value = spec::margin(traj, sets);
  if (eps) {
    for (const auto& u : traj.inputs) value = std::min(value, *eps - u.cwiseAbs().maxCoeff());
  }
  return value;
}

double vertex_margin(const LtvSystem& system, const Controller& controller, const Vector& x0,
                     const DisturbanceSequence& d, const spec::TimedSets& sets, std::optional<double> eps) {
  try {
    return trajectory_margin(rollout(system, controller, x0, d), sets, eps);
  } catch (const OverflowError&) {
    return -kInf;
  }
}

std::size_t guarded_bits(const LtvSystem& system, double mu, const CertifyOptions& options) {
  const std::size_t bits = vertex_bits(system, mu);
  if (bits > options.max_bits || bits > 62)
    throw EnumerationGuardError("vertex enumeration needs 2^" + std::to_string(bits) + " rollouts, budget is 2^" +
                                    std::to_string(options.max_bits),
                                bits);
  return bits;
}

Certificate finish(double worst, std::uint64_t index, std::size_t count, double mu, const LtvSystem& system,
                   const CertifyOptions& options, const char* method) {
  Certificate cert;
  cert.worst_margin = worst;
  cert.satisfied = worst >= -options.tolerance;
  cert.witness = vertex(index, mu, system.state_dim(), system.horizon());
  cert.method = method;
  cert.checked = count;
  return cert;
}

}  // namespace

Certificate certify_vertices_serial(const LtvSystem& system, const Controller& controller, const Vector& x0,
                                    double mu, const spec::TimedSets& sets, std::optional<double> eps,
                                    const CertifyOptions& options) {
  check_certifiable(system, controller, x0, mu, sets);
  const std::size_t bits = guarded_bits(system, mu, options);
  const std::uint64_t count = std::uint64_t{1} << bits;
  double worst = kInf;
  std::uint64_t worst_index = 0;
  for (std::uint64_t v = 0; v < count; ++v) {
    const double m = vertex_margin(system, controller, x0, vertex(v, mu, system.state_dim(), system.horizon()), sets, eps);
    if (m < worst) {
      worst = m;
      worst_index = v;
    }
  }
  return finish(worst, worst_index, count, mu, system, options, "vertices");
}

Certificate certify_vertices(const LtvSystem& system, const Controller& controller, const Vector& x0, double mu,
                             const spec::TimedSets& sets, std::optional<double> eps, const CertifyOptions& options) {
#ifndef RESIL_HAVE_OPENMP
  return certify_vertices_serial(system, controller, x0, mu, sets, eps, options);
#else
  check_certifiable(system, controller, x0, mu, sets);
  const std::size_t bits = guarded_bits(system, mu, options);
  const auto count = static_cast<std::int64_t>(std::uint64_t{1} << bits);
  double worst = kInf;
  std::int64_t worst_index = 0;
#pragma omp parallel
  {
    double local = kInf;
    std::int64_t local_index = count;
#pragma omp for schedule(static)
    for (std::int64_t v = 0; v < count; ++v) {
      const double m = vertex_margin(system, controller, x0,
                                     vertex(static_cast<std::uint64_t>(v), mu, system.state_dim(), system.horizon()),
                                     sets, eps);
      if (m < local || (m == local && v < local_index)) {
        local = m;
        local_index = v;
      }
    }
#pragma omp critical(resil_vertex_min)
    {
      if (local < worst || (local == worst && local_index < worst_index)) {
        worst = local;
        worst_index = local_index;
      }
    }
  }
  if (worst == kInf) worst_index = 0;
  return finish(worst, static_cast<std::uint64_t>(worst_index), static_cast<std::size_t>(count), mu, system, options,
                "vertices");
#endif
}

Certificate certify_row_extremes(const LtvSystem& system, const Controller& controller, const Vector& x0, double mu,
                                 const spec::TimedSets& sets, std::optional<double> eps, const CertifyOptions& options) {
  check_certifiable(system, controller, x0, mu, sets);
  if (!sets.polytopic) throw UnsupportedSpecError("farkas", "row-extreme certification needs a polytopic specification");
  const Eigen::Index n = system.state_dim();
  const std::size_t horizon = system.horizon();
  const auto dims = static_cast<std::size_t>(n) * horizon;

  Certificate cert;
  cert.method = "row-extremes";
  cert.checked = dims + 1;
  cert.witness = DisturbanceSequence::zeros(n, horizon);

  Trajectory nominal;
  std::vector<Trajectory> impulse(dims);
  try {
    nominal = rollout(system, controller, x0, DisturbanceSequence::zeros(n, horizon));
    for (std::size_t b = 0; b < dims; ++b) {
      DisturbanceSequence d = DisturbanceSequence::zeros(n, horizon);
      d.steps[b / static_cast<std::size_t>(n)](static_cast<Eigen::Index>(b % static_cast<std::size_t>(n))) = 1.0;
      impulse[b] = rollout(system, controller, x0, d);
    }
  } catch (const OverflowError&) {
    cert.worst_margin = -kInf;
    cert.satisfied = false;
    return cert;
  }

  double worst = kInf;
  std::vector<double> worst_signs;
  // Evaluates one affine row  value(d) = nominal + sum_b sens_b d_b  against its limit.
  auto consider = [&](double limit, double nominal_value, const std::vector<double>& sens) {
    double spread = 0.0;
    for (double s : sens) spread += std::abs(s);
    const double slack = limit - nominal_value - mu * spread;
    if (slack < worst) {
      worst = slack;
      worst_signs = sens;
    }
  };

  std::vector<double> sens(dims);
  for (std::size_t k = 0; k <= horizon; ++k) {
    const auto& poly = sets.step_polytope(k);
    for (Eigen::Index r = 0; r < poly.rows(); ++r) {
      const double base = poly.g.row(r).dot(nominal.states[k]);
      for (std::size_t b = 0; b < dims; ++b) sens[b] = poly.g.row(r).dot(impulse[b].states[k]) - base;
      consider(poly.h(r), base, sens);
    }
  }
  if (eps) {
    for (std::size_t k = 0; k < horizon; ++k) {
      for (Eigen::Index j = 0; j < system.input_dim(); ++j) {
        for (double sign : {1.0, -1.0}) {
          const double base = sign * nominal.inputs[k](j);
          for (std::size_t b = 0; b < dims; ++b) sens[b] = sign * impulse[b].inputs[k](j) - base;
          consider(*eps, base, sens);
        }
      }
    }
  }

  cert.worst_margin = worst;
  cert.satisfied = worst >= -options.tolerance;
  if (mu > 0.0 && !worst_signs.empty()) {
    for (std::size_t b = 0; b < dims; ++b)
      cert.witness.steps[b / static_cast<std::size_t>(n)](static_cast<Eigen::Index>(b % static_cast<std::size_t>(n))) =
          worst_signs[b] >= 0.0 ? mu : -mu;
  }
  return cert;
}

Certificate certify(const LtvSystem& system, const Controller& controller, const Vector& x0, double mu,
                    const spec::TimedSets& sets, std::optional<double> eps, const CertifyOptions& options) {
  if (vertex_bits(system, mu) <= options.max_bits) return certify_vertices(system, controller, x0, mu, sets, eps, options);
  if (sets.polytopic) return certify_row_extremes(system, controller, x0, mu, sets, eps, options);
  const std::size_t bits = vertex_bits(system, mu);
  throw EnumerationGuardError("vertex enumeration needs 2^" + std::to_string(bits) + " rollouts and the specification "
                                  "is not polytopic",
                              bits);
}

}  // namespace resil::farkas
