#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "resil/lp.hpp"
#include "resil/model.hpp"
#include "resil/spec.hpp"

namespace resil::farkas {

struct RowLabel {
  enum class Kind { state, input };
  Kind kind = Kind::state;
  std::size_t step = 0;
  Eigen::Index row = 0;  // row within the step's block
};

/// Stacked robust constraint  mu E Y <= F  over the normalized disturbance
/// stack Y = (1/mu)(0, d_0, ..., d_{N-1}), with F affine in the remaining
/// decision variables:
///
///   closed loop:  F = f_const + f_decision alpha2 + f_eps eps
///   open loop:    F = f_const + f_decision v,   v_i = eps * u~_i  (mN entries)
///
/// The disturbance set is the box Omega_mu(0)^N, i.e. A_b Y <= B_b with
/// A_b = [I; -I] and B_b = 1.
struct FarkasBlocks {
  bool closed_loop = true;
  bool has_input_rows = false;
  Eigen::Index state_dim = 0;
  Eigen::Index input_dim = 0;
  std::size_t horizon = 0;

  Matrix e;             // r x n(N+1)
  Vector f_const;       // r
  Matrix f_decision;    // r x m (closed) or r x mN (open)
  Vector f_eps;         // r
  std::vector<RowLabel> labels;

  Eigen::Index rows() const { return e.rows(); }
  Eigen::Index disturbance_dim() const { return e.cols(); }
  Eigen::Index decision_dim() const { return f_decision.cols(); }

  Matrix a_b() const;
  Vector b_b() const;
  Vector f(const Vector& decision, double eps) const;
};

/// Blocks for u = alpha1 x + alpha2. With `include_inputs` false the 2mN
/// input-bound rows are omitted (unbounded input, eps0 = +inf).
FarkasBlocks closed_loop_blocks(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0,
                                const Matrix& alpha1, bool include_inputs = true);

/// Blocks for an open-loop input sequence; input bounds are left to the
/// caller as box bounds on v.
FarkasBlocks open_loop_blocks(const LtvSystem& system, const spec::TimedSets& sets, const Vector& x0);

/// ||E_i||_1 per row. The robust constraint holds iff mu * norms <= F.
Vector l1_row_norms(const FarkasBlocks& blocks);

enum class Formulation { l1, multiplier };

/// Where the scalar unknowns of a robust constraint system live in an LP.
/// A negative index means the quantity is the fixed `*_value` instead.
struct RobustLayout {
  Eigen::Index mu_var = -1;
  double mu_value = 0.0;
  Eigen::Index eps_var = -1;
  double eps_value = 0.0;
  Eigen::Index decision_offset = 0;
  /// First variable of the multiplier block (multiplier formulation only).
  Eigen::Index multiplier_offset = -1;
  /// Optional uniform relaxation t: every robust row becomes ... <= F_i + t.
  Eigen::Index slack_var = -1;
};

/// Variables the multiplier formulation needs: r x 2n(N+1) entries of P.
Eigen::Index multiplier_variable_count(const FarkasBlocks& blocks);

/// Appends the robust rows to `program`. The l1 form adds one inequality per
/// row; the multiplier form adds P >= 0 with P A_b = mu E and P B_b <= F.
void append_robust_rows(lp::LinearProgram& program, const FarkasBlocks& blocks, const RobustLayout& layout,
                        Formulation formulation = Formulation::l1);

struct Certificate {
  bool satisfied = false;
  double worst_margin = 0.0;
  DisturbanceSequence witness;
  std::string method;
  std::size_t checked = 0;
};

struct CertifyOptions {
  /// Refuse enumeration when n N exceeds this many bits.
  std::size_t max_bits = 24;
  double tolerance = 1e-9;
};

/// Enumerates all 2^{nN} sequences with components in {-mu, +mu}. The margin
/// of a vertex is the spec margin, further reduced by eps - ||u||_inf when an
/// input bound is given. Ties pick the lowest vertex index. Controllers must
/// be linear feedback or open-loop sequences.
Certificate certify_vertices(const LtvSystem& system, const Controller& controller, const Vector& x0, double mu,
                             const spec::TimedSets& sets, std::optional<double> eps,
                             const CertifyOptions& options = {});

/// Single-threaded reference for certify_vertices.
Certificate certify_vertices_serial(const LtvSystem& system, const Controller& controller, const Vector& x0,
                                    double mu, const spec::TimedSets& sets, std::optional<double> eps,
                                    const CertifyOptions& options = {});

/// Exact check for polytopic specs of any size: each constraint row is
/// affine in d, so its worst case is the vertex matching the signs of its
/// disturbance sensitivities, measured here by unit-impulse rollouts.
Certificate certify_row_extremes(const LtvSystem& system, const Controller& controller, const Vector& x0,
                                 double mu, const spec::TimedSets& sets, std::optional<double> eps,
                                 const CertifyOptions& options = {});

/// Vertex enumeration within the guard, row extremes beyond it.
Certificate certify(const LtvSystem& system, const Controller& controller, const Vector& x0, double mu,
                    const spec::TimedSets& sets, std::optional<double> eps, const CertifyOptions& options = {});

}  // namespace resil::farkas
