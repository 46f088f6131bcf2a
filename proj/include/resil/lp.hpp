#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace resil::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { minimize, maximize };
enum class Status { optimal, infeasible, unbounded };

std::string to_string(Status status);

/// Dense linear program
///
///   min/max  c.x   s.t.  A_in x <= b_in,  A_eq x = b_eq,  lower <= x <= upper.
///
/// Bounds may be infinite. Rows are appended one at a time; the program owns
/// its data and is cheap enough to rebuild for every solve at the sizes used
/// here (a few hundred rows).
class LinearProgram {
 public:
  explicit LinearProgram(Eigen::Index num_vars, Sense sense = Sense::minimize);

  Eigen::Index num_vars() const { return objective_.size(); }
  Sense sense() const { return sense_; }

  void set_objective(const Eigen::VectorXd& c);
  void set_objective_coefficient(Eigen::Index var, double value);
  void set_bounds(Eigen::Index var, double lower, double upper);

  void add_inequality(const Eigen::RowVectorXd& row, double rhs);
  void add_equality(const Eigen::RowVectorXd& row, double rhs);

  const Eigen::VectorXd& objective() const { return objective_; }
  const Eigen::VectorXd& lower() const { return lower_; }
  const Eigen::VectorXd& upper() const { return upper_; }
  Eigen::MatrixXd inequality_matrix() const;
  Eigen::VectorXd inequality_rhs() const;
  Eigen::MatrixXd equality_matrix() const;
  Eigen::VectorXd equality_rhs() const;
  Eigen::Index num_inequalities() const { return static_cast<Eigen::Index>(in_rows_.size()); }
  Eigen::Index num_equalities() const { return static_cast<Eigen::Index>(eq_rows_.size()); }

  /// Validates dimensions and finiteness; throws InputError.
  void validate() const;

  /// Plain-text tableau dump used for debugging:
  ///
  ///   lp <min|max> <vars> <ineq> <eq>
  ///   c <c_0> ... <c_{n-1}>
  ///   bounds <j> <lower> <upper>          (one line per variable)
  ///   le <a_0> ... <a_{n-1}> | <b>        (one line per inequality)
  ///   eq <a_0> ... <a_{n-1}> | <b>        (one line per equality)
  ///
  /// Numbers use shortest round-trip formatting; infinities print as inf/-inf.
  void dump(std::ostream& os) const;

 private:
  Sense sense_;
  Eigen::VectorXd objective_;
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
  std::vector<Eigen::RowVectorXd> in_rows_;
  std::vector<double> in_rhs_;
  std::vector<Eigen::RowVectorXd> eq_rows_;
  std::vector<double> eq_rhs_;
};

struct Solution {
  Status status = Status::infeasible;
  Eigen::VectorXd x;
  double objective = 0.0;
  long iterations = 0;
  /// Lagrange multipliers of the inequality rows (>= 0) and equality rows,
  /// normalized so that for a minimization  c + A_in' y_in + A_eq' y_eq  is
  /// the reduced-cost vector (for maximization the sign of c is flipped).
  Eigen::VectorXd inequality_duals;
  Eigen::VectorXd equality_duals;
};

struct Options {
  double pivot_tolerance = 1e-9;
  double feasibility_tolerance = 1e-8;
  /// Consecutive degenerate pivots after which Bland's rule takes over.
  int degenerate_switch = 25;
  /// 0 selects a size-dependent cap.
  long max_iterations = 0;
};

/// Two-phase primal simplex on a dense tableau. Pricing uses the most negative
/// reduced cost with lowest-index tie-breaking and falls back to Bland's rule
/// on degenerate stalls, so the pivot sequence is a pure function of the
/// program. Throws NumericalError when the iteration budget runs out.
Solution solve(const LinearProgram& program, const Options& options = {});

/// Residuals of the optimality certificate carried by an optimal solution.
struct CertificateCheck {
  double primal_infeasibility = 0.0;   // max constraint/bound violation
  double dual_infeasibility = 0.0;     // max wrong-sign multiplier or reduced cost
  double complementary_slackness = 0.0;
  double duality_gap = 0.0;            // |primal objective - dual objective|
};

CertificateCheck check_certificate(const LinearProgram& program, const Solution& solution);

}  // namespace resil::lp
