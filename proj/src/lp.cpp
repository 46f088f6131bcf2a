#include "resil/lp.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>

#include "resil/error.hpp"

namespace resil::lp {

std::string to_string(Status status) {
  switch (status) {
    case Status::optimal: return "optimal";
    case Status::infeasible: return "infeasible";
    case Status::unbounded: return "unbounded";
  }
  return "unknown";
}

LinearProgram::LinearProgram(Eigen::Index num_vars, Sense sense)
    : sense_(sense),
      objective_(Eigen::VectorXd::Zero(num_vars)),
      lower_(Eigen::VectorXd::Zero(num_vars)),
      upper_(Eigen::VectorXd::Constant(num_vars, kInf)) {
  if (num_vars < 1) throw InputError("lp", "a linear program needs at least one variable");
}

void LinearProgram::set_objective(const Eigen::VectorXd& c) {
  if (c.size() != num_vars()) throw InputError("lp", "objective length does not match variable count");
  objective_ = c;
}

void LinearProgram::set_objective_coefficient(Eigen::Index var, double value) {
  if (var < 0 || var >= num_vars()) throw InputError("lp", "objective index out of range");
  objective_(var) = value;
}

void LinearProgram::set_bounds(Eigen::Index var, double lower, double upper) {
  if (var < 0 || var >= num_vars()) throw InputError("lp", "bound index out of range");
  if (std::isnan(lower) || std::isnan(upper) || lower > upper || lower == kInf || upper == -kInf)
    throw InputError("lp", "invalid bounds for variable " + std::to_string(var));
  lower_(var) = lower;
  upper_(var) = upper;
}

void LinearProgram::add_inequality(const Eigen::RowVectorXd& row, double rhs) {
  if (row.size() != num_vars()) throw InputError("lp", "inequality row has wrong length");
  in_rows_.push_back(row);
  in_rhs_.push_back(rhs);
}

void LinearProgram::add_equality(const Eigen::RowVectorXd& row, double rhs) {
  if (row.size() != num_vars()) throw InputError("lp", "equality row has wrong length");
  eq_rows_.push_back(row);
  eq_rhs_.push_back(rhs);
}

Eigen::MatrixXd LinearProgram::inequality_matrix() const {
  Eigen::MatrixXd m(num_inequalities(), num_vars());
  for (Eigen::Index i = 0; i < num_inequalities(); ++i) m.row(i) = in_rows_[static_cast<std::size_t>(i)];
  return m;
}

Eigen::VectorXd LinearProgram::inequality_rhs() const {
  return Eigen::Map<const Eigen::VectorXd>(in_rhs_.data(), num_inequalities());
}

Eigen::MatrixXd LinearProgram::equality_matrix() const {
  Eigen::MatrixXd m(num_equalities(), num_vars());
  for (Eigen::Index i = 0; i < num_equalities(); ++i) m.row(i) = eq_rows_[static_cast<std::size_t>(i)];
  return m;
}

Eigen::VectorXd LinearProgram::equality_rhs() const {
  return Eigen::Map<const Eigen::VectorXd>(eq_rhs_.data(), num_equalities());
}

void LinearProgram::validate() const {
  if (!objective_.allFinite()) throw InputError("lp", "objective has non-finite entries");
  for (std::size_t i = 0; i < in_rows_.size(); ++i)
    if (!in_rows_[i].allFinite() || !std::isfinite(in_rhs_[i]))
      throw InputError("lp", "inequality " + std::to_string(i) + " has non-finite entries");
  for (std::size_t i = 0; i < eq_rows_.size(); ++i)
    if (!eq_rows_[i].allFinite() || !std::isfinite(eq_rhs_[i]))
      throw InputError("lp", "equality " + std::to_string(i) + " has non-finite entries");
}

namespace {

void write_number(std::ostream& os, double v) {
  if (std::isinf(v)) {
    os << (v > 0 ? "inf" : "-inf");
    return;
  }
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  os.write(buf, res.ptr - buf);
}

}  // namespace

void LinearProgram::dump(std::ostream& os) const {
  os << "lp " << (sense_ == Sense::minimize ? "min" : "max") << ' ' << num_vars() << ' '
     << num_inequalities() << ' ' << num_equalities() << '\n';
  os << 'c';
  for (double v : objective_) os << ' ', write_number(os, v);
  os << '\n';
  for (Eigen::Index j = 0; j < num_vars(); ++j) {
    os << "bounds " << j << ' ';
    write_number(os, lower_(j));
    os << ' ';
    write_number(os, upper_(j));
    os << '\n';
  }
  auto rows = [&](const char* tag, const auto& mat, const auto& rhs) {
    for (std::size_t i = 0; i < mat.size(); ++i) {
      os << tag;
      for (double v : mat[i]) os << ' ', write_number(os, v);
      os << " | ";
      write_number(os, rhs[i]);
      os << '\n';
    }
  };
  rows("le", in_rows_, in_rhs_);
  rows("eq", eq_rows_, eq_rhs_);
}

namespace {

// Column substitution x_j = offset_j + sum(coef * column).
struct VarMap {
  double offset = 0.0;
  Eigen::Index plus = -1;   // column with coefficient +1
  Eigen::Index minus = -1;  // column with coefficient -1
};

struct StdRow {
  Eigen::RowVectorXd coeffs;  // over structural columns
  double rhs = 0.0;
  bool equality = false;
  int origin = 0;  // 0: inequality, 1: equality, 2: bound row
  Eigen::Index origin_index = 0;
};

// Standard form  M z = rhs,  z >= 0,  rhs >= 0, with an identity column per row.
class Simplex {
 public:
  Simplex(const LinearProgram& program, const Options& options) : program_(program), options_(options) {
    build();
  }

  Solution run();

 private:
  void build();
  void pivot(Eigen::Index row, Eigen::Index col);
  // Returns false when unbounded.
  bool iterate(bool phase_one, long& iterations);
  void price(bool phase_one);
  Eigen::Index choose_entering(bool phase_one, bool bland) const;
  Eigen::Index choose_leaving(Eigen::Index col) const;
  void refine(Solution& solution) const;

  const LinearProgram& program_;
  const Options& options_;

  std::vector<VarMap> var_map_;
  Eigen::Index num_structural_ = 0;
  Eigen::Index num_cols_ = 0;
  Eigen::Index first_artificial_ = 0;
  std::vector<StdRow> rows_;
  std::vector<double> row_sign_;        // +1 / -1 applied to make rhs >= 0
  std::vector<Eigen::Index> unit_col_;  // identity column of each row
  Eigen::MatrixXd matrix_;              // original standard-form matrix
  Eigen::VectorXd rhs_;
  Eigen::VectorXd cost_;                // phase-two cost over all columns

  Eigen::MatrixXd tableau_;
  Eigen::VectorXd values_;  // current rhs column of the tableau
  Eigen::VectorXd reduced_;
  std::vector<Eigen::Index> basis_;
};

void Simplex::build() {
  const Eigen::Index n = program_.num_vars();
  const auto& lo = program_.lower();
  const auto& up = program_.upper();

  var_map_.resize(static_cast<std::size_t>(n));
  Eigen::Index col = 0;
  std::vector<std::pair<Eigen::Index, double>> bound_rows;  // (column, range)
  for (Eigen::Index j = 0; j < n; ++j) {
    VarMap& vm = var_map_[static_cast<std::size_t>(j)];
    if (std::isfinite(lo(j))) {
      vm.offset = lo(j);
      vm.plus = col++;
      if (std::isfinite(up(j))) bound_rows.emplace_back(vm.plus, up(j) - lo(j));
    } else if (std::isfinite(up(j))) {
      vm.offset = up(j);
      vm.minus = col++;
    } else {
      vm.plus = col++;
      vm.minus = col++;
    }
  }
  num_structural_ = col;

  auto transform = [&](const Eigen::RowVectorXd& a, double b, bool eq, int origin, Eigen::Index idx) {
    StdRow r;
    r.coeffs = Eigen::RowVectorXd::Zero(num_structural_);
    r.rhs = b;
    for (Eigen::Index j = 0; j < n; ++j) {
      const VarMap& vm = var_map_[static_cast<std::size_t>(j)];
      if (a(j) == 0.0) continue;
      r.rhs -= a(j) * vm.offset;
      if (vm.plus >= 0) r.coeffs(vm.plus) += a(j);
      if (vm.minus >= 0) r.coeffs(vm.minus) -= a(j);
    }
    r.equality = eq;
    r.origin = origin;
    r.origin_index = idx;
    rows_.push_back(std::move(r));
  };

  const Eigen::MatrixXd ain = program_.inequality_matrix();
  const Eigen::VectorXd bin = program_.inequality_rhs();
  for (Eigen::Index i = 0; i < ain.rows(); ++i) transform(ain.row(i), bin(i), false, 0, i);
  const Eigen::MatrixXd aeq = program_.equality_matrix();
  const Eigen::VectorXd beq = program_.equality_rhs();
  for (Eigen::Index i = 0; i < aeq.rows(); ++i) transform(aeq.row(i), beq(i), true, 1, i);
  for (std::size_t k = 0; k < bound_rows.size(); ++k) {
    StdRow r;
    r.coeffs = Eigen::RowVectorXd::Zero(num_structural_);
    r.coeffs(bound_rows[k].first) = 1.0;
    r.rhs = bound_rows[k].second;
    r.origin = 2;
    r.origin_index = static_cast<Eigen::Index>(k);
    rows_.push_back(std::move(r));
  }

  const Eigen::Index m = static_cast<Eigen::Index>(rows_.size());
  Eigen::Index num_slack = 0;
  for (const auto& r : rows_) num_slack += r.equality ? 0 : 1;
  Eigen::Index num_art = 0;
  for (const auto& r : rows_) num_art += (r.equality || r.rhs < 0.0) ? 1 : 0;

  first_artificial_ = num_structural_ + num_slack;
  num_cols_ = first_artificial_ + num_art;
  matrix_ = Eigen::MatrixXd::Zero(m, num_cols_);
  rhs_.resize(m);
  row_sign_.assign(static_cast<std::size_t>(m), 1.0);
  unit_col_.assign(static_cast<std::size_t>(m), -1);

  Eigen::Index slack = num_structural_;
  Eigen::Index art = first_artificial_;
  for (Eigen::Index i = 0; i < m; ++i) {
    const StdRow& r = rows_[static_cast<std::size_t>(i)];
    const double sign = r.rhs < 0.0 ? -1.0 : 1.0;
    row_sign_[static_cast<std::size_t>(i)] = sign;
    matrix_.row(i).head(num_structural_) = sign * r.coeffs;
    rhs_(i) = sign * r.rhs;
    if (!r.equality) {
      matrix_(i, slack) = sign;
      if (sign > 0) unit_col_[static_cast<std::size_t>(i)] = slack;
      ++slack;
    }
    if (unit_col_[static_cast<std::size_t>(i)] < 0) {
      matrix_(i, art) = 1.0;
      unit_col_[static_cast<std::size_t>(i)] = art++;
    }
  }

  const double flip = program_.sense() == Sense::maximize ? -1.0 : 1.0;
  cost_ = Eigen::VectorXd::Zero(num_cols_);
  const auto& c = program_.objective();
  for (Eigen::Index j = 0; j < n; ++j) {
    const VarMap& vm = var_map_[static_cast<std::size_t>(j)];
    if (vm.plus >= 0) cost_(vm.plus) += flip * c(j);
    if (vm.minus >= 0) cost_(vm.minus) -= flip * c(j);
  }

  tableau_ = matrix_;
  values_ = rhs_;
  basis_ = unit_col_;
}

void Simplex::pivot(Eigen::Index row, Eigen::Index col) {
  const double piv = tableau_(row, col);
  tableau_.row(row) /= piv;
  values_(row) /= piv;
  Eigen::VectorXd factors = tableau_.col(col);
  factors(row) = 0.0;
  tableau_.noalias() -= factors * tableau_.row(row);
  values_ -= factors * values_(row);
  tableau_.col(col).setZero();
  tableau_(row, col) = 1.0;
  reduced_ -= reduced_(col) * tableau_.row(row).transpose();
  reduced_(col) = 0.0;
  basis_[static_cast<std::size_t>(row)] = col;
}

void Simplex::price(bool phase_one) {
  Eigen::VectorXd cost = Eigen::VectorXd::Zero(num_cols_);
  if (phase_one) {
    cost.tail(num_cols_ - first_artificial_).setOnes();
  } else {
    cost = cost_;
  }
  Eigen::VectorXd cb(tableau_.rows());
  for (Eigen::Index i = 0; i < tableau_.rows(); ++i) cb(i) = cost(basis_[static_cast<std::size_t>(i)]);
  reduced_ = cost - tableau_.transpose() * cb;
  for (Eigen::Index b : basis_) reduced_(b) = 0.0;
}

Eigen::Index Simplex::choose_entering(bool phase_one, bool bland) const {
  const Eigen::Index limit = phase_one ? num_cols_ : first_artificial_;
  const double tol = options_.pivot_tolerance;
  Eigen::Index best = -1;
  double best_value = -tol;
  for (Eigen::Index j = 0; j < limit; ++j) {
    if (reduced_(j) < best_value) {
      best = j;
      if (bland) break;
      best_value = reduced_(j);
    }
  }
  return best;
}

Eigen::Index Simplex::choose_leaving(Eigen::Index col) const {
  const double tol = options_.pivot_tolerance;
  Eigen::Index best = -1;
  double best_ratio = kInf;
  for (Eigen::Index i = 0; i < tableau_.rows(); ++i) {
    const double a = tableau_(i, col);
    if (a <= tol) continue;
    const double ratio = std::max(values_(i), 0.0) / a;
    const double slack = 1e-12 * std::max(1.0, std::abs(best_ratio));
    if (best < 0 || ratio < best_ratio - slack ||
        (ratio <= best_ratio + slack &&
         basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(best)])) {
      if (best < 0 || ratio < best_ratio - slack) best_ratio = ratio;
      best = i;
    }
  }
  return best;
}

bool Simplex::iterate(bool phase_one, long& iterations) {
  const long cap = options_.max_iterations > 0
                       ? options_.max_iterations
                       : 20000 + 50 * static_cast<long>(tableau_.rows() + num_cols_);
  int degenerate_run = 0;
  for (;;) {
    const bool bland = degenerate_run >= options_.degenerate_switch;
    const Eigen::Index q = choose_entering(phase_one, bland);
    if (q < 0) return true;
    const Eigen::Index p = choose_leaving(q);
    if (p < 0) return false;
    if (++iterations > cap)
      throw NumericalError("lp", "simplex iteration budget exhausted after " + std::to_string(cap) +
                                     " pivots (degenerate cycling not resolved by Bland's rule)");
    const double step = std::max(values_(p), 0.0) / tableau_(p, q);
    degenerate_run = step <= 1e-12 ? degenerate_run + 1 : 0;
    pivot(p, q);
  }
}

void Simplex::refine(Solution& solution) const {
  const Eigen::Index m = tableau_.rows();
  Eigen::MatrixXd basis_matrix(m, m);
  Eigen::VectorXd cb(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    basis_matrix.col(i) = matrix_.col(basis_[static_cast<std::size_t>(i)]);
    cb(i) = cost_(basis_[static_cast<std::size_t>(i)]);
  }
  Eigen::VectorXd z = Eigen::VectorXd::Zero(num_cols_);
  Eigen::VectorXd pi = Eigen::VectorXd::Zero(m);
  if (m > 0) {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(basis_matrix);
    const Eigen::VectorXd xb = lu.solve(rhs_);
    pi = lu.transpose().solve(cb);
    for (Eigen::Index i = 0; i < m; ++i) z(basis_[static_cast<std::size_t>(i)]) = std::max(xb(i), 0.0);
  }

  const Eigen::Index n = program_.num_vars();
  solution.x.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const VarMap& vm = var_map_[static_cast<std::size_t>(j)];
    double v = vm.offset;
    if (vm.plus >= 0) v += z(vm.plus);
    if (vm.minus >= 0) v -= z(vm.minus);
    solution.x(j) = v;
  }
  solution.objective = program_.objective().dot(solution.x);

  solution.inequality_duals = Eigen::VectorXd::Zero(program_.num_inequalities());
  solution.equality_duals = Eigen::VectorXd::Zero(program_.num_equalities());
  for (Eigen::Index i = 0; i < m; ++i) {
    const StdRow& r = rows_[static_cast<std::size_t>(i)];
    const double y = -row_sign_[static_cast<std::size_t>(i)] * pi(i);
    if (r.origin == 0) solution.inequality_duals(r.origin_index) = y;
    if (r.origin == 1) solution.equality_duals(r.origin_index) = y;
  }
}

Solution Simplex::run() {
  Solution solution;
  long iterations = 0;

  if (first_artificial_ < num_cols_) {
    price(true);
    iterate(true, iterations);
    double infeasibility = 0.0;
    for (Eigen::Index i = 0; i < tableau_.rows(); ++i)
      if (basis_[static_cast<std::size_t>(i)] >= first_artificial_) infeasibility += std::max(values_(i), 0.0);
    const double scale = 1.0 + (rhs_.size() > 0 ? rhs_.cwiseAbs().maxCoeff() : 0.0);
    if (infeasibility > options_.feasibility_tolerance * scale) {
      solution.status = Status::infeasible;
      solution.iterations = iterations;
      return solution;
    }
    // Drive zero-valued artificials out of the basis where possible.
    for (Eigen::Index i = 0; i < tableau_.rows(); ++i) {
      if (basis_[static_cast<std::size_t>(i)] < first_artificial_) continue;
      for (Eigen::Index j = 0; j < first_artificial_; ++j) {
        if (std::abs(tableau_(i, j)) > options_.pivot_tolerance) {
          pivot(i, j);
          break;
        }
      }
    }
  }

  price(false);
  if (!iterate(false, iterations)) {
    solution.status = Status::unbounded;
    solution.iterations = iterations;
    return solution;
  }
  solution.status = Status::optimal;
  solution.iterations = iterations;
  refine(solution);
  return solution;
}

}  // namespace

Solution solve(const LinearProgram& program, const Options& options) {
  program.validate();
  Simplex simplex(program, options);
  return simplex.run();
}

CertificateCheck check_certificate(const LinearProgram& program, const Solution& solution) {
  CertificateCheck check;
  if (solution.status != Status::optimal) return check;
  const Eigen::VectorXd& x = solution.x;
  const double flip = program.sense() == Sense::maximize ? -1.0 : 1.0;
  const Eigen::VectorXd c = flip * program.objective();
  const Eigen::MatrixXd ain = program.inequality_matrix();
  const Eigen::VectorXd bin = program.inequality_rhs();
  const Eigen::MatrixXd aeq = program.equality_matrix();
  const Eigen::VectorXd beq = program.equality_rhs();
  const Eigen::VectorXd& yin = solution.inequality_duals;
  const Eigen::VectorXd& yeq = solution.equality_duals;
  const auto& lo = program.lower();
  const auto& up = program.upper();

  Eigen::VectorXd d = c;
  if (ain.rows() > 0) d += ain.transpose() * yin;
  if (aeq.rows() > 0) d += aeq.transpose() * yeq;

  double primal = 0.0, dual = 0.0, comp = 0.0;
  double dual_objective = 0.0;
  for (Eigen::Index i = 0; i < ain.rows(); ++i) {
    const double slack = bin(i) - ain.row(i).dot(x);
    primal = std::max(primal, -slack);
    dual = std::max(dual, -yin(i));
    comp = std::max(comp, std::abs(yin(i) * slack));
    dual_objective -= yin(i) * bin(i);
  }
  for (Eigen::Index i = 0; i < aeq.rows(); ++i) {
    primal = std::max(primal, std::abs(aeq.row(i).dot(x) - beq(i)));
    dual_objective -= yeq(i) * beq(i);
  }
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    primal = std::max({primal, lo(j) - x(j), x(j) - up(j)});
    if (d(j) > 0.0) {
      if (std::isfinite(lo(j))) {
        comp = std::max(comp, d(j) * std::abs(x(j) - lo(j)));
        dual_objective += d(j) * lo(j);
      } else {
        dual = std::max(dual, d(j));
      }
    } else if (d(j) < 0.0) {
      if (std::isfinite(up(j))) {
        comp = std::max(comp, -d(j) * std::abs(up(j) - x(j)));
        dual_objective += d(j) * up(j);
      } else {
        dual = std::max(dual, -d(j));
      }
    }
  }
  check.primal_infeasibility = primal;
  check.dual_infeasibility = dual;
  check.complementary_slackness = comp;
  check.duality_gap = std::abs(c.dot(x) - dual_objective);
  return check;
}

}  // namespace resil::lp
