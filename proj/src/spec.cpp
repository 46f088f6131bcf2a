#include "resil/spec.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>

#include "resil/error.hpp"

namespace resil::spec {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

HalfspacePolytope HalfspacePolytope::box(const Vector& lower, const Vector& upper) {
  if (lower.size() != upper.size()) throw InputError("spec", "box bounds differ in length");
  const Eigen::Index n = lower.size();
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(lower(i) <= upper(i))) throw InputError("spec", "box interval " + std::to_string(i) + " is empty");
  HalfspacePolytope p;
  p.g.resize(2 * n, n);
  p.g << Matrix::Identity(n, n), -Matrix::Identity(n, n);
  p.h.resize(2 * n);
  p.h << upper, -lower;
  return p;
}

double HalfspacePolytope::slack(const Vector& x) const {
  if (g.rows() == 0) return kInf;
  return (h - g * x).minCoeff();
}

double NormBall::slack(const Vector& x) const {
  Vector projected;
  if (axes.empty()) {
    projected = x;
  } else {
    projected.resize(static_cast<Eigen::Index>(axes.size()));
    for (std::size_t i = 0; i < axes.size(); ++i) projected(static_cast<Eigen::Index>(i)) = x(axes[i]);
  }
  const Vector diff = projected - center;
  const double dist = norm == BallNorm::infinity ? diff.cwiseAbs().maxCoeff() : diff.norm();
  return exterior ? dist - radius : radius - dist;
}

HalfspacePolytope NormBall::to_polytope(Eigen::Index state_dim) const {
  if (norm != BallNorm::infinity || exterior)
    throw InputError("spec", "only interior infinity-norm balls have a halfspace form");
  std::vector<Eigen::Index> idx = axes;
  if (idx.empty())
    for (Eigen::Index i = 0; i < state_dim; ++i) idx.push_back(i);
  const auto k = static_cast<Eigen::Index>(idx.size());
  HalfspacePolytope p;
  p.g = Matrix::Zero(2 * k, state_dim);
  p.h.resize(2 * k);
  for (Eigen::Index r = 0; r < k; ++r) {
    p.g(r, idx[static_cast<std::size_t>(r)]) = 1.0;
    p.h(r) = center(r) + radius;
    p.g(k + r, idx[static_cast<std::size_t>(r)]) = -1.0;
    p.h(k + r) = radius - center(r);
  }
  return p;
}

Formula Formula::next(std::size_t step, std::string region) {
  Formula f;
  f.kind = Kind::next;
  f.from = f.to = step;
  f.region = std::move(region);
  return f;
}

Formula Formula::always(std::size_t from, std::size_t to, std::string region) {
  Formula f;
  f.kind = Kind::always;
  f.from = from;
  f.to = to;
  f.region = std::move(region);
  return f;
}

Formula Formula::eventually(std::size_t from, std::size_t to, std::string region) {
  Formula f = always(from, to, std::move(region));
  f.kind = Kind::eventually;
  return f;
}

Formula Formula::conjunction(std::vector<Formula> children) {
  Formula f;
  f.kind = Kind::conjunction;
  f.children = std::move(children);
  return f;
}

std::string to_string(const Formula& formula) {
  switch (formula.kind) {
    case Formula::Kind::next:
      return "next^" + std::to_string(formula.from) + "(" + formula.region + ")";
    case Formula::Kind::always:
      return "always[" + std::to_string(formula.from) + "," + std::to_string(formula.to) + "](" +
             formula.region + ")";
    case Formula::Kind::eventually:
      return "eventually[" + std::to_string(formula.from) + "," + std::to_string(formula.to) + "](" +
             formula.region + ")";
    case Formula::Kind::conjunction: {
      if (formula.children.empty()) return "true";
      std::string out;
      for (std::size_t i = 0; i < formula.children.size(); ++i) {
        if (i) out += " & ";
        out += to_string(formula.children[i]);
      }
      return out;
    }
  }
  return {};
}

namespace {

class Parser {
 public:
  Parser(const std::string& text, const RegionTable& regions, std::size_t horizon)
      : text_(text), regions_(regions), horizon_(horizon) {}

  Formula parse() {
    std::vector<Formula> terms;
    skip_space();
    if (pos_ == text_.size()) return Formula::conjunction({});
    for (;;) {
      Formula t = term();
      if (!(t.kind == Formula::Kind::conjunction && t.children.empty())) terms.push_back(std::move(t));
      skip_space();
      if (pos_ == text_.size()) break;
      expect('&');
    }
    return Formula::conjunction(std::move(terms));
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const { throw SyntaxError(what, pos_); }

  void expect(char c) {
    skip_space();
    if (pos_ >= text_.size() || text_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  bool peek(char c) {
    skip_space();
    return pos_ < text_.size() && text_[pos_] == c;
  }

  std::string identifier() {
    skip_space();
    const std::size_t start = pos_;
    if (pos_ >= text_.size() || !(std::isalpha(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      fail("expected identifier");
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    return text_.substr(start, pos_ - start);
  }

  std::size_t integer() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (start == pos_) fail("expected integer");
    if (pos_ - start > 9) fail("time index too large");
    return static_cast<std::size_t>(std::stoul(text_.substr(start, pos_ - start)));
  }

  std::string region_argument() {
    expect('(');
    const std::size_t at = pos_;
    std::string name = identifier();
    if (!regions_.count(name)) throw InputError("spec", "unknown region '" + name + "' at position " +
                                                            std::to_string(at));
    expect(')');
    return name;
  }

  void check_step(std::size_t step, std::size_t at) const {
    if (step > horizon_)
      throw InputError("spec", "time index " + std::to_string(step) + " at position " + std::to_string(at) +
                                   " exceeds horizon " + std::to_string(horizon_));
  }

  Formula term() {
    skip_space();
    const std::size_t start = pos_;
    const std::string word = identifier();
    if (word == "next" && peek('^')) {
      expect('^');
      const std::size_t at = pos_;
      const std::size_t step = integer();
      check_step(step, at);
      return Formula::next(step, region_argument());
    }
    if ((word == "always" || word == "eventually") && peek('[')) {
      expect('[');
      const std::size_t at = pos_;
      const std::size_t from = integer();
      expect(',');
      const std::size_t to = integer();
      expect(']');
      check_step(from, at);
      check_step(to, at);
      if (from > to)
        throw InputError("spec", "interval [" + std::to_string(from) + "," + std::to_string(to) +
                                     "] at position " + std::to_string(at) + " is reversed");
      std::string region = region_argument();
      return word == "always" ? Formula::always(from, to, std::move(region))
                              : Formula::eventually(from, to, std::move(region));
    }
    if (word == "true" && !regions_.count(word)) return Formula::conjunction({});
    if (!regions_.count(word))
      throw InputError("spec", "unknown region '" + word + "' at position " + std::to_string(start));
    return Formula::next(0, word);
  }

  const std::string& text_;
  const RegionTable& regions_;
  std::size_t horizon_;
  std::size_t pos_ = 0;
};

void append_rows(HalfspacePolytope& dst, const HalfspacePolytope& src) {
  if (src.rows() == 0) return;
  Matrix g(dst.rows() + src.rows(), src.g.cols());
  Vector h(dst.rows() + src.rows());
  if (dst.rows() > 0) {
    g.topRows(dst.rows()) = dst.g;
    h.head(dst.rows()) = dst.h;
  }
  g.bottomRows(src.rows()) = src.g;
  h.tail(src.rows()) = src.h;
  dst.g = std::move(g);
  dst.h = std::move(h);
}

void check_region(const std::string& name, const Region& region, Eigen::Index n) {
  if (const auto* p = std::get_if<HalfspacePolytope>(&region)) {
    if (p->g.cols() != n || p->g.rows() != p->h.size())
      throw InputError("spec", "region '" + name + "' has inconsistent polytope dimensions");
    if (!p->g.allFinite() || !p->h.allFinite())
      throw InputError("spec", "region '" + name + "' has non-finite entries");
  } else {
    const auto& b = std::get<NormBall>(region);
    const Eigen::Index dim = b.axes.empty() ? n : static_cast<Eigen::Index>(b.axes.size());
    if (b.center.size() != dim) throw InputError("spec", "region '" + name + "' ball center has wrong length");
    for (Eigen::Index a : b.axes)
      if (a < 0 || a >= n) throw InputError("spec", "region '" + name + "' ball axis out of range");
    if (!(b.radius >= 0.0) || !std::isfinite(b.radius))
      throw InputError("spec", "region '" + name + "' ball radius must be finite and non-negative");
  }
}

void add_region(ConvexCell& cell, const Region& region, Eigen::Index n) {
  if (const auto* p = std::get_if<HalfspacePolytope>(&region)) {
    append_rows(cell.polytope, *p);
    return;
  }
  const auto& b = std::get<NormBall>(region);
  if (b.norm == BallNorm::infinity && !b.exterior) {
    append_rows(cell.polytope, b.to_polytope(n));
  } else {
    cell.balls.push_back(b);
  }
}

void flatten(const Formula& f, std::vector<const Formula*>& out) {
  if (f.kind == Formula::Kind::conjunction) {
    for (const auto& c : f.children) flatten(c, out);
  } else {
    out.push_back(&f);
  }
}

}  // namespace

Formula parse(const std::string& text, const RegionTable& regions, std::size_t horizon) {
  return Parser(text, regions, horizon).parse();
}

double ConvexCell::slack(const Vector& x) const {
  double s = polytope.slack(x);
  for (const auto& b : balls) s = std::min(s, b.slack(x));
  return s;
}

const HalfspacePolytope& TimedSets::step_polytope(std::size_t k) const {
  if (!polytopic) throw UnsupportedSpecError("spec", "specification is not a single product of polytopes");
  return terms.front().steps.at(k).polytope;
}

TimedSets compile(const Formula& formula, const RegionTable& regions, std::size_t horizon, Eigen::Index state_dim,
                  const CompileOptions& options) {
  if (state_dim < 1) throw InputError("spec", "state dimension must be positive");
  std::vector<const Formula*> leaves;
  flatten(formula, leaves);

  ProductTerm base;
  base.steps.resize(horizon + 1);
  for (auto& cell : base.steps) cell.polytope.g.resize(0, state_dim);

  TimedSets sets;
  sets.horizon = horizon;
  sets.state_dim = state_dim;
  sets.terms.push_back(std::move(base));

  for (const Formula* leaf : leaves) {
    auto it = regions.find(leaf->region);
    if (it == regions.end()) throw InputError("spec", "unknown region '" + leaf->region + "'");
    check_region(leaf->region, it->second, state_dim);
    if (leaf->to > horizon || leaf->from > leaf->to)
      throw InputError("spec", "operator " + to_string(*leaf) + " does not fit horizon " + std::to_string(horizon));
    if (leaf->kind == Formula::Kind::eventually) {
      const std::size_t width = leaf->to - leaf->from + 1;
      if (sets.terms.size() * width > options.max_terms)
        throw InputError("spec", "eventually operators expand to more than " + std::to_string(options.max_terms) +
                                     " product terms");
      std::vector<ProductTerm> expanded;
      expanded.reserve(sets.terms.size() * width);
      for (const auto& term : sets.terms) {
        for (std::size_t k = leaf->from; k <= leaf->to; ++k) {
          ProductTerm t = term;
          add_region(t.steps[k], it->second, state_dim);
          expanded.push_back(std::move(t));
        }
      }
      sets.terms = std::move(expanded);
    } else {
      for (auto& term : sets.terms)
        for (std::size_t k = leaf->from; k <= leaf->to; ++k) add_region(term.steps[k], it->second, state_dim);
    }
  }

  bool any_ball = false;
  bool any_exterior = false;
  for (const auto& term : sets.terms)
    for (const auto& cell : term.steps)
      for (const auto& b : cell.balls) {
        any_ball = true;
        any_exterior = any_exterior || b.exterior;
      }
  sets.polytopic = sets.terms.size() == 1 && !any_ball;
  sets.convex = sets.terms.size() == 1 && !any_exterior;
  return sets;
}

double margin(const std::vector<Vector>& states, const TimedSets& sets) {
  if (states.size() != sets.horizon + 1)
    throw InputError("spec", "trajectory has " + std::to_string(states.size()) + " states, specification needs " +
                                 std::to_string(sets.horizon + 1));
  for (const auto& x : states)
    if (x.size() != sets.state_dim) throw InputError("spec", "trajectory state has wrong dimension");
  double best = -kInf;
  for (const auto& term : sets.terms) {
    double worst = kInf;
    for (std::size_t k = 0; k <= sets.horizon; ++k) {
      worst = std::min(worst, term.steps[k].slack(states[k]));
      if (worst <= best) break;
    }
    best = std::max(best, worst);
  }
  return best;
}

double margin(const Trajectory& trajectory, const TimedSets& sets) { return margin(trajectory.states, sets); }

}  // namespace resil::spec
