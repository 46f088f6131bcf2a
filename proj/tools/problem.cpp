#include "problem.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "resil/error.hpp"

namespace resil::cli {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw InputError("cli", path + ": " + what);
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

json to_json(const toml::node& node) {
  if (auto t = node.as_table()) {
    json out = json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = to_json(v);
    return out;
  }
  if (auto a = node.as_array()) {
    json out = json::array();
    for (const auto& v : *a) out.push_back(to_json(v));
    return out;
  }
  if (auto i = node.as_integer()) return i->get();
  if (auto f = node.as_floating_point()) return number_json(f->get());
  if (auto b = node.as_boolean()) return b->get();
  if (auto s = node.as_string()) return s->get();
  return nullptr;
}

void check_keys(const toml::table& t, const std::set<std::string>& allowed, const std::string& path) {
  for (const auto& [k, v] : t) {
    const std::string key(k.str());
    if (!allowed.count(key)) fail(join(path, key), "unknown field");
  }
}

const toml::table& table_at(const toml::table& t, const std::string& key, const std::string& path) {
  const auto* node = t.get(key);
  if (!node) fail(join(path, key), "missing table");
  const auto* sub = node->as_table();
  if (!sub) fail(join(path, key), "expected a table");
  return *sub;
}

double as_number(const toml::node& node, const std::string& path) {
  if (auto i = node.as_integer()) return static_cast<double>(i->get());
  if (auto f = node.as_floating_point()) return f->get();
  fail(path, "expected a number");
}

std::optional<double> number(const toml::table& t, const std::string& key, const std::string& path) {
  const auto* node = t.get(key);
  if (!node) return std::nullopt;
  return as_number(*node, join(path, key));
}

double required_number(const toml::table& t, const std::string& key, const std::string& path) {
  auto v = number(t, key, path);
  if (!v) fail(join(path, key), "missing field");
  return *v;
}

std::optional<std::int64_t> integer(const toml::table& t, const std::string& key, const std::string& path) {
  const auto* node = t.get(key);
  if (!node) return std::nullopt;
  auto i = node->as_integer();
  if (!i) fail(join(path, key), "expected an integer");
  return i->get();
}

std::int64_t non_negative(const toml::table& t, const std::string& key, const std::string& path,
                          std::int64_t fallback) {
  auto v = integer(t, key, path).value_or(fallback);
  if (v < 0) fail(join(path, key), "must be non-negative");
  return v;
}

std::optional<std::string> string(const toml::table& t, const std::string& key, const std::string& path) {
  const auto* node = t.get(key);
  if (!node) return std::nullopt;
  auto s = node->as_string();
  if (!s) fail(join(path, key), "expected a string");
  return s->get();
}

std::optional<bool> boolean(const toml::table& t, const std::string& key, const std::string& path) {
  const auto* node = t.get(key);
  if (!node) return std::nullopt;
  auto b = node->as_boolean();
  if (!b) fail(join(path, key), "expected a boolean");
  return b->get();
}

Vector as_vector(const toml::node& node, const std::string& path) {
  const auto* a = node.as_array();
  if (!a) fail(path, "expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(a->size()));
  for (std::size_t i = 0; i < a->size(); ++i) v(static_cast<Eigen::Index>(i)) = as_number(*a->get(i), path + "[" + std::to_string(i) + "]");
  return v;
}

std::optional<Vector> vector(const toml::table& t, const std::string& key, const std::string& path) {
  const auto* node = t.get(key);
  if (!node) return std::nullopt;
  return as_vector(*node, join(path, key));
}

Matrix as_matrix(const toml::node& node, const std::string& path) {
  const auto* a = node.as_array();
  if (!a || a->empty()) fail(path, "expected a non-empty array of rows");
  Matrix m;
  for (std::size_t i = 0; i < a->size(); ++i) {
    const Vector row = as_vector(*a->get(i), path + "[" + std::to_string(i) + "]");
    if (i == 0) m.resize(static_cast<Eigen::Index>(a->size()), row.size());
    if (row.size() != m.cols()) fail(path, "rows have different lengths");
    m.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return m;
}

std::vector<Matrix> matrix_list(const toml::node& node, const std::string& path) {
  const auto* a = node.as_array();
  if (!a || a->empty()) fail(path, "expected a non-empty array of matrices");
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < a->size(); ++i) out.push_back(as_matrix(*a->get(i), path + "[" + std::to_string(i) + "]"));
  return out;
}

spec::Region parse_region(const toml::table& t, const std::string& path) {
  const auto kind = string(t, "kind", path).value_or("box");
  if (kind == "box") {
    check_keys(t, {"kind", "bounds", "units"}, path);
    const auto* node = t.get("bounds");
    if (!node) fail(join(path, "bounds"), "missing field");
    const Matrix b = as_matrix(*node, join(path, "bounds"));
    if (b.cols() != 2) fail(join(path, "bounds"), "expected [lower, upper] pairs");
    return spec::HalfspacePolytope::box(b.col(0), b.col(1));
  }
  if (kind == "polytope") {
    check_keys(t, {"kind", "G", "H", "units"}, path);
    const auto* g = t.get("G");
    if (!g) fail(join(path, "G"), "missing field");
    spec::HalfspacePolytope p;
    p.g = as_matrix(*g, join(path, "G"));
    auto h = vector(t, "H", path);
    if (!h) fail(join(path, "H"), "missing field");
    if (h->size() != p.g.rows()) fail(join(path, "H"), "length differs from the rows of G");
    p.h = *h;
    return p;
  }
  if (kind == "ball") {
    check_keys(t, {"kind", "center", "radius", "norm", "axes", "exterior", "units"}, path);
    spec::NormBall b;
    auto c = vector(t, "center", path);
    if (!c) fail(join(path, "center"), "missing field");
    b.center = *c;
    b.radius = required_number(t, "radius", path);
    if (b.radius < 0.0) fail(join(path, "radius"), "must be non-negative");
    const auto norm = string(t, "norm", path).value_or("euclidean");
    if (norm == "euclidean") {
      b.norm = spec::BallNorm::euclidean;
    } else if (norm == "infinity") {
      b.norm = spec::BallNorm::infinity;
    } else {
      fail(join(path, "norm"), "expected euclidean or infinity");
    }
    if (auto axes = vector(t, "axes", path))
      for (Eigen::Index i = 0; i < axes->size(); ++i) {
        const double a = (*axes)(i);
        if (a < 0 || a != std::floor(a)) fail(join(path, "axes"), "expected non-negative integers");
        b.axes.push_back(static_cast<Eigen::Index>(a));
      }
    b.exterior = boolean(t, "exterior", path).value_or(false);
    const auto dims = b.axes.empty() ? -1 : static_cast<Eigen::Index>(b.axes.size());
    if (dims >= 0 && b.center.size() != dims) fail(join(path, "center"), "length differs from axes");
    return b;
  }
  fail(join(path, "kind"), "expected box, polytope or ball");
}

Eigen::Index region_dim(const spec::Region& r) {
  if (auto p = std::get_if<spec::HalfspacePolytope>(&r)) return p->g.cols();
  const auto& b = std::get<spec::NormBall>(r);
  return b.axes.empty() ? b.center.size() : -1;
}

void parse_system(const toml::table& t, Problem& p) {
  const std::string path = "system";
  const auto kind = string(t, "kind", path);
  if (!kind) fail(join(path, "kind"), "missing field");
  if (*kind == "ltv") {
    check_keys(t, {"kind", "A", "B", "A_list", "B_list", "units"}, path);
    std::vector<Matrix> a;
    std::vector<Matrix> b;
    if (t.get("A_list")) {
      a = matrix_list(*t.get("A_list"), join(path, "A_list"));
    } else if (t.get("A")) {
      a.assign(p.horizon, as_matrix(*t.get("A"), join(path, "A")));
    } else {
      fail(join(path, "A"), "missing field");
    }
    if (t.get("B_list")) {
      b = matrix_list(*t.get("B_list"), join(path, "B_list"));
    } else if (t.get("B")) {
      b.assign(p.horizon, as_matrix(*t.get("B"), join(path, "B")));
    } else {
      fail(join(path, "B"), "missing field");
    }
    if (a.size() != p.horizon) fail(join(path, "A_list"), "expected one matrix per step");
    if (b.size() != p.horizon) fail(join(path, "B_list"), "expected one matrix per step");
    p.ltv = LtvSystem(a, b);
    p.system = NonlinearSystem::from_ltv(*p.ltv);
    p.model = "ltv";
    return;
  }
  if (*kind == "model") {
    check_keys(t, {"kind", "name", "parameters", "units"}, path);
    const auto name = string(t, "name", path);
    if (!name) fail(join(path, "name"), "missing field");
    scenario::Parameters params;
    if (t.get("parameters")) {
      const auto& pt = table_at(t, "parameters", path);
      for (const auto& [k, v] : pt) params[std::string(k.str())] = as_number(v, join(join(path, "parameters"), std::string(k.str())));
    }
    p.system = scenario::make_model(*name, params, p.horizon);
    p.model = *name;
    return;
  }
  fail(join(path, "kind"), "expected ltv or model");
}

void parse_query(const toml::table& t, Problem& p) {
  const std::string path = "query";
  check_keys(t, {"metric", "controller", "degree", "eps0", "mu0", "w1", "w2", "weights", "objective", "formulation"},
             path);
  auto& q = p.query;
  q.metric = string(t, "metric", path).value_or("resilience");
  if (q.metric != "resilience" && q.metric != "effort" && q.metric != "pareto" && q.metric != "scenario")
    fail(join(path, "metric"), "expected resilience, effort, pareto or scenario");
  q.controller = string(t, "controller", path).value_or("open");
  if (q.controller != "open" && q.controller != "linear" && q.controller != "polynomial")
    fail(join(path, "controller"), "expected open, linear or polynomial");
  q.degree = static_cast<int>(integer(t, "degree", path).value_or(2));
  if (q.degree < 0) fail(join(path, "degree"), "must be non-negative");
  q.eps0 = number(t, "eps0", path);
  q.mu0 = number(t, "mu0", path);
  if (q.eps0 && !(*q.eps0 >= 0.0)) fail(join(path, "eps0"), "must be non-negative");
  if (q.mu0 && !(*q.mu0 >= 0.0 && std::isfinite(*q.mu0))) fail(join(path, "mu0"), "must be finite and non-negative");
  if (const auto* w = t.get("weights")) {
    const Matrix m = as_matrix(*w, join(path, "weights"));
    if (m.cols() != 2) fail(join(path, "weights"), "expected [w1, w2] pairs");
    for (Eigen::Index i = 0; i < m.rows(); ++i) q.weights.push_back({m(i, 0), m(i, 1)});
  }
  auto w1 = number(t, "w1", path);
  auto w2 = number(t, "w2", path);
  if (w1 || w2) q.weights.insert(q.weights.begin(), {w1.value_or(0.0), w2.value_or(0.0)});
  for (const auto& w : q.weights)
    if (w.w1 < 0.0 || w.w2 < 0.0) fail(join(path, "weights"), "weights must be non-negative");
  q.objective = string(t, "objective", path).value_or("resilience");
  if (q.objective != "resilience" && q.objective != "effort" && q.objective != "pareto")
    fail(join(path, "objective"), "expected resilience, effort or pareto");
  const auto form = string(t, "formulation", path).value_or("l1");
  if (form == "l1") {
    q.formulation = farkas::Formulation::l1;
  } else if (form == "multiplier") {
    q.formulation = farkas::Formulation::multiplier;
  } else {
    fail(join(path, "formulation"), "expected l1 or multiplier");
  }
}

void parse_search(const toml::table& t, Problem& p) {
  const std::string path = "search";
  check_keys(t, {"restarts", "max_iterations", "tolerance", "seed", "screen", "scale", "initial_gains"}, path);
  auto& s = p.search;
  s.restarts = static_cast<int>(non_negative(t, "restarts", path, s.restarts));
  s.max_iterations = static_cast<int>(non_negative(t, "max_iterations", path, s.max_iterations));
  s.tolerance = number(t, "tolerance", path).value_or(s.tolerance);
  s.seed = static_cast<std::uint64_t>(non_negative(t, "seed", path, 0));
  s.screen = static_cast<int>(non_negative(t, "screen", path, s.screen));
  s.scale = number(t, "scale", path).value_or(s.scale);
  if (const auto* g = t.get("initial_gains")) s.initial_gains = matrix_list(*g, join(path, "initial_gains"));
}

void parse_scenario(const toml::table& t, Problem& p) {
  const std::string path = "scenario";
  check_keys(t,
             {"M", "beta", "seed", "distribution", "fresh", "fresh_seed", "restarts", "screen", "max_iterations",
              "tolerance", "initial_params", "param_scale", "mu_initial", "mu_scale", "mu_ceiling", "rho_initial",
              "rho_max", "polish_step", "input_lower", "input_upper"},
             path);
  auto& s = p.scenario;
  s.count = static_cast<std::size_t>(non_negative(t, "M", path, 100));
  if (s.count < 1) fail(join(path, "M"), "must be at least 1");
  s.beta = number(t, "beta", path).value_or(s.beta);
  if (!(s.beta > 0.0 && s.beta <= 1.0)) fail(join(path, "beta"), "must lie in (0, 1]");
  s.seed = static_cast<std::uint64_t>(non_negative(t, "seed", path, 0));
  if (auto d = string(t, "distribution", path)) s.distribution = scenario::distribution_from_string(*d);
  s.fresh = static_cast<std::size_t>(non_negative(t, "fresh", path, 0));
  s.fresh_seed = static_cast<std::uint64_t>(non_negative(t, "fresh_seed", path, 1));
  auto& c = s.solver;
  c.restarts = static_cast<int>(non_negative(t, "restarts", path, c.restarts));
  c.screen = static_cast<int>(non_negative(t, "screen", path, c.screen));
  c.max_iterations = static_cast<int>(non_negative(t, "max_iterations", path, c.max_iterations));
  c.tolerance = number(t, "tolerance", path).value_or(c.tolerance);
  if (auto v = vector(t, "initial_params", path)) c.initial_params = *v;
  if (auto v = vector(t, "param_scale", path)) c.param_scale = *v;
  c.mu_initial = number(t, "mu_initial", path).value_or(c.mu_initial);
  c.mu_scale = number(t, "mu_scale", path).value_or(c.mu_scale);
  c.mu_ceiling = number(t, "mu_ceiling", path).value_or(c.mu_ceiling);
  c.rho_initial = number(t, "rho_initial", path).value_or(c.rho_initial);
  c.rho_max = number(t, "rho_max", path).value_or(c.rho_max);
  c.polish_step = number(t, "polish_step", path).value_or(c.polish_step);
  if (!(c.rho_initial > 0.0) || c.rho_max < c.rho_initial) fail(join(path, "rho_max"), "needs 0 < rho_initial <= rho_max");
  s.input_lower = vector(t, "input_lower", path);
  s.input_upper = vector(t, "input_upper", path);
}

double special_number(const std::string& s, bool& ok) {
  ok = true;
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  ok = false;
  return 0.0;
}

toml::array array_from_json(const json& j, const std::string& path);

toml::table table_from_json(const json& j, const std::string& path) {
  toml::table t;
  for (const auto& [k, v] : j.items()) {
    const auto sub = join(path, k);
    switch (v.type()) {
      case json::value_t::object:
        t.insert_or_assign(k, table_from_json(v, sub));
        break;
      case json::value_t::array:
        t.insert_or_assign(k, array_from_json(v, sub));
        break;
      case json::value_t::number_integer:
      case json::value_t::number_unsigned:
        t.insert_or_assign(k, v.get<std::int64_t>());
        break;
      case json::value_t::number_float:
        t.insert_or_assign(k, v.get<double>());
        break;
      case json::value_t::boolean:
        t.insert_or_assign(k, v.get<bool>());
        break;
      case json::value_t::string: {
        bool ok = false;
        const double d = special_number(v.get<std::string>(), ok);
        if (ok) {
          t.insert_or_assign(k, d);
        } else {
          t.insert_or_assign(k, v.get<std::string>());
        }
        break;
      }
      default:
        fail(sub, "unsupported value");
    }
  }
  return t;
}

toml::array array_from_json(const json& j, const std::string& path) {
  toml::array a;
  for (const auto& v : j) {
    switch (v.type()) {
      case json::value_t::object:
        a.push_back(table_from_json(v, path));
        break;
      case json::value_t::array:
        a.push_back(array_from_json(v, path));
        break;
      case json::value_t::number_integer:
      case json::value_t::number_unsigned:
        a.push_back(v.get<std::int64_t>());
        break;
      case json::value_t::number_float:
        a.push_back(v.get<double>());
        break;
      case json::value_t::boolean:
        a.push_back(v.get<bool>());
        break;
      case json::value_t::string: {
        bool ok = false;
        const double d = special_number(v.get<std::string>(), ok);
        if (ok) {
          a.push_back(d);
        } else {
          a.push_back(v.get<std::string>());
        }
        break;
      }
      default:
        fail(path, "unsupported value");
    }
  }
  return a;
}

Problem parse_table(const toml::table& root) {
  check_keys(root, {"description", "horizon", "x0", "spec", "system", "regions", "query", "search", "scenario"}, "");

  Problem p;
  p.echo = to_json(root);
  auto horizon = integer(root, "horizon", "");
  if (!horizon) fail("horizon", "missing field");
  if (*horizon < 1) fail("horizon", "must be at least 1");
  p.horizon = static_cast<std::size_t>(*horizon);
  auto x0 = vector(root, "x0", "");
  if (!x0) fail("x0", "missing field");
  p.x0 = *x0;
  p.spec_text = string(root, "spec", "").value_or("");

  parse_system(table_at(root, "system", ""), p);
  if (p.system->state_dim() != p.x0.size()) fail("x0", "length differs from the state dimension");

  if (root.get("regions")) {
    const auto& regions = table_at(root, "regions", "");
    for (const auto& [k, v] : regions) {
      const std::string name(k.str());
      const std::string path = "regions." + name;
      const auto* t = v.as_table();
      if (!t) fail(path, "expected a table");
      auto r = parse_region(*t, path);
      const auto dim = region_dim(r);
      if (dim >= 0 && dim != p.x0.size()) fail(path, "dimension differs from the state dimension");
      if (auto b = std::get_if<spec::NormBall>(&r))
        for (auto a : b->axes)
          if (a >= p.x0.size()) fail(path + ".axes", "axis out of range");
      p.regions.emplace(name, std::move(r));
    }
  }
  const auto formula = spec::parse(p.spec_text, p.regions, p.horizon);
  p.sets = spec::compile(formula, p.regions, p.horizon, p.x0.size());

  if (root.get("query")) parse_query(table_at(root, "query", ""), p);
  if (root.get("search")) parse_search(table_at(root, "search", ""), p);
  if (root.get("scenario")) parse_scenario(table_at(root, "scenario", ""), p);

  const auto m = p.system->input_dim();
  if (p.scenario.input_lower && p.scenario.input_lower->size() != m) fail("scenario.input_lower", "wrong length");
  if (p.scenario.input_upper && p.scenario.input_upper->size() != m) fail("scenario.input_upper", "wrong length");
  for (std::size_t i = 0; i < p.search.initial_gains.size(); ++i) {
    const auto& g = p.search.initial_gains[i];
    if (g.rows() != m || g.cols() != p.x0.size())
      fail("search.initial_gains[" + std::to_string(i) + "]", "expected an m x n matrix");
  }
  return p;
}

}  // namespace

json number_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

Problem parse_problem(const std::string& text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
    throw InputError("cli", msg.str());
  }
  return parse_table(root);
}

Problem problem_from_json(const json& echo) {
  if (!echo.is_object()) throw InputError("cli", "problem: expected an object");
  return parse_table(table_from_json(echo, ""));
}

Problem load_problem(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cli", "cannot read problem file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  // A result record carries its problem; rerun from the echo.
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json record;
    try {
      record = json::parse(text);
    } catch (const json::parse_error& e) {
      throw InputError("cli", path + ": " + e.what());
    }
    if (!record.contains("problem")) throw InputError("cli", path + ": record has no problem field");
    return problem_from_json(record["problem"]);
  }
  return parse_problem(text, path);
}

}  // namespace resil::cli
