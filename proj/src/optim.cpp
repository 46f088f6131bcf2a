#include "resil/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "resil/error.hpp"

namespace resil::optim {

bool better(const Merit& a, const Merit& b) {
  if (a.violation != b.violation) return a.violation < b.violation;
  return a.objective < b.objective;
}

namespace {

double spread(const Merit& best, const Merit& worst) {
  return std::abs(worst.violation - best.violation) + std::abs(worst.objective - best.objective);
}

struct Vertex {
  Vector x;
  Merit merit;
};

// One Nelder-Mead descent from a fresh simplex; returns iterations used.
int descend(const MeritFunction& f, std::vector<Vertex>& simplex, int budget, double tolerance, long& evaluations,
            bool& converged) {
  const auto dim = static_cast<Eigen::Index>(simplex.size() - 1);
  auto eval = [&](const Vector& x) {
    ++evaluations;
    return Vertex{x, f(x)};
  };
  auto order = [&] {
    std::stable_sort(simplex.begin(), simplex.end(),
                     [](const Vertex& a, const Vertex& b) { return better(a.merit, b.merit); });
  };
  order();
  int it = 0;
  converged = false;
  for (; it < budget; ++it) {
    const Merit& best = simplex.front().merit;
    const Merit& worst = simplex.back().merit;
    double diameter = 0.0;
    for (std::size_t i = 1; i < simplex.size(); ++i)
      diameter = std::max(diameter, (simplex[i].x - simplex.front().x).cwiseAbs().maxCoeff());
    if (spread(best, worst) <= tolerance * (1.0 + std::abs(best.objective) + best.violation) || diameter < 1e-12) {
      converged = true;
      break;
    }

    Vector centroid = Vector::Zero(dim);
    for (std::size_t i = 0; i + 1 < simplex.size(); ++i) centroid += simplex[i].x;
    centroid /= static_cast<double>(dim);

    const Vertex& w = simplex.back();
    const Vertex& second = simplex[simplex.size() - 2];
    Vertex r = eval(centroid + (centroid - w.x));
    if (better(r.merit, simplex.front().merit)) {
      Vertex e = eval(centroid + 2.0 * (centroid - w.x));
      simplex.back() = better(e.merit, r.merit) ? std::move(e) : std::move(r);
    } else if (better(r.merit, second.merit)) {
      simplex.back() = std::move(r);
    } else {
      const bool outside = better(r.merit, w.merit);
      Vertex c = outside ? eval(centroid + 0.5 * (r.x - centroid)) : eval(centroid + 0.5 * (w.x - centroid));
      const Merit& ref = outside ? r.merit : w.merit;
      if (!better(ref, c.merit)) {
        simplex.back() = std::move(c);
      } else {
        for (std::size_t i = 1; i < simplex.size(); ++i)
          simplex[i] = eval(simplex.front().x + 0.5 * (simplex[i].x - simplex.front().x));
      }
    }
    order();
  }
  return it;
}

std::vector<Vertex> build_simplex(const MeritFunction& f, const Vertex& center, const NelderMeadOptions& options,
                                  long& evaluations) {
  const Eigen::Index dim = center.x.size();
  std::vector<Vertex> simplex;
  simplex.reserve(static_cast<std::size_t>(dim + 1));
  simplex.push_back(center);
  for (Eigen::Index i = 0; i < dim; ++i) {
    Vector x = center.x;
    x(i) += options.steps.size() == dim ? options.steps(i) : options.initial_step * std::max(1.0, 0.1 * std::abs(x(i)));
    ++evaluations;
    Merit m = f(x);
    simplex.push_back({std::move(x), m});
  }
  return simplex;
}

}  // namespace

NelderMeadResult nelder_mead(const MeritFunction& f, const Vector& start, const NelderMeadOptions& options) {
  if (start.size() == 0) {
    NelderMeadResult out;
    out.x = start;
    out.merit = f(start);
    out.evaluations = 1;
    out.converged = true;
    return out;
  }
  NelderMeadResult out;
  long evaluations = 1;
  Vertex best{start, f(start)};
  int used = 0;
  bool converged = false;
  for (int round = 0; round <= options.rebuilds && used < options.max_iterations; ++round) {
    auto simplex = build_simplex(f, best, options, evaluations);
    used += descend(f, simplex, options.max_iterations - used, options.tolerance, evaluations, converged);
    const Vertex& found = simplex.front();
    const bool improved = better(found.merit, best.merit) &&
                          spread(found.merit, best.merit) > options.tolerance * (1.0 + std::abs(best.merit.objective));
    if (better(found.merit, best.merit)) best = found;
    if (!improved && round > 0) break;
  }
  out.x = best.x;
  out.merit = best.merit;
  out.iterations = used;
  out.evaluations = evaluations;
  out.converged = converged;
  return out;
}

std::mt19937_64 stream_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
  return std::mt19937_64(seq);
}

double unit_uniform(std::mt19937_64& engine) { return static_cast<double>(engine() >> 11) * 0x1.0p-53; }

namespace {

std::size_t start_count(const MultiStartOptions& options) {
  return options.initial_points.size() + (options.include_zero ? 1 : 0) +
         static_cast<std::size_t>(std::max(0, options.restarts));
}

NelderMeadResult run_start(const MeritFunction& f, Eigen::Index dim, const MultiStartOptions& options,
                           std::size_t index) {
  const std::size_t explicit_count = options.initial_points.size();
  Vector start;
  long screened = 0;
  if (index < explicit_count) {
    start = options.initial_points[index];
    if (start.size() != dim) throw InputError("optim", "initial point has wrong dimension");
  } else if (options.include_zero && index == explicit_count) {
    start = Vector::Zero(dim);
  } else {
    auto engine = stream_engine(options.seed, index);
    Merit best_merit{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    for (int c = 0; c < std::max(1, options.screen); ++c) {
      Vector x(dim);
      for (Eigen::Index i = 0; i < dim; ++i) {
        const double c = options.center.size() == dim ? options.center(i) : 0.0;
        const double w = options.spread.size() == dim ? options.spread(i) : options.scale;
        x(i) = c + w * (2.0 * unit_uniform(engine) - 1.0);
      }
      const Merit m = f(x);
      ++screened;
      if (start.size() == 0 || better(m, best_merit)) {
        best_merit = m;
        start = std::move(x);
      }
    }
  }
  NelderMeadResult r = nelder_mead(f, start, options.local);
  r.evaluations += screened;
  return r;
}

MultiStartResult merge(std::vector<NelderMeadResult>& results) {
  MultiStartResult out;
  for (std::size_t i = 0; i < results.size(); ++i) {
    out.evaluations += results[i].evaluations;
    out.start_merits.push_back(results[i].merit);
    if (out.best_start < 0 || better(results[i].merit, out.merit)) {
      out.best_start = static_cast<int>(i);
      out.merit = results[i].merit;
      out.x = results[i].x;
    }
  }
  return out;
}

}  // namespace

MultiStartResult multi_start_serial(const MeritFunction& f, Eigen::Index dim, const MultiStartOptions& options) {
  const std::size_t count = start_count(options);
  if (count == 0) throw InputError("optim", "multi-start search needs at least one start");
  std::vector<NelderMeadResult> results(count);
  for (std::size_t i = 0; i < count; ++i) results[i] = run_start(f, dim, options, i);
  return merge(results);
}

MultiStartResult multi_start(const MeritFunction& f, Eigen::Index dim, const MultiStartOptions& options) {
  const std::size_t count = start_count(options);
  if (count == 0) throw InputError("optim", "multi-start search needs at least one start");
  std::vector<NelderMeadResult> results(count);
  std::vector<std::exception_ptr> errors(count);
  const auto n = static_cast<long>(count);
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    try {
      results[static_cast<std::size_t>(i)] = run_start(f, dim, options, static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return merge(results);
}

}  // namespace resil::optim
