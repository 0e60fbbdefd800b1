#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sparsecc/dataset.hpp"
#include "sparsecc/model.hpp"
#include "sparsecc/solver.hpp"

namespace sparsecc {

struct BracketInvalid : std::runtime_error {
  explicit BracketInvalid(const std::string& what) : std::runtime_error(what) {}
};

/// Basic bisection on h over [z0, z1] with h(z0) h(z1) <= 0. Returns a point
/// where h vanishes, or the current midpoint once the bracket width drops
/// below alpha. Uses at most ceil(log2(|z1 - z0| / alpha)) + 2 evaluations.
template <class H>
double bbm(H&& h, double z0, double z1, double alpha) {
  if (!(alpha > 0.0)) {
    throw std::invalid_argument("bbm: alpha must be positive");
  }
  double h0 = h(z0);
  if (h0 == 0.0) return z0;
  double h1 = h(z1);
  if (h1 == 0.0) return z1;
  if ((h0 > 0.0) == (h1 > 0.0)) {
    throw BracketInvalid("bbm: h(z0) and h(z1) have the same sign");
  }
  while (true) {
    const double z = 0.5 * (z0 + z1);
    if (std::abs(z1 - z0) < alpha) return z;
    const double hz = h(z);
    if (hz == 0.0) return z;
    if ((hz > 0.0) != (h0 > 0.0)) {
      z1 = z;
      h1 = hz;
    } else {
      z0 = z;
      h0 = hz;
    }
  }
}

struct PathEntry {
  double r = 0.0;                   // tuning value with active_count == k
  ModelFit fit;                     // converged fit at r
  std::uint64_t solver_calls_cum = 0;  // budget consumed when recorded
};

/// Sparsity-indexed sketch of the regularization path: for each support size
/// k in {0,...,k_max} either a tuning value whose fit has exactly k nonzeros,
/// or membership in `missing`.
struct PathSketch {
  std::map<int, PathEntry> entries;
  double accuracy = 0.0;
  std::uint64_t solver_calls = 0;
  std::vector<int> missing;
  int k_max = 0;
  double lambda_max_value = 0.0;
  double lambda_floor_value = 0.0;
};

struct GridPath {
  std::vector<double> grid;  // strictly decreasing lambda values
  std::vector<ModelFit> fits;
  std::uint64_t solver_calls = 0;
};

inline int default_k_max(const Dataset& data) {
  return std::min(data.m(), data.rows() - 1);
}

inline double default_path_accuracy(double lambda_max_value) {
  return 1e-4 * lambda_max_value;
}

/// Queue-driven bisection locating one tuning value per attainable support
/// size. The left endpoint is the closed-form lambda_max (zero fit), the
/// right endpoint is lambda_floor standing in for zero. A popped pair (a, b)
/// is refined at its midpoint r; the first converged fit seen with a given
/// support size k <= k_max is recorded, and the halves (a, r), (r, b) are
/// re-enqueued while the endpoint counts differ by more than one and the
/// half is wider than alpha. Halves whose endpoint counts both exceed k_max
/// are dropped; with k_max = M this never triggers. Midpoint fits warm-start
/// from the larger-lambda endpoint. Non-convergence at a midpoint leaves the
/// corresponding k missing.
inline PathSketch gbm(const Dataset& data, double alpha,
                      const SolverConfig& config, int k_max) {
  if (k_max < 0 || k_max > data.m()) {
    throw std::invalid_argument("gbm: require 0 <= k_max <= M");
  }
  PathSketch sketch;
  sketch.k_max = k_max;
  sketch.lambda_max_value = lambda_max(data);
  sketch.lambda_floor_value = config.lambda_floor;
  sketch.accuracy =
      alpha > 0.0 ? alpha : default_path_accuracy(sketch.lambda_max_value);

  const auto fit_at = [&](double lambda,
                          const ModelFit* warm_from) -> ModelFit {
    SolverConfig local = config;
    if (warm_from != nullptr) {
      local.warm_start =
          WarmStart{warm_from->intercept, warm_from->coefficients};
    }
    ++sketch.solver_calls;
    return fit_l1_logistic(data, lambda, local);
  };
  const auto record = [&](double r, const ModelFit& fit) {
    const int k = fit.active_count();
    if (fit.converged && k <= k_max && !sketch.entries.count(k)) {
      sketch.entries.emplace(k, PathEntry{r, fit, sketch.solver_calls});
    }
  };

  ModelFit left = fit_at(sketch.lambda_max_value, nullptr);
  record(sketch.lambda_max_value, left);

  struct Pair {
    double a, b;
    int na, nb;
    ModelFit fa, fb;
  };
  std::deque<Pair> queue;

  if (k_max > 0) {
    ModelFit right = fit_at(sketch.lambda_floor_value, &left);
    record(sketch.lambda_floor_value, right);
    queue.push_back(Pair{sketch.lambda_max_value, sketch.lambda_floor_value,
                         left.active_count(), right.active_count(),
                         std::move(left), std::move(right)});
  }

  while (!queue.empty()) {
    Pair pair = std::move(queue.front());
    queue.pop_front();
    const double r = 0.5 * (pair.a + pair.b);
    ModelFit mid = fit_at(r, &pair.fa);  // a is the larger-lambda endpoint
    const int k = mid.active_count();
    record(r, mid);
    if (std::abs(pair.na - k) > 1 && std::abs(pair.a - r) > sketch.accuracy &&
        std::min(pair.na, k) <= k_max) {
      queue.push_back(Pair{pair.a, r, pair.na, k, pair.fa, mid});
    }
    if (std::abs(pair.nb - k) > 1 && std::abs(pair.b - r) > sketch.accuracy &&
        std::min(k, pair.nb) <= k_max) {
      queue.push_back(Pair{r, pair.b, k, pair.nb, std::move(mid),
                           std::move(pair.fb)});
    }
  }

  for (int k = 0; k <= k_max; ++k) {
    if (!sketch.entries.count(k)) sketch.missing.push_back(k);
  }
  return sketch;
}

/// Equal-budget baseline: `budget` fits at geometrically spaced lambda values
/// from lambda_max down to lambda_floor, warm-starting along the grid.
inline GridPath grid_path(const Dataset& data, int budget,
                          const SolverConfig& config) {
  if (budget < 2) {
    throw std::invalid_argument("grid_path: budget must be at least 2");
  }
  const double top = lambda_max(data);
  const double bottom = config.lambda_floor;
  const double ratio = std::pow(bottom / top, 1.0 / (budget - 1));

  GridPath path;
  path.grid.reserve(static_cast<std::size_t>(budget));
  path.fits.reserve(static_cast<std::size_t>(budget));
  for (int i = 0; i < budget; ++i) {
    path.grid.push_back(top * std::pow(ratio, i));
  }
  path.grid.back() = bottom;

  SolverConfig local = config;
  for (int i = 0; i < budget; ++i) {
    path.fits.push_back(fit_l1_logistic(data, path.grid[static_cast<std::size_t>(i)], local));
    ++path.solver_calls;
    const ModelFit& fit = path.fits.back();
    local.warm_start = WarmStart{fit.intercept, fit.coefficients};
  }
  return path;
}

inline bool support_in_path(const PathSketch& sketch,
                            const GroundTruth& truth) {
  for (const auto& [k, entry] : sketch.entries) {
    if (entry.fit.active_set == truth.support) return true;
  }
  return false;
}

inline bool support_in_path(const GridPath& path, const GroundTruth& truth) {
  for (const ModelFit& fit : path.fits) {
    if (fit.active_set == truth.support) return true;
  }
  return false;
}

}  // namespace sparsecc
