#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "sparsecc/dataset.hpp"
#include "sparsecc/model.hpp"
#include "sparsecc/parallel.hpp"
#include "sparsecc/path.hpp"
#include "sparsecc/rng.hpp"
#include "sparsecc/solver.hpp"

namespace sparsecc {

/// Stratified partition of the rows into p folds: every fold carries the same
/// (within one) number of cases and of controls.
struct FoldPlan {
  int p = 0;
  std::vector<int> assignments;  // per-row fold index, dataset row order
};

inline FoldPlan stratified_folds(const Dataset& data, int p,
                                 std::uint64_t seed) {
  if (p < 1 || p > data.n()) {
    throw std::invalid_argument("stratified_folds: require 1 <= p <= n");
  }
  FoldPlan plan;
  plan.p = p;
  plan.assignments.assign(static_cast<std::size_t>(data.rows()), 0);
  // Shuffle each class separately, then deal round-robin; fold j receives the
  // same count of cases as of controls.
  std::vector<int> controls(static_cast<std::size_t>(data.n()));
  std::vector<int> cases(static_cast<std::size_t>(data.n()));
  for (int i = 0; i < data.n(); ++i) {
    controls[static_cast<std::size_t>(i)] = i;
    cases[static_cast<std::size_t>(i)] = data.n() + i;
  }
  Rng control_rng(derive_seed(seed, 0));
  Rng case_rng(derive_seed(seed, 1));
  shuffle(controls, control_rng);
  shuffle(cases, case_rng);
  for (int i = 0; i < data.n(); ++i) {
    plan.assignments[static_cast<std::size_t>(controls[static_cast<std::size_t>(i)])] = i % p;
    plan.assignments[static_cast<std::size_t>(cases[static_cast<std::size_t>(i)])] = i % p;
  }
  return plan;
}

/// Unpenalized logistic MLE restricted to the given support (plus intercept),
/// by damped Newton iterations on the standardized sub-design. Coefficients
/// outside the support are exactly zero in the returned fit. Under separation
/// (or a singular Hessian) the restricted problem is refit with the l1 solver
/// at lambda_floor and the result flagged via lambda_floored.
inline ModelFit refit_mle(const Dataset& data, const std::vector<int>& support,
                          const SolverConfig& config = {}) {
  const int k = static_cast<int>(support.size());
  if (k >= data.rows()) {
    throw std::invalid_argument("refit_mle: support larger than sample");
  }
  for (int j : support) {
    if (j < 0 || j >= data.m()) {
      throw std::invalid_argument("refit_mle: support index out of range");
    }
  }
  const int rows = data.rows();
  const double inv_rows = 1.0 / static_cast<double>(rows);
  const double tol = std::min(1e-10, config.tolerance);

  Eigen::MatrixXd design(rows, k + 1);
  design.col(0).setOnes();
  for (int j = 0; j < k; ++j) {
    design.col(j + 1) = data.x().col(support[static_cast<std::size_t>(j)]);
  }
  Eigen::VectorXd y(rows);
  for (int i = 0; i < rows; ++i) y(i) = static_cast<double>(data.label(i));

  const auto loss = [&](const Eigen::VectorXd& theta) {
    const Eigen::VectorXd eta = design * theta;
    double value = 0.0;
    for (int i = 0; i < rows; ++i) {
      value += log1p_exp(eta(i)) - y(i) * eta(i);
    }
    return value * inv_rows;
  };

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(k + 1);
  bool converged = false;
  bool fell_back = false;
  int iterations = 0;
  double current = loss(theta);
  for (; iterations < 200; ++iterations) {
    const Eigen::VectorXd eta = design * theta;
    // Complete separation: the restricted MLE diverges along this direction.
    bool separated = k > 0;
    for (int i = 0; separated && i < rows; ++i) {
      if (y(i) == 1.0 ? eta(i) <= 0.0 : eta(i) >= 0.0) separated = false;
    }
    if (separated) {
      fell_back = true;
      break;
    }
    Eigen::VectorXd p(rows), w(rows);
    for (int i = 0; i < rows; ++i) {
      p(i) = detail::clamped_expit(eta(i));
      w(i) = p(i) * (1.0 - p(i));
    }
    const Eigen::VectorXd grad = design.transpose() * (p - y) * inv_rows;
    if (grad.cwiseAbs().maxCoeff() <= tol) {
      converged = true;
      break;
    }
    const Eigen::MatrixXd hessian =
        design.transpose() * w.asDiagonal() * design * inv_rows;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
    Eigen::VectorXd step = -ldlt.solve(grad);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) {
      fell_back = true;
      break;
    }
    // Backtrack until the Armijo condition holds.
    const double slope = grad.dot(step);
    double t = 1.0;
    double candidate = loss(theta + t * step);
    while (candidate > current + 1e-4 * t * slope && t > 1e-10) {
      t *= 0.5;
      candidate = loss(theta + t * step);
    }
    if (t <= 1e-10) {
      fell_back = true;
      break;
    }
    theta += t * step;
    current = candidate;
    if (theta.cwiseAbs().maxCoeff() > 1e3) {
      fell_back = true;  // separation: the restricted MLE diverges
      break;
    }
  }

  if (fell_back) {
    Dataset restricted = data.columns_subset(support);
    SolverConfig fallback = config;
    fallback.warm_start.reset();
    ModelFit sub = fit_l1_logistic(restricted, config.lambda_floor, fallback);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(data.m());
    for (int j = 0; j < k; ++j) {
      beta(support[static_cast<std::size_t>(j)]) = sub.coefficients(j);
    }
    ModelFit fit = ModelFit::from_params(data, sub.intercept, std::move(beta),
                                         0.0, sub.converged, sub.iterations,
                                         sub.kkt_violation);
    fit.lambda_floored = true;
    fit.separation_detected = true;
    return fit;
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(data.m());
  for (int j = 0; j < k; ++j) {
    beta(support[static_cast<std::size_t>(j)]) = theta(j + 1);
  }
  const Eigen::VectorXd eta = design * theta;
  Eigen::VectorXd p(rows);
  for (int i = 0; i < rows; ++i) p(i) = detail::clamped_expit(eta(i));
  const double kkt =
      (design.transpose() * (p - y) * inv_rows).cwiseAbs().maxCoeff();
  return ModelFit::from_params(data, theta(0), std::move(beta), 0.0, converged,
                               iterations, kkt);
}

/// Scaled negative prospective log-likelihood of `fit` on the listed holdout
/// rows, normalized by the holdout size. Evaluated through the raw-scale
/// predictor so the fit may come from a dataset with different column
/// statistics.
inline double cv_log_loss(const ModelFit& fit, const Dataset& data,
                          std::span<const int> holdout_rows) {
  if (holdout_rows.empty()) {
    throw std::invalid_argument("cv_log_loss: empty holdout");
  }
  double value = 0.0;
  for (int i : holdout_rows) {
    double eta = fit.intercept_raw;
    for (int j = 0; j < data.m(); ++j) {
      eta += fit.coefficients_raw(j) * data.raw(i, j);
    }
    value += log1p_exp(eta) - static_cast<double>(data.label(i)) * eta;
  }
  return value / static_cast<double>(holdout_rows.size());
}

inline double cv_log_loss(const ModelFit& fit, const Dataset& holdout) {
  std::vector<int> all(static_cast<std::size_t>(holdout.rows()));
  for (int i = 0; i < holdout.rows(); ++i) all[static_cast<std::size_t>(i)] = i;
  return cv_log_loss(fit, holdout, all);
}

struct CvTraceEntry {
  int k = 0;
  int fold = 0;
  double r = 0.0;
  std::vector<int> support;
  double loss = 0.0;
};

struct SelectionResult {
  int k_hat = 0;
  std::map<int, double> cv_loss;    // L_k over dimensions found in all folds
  std::map<int, double> criterion;  // L_k + 0.5 k log(2n) / (2n)
  std::vector<CvTraceEntry> cv_trace;
  double final_r = 0.0;
  ModelFit final_fit;
  std::vector<int> skipped_k;  // missing from at least one fold's sketch
  bool degraded = false;       // final fit does not have exactly k_hat nonzeros
  bool all_dimensions_skipped = false;
  std::uint64_t solver_calls = 0;
};

struct SelectOptions {
  int folds = 10;
  double alpha = 0.0;  // <= 0: 1e-4 * lambda_max of each sketched dataset
  std::uint64_t seed = 0;
  int k_max = 0;  // <= 0: min(M, 2n - 1); larger caps are clamped per dataset
  int jobs = 1;
};

// Argmin over the criterion map; exact ties go to the smaller dimension.
inline int argmin_criterion(const std::map<int, double>& criterion) {
  if (criterion.empty()) {
    throw std::invalid_argument("argmin_criterion: empty map");
  }
  int best_k = criterion.begin()->first;
  double best = criterion.begin()->second;
  for (const auto& [k, value] : criterion) {
    if (value < best) {
      best = value;
      best_k = k;
    }
  }
  return best_k;
}

/// Dimension-stabilized p-fold CV with a BIC-type penalty.
///
/// Step 1: per fold j, sketch the path on the training split, refit each
/// found support by unpenalized MLE and score it on the held-out fold.
/// Step 2: average the holdout losses over folds, keeping only dimensions
/// found in every fold. Step 3: minimize L_k + 0.5 k log(2n) / (2n), ties to
/// the smaller k. Step 4: locate r_khat on the full data, bracketing the
/// bisection with the full-data sketch entries flanking k_hat.
inline SelectionResult select(const Dataset& data, const SelectOptions& options,
                              const SolverConfig& config = {}) {
  const int p = options.folds;
  const FoldPlan plan = stratified_folds(data, p, options.seed);
  const int k_cap = options.k_max > 0
                        ? std::min(options.k_max, default_k_max(data))
                        : default_k_max(data);

  struct FoldOutcome {
    std::map<int, CvTraceEntry> by_k;
    std::uint64_t solver_calls = 0;
  };
  std::vector<FoldOutcome> outcomes(static_cast<std::size_t>(p));

  parallel_for(p, options.jobs, [&](int j) {
    std::vector<int> train_rows, holdout_rows;
    for (int i = 0; i < data.rows(); ++i) {
      (plan.assignments[static_cast<std::size_t>(i)] == j ? holdout_rows
                                                          : train_rows)
          .push_back(i);
    }
    const Dataset train = data.rows_subset(train_rows);
    const int fold_cap = std::min(k_cap, default_k_max(train));
    const PathSketch sketch = gbm(train, options.alpha, config, fold_cap);
    FoldOutcome& out = outcomes[static_cast<std::size_t>(j)];
    out.solver_calls = sketch.solver_calls;
    for (const auto& [k, entry] : sketch.entries) {
      const ModelFit refit =
          refit_mle(train, entry.fit.active_set, config);
      CvTraceEntry trace;
      trace.k = k;
      trace.fold = j;
      trace.r = entry.r;
      trace.support = entry.fit.active_set;
      trace.loss = cv_log_loss(refit, data, holdout_rows);
      out.by_k.emplace(k, std::move(trace));
    }
  });

  SelectionResult result;
  for (const auto& out : outcomes) {
    result.solver_calls += out.solver_calls;
    for (const auto& [k, trace] : out.by_k) result.cv_trace.push_back(trace);
  }
  std::sort(result.cv_trace.begin(), result.cv_trace.end(),
            [](const CvTraceEntry& a, const CvTraceEntry& b) {
              return a.k != b.k ? a.k < b.k : a.fold < b.fold;
            });

  const double bic_unit =
      0.5 * std::log(static_cast<double>(data.rows())) /
      static_cast<double>(data.rows());
  for (int k = 0; k <= k_cap; ++k) {
    double total = 0.0;
    bool in_all_folds = true;
    for (const auto& out : outcomes) {
      const auto it = out.by_k.find(k);
      if (it == out.by_k.end()) {
        in_all_folds = false;
        break;
      }
      total += it->second.loss;
    }
    if (in_all_folds) {
      const double mean_loss = total / static_cast<double>(p);
      result.cv_loss.emplace(k, mean_loss);
      result.criterion.emplace(k, mean_loss + bic_unit * k);
    } else {
      result.skipped_k.push_back(k);
    }
  }

  if (result.criterion.empty()) {
    result.all_dimensions_skipped = true;
    result.k_hat = 0;
    result.final_r = lambda_max(data);
    result.final_fit = fit_l1_logistic(data, result.final_r, config);
    result.degraded = result.final_fit.active_count() != 0;
    result.solver_calls += 1;
    return result;
  }

  result.k_hat = argmin_criterion(result.criterion);

  // Step 4: full-data sketch, then bisection between the flanking entries.
  const PathSketch full = gbm(data, options.alpha, config, k_cap);
  result.solver_calls += full.solver_calls;
  const auto hit = full.entries.find(result.k_hat);
  if (hit != full.entries.end()) {
    result.final_r = hit->second.r;
    result.final_fit = hit->second.fit;
    result.degraded = false;
  } else {
    double lo = full.lambda_floor_value;  // larger active counts
    double hi = full.lambda_max_value;    // smaller active counts
    for (const auto& [k, entry] : full.entries) {
      if (k < result.k_hat) hi = std::min(hi, entry.r);
      if (k > result.k_hat && entry.r > lo) lo = entry.r;
    }
    const double alpha_eff =
        options.alpha > 0.0 ? options.alpha
                            : default_path_accuracy(full.lambda_max_value);
    std::optional<WarmStart> warm;
    const auto sparsity_gap = [&](double lambda) {
      SolverConfig local = config;
      local.warm_start = warm;
      const ModelFit fit = fit_l1_logistic(data, lambda, local);
      warm = WarmStart{fit.intercept, fit.coefficients};
      ++result.solver_calls;
      return static_cast<double>(fit.active_count() - result.k_hat);
    };
    result.final_r = bbm(sparsity_gap, hi, lo, alpha_eff);
    SolverConfig local = config;
    local.warm_start = warm;
    result.final_fit = fit_l1_logistic(data, result.final_r, local);
    ++result.solver_calls;
    result.degraded = result.final_fit.active_count() != result.k_hat ||
                      !result.final_fit.converged;
  }
  return result;
}

}  // namespace sparsecc
