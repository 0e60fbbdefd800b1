#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "sparsecc/dataset.hpp"
#include "sparsecc/model.hpp"

namespace sparsecc {

/// Per-replicate evaluation of a fit against simulation truth. All parameter
/// comparisons are on the raw (unstandardized) scale. The intercept error is
/// measured against the population intercept delta_0, which differs from the
/// reparametrized case-control intercept; it is reported separately from the
/// beta part for that reason.
struct EvalReport {
  double mse = 0.0;            // (1/2n) sum_i (beta_hat' x_i - beta*' x_i)^2
  double l1_error_beta = 0.0;  // sum_j |beta_hat_j - beta*_j|
  double intercept_error_vs_delta0 = 0.0;
  double sup_or_error = 0.0;   // max |exp(beta_hat' x) - exp(beta*' x)|, x0 = 0
  bool or_clamped = false;     // an odds-ratio exponent hit the +-700 guard
  bool exact_recovery = false; // active set equals I*
  bool inclusion = false;      // I* is contained in the active set
  int k_hat = 0;
};

namespace detail {

inline double clamped_exp(double t, bool& clamped) {
  if (std::abs(t) > 700.0) {
    clamped = true;
    t = t > 0.0 ? 700.0 : -700.0;
  }
  return std::exp(t);
}

}  // namespace detail

/// Evaluates mse over the 2n design rows and the odds-ratio sup-error over
/// the design rows plus any extra raw-scale points supplied in or_points.
inline EvalReport evaluate(const ModelFit& fit, const GroundTruth& truth,
                           const Dataset& data,
                           const std::optional<Eigen::MatrixXd>& or_points = {}) {
  if (fit.coefficients_raw.size() != data.m() ||
      truth.beta_star.size() != data.m()) {
    throw std::invalid_argument("evaluate: dimension mismatch");
  }
  if (or_points && or_points->cols() != data.m()) {
    throw std::invalid_argument("evaluate: odds-ratio point width != M");
  }

  EvalReport report;
  const Eigen::MatrixXd raw = data.raw_matrix();
  const Eigen::VectorXd fitted = raw * fit.coefficients_raw;
  const Eigen::VectorXd target = raw * truth.beta_star;
  report.mse =
      (fitted - target).squaredNorm() / static_cast<double>(data.rows());

  const auto or_gap = [&](double fit_eta, double true_eta) {
    return std::abs(detail::clamped_exp(fit_eta, report.or_clamped) -
                    detail::clamped_exp(true_eta, report.or_clamped));
  };
  for (int i = 0; i < data.rows(); ++i) {
    report.sup_or_error = std::max(report.sup_or_error, or_gap(fitted(i), target(i)));
  }
  if (or_points) {
    const Eigen::VectorXd fit_eta = (*or_points) * fit.coefficients_raw;
    const Eigen::VectorXd true_eta = (*or_points) * truth.beta_star;
    for (int i = 0; i < or_points->rows(); ++i) {
      report.sup_or_error =
          std::max(report.sup_or_error, or_gap(fit_eta(i), true_eta(i)));
    }
  }

  report.l1_error_beta = (fit.coefficients_raw - truth.beta_star).lpNorm<1>();
  report.intercept_error_vs_delta0 =
      std::abs(fit.intercept_raw - truth.intercept0);
  report.exact_recovery = fit.active_set == truth.support;
  report.inclusion = std::includes(fit.active_set.begin(), fit.active_set.end(),
                                   truth.support.begin(), truth.support.end());
  report.k_hat = fit.active_count();
  return report;
}

struct EvalSummary {
  double median_mse = 0.0;
  double pct_exact_recovery = 0.0;
  double pct_inclusion = 0.0;
  double median_k_hat = 0.0;
  int replicates = 0;
};

namespace detail {

inline double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t half = values.size() / 2;
  return values.size() % 2 == 1
             ? values[half]
             : 0.5 * (values[half - 1] + values[half]);
}

}  // namespace detail

inline EvalSummary aggregate(const std::vector<EvalReport>& reports) {
  if (reports.empty()) {
    throw std::invalid_argument("aggregate: no reports");
  }
  EvalSummary summary;
  summary.replicates = static_cast<int>(reports.size());
  std::vector<double> mses, ks;
  int exact = 0, included = 0;
  for (const EvalReport& r : reports) {
    mses.push_back(r.mse);
    ks.push_back(static_cast<double>(r.k_hat));
    exact += r.exact_recovery ? 1 : 0;
    included += r.inclusion ? 1 : 0;
  }
  summary.median_mse = detail::median_of(std::move(mses));
  summary.median_k_hat = detail::median_of(std::move(ks));
  summary.pct_exact_recovery = 100.0 * exact / reports.size();
  summary.pct_inclusion = 100.0 * included / reports.size();
  return summary;
}

}  // namespace sparsecc
