#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparsecc/dataset.hpp"

namespace sparsecc {

// Branch-stable log(1 + e^t).
inline double log1p_exp(double t) {
  return t > 30.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

inline double expit(double t) {
  return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t))
                  : std::exp(t) / (1.0 + std::exp(t));
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

namespace detail {

inline void check_theta(const Eigen::VectorXd& beta, const Dataset& data,
                        double intercept) {
  if (beta.size() != data.m()) {
    throw std::invalid_argument("coefficient length does not match M");
  }
  if (!std::isfinite(intercept) || !beta.allFinite()) {
    throw std::invalid_argument("non-finite parameter value");
  }
}

}  // namespace detail

/// Scaled penalized prospective objective
///   (1/2n) sum_i [ log(1 + e^{eta_i}) - y_i eta_i ] + lambda * ||beta||_1,
/// eta_i = intercept + beta' x_i over the standardized design. The intercept
/// is never penalized.
inline double prospective_objective(double intercept,
                                    const Eigen::VectorXd& beta,
                                    const Dataset& data, double lambda) {
  detail::check_theta(beta, data, intercept);
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("lambda must be a finite nonnegative real");
  }
  const Eigen::VectorXd eta =
      (data.x() * beta).array() + intercept;
  double loss = 0.0;
  for (int i = 0; i < data.rows(); ++i) {
    loss += log1p_exp(eta(i));
    if (data.is_case(i)) loss -= eta(i);
  }
  return loss / static_cast<double>(data.rows()) +
         lambda * beta.cwiseAbs().sum();
}

struct Gradient {
  double intercept = 0.0;
  Eigen::VectorXd beta;
};

/// Gradient of the unpenalized scaled negative log-likelihood:
///   d/d delta  = (1/2n) [ sum_i p1(x_i) - n ]
///   d/d beta_j = (1/2n) [ sum_i p1(x_i) x_ij - sum_cases x_ij ].
/// Probabilities are clamped to [1e-12, 1 - 1e-12] before use.
inline Gradient prospective_gradient(double intercept,
                                     const Eigen::VectorXd& beta,
                                     const Dataset& data) {
  detail::check_theta(beta, data, intercept);
  const int rows = data.rows();
  Eigen::VectorXd residual(rows);
  for (int i = 0; i < rows; ++i) {
    const double eta = intercept + data.x().row(i).dot(beta);
    double p = expit(eta);
    p = std::min(1.0 - 1e-12, std::max(1e-12, p));
    residual(i) = p - static_cast<double>(data.label(i));
  }
  Gradient g;
  const double inv = 1.0 / static_cast<double>(rows);
  g.intercept = residual.sum() * inv;
  g.beta = (data.x().transpose() * residual) * inv;
  return g;
}

/// Penalized fit together with its optimality diagnostics. Immutable once
/// built; safe to share across threads.
struct ModelFit {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;      // standardized scale
  Eigen::VectorXd coefficients_raw;  // coefficients[j] / column_scale[j]
  double intercept_raw = 0.0;        // intercept for the raw-scale predictor
  std::vector<int> active_set;       // sorted indices of nonzero coefficients
  double lambda = 0.0;
  double objective_value = 0.0;
  bool converged = false;
  int iterations = 0;
  double kkt_violation = 0.0;
  bool lambda_floored = false;      // lambda_floor substituted for lambda = 0
  bool separation_detected = false;

  static ModelFit from_params(const Dataset& data, double intercept,
                              Eigen::VectorXd beta, double lambda,
                              bool converged, int iterations,
                              double kkt_violation) {
    detail::check_theta(beta, data, intercept);
    ModelFit fit;
    fit.intercept = intercept;
    fit.coefficients = std::move(beta);
    fit.coefficients_raw =
        fit.coefficients.cwiseQuotient(data.column_scale());
    fit.intercept_raw =
        intercept - fit.coefficients_raw.dot(data.column_center());
    for (int j = 0; j < fit.coefficients.size(); ++j) {
      if (fit.coefficients(j) != 0.0) fit.active_set.push_back(j);
    }
    fit.lambda = lambda;
    fit.objective_value =
        prospective_objective(intercept, fit.coefficients, data, lambda);
    fit.converged = converged;
    fit.iterations = iterations;
    fit.kkt_violation = kkt_violation;
    return fit;
  }

  int active_count() const { return static_cast<int>(active_set.size()); }
};

/// n^(r) of a fit: the number of nonzero coefficients.
inline int active_count(const ModelFit& fit) { return fit.active_count(); }

/// p1(x_i) per row of the standardized design.
inline Eigen::VectorXd fitted_probabilities(const ModelFit& fit,
                                            const Dataset& data) {
  detail::check_theta(fit.coefficients, data, fit.intercept);
  Eigen::VectorXd p(data.rows());
  for (int i = 0; i < data.rows(); ++i) {
    p(i) = expit(fit.intercept + data.x().row(i).dot(fit.coefficients));
  }
  return p;
}

/// | (1/2n) sum_i p1(x_i) - 1/2 |, the empirical retrospective normalization
/// residual. At a penalized optimum the intercept score equation drives this
/// to zero, so converged fits satisfy it to solver tolerance; non-converged
/// iterates generally do not.
inline double check_retrospective_constraint(const ModelFit& fit,
                                             const Dataset& data) {
  return std::abs(fitted_probabilities(fit, data).mean() - 0.5);
}

struct OddsRatio {
  double value = 1.0;
  bool clamped = false;  // exponent magnitude hit the overflow guard
};

/// exp(beta_raw' (x - x0)) for raw-scale covariate profiles. The exponent is
/// clamped at +-700 to stay inside double range; hitting the clamp is flagged.
inline OddsRatio odds_ratio(const ModelFit& fit, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& x0) {
  if (x.size() != fit.coefficients_raw.size() || x0.size() != x.size()) {
    throw std::invalid_argument("odds_ratio: point length does not match M");
  }
  double exponent = fit.coefficients_raw.dot(x - x0);
  OddsRatio result;
  if (std::abs(exponent) > 700.0) {
    exponent = exponent > 0.0 ? 700.0 : -700.0;
    result.clamped = true;
  }
  result.value = std::exp(exponent);
  return result;
}

/// Simulation truth: coefficient vector, its support, and the population
/// intercept calibrated to the target prevalence.
struct GroundTruth {
  Eigen::VectorXd beta_star;
  std::vector<int> support;  // sorted; { j : beta_star[j] != 0 }
  int support_size = 0;
  double prevalence = 0.0;   // pi in (0, 1)
  double intercept0 = 0.0;   // delta_0
  int marginal_kind = 0;     // index into MarginalKind; kept loose here
  double sigma2 = 1.0;
  double rho = 0.0;

  static GroundTruth from_beta(Eigen::VectorXd beta_star, double prevalence,
                               double intercept0) {
    if (!(prevalence > 0.0 && prevalence < 1.0)) {
      throw std::invalid_argument("prevalence must lie in (0, 1)");
    }
    GroundTruth t;
    t.beta_star = std::move(beta_star);
    for (int j = 0; j < t.beta_star.size(); ++j) {
      if (t.beta_star(j) != 0.0) t.support.push_back(j);
    }
    t.support_size = static_cast<int>(t.support.size());
    t.prevalence = prevalence;
    t.intercept0 = intercept0;
    return t;
  }
};

}  // namespace sparsecc
