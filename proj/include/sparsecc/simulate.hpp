#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparsecc/dataset.hpp"
#include "sparsecc/model.hpp"
#include "sparsecc/path.hpp"
#include "sparsecc/rng.hpp"

namespace sparsecc {

struct DrawBudgetExceeded : std::runtime_error {
  explicit DrawBudgetExceeded(const std::string& what)
      : std::runtime_error(what) {}
};

enum class MarginalKind { snp, nor_iid, nor_corr };

inline std::string to_string(MarginalKind kind) {
  switch (kind) {
    case MarginalKind::snp: return "snp";
    case MarginalKind::nor_iid: return "nor_iid";
    case MarginalKind::nor_corr: return "nor_corr";
  }
  return "unknown";
}

inline MarginalKind marginal_kind_from_string(const std::string& name) {
  if (name == "snp") return MarginalKind::snp;
  if (name == "nor_iid") return MarginalKind::nor_iid;
  if (name == "nor_corr") return MarginalKind::nor_corr;
  throw std::invalid_argument("unknown marginal kind: " + name);
}

/// Candidate-variable distribution:
///  snp      - i.i.d. entries on {-sqrt(2), 0, sqrt(2)} with weights
///             {1/4, 1/2, 1/4} (zero mean, unit variance)
///  nor_iid  - i.i.d. N(0, sigma2)
///  nor_corr - N(0, Sigma) rows with Sigma_ij = rho^|i-j|
struct MarginalSpec {
  MarginalKind kind = MarginalKind::nor_iid;
  int m = 0;
  double sigma2 = 1.0;
  double rho = 0.5;

  void validate() const {
    if (m < 1) throw std::invalid_argument("MarginalSpec: M must be positive");
    if (!(sigma2 > 0.0)) {
      throw std::invalid_argument("MarginalSpec: sigma2 must be positive");
    }
    if (!(rho > -1.0 && rho < 1.0)) {
      throw std::invalid_argument("MarginalSpec: rho must lie in (-1, 1)");
    }
  }
};

namespace detail {

inline double snp_draw(Rng& rng) {
  // Two fair bits: {0 -> -sqrt(2), 1,2 -> 0, 3 -> sqrt(2)}.
  switch (rng.below(4)) {
    case 0: return -std::sqrt(2.0);
    case 3: return std::sqrt(2.0);
    default: return 0.0;
  }
}

// Fills one row in place. The AR(1) row uses the recursion
// x_j = rho * x_{j-1} + sqrt(1 - rho^2) * z_j, which realizes N(0, rho^|i-j|)
// exactly without a Cholesky factor.
inline void sample_row(const MarginalSpec& spec, Rng& rng, double* row,
                       int count) {
  switch (spec.kind) {
    case MarginalKind::snp:
      for (int j = 0; j < count; ++j) row[j] = snp_draw(rng);
      break;
    case MarginalKind::nor_iid: {
      const double sd = std::sqrt(spec.sigma2);
      for (int j = 0; j < count; ++j) row[j] = sd * rng.normal();
      break;
    }
    case MarginalKind::nor_corr: {
      const double innovation = std::sqrt(1.0 - spec.rho * spec.rho);
      double prev = rng.normal();
      row[0] = prev;
      for (int j = 1; j < count; ++j) {
        prev = spec.rho * prev + innovation * rng.normal();
        row[j] = prev;
      }
      break;
    }
  }
}

}  // namespace detail

inline Eigen::MatrixXd sample_marginal(const MarginalSpec& spec, int count,
                                       std::uint64_t seed) {
  spec.validate();
  if (count < 1) throw std::invalid_argument("sample_marginal: count < 1");
  Rng rng(seed);
  Eigen::MatrixXd x(count, spec.m);
  std::vector<double> row(static_cast<std::size_t>(spec.m));
  for (int i = 0; i < count; ++i) {
    detail::sample_row(spec, rng, row.data(), spec.m);
    for (int j = 0; j < spec.m; ++j) x(i, j) = row[static_cast<std::size_t>(j)];
  }
  return x;
}

namespace detail {

// Streams `count` draws of beta' X without materializing full rows; only the
// leading prefix of each row up to the last nonzero coefficient is generated
// (an AR(1) prefix has the same law as the prefix of a full row).
inline std::vector<double> sample_linear_predictors(
    const MarginalSpec& spec, const Eigen::VectorXd& beta, int count,
    std::uint64_t seed) {
  int prefix = 0;
  for (int j = 0; j < beta.size(); ++j) {
    if (beta(j) != 0.0) prefix = j + 1;
  }
  std::vector<double> values(static_cast<std::size_t>(count), 0.0);
  if (prefix == 0) return values;
  Rng rng(seed);
  std::vector<double> row(static_cast<std::size_t>(prefix));
  MarginalSpec prefix_spec = spec;
  prefix_spec.m = prefix;
  for (int i = 0; i < count; ++i) {
    sample_row(prefix_spec, rng, row.data(), prefix);
    double s = 0.0;
    for (int j = 0; j < prefix; ++j) s += beta(j) * row[static_cast<std::size_t>(j)];
    values[static_cast<std::size_t>(i)] = s;
  }
  return values;
}

}  // namespace detail

/// Population intercept delta_0 solving E[expit(delta_0 + beta*' X)] = pi,
/// found by bisection over [-50, 50] (tolerance 1e-10 on delta) against a
/// fixed Monte Carlo sample of size mc.
inline double calibrate_delta0(const MarginalSpec& spec,
                               const Eigen::VectorXd& beta_star, double pi,
                               int mc, std::uint64_t seed) {
  spec.validate();
  if (beta_star.size() != spec.m) {
    throw std::invalid_argument("calibrate_delta0: beta length != M");
  }
  if (!(pi > 0.0 && pi < 1.0)) {
    throw std::invalid_argument("calibrate_delta0: pi must lie in (0, 1)");
  }
  if (mc < 1) throw std::invalid_argument("calibrate_delta0: mc < 1");
  const std::vector<double> predictors =
      detail::sample_linear_predictors(spec, beta_star, mc, seed);
  const auto excess_prevalence = [&](double delta) {
    double total = 0.0;
    for (double s : predictors) total += expit(delta + s);
    return total / static_cast<double>(mc) - pi;
  };
  return bbm(excess_prevalence, -50.0, 50.0, 1e-10);
}

inline GroundTruth make_ground_truth(const MarginalSpec& spec, int k_star,
                                     double beta_value, double pi, int mc,
                                     std::uint64_t seed) {
  spec.validate();
  if (k_star < 0 || k_star > spec.m) {
    throw std::invalid_argument("make_ground_truth: require 0 <= k* <= M");
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(spec.m);
  for (int j = 0; j < k_star; ++j) beta(j) = beta_value;
  const double delta0 = calibrate_delta0(spec, beta, pi, mc, seed);
  GroundTruth truth = GroundTruth::from_beta(std::move(beta), pi, delta0);
  truth.marginal_kind = static_cast<int>(spec.kind);
  truth.sigma2 = spec.sigma2;
  truth.rho = spec.kind == MarginalKind::nor_corr ? spec.rho : 0.0;
  return truth;
}

/// Case-control sampler: draw X from the marginal, Y | X from the logistic
/// link at (delta_0, beta*), and route into the case or control pool until
/// both hold n rows. Expected draws are about n / pi for the case pool; the
/// hard budget 1000 n / pi guards against a miscalibrated delta_0.
inline Dataset sample_case_control(const MarginalSpec& spec,
                                   const GroundTruth& truth, int n,
                                   std::uint64_t seed) {
  spec.validate();
  if (truth.beta_star.size() != spec.m) {
    throw std::invalid_argument("sample_case_control: truth M mismatch");
  }
  if (n < 1) throw std::invalid_argument("sample_case_control: n < 1");

  Rng rng(seed);
  Eigen::MatrixXd controls(n, spec.m), cases(n, spec.m);
  int n_controls = 0, n_cases = 0;
  std::vector<double> row(static_cast<std::size_t>(spec.m));
  const double budget =
      1000.0 * static_cast<double>(n) / truth.prevalence;
  double draws = 0.0;
  while (n_controls < n || n_cases < n) {
    if (++draws > budget) {
      throw DrawBudgetExceeded(
          "sample_case_control: exceeded 1000 n / pi draws; delta_0 looks "
          "miscalibrated");
    }
    detail::sample_row(spec, rng, row.data(), spec.m);
    double eta = truth.intercept0;
    for (int j : truth.support) eta += truth.beta_star(j) * row[static_cast<std::size_t>(j)];
    const bool is_case = rng.uniform() < expit(eta);
    if (is_case) {
      if (n_cases == n) continue;
      for (int j = 0; j < spec.m; ++j) cases(n_cases, j) = row[static_cast<std::size_t>(j)];
      ++n_cases;
    } else {
      if (n_controls == n) continue;
      for (int j = 0; j < spec.m; ++j) controls(n_controls, j) = row[static_cast<std::size_t>(j)];
      ++n_controls;
    }
  }

  Eigen::MatrixXd features(2 * n, spec.m);
  features.topRows(n) = controls;
  features.bottomRows(n) = cases;
  std::vector<int> labels(static_cast<std::size_t>(2 * n), 0);
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(n + i)] = 1;
  const double bound =
      spec.kind == MarginalKind::snp ? std::sqrt(2.0) : 0.0;
  return Dataset::from_raw(features, labels, bound);
}

/// Inputs of the theoretical tuning sequences.
struct TuningInputs {
  double n = 0.0;        // per-class sample size
  double m = 0.0;        // number of candidate variables
  double bound = 0.0;    // feature bound L
  double delta_n = 0.0;  // vanishing sequence value, default 1/n

  void validate() const {
    if (!(n > 0.0) || !(m > 0.0) || !(bound > 0.0)) {
      throw std::invalid_argument("TuningInputs: n, M, L must be positive");
    }
    if (!(delta_n > 0.0 && delta_n < 1.0)) {
      throw std::invalid_argument("TuningInputs: delta_n must lie in (0, 1)");
    }
  }
};

/// r = log n ( 6L sqrt(2 log(2 (M v n)) / n) + 1 / (4 (M v n))
///             + 4L sqrt(2 log(1 / delta_n) / n) ).
inline double theoretical_r_estimation(const TuningInputs& t) {
  t.validate();
  const double mvn = std::max(t.m, t.n);
  return std::log(t.n) *
         (6.0 * t.bound * std::sqrt(2.0 * std::log(2.0 * mvn) / t.n) +
          1.0 / (4.0 * mvn) +
          4.0 * t.bound * std::sqrt(2.0 * std::log(1.0 / t.delta_n) / t.n));
}

/// Same sequence with log(M / delta_n) in the last term; for M > 1 this is
/// strictly larger than the estimation sequence at the same inputs.
inline double theoretical_r_selection(const TuningInputs& t) {
  t.validate();
  const double mvn = std::max(t.m, t.n);
  return std::log(t.n) *
         (6.0 * t.bound * std::sqrt(2.0 * std::log(2.0 * mvn) / t.n) +
          1.0 / (4.0 * mvn) +
          4.0 * t.bound * std::sqrt(2.0 * std::log(t.m / t.delta_n) / t.n));
}

/// Diagnostic for the detectability condition min_{j in I*} |beta*_j| > 4r
/// (with r the selection sequence). Vacuously satisfied for an empty support.
struct Assumption2Report {
  double min_signal = 0.0;
  double threshold = 0.0;
  bool satisfied = false;
};

inline Assumption2Report assumption2_report(const GroundTruth& truth,
                                            const TuningInputs& t) {
  Assumption2Report report;
  report.threshold = 4.0 * theoretical_r_selection(t);
  if (truth.support.empty()) {
    report.min_signal = std::numeric_limits<double>::infinity();
    report.satisfied = true;
    return report;
  }
  report.min_signal = std::numeric_limits<double>::infinity();
  for (int j : truth.support) {
    report.min_signal = std::min(report.min_signal, std::abs(truth.beta_star(j)));
  }
  report.satisfied = report.min_signal > report.threshold;
  return report;
}

}  // namespace sparsecc
