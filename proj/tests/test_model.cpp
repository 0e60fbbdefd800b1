#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "oracle_helpers.hpp"
#include "sparsecc/dataset.hpp"
#include "sparsecc/model.hpp"
#include "sparsecc/rng.hpp"
#include "sparsecc/simulate.hpp"
#include "sparsecc/solver.hpp"

using namespace sparsecc;

namespace {

// 4-row, M=2 hand dataset used across the objective tests.
Dataset hand_dataset() {
  Eigen::MatrixXd features(4, 2);
  features << 0.3, -0.2,
              -0.1, 0.4,
              0.5, 0.1,
              -0.3, -0.6;
  return Dataset::from_raw(features, {0, 0, 1, 1});
}

Dataset simulated(int n, int m, int k_star, std::uint64_t seed,
                  MarginalKind kind = MarginalKind::nor_iid) {
  MarginalSpec spec{kind, m, 1.0, 0.5};
  GroundTruth truth = make_ground_truth(spec, k_star, 1.0, 0.1, 20000, seed);
  return sample_case_control(spec, truth, n, seed + 1);
}

constexpr double kLog2 = 0.6931471805599453;

}  // namespace

TEST_CASE("objective at theta = 0 is log 2 regardless of lambda") {
  const Dataset data = simulated(30, 4, 2, 3);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(4);
  CHECK_THAT(prospective_objective(0.0, zero, data, 0.0),
             Catch::Matchers::WithinAbs(kLog2, 1e-14));
  // The penalty is zero at beta = 0 whatever the multiplier.
  CHECK_THAT(prospective_objective(0.0, zero, data, 5.0),
             Catch::Matchers::WithinAbs(kLog2, 1e-14));
}

TEST_CASE("objective matches the direct-summation oracle on the hand dataset") {
  const Dataset data = hand_dataset();
  Eigen::VectorXd beta(2);
  beta << 1.0, -1.0;
  const double value = prospective_objective(0.5, beta, data, 0.1);
  // Value frozen from a 50-digit evaluation of the standardization plus
  // term-by-term objective.
  CHECK_THAT(value, Catch::Matchers::WithinAbs(0.83895204255634837, 1e-13));
  CHECK_THAT(value, Catch::Matchers::WithinAbs(
                        oracle::direct_objective(data, 0.5, beta, 0.1), 1e-13));
}

TEST_CASE("objective validates its inputs") {
  const Dataset data = hand_dataset();
  Eigen::VectorXd wrong_size(3);
  wrong_size.setZero();
  CHECK_THROWS_AS(prospective_objective(0.0, wrong_size, data, 0.0),
                  std::invalid_argument);
  Eigen::VectorXd bad(2);
  bad << std::numeric_limits<double>::infinity(), 0.0;
  CHECK_THROWS_AS(prospective_objective(0.0, bad, data, 0.0),
                  std::invalid_argument);
  Eigen::VectorXd ok = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(prospective_objective(0.0, ok, data, -1.0),
                  std::invalid_argument);
}

TEST_CASE("stable softplus evaluation for large arguments") {
  CHECK_THAT(log1p_exp(800.0), Catch::Matchers::WithinAbs(800.0, 1e-12));
  CHECK_THAT(log1p_exp(-800.0), Catch::Matchers::WithinAbs(0.0, 1e-12));
  CHECK_THAT(log1p_exp(0.0), Catch::Matchers::WithinAbs(kLog2, 1e-15));
  CHECK(std::isfinite(log1p_exp(30.0000001)));
  // Continuity across the branch point.
  CHECK_THAT(log1p_exp(std::nextafter(30.0, 31.0)),
             Catch::Matchers::WithinAbs(log1p_exp(30.0), 1e-12));
}

TEST_CASE("gradient vanishes at the intercept for theta = 0 on balanced data") {
  const Dataset data = simulated(25, 3, 1, 7);
  const Gradient g =
      prospective_gradient(0.0, Eigen::VectorXd::Zero(3), data);
  CHECK_THAT(g.intercept, Catch::Matchers::WithinAbs(0.0, 1e-15));
}

TEST_CASE("gradient agrees with central finite differences") {
  Rng rng(99);
  for (int draw = 0; draw < 100; ++draw) {
    const int m = 1 + static_cast<int>(rng.below(4));
    const Dataset data = simulated(20, m, std::min(m, 2),
                                   1000 + static_cast<std::uint64_t>(draw));
    const double intercept = rng.normal() * 0.5;
    Eigen::VectorXd beta(m);
    for (int j = 0; j < m; ++j) beta(j) = rng.normal() * 0.5;

    const Gradient g = prospective_gradient(intercept, beta, data);
    const auto [fd0, fd] = oracle::finite_difference_gradient(
        [&](double d, const Eigen::VectorXd& b) {
          return prospective_objective(d, b, data, 0.0);
        },
        intercept, beta);
    REQUIRE_THAT(g.intercept, Catch::Matchers::WithinAbs(fd0, 1e-6));
    REQUIRE((g.beta - fd).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("gradient is below tolerance at the unpenalized optimum") {
  const Dataset data = simulated(100, 2, 1, 21);
  SolverConfig config;
  const ModelFit fit = fit_l1_logistic(data, 0.0, config);
  REQUIRE(fit.converged);
  const Gradient g = prospective_gradient(fit.intercept, fit.coefficients, data);
  CHECK(std::abs(g.intercept) <= config.tolerance);
  CHECK(g.beta.cwiseAbs().maxCoeff() <= config.tolerance);
}

TEST_CASE("objective is convex along random segments") {
  Rng rng(31);
  const Dataset data = simulated(20, 3, 1, 55);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd beta1(3), beta2(3);
    for (int j = 0; j < 3; ++j) {
      beta1(j) = rng.normal();
      beta2(j) = rng.normal();
    }
    const double d1 = rng.normal(), d2 = rng.normal();
    const double t = rng.uniform();
    const double lambda = std::abs(rng.normal()) * 0.1;
    const double mixed = prospective_objective(
        t * d1 + (1 - t) * d2, t * beta1 + (1 - t) * beta2, data, lambda);
    const double bound = t * prospective_objective(d1, beta1, data, lambda) +
                         (1 - t) * prospective_objective(d2, beta2, data, lambda);
    CHECK(mixed <= bound + 1e-10);
  }
}

TEST_CASE("fitted probabilities") {
  const Dataset data = simulated(15, 2, 1, 77);
  SECTION("all one half at theta = 0") {
    ModelFit fit = ModelFit::from_params(data, 0.0, Eigen::VectorXd::Zero(2),
                                         0.0, true, 0, 0.0);
    const Eigen::VectorXd p = fitted_probabilities(fit, data);
    for (int i = 0; i < data.rows(); ++i) {
      CHECK_THAT(p(i), Catch::Matchers::WithinAbs(0.5, 1e-15));
    }
  }
  SECTION("monotone to one as the intercept grows") {
    double previous_min = 0.0;
    for (double t : {1.0, 5.0, 20.0, 100.0}) {
      ModelFit fit = ModelFit::from_params(data, t, Eigen::VectorXd::Zero(2),
                                           0.0, true, 0, 0.0);
      const double lo = fitted_probabilities(fit, data).minCoeff();
      CHECK(lo > previous_min);
      previous_min = lo;
    }
    CHECK(previous_min > 1.0 - 1e-10);
  }
}

TEST_CASE("retrospective constraint residual") {
  const Dataset data = simulated(100, 5, 3, 13);

  SECTION("zero exactly at theta = 0") {
    ModelFit fit = ModelFit::from_params(data, 0.0, Eigen::VectorXd::Zero(5),
                                         0.0, true, 0, 0.0);
    CHECK(check_retrospective_constraint(fit, data) == 0.0);
  }
  SECTION("within 1e-6 for every converged fit") {
    SolverConfig config;
    const double top = lambda_max(data);
    for (double frac : {0.8, 0.4, 0.1, 0.02}) {
      const ModelFit fit = fit_l1_logistic(data, frac * top, config);
      REQUIRE(fit.converged);
      CHECK(check_retrospective_constraint(fit, data) <=
            10.0 * config.tolerance);
    }
  }
  SECTION("discriminates a deliberately non-converged fit") {
    SolverConfig one_cycle;
    one_cycle.max_iterations = 1;
    const ModelFit fit =
        fit_l1_logistic(data, 0.05 * lambda_max(data), one_cycle);
    REQUIRE_FALSE(fit.converged);
    CHECK(check_retrospective_constraint(fit, data) > 1e-3);
  }
}

TEST_CASE("odds ratio") {
  const Dataset data = hand_dataset();
  Eigen::VectorXd beta_std(2);
  // Raw-scale coefficients (1, 1): standardized ones are scaled copies.
  beta_std << data.column_scale()(0), data.column_scale()(1);
  ModelFit fit =
      ModelFit::from_params(data, 0.0, beta_std, 0.0, true, 0, 0.0);

  SECTION("identity at x = x0") {
    Eigen::VectorXd x(2);
    x << 0.4, -0.7;
    const OddsRatio r = odds_ratio(fit, x, x);
    CHECK(r.value == 1.0);
    CHECK_FALSE(r.clamped);
  }
  SECTION("analytic values") {
    Eigen::VectorXd x(2), x0(2);
    x << 0.3, -0.1;
    x0 << 0.0, 0.0;
    CHECK_THAT(odds_ratio(fit, x, x0).value,
               Catch::Matchers::WithinAbs(1.2214027581601698, 1e-12));

    Eigen::VectorXd beta_first(2);
    beta_first << data.column_scale()(0), 0.0;
    ModelFit unit =
        ModelFit::from_params(data, 0.0, beta_first, 0.0, true, 0, 0.0);
    Eigen::VectorXd ln2(2);
    ln2 << std::log(2.0), 0.0;
    CHECK_THAT(odds_ratio(unit, ln2, x0).value,
               Catch::Matchers::WithinAbs(2.0, 1e-12));
  }
  SECTION("overflow guard clamps and flags") {
    Eigen::VectorXd x(2), x0(2);
    x << 1000.0, 0.0;
    x0 << 0.0, 0.0;
    const OddsRatio r = odds_ratio(fit, x, x0);
    CHECK(r.clamped);
    CHECK(std::isfinite(r.value));
  }
}

TEST_CASE("model fit bookkeeping invariants") {
  const Dataset data = simulated(50, 4, 2, 17);
  const ModelFit fit = fit_l1_logistic(data, 0.3 * lambda_max(data));

  // Active set is exactly the nonzero coordinates.
  for (int j = 0; j < data.m(); ++j) {
    const bool in_set = std::find(fit.active_set.begin(), fit.active_set.end(),
                                  j) != fit.active_set.end();
    CHECK(in_set == (fit.coefficients(j) != 0.0));
  }
  // Stored objective value matches a fresh evaluation.
  CHECK_THAT(fit.objective_value,
             Catch::Matchers::WithinAbs(
                 prospective_objective(fit.intercept, fit.coefficients, data,
                                       fit.lambda),
                 1e-10));
  // Raw coefficients are the standardized ones divided by the column scale.
  for (int j = 0; j < data.m(); ++j) {
    CHECK(fit.coefficients_raw(j) ==
          fit.coefficients(j) / data.column_scale()(j));
  }
}

TEST_CASE("scale round trip: raw-scale predictor reproduces probabilities") {
  const Dataset data = simulated(40, 3, 2, 23);
  const ModelFit fit = fit_l1_logistic(data, 0.2 * lambda_max(data));
  const Eigen::VectorXd p = fitted_probabilities(fit, data);
  for (int i = 0; i < data.rows(); ++i) {
    double eta = fit.intercept_raw;
    for (int j = 0; j < data.m(); ++j) {
      eta += fit.coefficients_raw(j) * data.raw(i, j);
    }
    CHECK_THAT(expit(eta), Catch::Matchers::WithinAbs(p(i), 1e-10));
  }
}
