#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <set>

#include "oracle_helpers.hpp"
#include "sparsecc/dataset.hpp"
#include "sparsecc/model.hpp"
#include "sparsecc/rng.hpp"
#include "sparsecc/selection.hpp"
#include "sparsecc/simulate.hpp"
#include "sparsecc/solver.hpp"

using namespace sparsecc;

namespace {

Dataset simulated(int n, int m, int k_star, std::uint64_t seed,
                  MarginalKind kind = MarginalKind::nor_iid, double pi = 0.1) {
  MarginalSpec spec{kind, m, 1.0, 0.5};
  GroundTruth truth = make_ground_truth(spec, k_star, 1.0, pi, 20000, seed);
  return sample_case_control(spec, truth, n, seed + 1);
}

constexpr double kLog2 = 0.6931471805599453;

}  // namespace

TEST_CASE("stratified folds balance both classes") {
  SECTION("n = 10, p = 10: one case and one control per fold") {
    const Dataset data = simulated(10, 3, 1, 12);
    const FoldPlan plan = stratified_folds(data, 10, 5);
    std::vector<int> cases(10, 0), controls(10, 0);
    for (int i = 0; i < data.rows(); ++i) {
      (data.is_case(i) ? cases : controls)[static_cast<std::size_t>(
          plan.assignments[static_cast<std::size_t>(i)])]++;
    }
    for (int f = 0; f < 10; ++f) {
      CHECK(cases[static_cast<std::size_t>(f)] == 1);
      CHECK(controls[static_cast<std::size_t>(f)] == 1);
    }
  }
  SECTION("n = 25, p = 10: fold sizes differ by at most one per class") {
    const Dataset data = simulated(25, 3, 1, 13);
    const FoldPlan plan = stratified_folds(data, 10, 5);
    std::vector<int> cases(10, 0), controls(10, 0);
    for (int i = 0; i < data.rows(); ++i) {
      (data.is_case(i) ? cases : controls)[static_cast<std::size_t>(
          plan.assignments[static_cast<std::size_t>(i)])]++;
    }
    for (int f = 0; f < 10; ++f) {
      CHECK((cases[static_cast<std::size_t>(f)] == 2 ||
             cases[static_cast<std::size_t>(f)] == 3));
      CHECK(cases[static_cast<std::size_t>(f)] ==
            controls[static_cast<std::size_t>(f)]);
    }
  }
  SECTION("deterministic given the seed") {
    const Dataset data = simulated(25, 3, 1, 14);
    const FoldPlan a = stratified_folds(data, 10, 99);
    const FoldPlan b = stratified_folds(data, 10, 99);
    CHECK(a.assignments == b.assignments);
    const FoldPlan c = stratified_folds(data, 10, 100);
    CHECK(a.assignments != c.assignments);
  }
  SECTION("p > n is rejected") {
    const Dataset data = simulated(5, 3, 1, 15);
    CHECK_THROWS_AS(stratified_folds(data, 6, 0), std::invalid_argument);
  }
}

TEST_CASE("refit_mle") {
  SECTION("empty support gives the intercept-only fit") {
    const Dataset data = simulated(30, 4, 2, 21);
    const ModelFit fit = refit_mle(data, {});
    CHECK(fit.converged);
    CHECK_THAT(fit.intercept, Catch::Matchers::WithinAbs(0.0, 1e-10));
    CHECK(fit.coefficients.cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("matches the Newton oracle on the restricted problem") {
    const Dataset data = simulated(60, 5, 2, 22);
    const ModelFit fit = refit_mle(data, {1});
    REQUIRE(fit.converged);
    const Eigen::VectorXd reference =
        oracle::newton_mle(data.columns_subset({1}));
    CHECK_THAT(fit.intercept, Catch::Matchers::WithinAbs(reference(0), 1e-8));
    CHECK_THAT(fit.coefficients(1),
               Catch::Matchers::WithinAbs(reference(1), 1e-8));
    for (int j : {0, 2, 3, 4}) CHECK(fit.coefficients(j) == 0.0);
  }
  SECTION("full support agrees with the l1 solver at lambda_floor") {
    const Dataset data = simulated(100, 5, 2, 23);
    const ModelFit newton = refit_mle(data, {0, 1, 2, 3, 4});
    REQUIRE(newton.converged);
    const ModelFit lasso = fit_l1_logistic(data, SolverConfig{}.lambda_floor);
    REQUIRE(lasso.converged);
    CHECK_THAT(newton.intercept,
               Catch::Matchers::WithinAbs(lasso.intercept, 1e-4));
    for (int j = 0; j < 5; ++j) {
      CHECK_THAT(newton.coefficients(j),
                 Catch::Matchers::WithinAbs(lasso.coefficients(j), 1e-4));
    }
  }
  SECTION("separation falls back to the floored l1 fit and flags it") {
    Eigen::MatrixXd features(16, 2);
    Rng rng(3);
    for (int i = 0; i < 16; ++i) {
      features(i, 0) = (i < 8 ? -1.0 : 1.0) + 0.02 * rng.normal();
      features(i, 1) = rng.normal();
    }
    std::vector<int> labels(16, 0);
    for (int i = 8; i < 16; ++i) labels[static_cast<std::size_t>(i)] = 1;
    const Dataset data = Dataset::from_raw(features, labels);
    const ModelFit fit = refit_mle(data, {0});
    CHECK(fit.lambda_floored);
    CHECK(fit.coefficients(1) == 0.0);
  }
  SECTION("oversized support is rejected") {
    const Dataset data = simulated(2, 5, 1, 24);
    CHECK_THROWS_AS(refit_mle(data, {0, 1, 2, 3}), std::invalid_argument);
  }
}

TEST_CASE("cv_log_loss") {
  const Dataset data = simulated(20, 3, 1, 31);

  SECTION("log 2 for the null fit on any holdout") {
    const ModelFit null_fit = ModelFit::from_params(
        data, 0.0, Eigen::VectorXd::Zero(3), 0.0, true, 0, 0.0);
    CHECK_THAT(cv_log_loss(null_fit, data),
               Catch::Matchers::WithinAbs(kLog2, 1e-14));
    const std::vector<int> few = {0, 1, data.n(), data.n() + 1};
    CHECK_THAT(cv_log_loss(null_fit, data, few),
               Catch::Matchers::WithinAbs(kLog2, 1e-14));
  }
  SECTION("training loss of the trained fit beats log 2") {
    const ModelFit fit = refit_mle(data, {0, 1, 2});
    CHECK(cv_log_loss(fit, data) < kLog2);
  }
  SECTION("matches a direct-summation oracle") {
    const ModelFit fit = refit_mle(data, {0, 2});
    std::vector<int> holdout;
    for (int i = 0; i < 6; ++i) holdout.push_back(i);
    for (int i = 0; i < 6; ++i) holdout.push_back(data.n() + i);
    long double total = 0.0L;
    for (int i : holdout) {
      long double eta = fit.intercept_raw;
      for (int j = 0; j < data.m(); ++j) {
        eta += static_cast<long double>(fit.coefficients_raw(j)) *
               static_cast<long double>(data.raw(i, j));
      }
      total += oracle::softplus_ld(eta) -
               static_cast<long double>(data.label(i)) * eta;
    }
    CHECK_THAT(cv_log_loss(fit, data, holdout),
               Catch::Matchers::WithinAbs(
                   static_cast<double>(total / holdout.size()), 1e-12));
  }
  SECTION("empty holdout is rejected") {
    const ModelFit fit = refit_mle(data, {});
    CHECK_THROWS_AS(cv_log_loss(fit, data, std::vector<int>{}),
                    std::invalid_argument);
  }
}

TEST_CASE("argmin tie-break prefers the smaller dimension") {
  std::map<int, double> criterion;
  criterion[0] = 0.5;
  criterion[1] = 0.4;
  criterion[2] = 0.4;  // exact tie with k = 1
  criterion[3] = 0.41;
  CHECK(argmin_criterion(criterion) == 1);
  criterion[1] = 0.4000000001;
  CHECK(argmin_criterion(criterion) == 2);
  CHECK_THROWS_AS(argmin_criterion({}), std::invalid_argument);
}

TEST_CASE("select recovers a strong planted support") {
  const Dataset data = simulated(150, 10, 3, 47, MarginalKind::nor_iid, 0.01);
  SelectOptions options;
  options.seed = 7;
  options.jobs = 2;
  const SelectionResult result = select(data, options);

  CHECK(result.k_hat == 3);
  CHECK_FALSE(result.degraded);
  CHECK(result.final_fit.active_set == std::vector<int>{0, 1, 2});
  CHECK(result.final_fit.converged);

  // Criterion decomposition is exact (bitwise, same expression).
  const double unit = 0.5 * std::log(static_cast<double>(data.rows())) /
                      static_cast<double>(data.rows());
  for (const auto& [k, value] : result.criterion) {
    CHECK(value == result.cv_loss.at(k) + unit * k);
  }

  // Trace rows exist for every fold of everyk retained in the average.
  std::map<int, std::set<int>> folds_by_k;
  for (const CvTraceEntry& t : result.cv_trace) {
    folds_by_k[t.k].insert(t.fold);
  }
  for (const auto& [k, value] : result.cv_loss) {
    CHECK(folds_by_k[k].size() == 10);
  }
  // skipped_k was missing from at least one fold.
  for (int k : result.skipped_k) {
    CHECK(folds_by_k[k].size() < 10);
  }
}

TEST_CASE("select is deterministic across runs and fold-level parallelism") {
  const Dataset data = simulated(60, 8, 2, 53, MarginalKind::nor_iid, 0.05);
  SelectOptions serial;
  serial.seed = 11;
  serial.jobs = 1;
  SelectOptions parallel = serial;
  parallel.jobs = 4;

  const SelectionResult a = select(data, serial);
  const SelectionResult b = select(data, parallel);
  CHECK(a.k_hat == b.k_hat);
  CHECK(a.final_r == b.final_r);
  CHECK(a.final_fit.objective_value == b.final_fit.objective_value);
  CHECK(a.final_fit.coefficients.cwiseEqual(b.final_fit.coefficients).all());
  REQUIRE(a.cv_trace.size() == b.cv_trace.size());
  for (std::size_t i = 0; i < a.cv_trace.size(); ++i) {
    CHECK(a.cv_trace[i].k == b.cv_trace[i].k);
    CHECK(a.cv_trace[i].fold == b.cv_trace[i].fold);
    CHECK(a.cv_trace[i].r == b.cv_trace[i].r);
    CHECK(a.cv_trace[i].loss == b.cv_trace[i].loss);
    CHECK(a.cv_trace[i].support == b.cv_trace[i].support);
  }
}

TEST_CASE("select hits k=0 on pure noise", "[mc]") {
  MarginalSpec spec{MarginalKind::nor_iid, 20, 1.0, 0.5};
  const GroundTruth truth = make_ground_truth(spec, 0, 1.0, 0.5, 1000, 61);
  int null_selected = 0;
  const int replications = 50;
  for (int rep = 0; rep < replications; ++rep) {
    const Dataset data = sample_case_control(
        spec, truth, 100, derive_seed(61, static_cast<std::uint64_t>(rep)));
    SelectOptions options;
    options.seed = derive_seed(62, static_cast<std::uint64_t>(rep));
    options.jobs = 2;
    const SelectionResult result = select(data, options);
    if (result.k_hat == 0) ++null_selected;
  }
  INFO("k_hat = 0 in " << null_selected << "/" << replications);
  CHECK(null_selected >= 40);  // 80%
}

TEST_CASE("select recovers the true support on SNP data", "[mc]") {
  MarginalSpec spec{MarginalKind::snp, 50, 1.0, 0.5};
  const GroundTruth truth = make_ground_truth(spec, 3, 1.0, 0.01, 200000, 71);
  int exact = 0;
  const int replications = 50;
  for (int rep = 0; rep < replications; ++rep) {
    const Dataset data = sample_case_control(
        spec, truth, 150, derive_seed(71, static_cast<std::uint64_t>(rep)));
    SelectOptions options;
    options.seed = derive_seed(72, static_cast<std::uint64_t>(rep));
    options.jobs = 2;
    options.k_max = 25;
    const SelectionResult result = select(data, options);
    if (result.final_fit.active_set == truth.support) ++exact;
  }
  INFO("exact recovery in " << exact << "/" << replications);
  CHECK(exact >= 43);  // 85%
}
