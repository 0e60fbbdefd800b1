// Command-line front end: data simulation, single fits, path sketching, the
// CV/BIC selection pipeline and the canned experiment drivers.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sparsecc/dataset.hpp"
#include "sparsecc/experiments.hpp"
#include "sparsecc/metrics.hpp"
#include "sparsecc/model.hpp"
#include "sparsecc/path.hpp"
#include "sparsecc/rng.hpp"
#include "sparsecc/selection.hpp"
#include "sparsecc/simulate.hpp"
#include "sparsecc/solver.hpp"

namespace {

using nlohmann::json;
using namespace sparsecc;

json fit_to_json(const ModelFit& fit) {
  json j;
  j["intercept"] = fit.intercept;
  j["intercept_raw"] = fit.intercept_raw;
  j["coefficients"] = std::vector<double>(
      fit.coefficients.data(), fit.coefficients.data() + fit.coefficients.size());
  j["coefficients_raw"] = std::vector<double>(
      fit.coefficients_raw.data(),
      fit.coefficients_raw.data() + fit.coefficients_raw.size());
  j["active_set"] = fit.active_set;
  j["lambda"] = fit.lambda;
  j["objective_value"] = fit.objective_value;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["kkt_violation"] = fit.kkt_violation;
  j["lambda_floored"] = fit.lambda_floored;
  j["separation_detected"] = fit.separation_detected;
  return j;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

std::string truth_sidecar_path(const std::string& csv_path) {
  std::filesystem::path p(csv_path);
  p.replace_extension(".truth.json");
  return p.string();
}

int run_simulate(const std::string& kind_name, int m, int k_star,
                 double beta_value, double pi, int n, std::uint64_t seed,
                 double rho, double sigma2, int mc,
                 const std::string& output) {
  MarginalSpec spec;
  spec.kind = marginal_kind_from_string(kind_name);
  spec.m = m;
  spec.sigma2 = sigma2;
  spec.rho = rho;
  const GroundTruth truth =
      make_ground_truth(spec, k_star, beta_value, pi, mc, derive_seed(seed, 1));
  const Dataset data =
      sample_case_control(spec, truth, n, derive_seed(seed, 2));
  write_dataset_csv(output, data);

  json j;
  j["beta_star"] = std::vector<double>(
      truth.beta_star.data(), truth.beta_star.data() + truth.beta_star.size());
  j["support"] = truth.support;
  j["support_size"] = truth.support_size;
  j["prevalence"] = truth.prevalence;
  j["intercept0"] = truth.intercept0;
  j["marginal"] = {{"kind", kind_name},
                   {"M", m},
                   {"sigma2", sigma2},
                   {"rho", rho}};
  j["n_per_class"] = n;
  j["seed"] = seed;
  write_json(truth_sidecar_path(output), j);
  std::cout << "wrote " << output << " (2n=" << data.rows() << ", M=" << m
            << ") and " << truth_sidecar_path(output) << "\n";
  return 0;
}

int run_fit(const std::string& input, double lambda, double tol, int max_iter,
            const std::string& output) {
  const Dataset data = read_dataset_csv(input);
  SolverConfig config;
  config.tolerance = tol;
  config.max_iterations = max_iter;
  const ModelFit fit = fit_l1_logistic(data, lambda, config);
  json j = fit_to_json(fit);
  j["lambda_max"] = lambda_max(data);
  j["retrospective_constraint"] = check_retrospective_constraint(fit, data);
  if (output.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    write_json(output, j);
    std::cout << "wrote " << output << " (k=" << fit.active_count()
              << ", converged=" << fit.converged << ")\n";
  }
  return fit.converged ? 0 : 1;
}

int run_path(const std::string& input, double alpha, int k_max,
             const std::string& output) {
  const Dataset data = read_dataset_csv(input);
  const SolverConfig config;
  const int cap = k_max > 0 ? std::min(k_max, default_k_max(data))
                            : default_k_max(data);
  const PathSketch sketch = gbm(data, alpha, config, cap);

  std::ostringstream csv;
  csv << "k,r_k,objective,solver_calls_cum,active_set,missing\n";
  for (int k = 0; k <= sketch.k_max; ++k) {
    const auto it = sketch.entries.find(k);
    if (it == sketch.entries.end()) {
      csv << k << ",-1,,,,1\n";
    } else {
      csv << k << ',' << detail::format_double(it->second.r) << ','
          << detail::format_double(it->second.fit.objective_value) << ','
          << it->second.solver_calls_cum << ','
          << detail::join_support(it->second.fit.active_set) << ",0\n";
    }
  }
  detail::write_text_file(output, csv.str());
  std::cout << "wrote " << output << " (" << sketch.entries.size()
            << " entries, " << sketch.missing.size() << " missing, "
            << sketch.solver_calls << " solver calls)\n";
  return 0;
}

int run_select(const std::string& input, int folds, std::uint64_t seed,
               double alpha, int k_max, int jobs, const std::string& output) {
  const Dataset data = read_dataset_csv(input);
  SelectOptions options;
  options.folds = folds;
  options.seed = seed;
  options.alpha = alpha;
  options.k_max = k_max;
  options.jobs = jobs;
  const SelectionResult result = select(data, options);

  json j;
  j["k_hat"] = result.k_hat;
  j["final_r"] = result.final_r;
  j["final_fit"] = fit_to_json(result.final_fit);
  j["skipped_k"] = result.skipped_k;
  j["degraded"] = result.degraded;
  j["all_dimensions_skipped"] = result.all_dimensions_skipped;
  j["solver_calls"] = result.solver_calls;
  json criterion = json::array();
  for (const auto& [k, value] : result.criterion) {
    criterion.push_back({{"k", k},
                         {"cv_loss", result.cv_loss.at(k)},
                         {"criterion", value}});
  }
  j["criterion"] = criterion;
  json trace = json::array();
  for (const CvTraceEntry& t : result.cv_trace) {
    trace.push_back({{"k", t.k},
                     {"fold", t.fold},
                     {"r", t.r},
                     {"support", t.support},
                     {"loss", t.loss}});
  }
  j["cv_trace"] = trace;
  if (output.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    write_json(output, j);
    std::cout << "wrote " << output << " (k_hat=" << result.k_hat << ")\n";
  }
  return 0;
}

ExperimentConfig desk_config(const std::string& out_dir, std::uint64_t seed,
                             int jobs) {
  ExperimentConfig cfg;
  cfg.spec.kind = MarginalKind::nor_iid;
  cfg.seed = seed;
  cfg.jobs = jobs;
  cfg.out_dir = out_dir;
  cfg.scale = "desk";
  return cfg;
}

int run_experiment(const std::string& table, const std::string& scale,
                   int jobs, std::uint64_t seed, const std::string& out_dir,
                   int replicates_override, bool check) {
  const bool desk = scale == "desk";
  int exit_code = 0;

  if (table == "1") {
    ExperimentConfig cfg = desk_config(out_dir, seed, jobs);
    cfg.scenario = "table1";
    cfg.m_list = {desk ? 100 : 250};
    cfg.replicates = desk ? 50 : 250;
    if (replicates_override > 0) cfg.replicates = replicates_override;
    const Table1Result result = run_table1(cfg);
    for (const Table1Row& row : result.rows) {
      std::cout << "experiment " << row.experiment << " (2n=" << 2 * row.n
                << ", k*=" << row.k_star << ", M=" << row.m
                << "): gbm=" << row.pct_gbm << "% grid=" << row.pct_grid
                << "% grid10=" << row.pct_grid10
                << "% grid50=" << row.pct_grid50
                << "% calls=" << row.mean_solver_calls << "\n";
    }
    if (check) {
      const Table1Row& anchor = result.rows.at(1);  // 2n = 200, k* = 3
      if (!(anchor.pct_gbm >= anchor.pct_grid && anchor.pct_gbm >= 90.0)) {
        std::cerr << "check failed: gbm coverage " << anchor.pct_gbm
                  << "% vs grid " << anchor.pct_grid << "%\n";
        exit_code = 2;
      }
    }
  } else if (table == "2") {
    ExperimentConfig cfg = desk_config(out_dir, seed, jobs);
    cfg.scenario = "table2";
    cfg.spec.kind = MarginalKind::snp;
    cfg.k_star = 3;
    cfg.n_list = desk ? std::vector<int>{150} : std::vector<int>{100, 150, 200};
    cfg.m_list = {desk ? 100 : 2000};
    cfg.replicates = desk ? 50 : 250;
    if (replicates_override > 0) cfg.replicates = replicates_override;
    const SelectionCurvesResult signal = run_selection_curves(cfg);

    ExperimentConfig null_cfg = cfg;
    null_cfg.scenario = "table2_null";
    null_cfg.k_star = 0;
    null_cfg.n_list = {desk ? 100 : 150};
    null_cfg.m_list = {desk ? 20 : 2000};
    const SelectionCurvesResult null_run = run_selection_curves(null_cfg);

    for (const SelectionCell& cell : signal.cells) {
      std::cout << cell.kind << " 2n=" << 2 * cell.n << " M=" << cell.m
                << " k*=" << cell.k_star << ": exact=" << cell.pct_exact
                << "% incl=" << cell.pct_inclusion
                << "% median_k=" << cell.median_k_hat << "\n";
    }
    for (const SelectionCell& cell : null_run.cells) {
      std::cout << "null " << cell.kind << " 2n=" << 2 * cell.n
                << " M=" << cell.m << ": k_hat=0 in " << cell.pct_exact
                << "%\n";
    }
    if (check) {
      if (!(signal.cells.front().pct_exact >= 85.0)) {
        std::cerr << "check failed: exact recovery "
                  << signal.cells.front().pct_exact << "% < 85%\n";
        exit_code = 2;
      }
      if (!(null_run.cells.front().pct_exact >= 80.0)) {
        std::cerr << "check failed: null k_hat=0 rate "
                  << null_run.cells.front().pct_exact << "% < 80%\n";
        exit_code = 2;
      }
    }
  } else if (table == "mse") {
    ExperimentConfig cfg = desk_config(out_dir, seed, jobs);
    cfg.scenario = "mse_n";
    cfg.k_star = 3;
    cfg.n_list = desk ? std::vector<int>{100, 200, 300}
                      : std::vector<int>{100, 200, 300, 400, 500};
    cfg.m_list = {desk ? 100 : 2000};
    cfg.replicates = desk ? 50 : 200;
    if (replicates_override > 0) cfg.replicates = replicates_override;
    const SelectionCurvesResult by_n = run_mse_curves(cfg);

    ExperimentConfig m_cfg = cfg;
    m_cfg.scenario = "mse_m";
    m_cfg.n_list = {desk ? 200 : 150};
    m_cfg.m_list = desk ? std::vector<int>{50, 200}
                        : std::vector<int>{250, 500, 1000, 2000};
    const SelectionCurvesResult by_m = run_mse_curves(m_cfg);

    for (const SelectionCell& cell : by_n.cells) {
      std::cout << "2n=" << 2 * cell.n << " M=" << cell.m
                << ": median mse=" << cell.median_mse << "\n";
    }
    for (const SelectionCell& cell : by_m.cells) {
      std::cout << "2n=" << 2 * cell.n << " M=" << cell.m
                << ": median mse=" << cell.median_mse << "\n";
    }
    if (check) {
      for (std::size_t i = 1; i < by_n.cells.size(); ++i) {
        if (!(by_n.cells[i].median_mse < by_n.cells[i - 1].median_mse)) {
          std::cerr << "check failed: median mse not decreasing in 2n\n";
          exit_code = 2;
        }
      }
      const double ratio =
          by_m.cells.back().median_mse / by_m.cells.front().median_mse;
      if (!(ratio >= 0.5 && ratio <= 2.0)) {
        std::cerr << "check failed: mse ratio across M is " << ratio << "\n";
        exit_code = 2;
      }
    }
  } else if (table == "fig1") {
    ExperimentConfig cfg = desk_config(out_dir, seed, jobs);
    cfg.scenario = "figure1";
    cfg.k_star = 3;
    cfg.n_list = {150};
    cfg.m_list = {15};
    const Figure1Result result = run_figure1(cfg);
    std::cout << "sketch entries=" << result.sketch.entries.size()
              << " solver_calls=" << result.sketch.solver_calls
              << " grid points=" << result.grid.grid.size() << "\n";
  } else {
    std::cerr << "unknown table: " << table << "\n";
    return 1;
  }
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"l1-penalized logistic regression for case-control data: "
               "bisection path sketches and CV/BIC variable selection"};
  app.require_subcommand(1);

  // simulate
  std::string sim_kind = "nor_iid", sim_output;
  int sim_m = 100, sim_kstar = 3, sim_n = 100, sim_mc = 1000000;
  double sim_beta = 1.0, sim_pi = 0.01, sim_rho = 0.5, sim_sigma2 = 1.0;
  std::uint64_t sim_seed = 0;
  auto* simulate_cmd =
      app.add_subcommand("simulate", "generate a case-control dataset");
  simulate_cmd->add_option("--kind", sim_kind, "snp|nor_iid|nor_corr")
      ->check(CLI::IsMember({"snp", "nor_iid", "nor_corr"}));
  simulate_cmd->add_option("--M", sim_m, "number of candidate variables");
  simulate_cmd->add_option("--kstar", sim_kstar, "true support size");
  simulate_cmd->add_option("--beta-value", sim_beta,
                           "value of the nonzero coefficients");
  simulate_cmd->add_option("--pi", sim_pi, "population prevalence");
  simulate_cmd->add_option("--n", sim_n, "per-class sample size");
  simulate_cmd->add_option("--seed", sim_seed, "rng seed");
  simulate_cmd->add_option("--rho", sim_rho, "AR(1) correlation (nor_corr)");
  simulate_cmd->add_option("--sigma2", sim_sigma2, "variance (nor_iid)");
  simulate_cmd->add_option("--mc", sim_mc,
                           "Monte Carlo size for the intercept calibration");
  simulate_cmd->add_option("--output", sim_output, "output CSV path")
      ->required();

  // fit
  std::string fit_input, fit_output;
  double fit_lambda = 0.0, fit_tol = 1e-8;
  int fit_max_iter = 10000;
  auto* fit_cmd = app.add_subcommand("fit", "single penalized fit");
  fit_cmd->add_option("--input", fit_input, "dataset CSV")->required();
  fit_cmd->add_option("--lambda", fit_lambda, "penalty multiplier")
      ->required();
  fit_cmd->add_option("--tol", fit_tol, "KKT tolerance");
  fit_cmd->add_option("--max-iter", fit_max_iter, "iteration cap");
  fit_cmd->add_option("--output", fit_output, "output JSON path");

  // path
  std::string path_input, path_output;
  double path_alpha = 0.0;
  int path_kmax = 0;
  auto* path_cmd =
      app.add_subcommand("path", "sparsity-indexed path sketch (GBM)");
  path_cmd->add_option("--input", path_input, "dataset CSV")->required();
  path_cmd->add_option("--alpha", path_alpha,
                       "bisection accuracy (default 1e-4 * lambda_max)");
  path_cmd->add_option("--kmax", path_kmax, "largest support size to sketch");
  path_cmd->add_option("--output", path_output, "output CSV path")->required();

  // select
  std::string select_input, select_output;
  int select_folds = 10, select_kmax = 0, select_jobs = 0;
  double select_alpha = 0.0;
  std::uint64_t select_seed = 0;
  auto* select_cmd =
      app.add_subcommand("select", "CV + BIC variable selection");
  select_cmd->add_option("--input", select_input, "dataset CSV")->required();
  select_cmd->add_option("--folds", select_folds, "fold count");
  select_cmd->add_option("--seed", select_seed, "fold-assignment seed");
  select_cmd->add_option("--alpha", select_alpha, "bisection accuracy");
  select_cmd->add_option("--kmax", select_kmax, "largest support size");
  select_cmd->add_option("--jobs", select_jobs, "fold-level parallelism");
  select_cmd->add_option("--output", select_output, "output JSON path");

  // experiment
  std::string exp_table, exp_scale = "desk", exp_out;
  int exp_jobs = 0, exp_replicates = 0;
  std::uint64_t exp_seed = 0;
  bool exp_check = false;
  auto* exp_cmd = app.add_subcommand("experiment", "canned experiment drivers");
  exp_cmd->add_option("--table", exp_table, "1|2|mse|fig1")
      ->required()
      ->check(CLI::IsMember({"1", "2", "mse", "fig1"}));
  exp_cmd->add_option("--scale", exp_scale, "desk|paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  exp_cmd->add_option("--jobs", exp_jobs, "replicate-level parallelism");
  exp_cmd->add_option("--seed", exp_seed, "base seed");
  exp_cmd->add_option("--replicates", exp_replicates,
                      "override the per-cell replicate count");
  exp_cmd->add_option("--out", exp_out, "output directory")->required();
  exp_cmd->add_flag("--check", exp_check,
                    "exit 2 when an acceptance threshold is missed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate_cmd->parsed()) {
      return run_simulate(sim_kind, sim_m, sim_kstar, sim_beta, sim_pi, sim_n,
                           sim_seed, sim_rho, sim_sigma2, sim_mc, sim_output);
    }
    if (fit_cmd->parsed()) {
      return run_fit(fit_input, fit_lambda, fit_tol, fit_max_iter, fit_output);
    }
    if (path_cmd->parsed()) {
      return run_path(path_input, path_alpha, path_kmax, path_output);
    }
    if (select_cmd->parsed()) {
      const int jobs = select_jobs > 0
                           ? select_jobs
                           : static_cast<int>(std::thread::hardware_concurrency());
      return run_select(select_input, select_folds, select_seed, select_alpha,
                        select_kmax, std::max(1, jobs), select_output);
    }
    if (exp_cmd->parsed()) {
      const int jobs = exp_jobs > 0
                           ? exp_jobs
                           : static_cast<int>(std::thread::hardware_concurrency());
      return run_experiment(exp_table, exp_scale, std::max(1, jobs), exp_seed,
                            exp_out, exp_replicates, exp_check);
    }
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 1;
  }
  return 0;
}
