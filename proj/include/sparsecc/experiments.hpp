#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparsecc/dataset.hpp"
#include "sparsecc/metrics.hpp"
#include "sparsecc/parallel.hpp"
#include "sparsecc/path.hpp"
#include "sparsecc/rng.hpp"
#include "sparsecc/selection.hpp"
#include "sparsecc/simulate.hpp"
#include "sparsecc/solver.hpp"

namespace sparsecc {

/// One experiment run: scenario id, data-generating marginal, design sizes,
/// replication count and seeding. Outputs land in out_dir as a long-form CSV
/// (one row per replicate per cell), a summary CSV, and a JSON metadata
/// sidecar. Identical configs (including seed) produce byte-identical files.
struct ExperimentConfig {
  std::string scenario;
  MarginalSpec spec;
  int k_star = 3;
  std::vector<int> n_list;  // per-class sizes
  std::vector<int> m_list;
  int replicates = 50;
  std::uint64_t seed = 0;
  double alpha = 0.0;  // <= 0: 1e-4 * lambda_max per sketched dataset
  int folds = 10;
  std::string out_dir;
  std::string scale = "desk";
  int jobs = 1;
  int k_max_cap = 30;  // cap on sketched support sizes in the drivers
  double pi = 0.01;
  double beta_value = 1.0;
  int calibration_mc = 1000000;

  void validate() const {
    if (replicates < 1) {
      throw std::invalid_argument("ExperimentConfig: replicates must be >= 1");
    }
    for (int n : n_list) {
      if (n < 1) throw std::invalid_argument("ExperimentConfig: bad n entry");
    }
    for (int m : m_list) {
      if (m < 1) throw std::invalid_argument("ExperimentConfig: bad M entry");
    }
  }
};

namespace detail {

inline void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << body;
}

inline std::string join_support(const std::vector<int>& support) {
  std::string out;
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (i > 0) out += ';';
    out += std::to_string(support[i] + 1);  // 1-based, matching x1..xM names
  }
  return out;
}

// Minimal metadata sidecar; keys are stable so downstream tooling can diff
// runs. Values must already be valid JSON fragments.
inline std::string metadata_json(
    const ExperimentConfig& cfg,
    const std::vector<std::pair<std::string, std::string>>& extras) {
  std::ostringstream out;
  out << "{\n";
  out << "  \"scenario\": \"" << cfg.scenario << "\",\n";
  out << "  \"marginal\": \"" << to_string(cfg.spec.kind) << "\",\n";
  out << "  \"sigma2\": " << format_double(cfg.spec.sigma2) << ",\n";
  out << "  \"rho\": " << format_double(cfg.spec.rho) << ",\n";
  out << "  \"k_star\": " << cfg.k_star << ",\n";
  out << "  \"replicates\": " << cfg.replicates << ",\n";
  out << "  \"seed\": " << cfg.seed << ",\n";
  out << "  \"folds\": " << cfg.folds << ",\n";
  out << "  \"alpha\": " << format_double(cfg.alpha) << ",\n";
  out << "  \"k_max_cap\": " << cfg.k_max_cap << ",\n";
  out << "  \"pi\": " << format_double(cfg.pi) << ",\n";
  out << "  \"beta_value\": " << format_double(cfg.beta_value) << ",\n";
  out << "  \"calibration_mc\": " << cfg.calibration_mc << ",\n";
  out << "  \"scale\": \"" << cfg.scale << "\"";
  for (const auto& [key, value] : extras) {
    out << ",\n  \"" << key << "\": " << value;
  }
  out << "\n}\n";
  return out.str();
}

inline void ensure_out_dir(const ExperimentConfig& cfg) {
  if (cfg.out_dir.empty()) {
    throw std::invalid_argument("ExperimentConfig: out_dir is required");
  }
  std::filesystem::create_directories(cfg.out_dir);
}

inline std::string out_path(const ExperimentConfig& cfg,
                            const std::string& name) {
  return (std::filesystem::path(cfg.out_dir) / name).string();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Path-sketch coverage vs grid baselines.

struct Table1Row {
  int experiment = 0;
  int n = 0;  // per-class
  int k_star = 0;
  int m = 0;
  double pct_gbm = 0.0;
  double pct_grid = 0.0;
  double pct_grid10 = 0.0;
  double pct_grid50 = 0.0;
  double mean_solver_calls = 0.0;
};

struct Table1Result {
  std::vector<Table1Row> rows;
};

/// Coverage comparison between the queue-driven sketch and geometric grids of
/// equal, 10x and 50x budget. Cells are the four (2n, k*) configurations
/// {(100,3),(200,3),(300,10),(400,10)} at M = m_list[0].
inline Table1Result run_table1(const ExperimentConfig& cfg) {
  cfg.validate();
  detail::ensure_out_dir(cfg);
  const int m = cfg.m_list.empty() ? 100 : cfg.m_list.front();
  struct Cell {
    int experiment, n, k_star;
  };
  const std::vector<Cell> cells = {
      {1, 50, 3}, {2, 100, 3}, {3, 150, 10}, {4, 200, 10}};

  struct Rep {
    bool gbm_hit = false, grid_hit = false, grid10_hit = false,
         grid50_hit = false;
    std::uint64_t gbm_calls = 0;
    std::uint64_t grid_calls = 0, grid10_calls = 0, grid50_calls = 0;
  };

  std::ostringstream long_csv;
  long_csv << "experiment,n2,k_star,M,replicate,gbm_calls,gbm_hit,grid_hit,"
              "grid10_hit,grid50_hit\n";
  Table1Result result;

  for (std::size_t c = 0; c < cells.size(); ++c) {
    const Cell& cell = cells[c];
    MarginalSpec spec = cfg.spec;
    spec.m = m;
    const GroundTruth truth =
        make_ground_truth(spec, cell.k_star, cfg.beta_value, cfg.pi,
                          cfg.calibration_mc, derive_seed(cfg.seed, 1000 + c));

    std::vector<Rep> reps(static_cast<std::size_t>(cfg.replicates));
    parallel_for(cfg.replicates, cfg.jobs, [&](int rep) {
      const std::uint64_t rep_seed =
          derive_seed(cfg.seed, c * 1000000 + static_cast<std::uint64_t>(rep));
      const Dataset data = sample_case_control(spec, truth, cell.n, rep_seed);
      const SolverConfig solver;
      const int k_cap = std::min(cfg.k_max_cap, default_k_max(data));
      const PathSketch sketch = gbm(data, cfg.alpha, solver, k_cap);
      Rep& out = reps[static_cast<std::size_t>(rep)];
      out.gbm_calls = sketch.solver_calls;
      out.gbm_hit = support_in_path(sketch, truth);
      const int budget = static_cast<int>(sketch.solver_calls);
      const GridPath grid = grid_path(data, budget, solver);
      const GridPath grid10 = grid_path(data, 10 * budget, solver);
      const GridPath grid50 = grid_path(data, 50 * budget, solver);
      out.grid_calls = grid.solver_calls;
      out.grid10_calls = grid10.solver_calls;
      out.grid50_calls = grid50.solver_calls;
      out.grid_hit = support_in_path(grid, truth);
      out.grid10_hit = support_in_path(grid10, truth);
      out.grid50_hit = support_in_path(grid50, truth);
    });

    Table1Row row;
    row.experiment = cell.experiment;
    row.n = cell.n;
    row.k_star = cell.k_star;
    row.m = m;
    double calls = 0.0;
    for (int rep = 0; rep < cfg.replicates; ++rep) {
      const Rep& r = reps[static_cast<std::size_t>(rep)];
      if (r.grid_calls != r.gbm_calls || r.grid10_calls != 10 * r.gbm_calls ||
          r.grid50_calls != 50 * r.gbm_calls) {
        throw std::logic_error("table1: grid budget mismatch");
      }
      row.pct_gbm += r.gbm_hit ? 1.0 : 0.0;
      row.pct_grid += r.grid_hit ? 1.0 : 0.0;
      row.pct_grid10 += r.grid10_hit ? 1.0 : 0.0;
      row.pct_grid50 += r.grid50_hit ? 1.0 : 0.0;
      calls += static_cast<double>(r.gbm_calls);
      long_csv << cell.experiment << ',' << 2 * cell.n << ',' << cell.k_star
               << ',' << m << ',' << rep << ',' << r.gbm_calls << ','
               << (r.gbm_hit ? 1 : 0) << ',' << (r.grid_hit ? 1 : 0) << ','
               << (r.grid10_hit ? 1 : 0) << ',' << (r.grid50_hit ? 1 : 0)
               << "\n";
    }
    const double scale = 100.0 / cfg.replicates;
    row.pct_gbm *= scale;
    row.pct_grid *= scale;
    row.pct_grid10 *= scale;
    row.pct_grid50 *= scale;
    row.mean_solver_calls = calls / cfg.replicates;
    result.rows.push_back(row);
  }

  std::ostringstream summary;
  summary << "experiment,n2,k_star,M,pct_gbm,pct_grid,pct_grid10,pct_grid50,"
             "mean_solver_calls\n";
  for (const Table1Row& row : result.rows) {
    summary << row.experiment << ',' << 2 * row.n << ',' << row.k_star << ','
            << row.m << ',' << detail::format_double(row.pct_gbm) << ','
            << detail::format_double(row.pct_grid) << ','
            << detail::format_double(row.pct_grid10) << ','
            << detail::format_double(row.pct_grid50) << ','
            << detail::format_double(row.mean_solver_calls) << "\n";
  }
  detail::write_text_file(detail::out_path(cfg, "table1_replicates.csv"),
                          long_csv.str());
  detail::write_text_file(detail::out_path(cfg, "table1_summary.csv"),
                          summary.str());
  detail::write_text_file(
      detail::out_path(cfg, "table1_metadata.json"),
      detail::metadata_json(
          cfg, {{"M", std::to_string(m)},
                {"full_scale_reference",
                 "{\"M\": 250, \"replicates\": 250, \"pct_gbm\": [70.0, 99.2, "
                 "88.4, 98.8], \"pct_grid\": [28.8, 79.2, 76.8, 93.2]}"}}));
  return result;
}

// ---------------------------------------------------------------------------
// Selection accuracy through the full CV + BIC pipeline.

struct SelectionCell {
  std::string kind;
  int n = 0;
  int m = 0;
  int k_star = 0;
  double pct_exact = 0.0;
  double pct_inclusion = 0.0;
  double median_k_hat = 0.0;
  double median_mse = 0.0;
};

struct SelectionCurvesResult {
  std::vector<SelectionCell> cells;
};

namespace detail {

struct SelectionReplicate {
  EvalReport eval;
  int k_hat = 0;
  bool degraded = false;
};

inline SelectionReplicate run_selection_replicate(
    const ExperimentConfig& cfg, const MarginalSpec& spec,
    const GroundTruth& truth, int n, std::uint64_t rep_seed) {
  const Dataset data = sample_case_control(spec, truth, n, rep_seed);
  SelectOptions options;
  options.folds = cfg.folds;
  options.alpha = cfg.alpha;
  options.seed = derive_seed(rep_seed, 17);
  options.k_max = cfg.k_max_cap;
  const SelectionResult sel = select(data, options);
  SelectionReplicate out;
  out.eval = evaluate(sel.final_fit, truth, data);
  out.k_hat = sel.k_hat;
  out.degraded = sel.degraded;
  return out;
}

}  // namespace detail

/// Exact-recovery and inclusion percentages (plus median selected dimension
/// and median mse of the final fit), per (kind, 2n, M) cell, each replicate
/// running the full fold-sketch / CV / BIC / full-data-bisection pipeline.
inline SelectionCurvesResult run_selection_curves(const ExperimentConfig& cfg) {
  cfg.validate();
  detail::ensure_out_dir(cfg);
  std::ostringstream long_csv;
  long_csv << "kind,n2,M,k_star,replicate,k_hat,exact,inclusion,mse,degraded\n";
  SelectionCurvesResult result;

  for (int n : cfg.n_list) {
    for (int m : cfg.m_list) {
      MarginalSpec spec = cfg.spec;
      spec.m = m;
      // The calibration draws only touch the k*-prefix of each row, so a
      // fixed seed yields the same delta_0 in every cell of the grid.
      const GroundTruth truth = make_ground_truth(
          spec, cfg.k_star, cfg.beta_value, cfg.pi, cfg.calibration_mc,
          derive_seed(cfg.seed, 5000));
      std::vector<detail::SelectionReplicate> reps(
          static_cast<std::size_t>(cfg.replicates));
      parallel_for(cfg.replicates, cfg.jobs, [&](int rep) {
        // Replicate seeds depend on the replicate index only, giving matched
        // draws across cells for paired comparisons.
        const std::uint64_t rep_seed =
            derive_seed(cfg.seed, static_cast<std::uint64_t>(rep));
        reps[static_cast<std::size_t>(rep)] = detail::run_selection_replicate(
            cfg, spec, truth, n, rep_seed);
      });

      SelectionCell cell;
      cell.kind = to_string(cfg.spec.kind);
      cell.n = n;
      cell.m = m;
      cell.k_star = cfg.k_star;
      std::vector<EvalReport> evals;
      for (int rep = 0; rep < cfg.replicates; ++rep) {
        const auto& r = reps[static_cast<std::size_t>(rep)];
        evals.push_back(r.eval);
        long_csv << cell.kind << ',' << 2 * n << ',' << m << ',' << cfg.k_star
                 << ',' << rep << ',' << r.k_hat << ','
                 << (r.eval.exact_recovery ? 1 : 0) << ','
                 << (r.eval.inclusion ? 1 : 0) << ','
                 << detail::format_double(r.eval.mse) << ','
                 << (r.degraded ? 1 : 0) << "\n";
      }
      const EvalSummary summary = aggregate(evals);
      cell.pct_exact = summary.pct_exact_recovery;
      cell.pct_inclusion = summary.pct_inclusion;
      cell.median_k_hat = summary.median_k_hat;
      cell.median_mse = summary.median_mse;
      result.cells.push_back(cell);
    }
  }

  std::ostringstream summary;
  summary << "kind,n2,M,k_star,pct_exact,pct_inclusion,median_k_hat,"
             "median_mse\n";
  for (const SelectionCell& cell : result.cells) {
    summary << cell.kind << ',' << 2 * cell.n << ',' << cell.m << ','
            << cell.k_star << ',' << detail::format_double(cell.pct_exact)
            << ',' << detail::format_double(cell.pct_inclusion) << ','
            << detail::format_double(cell.median_k_hat) << ','
            << detail::format_double(cell.median_mse) << "\n";
  }
  const std::string tag = cfg.scenario.empty() ? "selection" : cfg.scenario;
  detail::write_text_file(detail::out_path(cfg, tag + "_replicates.csv"),
                          long_csv.str());
  detail::write_text_file(detail::out_path(cfg, tag + "_summary.csv"),
                          summary.str());
  detail::write_text_file(
      detail::out_path(cfg, tag + "_metadata.json"),
      detail::metadata_json(
          cfg,
          {{"full_scale_reference",
            "{\"M\": 2000, \"replicates\": 250, \"n2_for_90pct\": {\"snp\": "
            "[200, 800], \"nor_iid\": [250, 1000], \"nor_corr\": [300, "
            "1000]}}"}}));
  return result;
}

// ---------------------------------------------------------------------------
// MSE curves over (2n, M) grids.

/// Median mse of the selection pipeline's final fit per (kind, 2n, M) cell;
/// thin wrapper over run_selection_curves kept separate so the two table
/// drivers can pin different cell grids.
inline SelectionCurvesResult run_mse_curves(const ExperimentConfig& cfg) {
  ExperimentConfig local = cfg;
  if (local.scenario.empty()) local.scenario = "mse";
  return run_selection_curves(local);
}

// ---------------------------------------------------------------------------
// Single-instance sketch and grid dump for external plotting.

struct Figure1Result {
  PathSketch sketch;
  GridPath grid;
};

/// One seeded instance (2n = 300, M = 15, k* = 3 by default) dumped as two
/// CSVs: the sketch entries with their coefficient vectors, and the
/// equal-budget geometric grid path.
inline Figure1Result run_figure1(const ExperimentConfig& cfg) {
  cfg.validate();
  detail::ensure_out_dir(cfg);
  const int m = cfg.m_list.empty() ? 15 : cfg.m_list.front();
  const int n = cfg.n_list.empty() ? 150 : cfg.n_list.front();
  MarginalSpec spec = cfg.spec;
  spec.m = m;
  const GroundTruth truth =
      make_ground_truth(spec, cfg.k_star, cfg.beta_value, cfg.pi,
                        cfg.calibration_mc, derive_seed(cfg.seed, 9000));
  const Dataset data =
      sample_case_control(spec, truth, n, derive_seed(cfg.seed, 9001));
  const SolverConfig solver;
  Figure1Result result;
  result.sketch = gbm(data, cfg.alpha, solver, default_k_max(data));
  result.grid = grid_path(data, static_cast<int>(result.sketch.solver_calls),
                          solver);

  std::ostringstream sketch_csv;
  sketch_csv << "k,r_k,objective,solver_calls_cum,active_set,missing";
  for (int j = 1; j <= m; ++j) sketch_csv << ",beta" << j;
  sketch_csv << "\n";
  for (int k = 0; k <= result.sketch.k_max; ++k) {
    const auto it = result.sketch.entries.find(k);
    if (it == result.sketch.entries.end()) {
      sketch_csv << k << ",-1,,,,1";
      for (int j = 0; j < m; ++j) sketch_csv << ',';
      sketch_csv << "\n";
      continue;
    }
    sketch_csv << k << ',' << detail::format_double(it->second.r) << ','
               << detail::format_double(it->second.fit.objective_value) << ','
               << it->second.solver_calls_cum << ','
               << detail::join_support(it->second.fit.active_set) << ",0";
    for (int j = 0; j < m; ++j) {
      sketch_csv << ','
                 << detail::format_double(it->second.fit.coefficients(j));
    }
    sketch_csv << "\n";
  }

  std::ostringstream grid_csv;
  grid_csv << "lambda,k,objective,active_set";
  for (int j = 1; j <= m; ++j) grid_csv << ",beta" << j;
  grid_csv << "\n";
  for (std::size_t i = 0; i < result.grid.grid.size(); ++i) {
    const ModelFit& fit = result.grid.fits[i];
    grid_csv << detail::format_double(result.grid.grid[i]) << ','
             << fit.active_count() << ','
             << detail::format_double(fit.objective_value) << ','
             << detail::join_support(fit.active_set);
    for (int j = 0; j < m; ++j) {
      grid_csv << ',' << detail::format_double(fit.coefficients(j));
    }
    grid_csv << "\n";
  }

  detail::write_text_file(detail::out_path(cfg, "figure1_sketch.csv"),
                          sketch_csv.str());
  detail::write_text_file(detail::out_path(cfg, "figure1_grid.csv"),
                          grid_csv.str());
  detail::write_text_file(
      detail::out_path(cfg, "figure1_metadata.json"),
      detail::metadata_json(cfg, {{"M", std::to_string(m)},
                                  {"n2", std::to_string(2 * n)}}));
  return result;
}

}  // namespace sparsecc
