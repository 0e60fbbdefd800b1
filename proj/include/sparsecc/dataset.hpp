#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparsecc {

// Thrown when a feature column has zero variance and cannot be standardized.
struct DegenerateData : std::runtime_error {
  explicit DegenerateData(const std::string& what) : std::runtime_error(what) {}
};

/// Balanced case-control sample, standardized at construction.
///
/// Rows 0..n-1 are controls, rows n..2n-1 are cases. Columns are centered to
/// mean zero and scaled so that (1/2n) * sum_i x_ik^2 = 1; the applied offset
/// and divisor are kept so raw-scale quantities can be recovered exactly.
/// Instances are immutable after construction and safe to share across
/// threads.
class Dataset {
 public:
  static constexpr double kSecondMomentTol = 1e-9;

  // Builds a Dataset from raw features and 0/1 labels (1 = case). Rows are
  // reordered into the controls-then-cases layout. declared_bound > 0 asserts
  // |raw value| <= bound for every entry.
  static Dataset from_raw(const Eigen::MatrixXd& features,
                          const std::vector<int>& labels,
                          double declared_bound = 0.0) {
    const Eigen::Index rows = features.rows();
    if (rows == 0 || features.cols() == 0) {
      throw std::invalid_argument("Dataset: empty feature matrix");
    }
    if (static_cast<Eigen::Index>(labels.size()) != rows) {
      throw std::invalid_argument("Dataset: label/feature row mismatch");
    }
    if (!features.allFinite()) {
      throw std::invalid_argument("Dataset: non-finite feature value");
    }
    std::vector<int> controls, cases;
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (labels[static_cast<std::size_t>(i)] == 0) {
        controls.push_back(static_cast<int>(i));
      } else if (labels[static_cast<std::size_t>(i)] == 1) {
        cases.push_back(static_cast<int>(i));
      } else {
        throw std::invalid_argument("Dataset: labels must be 0 or 1");
      }
    }
    if (controls.size() != cases.size() || controls.empty()) {
      throw std::invalid_argument(
          "Dataset: design must hold the same positive number of cases and "
          "controls");
    }
    // Slack of a few ulps: subset views rebuild raw values through the
    // scale/center transform, which can overshoot the bound by rounding.
    if (declared_bound > 0.0 &&
        features.cwiseAbs().maxCoeff() >
            declared_bound * (1.0 + 1e-12) + 1e-300) {
      throw std::invalid_argument(
          "Dataset: feature magnitude exceeds the declared bound");
    }

    Dataset d;
    d.n_ = static_cast<int>(controls.size());
    d.m_ = static_cast<int>(features.cols());
    d.declared_bound_ = declared_bound;
    d.x_.resize(rows, d.m_);
    for (int i = 0; i < d.n_; ++i) {
      d.x_.row(i) = features.row(controls[static_cast<std::size_t>(i)]);
      d.x_.row(d.n_ + i) = features.row(cases[static_cast<std::size_t>(i)]);
    }
    d.standardize();
    return d;
  }

  int n() const { return n_; }
  int m() const { return m_; }
  int rows() const { return 2 * n_; }

  // Standardized design matrix; controls first, then cases.
  const Eigen::MatrixXd& x() const { return x_; }

  // 0 for controls (rows < n), 1 for cases.
  int label(int row) const { return row >= n_ ? 1 : 0; }
  bool is_case(int row) const { return row >= n_; }

  const Eigen::VectorXd& column_scale() const { return scale_; }
  const Eigen::VectorXd& column_center() const { return center_; }
  double declared_bound() const { return declared_bound_; }

  double raw(int row, int col) const {
    return x_(row, col) * scale_(col) + center_(col);
  }

  Eigen::MatrixXd raw_matrix() const {
    return (x_.array().rowwise() * scale_.transpose().array()).matrix()
               .rowwise() +
           center_.transpose();
  }

  double max_abs_raw() const { return raw_matrix().cwiseAbs().maxCoeff(); }

  // New Dataset over a subset of rows (indices into this dataset); the subset
  // is re-standardized with its own column statistics. Used to carve CV folds
  // without exposing held-out rows.
  Dataset rows_subset(const std::vector<int>& row_indices) const {
    Eigen::MatrixXd raw(static_cast<Eigen::Index>(row_indices.size()), m_);
    std::vector<int> labels(row_indices.size());
    for (std::size_t i = 0; i < row_indices.size(); ++i) {
      const int r = row_indices[i];
      for (int j = 0; j < m_; ++j) {
        raw(static_cast<Eigen::Index>(i), j) = this->raw(r, j);
      }
      labels[i] = label(r);
    }
    return from_raw(raw, labels, declared_bound_);
  }

  // New Dataset restricted to the given columns. Rows are unchanged, so the
  // existing per-column standardization carries over unmodified.
  Dataset columns_subset(const std::vector<int>& cols) const {
    Dataset d;
    d.n_ = n_;
    d.m_ = static_cast<int>(cols.size());
    d.declared_bound_ = declared_bound_;
    d.x_.resize(rows(), d.m_);
    d.scale_.resize(d.m_);
    d.center_.resize(d.m_);
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const auto je = static_cast<Eigen::Index>(j);
      d.x_.col(je) = x_.col(cols[j]);
      d.scale_(je) = scale_(cols[j]);
      d.center_(je) = center_(cols[j]);
    }
    return d;
  }

 private:
  Dataset() = default;

  void standardize() {
    const auto rows = static_cast<double>(x_.rows());
    center_ = x_.colwise().mean();
    x_.rowwise() -= center_.transpose();
    scale_.resize(m_);
    for (int j = 0; j < m_; ++j) {
      const double second_moment = x_.col(j).squaredNorm() / rows;
      if (second_moment <= 0.0) {
        throw DegenerateData("Dataset: zero-variance column " +
                             std::to_string(j + 1));
      }
      scale_(j) = std::sqrt(second_moment);
      x_.col(j) /= scale_(j);
    }
  }

  Eigen::MatrixXd x_;
  Eigen::VectorXd scale_;
  Eigen::VectorXd center_;
  int n_ = 0;
  int m_ = 0;
  double declared_bound_ = 0.0;
};

namespace detail {

inline double parse_double(std::string_view token, const std::string& context) {
  double value = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    throw std::invalid_argument("CSV: bad numeric field '" +
                                std::string(token) + "' in " + context);
  }
  return value;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// CSV layout: header `label,x1,...,xM`; label is 0 (control) or 1 (case);
// feature fields hold raw-scale values with '.' as the decimal separator.
inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open dataset file: " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument("CSV: missing header row in " + path);
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  if (header.empty() || header[0] != "label") {
    throw std::invalid_argument("CSV: first column must be 'label' in " + path);
  }
  const int m = static_cast<int>(header.size()) - 1;
  if (m < 1) {
    throw std::invalid_argument("CSV: no feature columns in " + path);
  }

  std::vector<int> labels;
  std::vector<double> values;
  int row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    const auto fields = detail::split_csv_line(line);
    if (static_cast<int>(fields.size()) != m + 1) {
      throw std::invalid_argument("CSV: row " + std::to_string(row) +
                                  " has wrong field count in " + path);
    }
    const std::string context = "row " + std::to_string(row) + " of " + path;
    const double lab = detail::parse_double(fields[0], context);
    if (lab != 0.0 && lab != 1.0) {
      throw std::invalid_argument("CSV: label must be 0 or 1 in " + context);
    }
    labels.push_back(static_cast<int>(lab));
    for (int j = 1; j <= m; ++j) {
      values.push_back(detail::parse_double(fields[static_cast<std::size_t>(j)],
                                            context));
    }
  }
  if (labels.empty()) {
    throw std::invalid_argument("CSV: no data rows in " + path);
  }
  Eigen::MatrixXd features(static_cast<Eigen::Index>(labels.size()), m);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (int j = 0; j < m; ++j) {
      features(static_cast<Eigen::Index>(i), j) =
          values[i * static_cast<std::size_t>(m) + static_cast<std::size_t>(j)];
    }
  }
  return Dataset::from_raw(features, labels);
}

inline void write_dataset_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write dataset file: " + path);
  }
  out << "label";
  for (int j = 1; j <= data.m(); ++j) out << ",x" << j;
  out << "\n";
  for (int i = 0; i < data.rows(); ++i) {
    out << data.label(i);
    for (int j = 0; j < data.m(); ++j) {
      out << ',' << detail::format_double(data.raw(i, j));
    }
    out << "\n";
  }
}

}  // namespace sparsecc
