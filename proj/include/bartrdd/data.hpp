#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace bartrdd {

/// Dense column-major matrix. Columns are contiguous so that per-feature
/// scans and sorts touch memory linearly.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[j * rows_ + i]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[j * rows_ + i]; }

  std::span<double> col(std::size_t j) { return {data_.data() + j * rows_, rows_}; }
  std::span<const double> col(std::size_t j) const { return {data_.data() + j * rows_, rows_}; }

  void row(std::size_t i, std::span<double> out) const {
    for (std::size_t j = 0; j < cols_; ++j) out[j] = (*this)(i, j);
  }

  /// Rows selected by index, in the given order.
  Matrix select_rows(std::span<const std::size_t> ids) const;
  /// Appends a column on the right.
  Matrix with_column(std::span<const double> values) const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Sharp RDD sample (Y, X, W, Z) with cutoff c. z is always derived from x.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<double> y, std::vector<double> x, Matrix w, double cutoff,
          std::vector<std::string> covariate_names = {});

  std::size_t size() const { return x_.size(); }
  std::size_t num_covariates() const { return w_.cols(); }

  std::span<const double> y() const { return y_; }
  std::span<const double> x() const { return x_; }
  const Matrix& w() const { return w_; }
  std::span<const std::uint8_t> z() const { return z_; }
  double cutoff() const { return cutoff_; }
  const std::vector<std::string>& covariate_names() const { return names_; }

  /// Same (x, w, c) with a different outcome vector.
  Dataset with_outcome(std::vector<double> y) const;
  Dataset subset(std::span<const std::size_t> ids) const;

  /// Feature matrix seen by the forests: column 0 is x, columns 1..p are w.
  Matrix features() const;

 private:
  std::vector<double> y_;
  std::vector<double> x_;
  Matrix w_;
  double cutoff_ = 0.0;
  std::vector<std::uint8_t> z_;
  std::vector<std::string> names_;
};

/// The identification-strip prior parameters (h, N_Omin, alpha).
struct ConstraintConfig {
  double h = 0.1;
  int n_omin = 10;
  double alpha = 0.6;

  void validate() const;
};

struct SamplerConfig {
  int num_trees_mu = 50;
  int num_trees_tau = 20;
  int num_sweeps = 120;
  int burn_in = 20;
  int max_depth = 10;
  int min_node_size = 5;
  int num_cutpoint_candidates = 100;
  double tree_prior_alpha = 0.95;
  double tree_prior_beta = 1.25;
  /// Non-positive means "use the default 0.6 / num_trees_mu".
  double leaf_prior_variance_mu = 0.0;
  /// Non-positive means "use the default 0.3 / num_trees_tau".
  double leaf_prior_variance_tau = 0.0;
  double sigma_prior_shape = 3.0;
  double sigma_prior_rate = 1.0;
  std::uint64_t seed = 1;
  /// BART-RDD only: draw (a, b0, b1) each sweep. Off keeps them at (1, -1/2, 1/2);
  /// the conjugate draws drift b toward 0 under grow-from-root and the
  /// prognostic forest then soaks up the jump.
  bool update_scale_params = false;

  double leaf_variance_mu() const {
    return leaf_prior_variance_mu > 0 ? leaf_prior_variance_mu : 0.6 / num_trees_mu;
  }
  double leaf_variance_tau() const {
    return leaf_prior_variance_tau > 0 ? leaf_prior_variance_tau : 0.3 / num_trees_tau;
  }
  int num_retained() const { return num_sweeps - burn_in; }

  void validate() const;
};

/// Observation indices inside the identification strip, split by side.
struct StripIndex {
  std::vector<std::size_t> left_ids;   // x in [c - h, c)
  std::vector<std::size_t> right_ids;  // x in [c, c + h]

  std::size_t size() const { return left_ids.size() + right_ids.size(); }
  /// All strip units in ascending row order.
  std::vector<std::size_t> all() const;
};

StripIndex build_strip_index(const Dataset& ds, const ConstraintConfig& cfg);

/// Observation side relative to the strip: 0 outside, 1 left strip, 2 right strip.
enum StripTag : std::uint8_t { kOutsideStrip = 0, kLeftStrip = 1, kRightStrip = 2 };

std::vector<std::uint8_t> strip_tags(std::span<const double> x, double cutoff, double h);

struct ScalingRecord {
  double mean = 0.0;
  double sd = 1.0;

  double forward(double v) const { return (v - mean) / sd; }
  double inverse(double v) const { return v * sd + mean; }
  /// Differences (treatment effects) only scale.
  double inverse_effect(double v) const { return v * sd; }
};

ScalingRecord fit_scaling(std::span<const double> y);
std::pair<Dataset, ScalingRecord> standardize(const Dataset& ds);
std::vector<double> apply_scaling(std::span<const double> y, const ScalingRecord& rec);
std::vector<double> invert_scaling(std::span<const double> y, const ScalingRecord& rec);

/// Named-column mapping for CSV input.
struct CsvSchema {
  std::string outcome = "y";
  std::string running = "x";
  std::vector<std::string> covariates;
  /// When true, the outcome column may be absent and y is filled with zeros.
  bool outcome_optional = false;
};

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema, double cutoff);
void write_csv(const std::filesystem::path& path, const Dataset& ds,
               const std::string& outcome = "y", const std::string& running = "x");

/// Flat "key = value" configuration document.
using KeyValues = std::map<std::string, std::string>;

KeyValues read_key_values(const std::filesystem::path& path);
KeyValues parse_key_values(const std::string& text);
/// Applies recognised keys; returns the keys that were not recognised.
std::vector<std::string> apply_config(const KeyValues& kv, SamplerConfig& scfg,
                                      ConstraintConfig& ccfg);
std::string to_key_values(const SamplerConfig& scfg, const ConstraintConfig& ccfg);

}  // namespace bartrdd
