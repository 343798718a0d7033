#include "bartrdd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "bartrdd/errors.hpp"
#include "bartrdd/io.hpp"

namespace bartrdd {

Matrix Matrix::select_rows(std::span<const std::size_t> ids) const {
  Matrix out(ids.size(), cols_);
  for (std::size_t j = 0; j < cols_; ++j) {
    auto src = col(j);
    auto dst = out.col(j);
    for (std::size_t k = 0; k < ids.size(); ++k) dst[k] = src[ids[k]];
  }
  return out;
}

Matrix Matrix::with_column(std::span<const double> values) const {
  if (values.size() != rows_ && cols_ > 0) throw Error("with_column: length mismatch");
  Matrix out(values.size(), cols_ + 1);
  std::copy(data_.begin(), data_.end(), out.data_.begin());
  std::copy(values.begin(), values.end(), out.col(cols_).begin());
  return out;
}

Dataset::Dataset(std::vector<double> y, std::vector<double> x, Matrix w, double cutoff,
                 std::vector<std::string> covariate_names)
    : y_(std::move(y)), x_(std::move(x)), w_(std::move(w)), cutoff_(cutoff),
      names_(std::move(covariate_names)) {
  const std::size_t n = x_.size();
  if (n == 0) throw EmptyDataError("dataset has no rows");
  if (y_.size() != n) throw Error("dataset: outcome and running variable lengths differ");
  if (w_.cols() > 0 && w_.rows() != n) throw Error("dataset: covariate rows differ from n");
  if (w_.cols() == 0) w_ = Matrix(n, 0);
  if (!std::isfinite(cutoff_)) throw DomainError("dataset: cutoff is not finite");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(y_[i]) || !std::isfinite(x_[i]))
      throw DomainError("dataset: non-finite value in row " + std::to_string(i + 1));
    for (std::size_t j = 0; j < w_.cols(); ++j)
      if (!std::isfinite(w_(i, j)))
        throw DomainError("dataset: non-finite covariate in row " + std::to_string(i + 1));
  }
  if (names_.empty())
    for (std::size_t j = 0; j < w_.cols(); ++j) names_.push_back("w" + std::to_string(j + 1));
  if (names_.size() != w_.cols()) throw Error("dataset: covariate name count mismatch");
  z_.resize(n);
  for (std::size_t i = 0; i < n; ++i) z_[i] = x_[i] >= cutoff_ ? 1 : 0;
}

Dataset Dataset::with_outcome(std::vector<double> y) const {
  return Dataset(std::move(y), x_, w_, cutoff_, names_);
}

Dataset Dataset::subset(std::span<const std::size_t> ids) const {
  std::vector<double> y(ids.size()), x(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    y[k] = y_[ids[k]];
    x[k] = x_[ids[k]];
  }
  return Dataset(std::move(y), std::move(x), w_.select_rows(ids), cutoff_, names_);
}

Matrix Dataset::features() const {
  Matrix f(size(), 1 + w_.cols());
  std::copy(x_.begin(), x_.end(), f.col(0).begin());
  for (std::size_t j = 0; j < w_.cols(); ++j) {
    auto src = w_.col(j);
    std::copy(src.begin(), src.end(), f.col(j + 1).begin());
  }
  return f;
}

void ConstraintConfig::validate() const {
  if (!(h > 0) || !std::isfinite(h)) throw ConfigError("constraint: h must be > 0");
  if (n_omin < 1) throw ConfigError("constraint: n_omin must be >= 1");
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("constraint: alpha must lie in (0, 1)");
}

void SamplerConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("sampler: ") + what);
  };
  need(num_trees_mu >= 1, "num_trees_mu must be >= 1");
  need(num_trees_tau >= 1, "num_trees_tau must be >= 1");
  need(num_sweeps >= 1, "num_sweeps must be >= 1");
  need(burn_in >= 0 && burn_in < num_sweeps, "burn_in must lie in [0, num_sweeps)");
  need(max_depth >= 1, "max_depth must be >= 1");
  need(min_node_size >= 1, "min_node_size must be >= 1");
  need(num_cutpoint_candidates >= 1, "num_cutpoint_candidates must be >= 1");
  need(tree_prior_alpha > 0 && tree_prior_alpha < 1, "tree_prior_alpha must lie in (0, 1)");
  need(tree_prior_beta >= 0, "tree_prior_beta must be >= 0");
  need(std::isfinite(leaf_prior_variance_mu), "leaf_prior_variance_mu must be finite");
  need(std::isfinite(leaf_prior_variance_tau), "leaf_prior_variance_tau must be finite");
  need(sigma_prior_shape > 0, "sigma_prior_shape must be > 0");
  need(sigma_prior_rate > 0, "sigma_prior_rate must be > 0");
}

std::vector<std::size_t> StripIndex::all() const {
  std::vector<std::size_t> ids;
  ids.reserve(size());
  std::merge(left_ids.begin(), left_ids.end(), right_ids.begin(), right_ids.end(),
             std::back_inserter(ids));
  return ids;
}

std::vector<std::uint8_t> strip_tags(std::span<const double> x, double cutoff, double h) {
  std::vector<std::uint8_t> tags(x.size(), kOutsideStrip);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] >= cutoff - h && x[i] < cutoff)
      tags[i] = kLeftStrip;
    else if (x[i] >= cutoff && x[i] <= cutoff + h)
      tags[i] = kRightStrip;
  }
  return tags;
}

StripIndex build_strip_index(const Dataset& ds, const ConstraintConfig& cfg) {
  cfg.validate();
  StripIndex idx;
  auto tags = strip_tags(ds.x(), ds.cutoff(), cfg.h);
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == kLeftStrip) idx.left_ids.push_back(i);
    if (tags[i] == kRightStrip) idx.right_ids.push_back(i);
  }
  if (idx.size() == 0)
    throw StripEmptyError("identification strip [c-h, c+h] with h=" + io::format_double(cfg.h) +
                          " contains no observations");
  return idx;
}

ScalingRecord fit_scaling(std::span<const double> y) {
  ScalingRecord rec;
  if (y.empty()) return rec;
  const double n = static_cast<double>(y.size());
  rec.mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  if (y.size() < 2) return rec;
  double ss = 0.0;
  for (double v : y) ss += (v - rec.mean) * (v - rec.mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const bool constant = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
  if (constant || !(sd > 0)) {
    rec.sd = 1.0;
    if (constant) rec.mean = y[0];
  } else {
    rec.sd = sd;
  }
  return rec;
}

std::vector<double> apply_scaling(std::span<const double> y, const ScalingRecord& rec) {
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = rec.forward(y[i]);
  return out;
}

std::vector<double> invert_scaling(std::span<const double> y, const ScalingRecord& rec) {
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = rec.inverse(y[i]);
  return out;
}

std::pair<Dataset, ScalingRecord> standardize(const Dataset& ds) {
  auto rec = fit_scaling(ds.y());
  const bool constant =
      std::all_of(ds.y().begin(), ds.y().end(), [&](double v) { return v == ds.y()[0]; });
  if (constant) return {ds, rec};
  return {ds.with_outcome(apply_scaling(ds.y(), rec)), rec};
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema, double cutoff) {
  io::CsvTable table = io::read_csv_table(path);
  if (table.rows.empty()) throw EmptyDataError("'" + path.string() + "' has no data rows");

  auto locate = [&](const std::string& name) {
    int j = table.column(name);
    if (j < 0) throw SchemaError("column '" + name + "' not found in '" + path.string() + "'");
    return static_cast<std::size_t>(j);
  };
  const bool has_outcome = table.column(schema.outcome) >= 0;
  if (!has_outcome && !schema.outcome_optional) locate(schema.outcome);
  const std::size_t xcol = locate(schema.running);
  std::vector<std::size_t> wcols;
  for (const auto& name : schema.covariates) wcols.push_back(locate(name));

  const std::size_t n = table.rows.size();
  std::vector<double> y(n, 0.0), x(n);
  Matrix w(n, wcols.size());
  auto cell = [&](std::size_t row, std::size_t col, const std::string& name) {
    const auto& r = table.rows[row];
    double v = 0.0;
    if (col >= r.size() || !io::parse_double(r[col], v))
      throw ParseError("row " + std::to_string(row + 1) + ", column '" + name +
                           "': not a finite number",
                       row + 1, name);
    return v;
  };
  const std::size_t ycol = has_outcome ? static_cast<std::size_t>(table.column(schema.outcome)) : 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (has_outcome) y[i] = cell(i, ycol, schema.outcome);
    x[i] = cell(i, xcol, schema.running);
    for (std::size_t j = 0; j < wcols.size(); ++j) w(i, j) = cell(i, wcols[j], schema.covariates[j]);
  }
  return Dataset(std::move(y), std::move(x), std::move(w), cutoff, schema.covariates);
}

void write_csv(const std::filesystem::path& path, const Dataset& ds, const std::string& outcome,
               const std::string& running) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  std::vector<std::string> header{outcome, running};
  for (const auto& n : ds.covariate_names()) header.push_back(n);
  io::write_csv_row(out, header);
  std::vector<double> row(2 + ds.num_covariates());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    row[0] = ds.y()[i];
    row[1] = ds.x()[i];
    for (std::size_t j = 0; j < ds.num_covariates(); ++j) row[2 + j] = ds.w()(i, j);
    io::write_csv_row(out, row);
  }
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) eq = line.find(':');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  return parse_key_values(io::read_file(path));
}

namespace {

double to_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  if (!io::parse_double(v, out)) throw ConfigError("config key '" + key + "': not a number");
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  double d = to_real(key, v);
  if (d != std::floor(d)) throw ConfigError("config key '" + key + "': not an integer");
  return static_cast<long long>(d);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false");
}

}  // namespace

std::vector<std::string> apply_config(const KeyValues& kv, SamplerConfig& s, ConstraintConfig& c) {
  std::vector<std::string> unknown;
  for (const auto& [key, value] : kv) {
    if (key == "num_trees_mu") s.num_trees_mu = static_cast<int>(to_integer(key, value));
    else if (key == "num_trees_tau") s.num_trees_tau = static_cast<int>(to_integer(key, value));
    else if (key == "num_sweeps") s.num_sweeps = static_cast<int>(to_integer(key, value));
    else if (key == "burn_in") s.burn_in = static_cast<int>(to_integer(key, value));
    else if (key == "max_depth") s.max_depth = static_cast<int>(to_integer(key, value));
    else if (key == "min_node_size") s.min_node_size = static_cast<int>(to_integer(key, value));
    else if (key == "num_cutpoint_candidates")
      s.num_cutpoint_candidates = static_cast<int>(to_integer(key, value));
    else if (key == "tree_prior_alpha") s.tree_prior_alpha = to_real(key, value);
    else if (key == "tree_prior_beta") s.tree_prior_beta = to_real(key, value);
    else if (key == "leaf_prior_variance_mu") s.leaf_prior_variance_mu = to_real(key, value);
    else if (key == "leaf_prior_variance_tau") s.leaf_prior_variance_tau = to_real(key, value);
    else if (key == "sigma_prior_shape") s.sigma_prior_shape = to_real(key, value);
    else if (key == "sigma_prior_rate") s.sigma_prior_rate = to_real(key, value);
    else if (key == "seed") s.seed = static_cast<std::uint64_t>(to_integer(key, value));
    else if (key == "update_scale_params") s.update_scale_params = to_bool(key, value);
    else if (key == "h") c.h = to_real(key, value);
    else if (key == "n_omin") c.n_omin = static_cast<int>(to_integer(key, value));
    else if (key == "alpha") c.alpha = to_real(key, value);
    else unknown.push_back(key);
  }
  return unknown;
}

std::string to_key_values(const SamplerConfig& s, const ConstraintConfig& c) {
  std::ostringstream os;
  auto r = [](double v) { return io::format_double(v); };
  os << "num_trees_mu = " << s.num_trees_mu << '\n'
     << "num_trees_tau = " << s.num_trees_tau << '\n'
     << "num_sweeps = " << s.num_sweeps << '\n'
     << "burn_in = " << s.burn_in << '\n'
     << "max_depth = " << s.max_depth << '\n'
     << "min_node_size = " << s.min_node_size << '\n'
     << "num_cutpoint_candidates = " << s.num_cutpoint_candidates << '\n'
     << "tree_prior_alpha = " << r(s.tree_prior_alpha) << '\n'
     << "tree_prior_beta = " << r(s.tree_prior_beta) << '\n'
     << "leaf_prior_variance_mu = " << r(s.leaf_variance_mu()) << '\n'
     << "leaf_prior_variance_tau = " << r(s.leaf_variance_tau()) << '\n'
     << "sigma_prior_shape = " << r(s.sigma_prior_shape) << '\n'
     << "sigma_prior_rate = " << r(s.sigma_prior_rate) << '\n'
     << "seed = " << s.seed << '\n'
     << "update_scale_params = " << (s.update_scale_params ? "true" : "false") << '\n'
     << "h = " << r(c.h) << '\n'
     << "n_omin = " << c.n_omin << '\n'
     << "alpha = " << r(c.alpha) << '\n';
  return os.str();
}

}  // namespace bartrdd
