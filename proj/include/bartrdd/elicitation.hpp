#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bartrdd/data.hpp"

namespace bartrdd {

/// Running variable and covariates only; the observed outcome never enters.
struct ElicitationFeatures {
  std::vector<double> x;
  Matrix w;
  double cutoff = 0.0;

  static ElicitationFeatures of(const Dataset& ds) {
    return {std::vector<double>(ds.x().begin(), ds.x().end()), ds.w(), ds.cutoff()};
  }
};

struct ElicitationGrid {
  std::vector<double> h_values{0.05, 0.1, 0.15, 0.2};
  std::vector<int> n_omin_values{1, 5, 10};
  std::vector<double> alpha_values{0.6, 0.75, 0.9};
  int samples = 20;

  void validate() const;
};

struct ElicitationCell {
  double h = 0.0;
  int n_omin = 0;
  double alpha = 0.0;
  bool feasible = false;
  double rmse = 0.0;  // ATE RMSE against the synthetic truth; NaN when infeasible
  std::size_t fits = 0;
  std::size_t failures = 0;
  std::string note;
  bool high_sensitivity = false;
};

/// Feasible cells ascending by RMSE (ties keep grid order), then infeasible cells.
struct ElicitationTable {
  std::vector<ElicitationCell> cells;
};

/// Sampler used per synthetic fit unless overridden: the grid multiplies the
/// number of fits by cells x samples, so each fit is kept small.
SamplerConfig elicitation_sampler_defaults();

/// Fits the constrained model to `grid.samples` synthetic outcomes per grid
/// cell. Synthetic outcomes and fit seeds depend only on (seed, sample), so
/// cells share common random numbers.
ElicitationTable elicit(const ElicitationFeatures& features, const ElicitationGrid& grid,
                        const SamplerConfig& scfg, std::uint64_t seed, int workers = 1);

struct StratumSpread {
  double h = 0.0;
  double spread = 0.0;  // max - min RMSE over feasible cells with this h
  std::size_t cells = 0;
  bool high_sensitivity = false;
};

struct Recommendation {
  ElicitationCell best;         // lowest RMSE overall
  ElicitationCell best_stable;  // lowest RMSE outside flagged strata
  std::vector<StratumSpread> strata;
  double sensitivity_multiple = 3.0;
};

/// Lowest-RMSE cell plus the per-h sensitivity report. A stratum is flagged
/// when its spread exceeds `multiple` times the smallest stratum spread.
Recommendation recommend(const ElicitationTable& table, double multiple = 3.0);

std::string elicitation_csv(const ElicitationTable& table);
std::string recommendation_json(const Recommendation& rec);

}  // namespace bartrdd
