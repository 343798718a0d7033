#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bartrdd/data.hpp"
#include "bartrdd/models.hpp"

namespace bartrdd {

struct IntervalSummary {
  double mean = 0, sd = 0, lower = 0, upper = 0, median = 0, min = 0, max = 0;
  double level = 0.95;
};

/// Linear interpolation between order statistics (h = (n - 1) p).
double quantile(std::span<const double> sorted, double p);

/// Equal-tailed summary of a chain of scalar draws.
IntervalSummary summarize(std::span<const double> draws, double level = 0.95);

struct DrawsSummary {
  IntervalSummary ate;
  std::vector<IntervalSummary> cate;  // per strip unit
};

DrawsSummary summarize(const PosteriorDraws& draws, double level = 0.95);

struct SubgroupContrast {
  std::vector<double> differences;  // per draw: mean(group a) - mean(group b)
  double prob_positive = 0.0;       // strict ">", ties count as not positive
};

/// Groups are column indices into draws.cate (positions among strip units).
SubgroupContrast subgroup_contrast(const PosteriorDraws& draws, std::span<const std::size_t> group_a,
                                   std::span<const std::size_t> group_b);

struct SummaryTreeNode {
  double mean = 0.0;
  double share = 0.0;  // fraction of all units
  std::size_t n = 0;
  int feature = -1;    // -1 for a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int depth = 0;
};

/// CART tree over covariates fit to posterior point estimates.
struct SummaryTree {
  std::vector<SummaryTreeNode> nodes;
  std::vector<std::string> feature_names;

  /// Indented text rendering.
  std::string to_text() const;
};

struct SummaryTreeConfig {
  int max_depth = 3;
  /// Minimum units per leaf; non-positive means 5% of the units (at least 1).
  int min_leaf = 0;
};

SummaryTree fit_summary_tree(std::span<const double> estimates, const Matrix& covariates,
                             const SummaryTreeConfig& cfg = {},
                             std::vector<std::string> feature_names = {});

}  // namespace bartrdd
