#include "bartrdd/rdd_constraint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bartrdd/errors.hpp"
#include "bartrdd/io.hpp"

namespace bartrdd {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

NodeStripStats node_strip_stats(std::span<const std::size_t> node_ids, double lo, double hi,
                                const Dataset& ds, const StripIndex& strip) {
  NodeStripStats s;
  s.contains_cutoff = interval_contains_cutoff(lo, hi, ds.cutoff());
  s.n_b = node_ids.size();
  for (auto i : node_ids) {
    if (std::binary_search(strip.left_ids.begin(), strip.left_ids.end(), i)) ++s.n_l;
    if (std::binary_search(strip.right_ids.begin(), strip.right_ids.end(), i)) ++s.n_r;
  }
  return s;
}

NodeStripStats node_strip_stats(std::size_t n, const TagCounts& tags, double lo, double hi,
                                double cutoff) {
  return {interval_contains_cutoff(lo, hi, cutoff), tags[kLeftStrip], tags[kRightStrip], n};
}

SplitValidity split_validity(const NodeStripStats&, const NodeStripStats& left,
                             const NodeStripStats& right, const ConstraintConfig& cfg) {
  const auto n_omin = static_cast<std::size_t>(cfg.n_omin);
  auto violates = [&](const NodeStripStats& c) {
    return c.contains_cutoff && std::min(c.n_l, c.n_r) < n_omin;
  };
  return violates(left) || violates(right) ? SplitValidity::InvalidConditionI
                                           : SplitValidity::Valid;
}

StopValidity stop_validity(const NodeStripStats& node, const ConstraintConfig& cfg) {
  if (!node.contains_cutoff) return StopValidity::MayStop;
  if (node.n_b == 0) return StopValidity::MayStop;
  const double frac = static_cast<double>(node.n_l + node.n_r) / static_cast<double>(node.n_b);
  return frac < cfg.alpha ? StopValidity::MustSplit : StopValidity::MayStop;
}

PolicyAdjustment apply_policy(std::span<double> log_weights, double& stop_log_weight,
                              const NodeStripStats& parent,
                              std::span<const std::pair<NodeStripStats, NodeStripStats>> children,
                              const ConstraintConfig& cfg) {
  PolicyAdjustment adj;
  bool any_valid = false;
  for (std::size_t k = 0; k < children.size(); ++k) {
    if (split_validity(parent, children[k].first, children[k].second, cfg) ==
        SplitValidity::InvalidConditionI) {
      log_weights[k] = kNegInf;
      ++adj.invalid_candidates;
    } else if (log_weights[k] > kNegInf) {
      any_valid = true;
    }
  }
  if (stop_validity(parent, cfg) == StopValidity::MustSplit) {
    adj.must_split = true;
    if (any_valid) {
      stop_log_weight = kNegInf;
    } else {
      stop_log_weight = 0.0;
      adj.invalid_leaf = true;
    }
  }
  return adj;
}

RddSplitPolicy::RddSplitPolicy(std::span<const double> x, double cutoff, ConstraintConfig cfg)
    : tags_(strip_tags(x, cutoff, cfg.h)), cutoff_(cutoff), cfg_(cfg) {
  cfg_.validate();
}

NodeStripStats RddSplitPolicy::stats(const NodeSummary& node) const {
  return node_strip_stats(node.n, node.tags, node.box->lo[0], node.box->hi[0], cutoff_);
}

bool RddSplitPolicy::must_split(const NodeSummary& node) const {
  return stop_validity(stats(node), cfg_) == StopValidity::MustSplit;
}

PolicyOutcome RddSplitPolicy::adjust(const NodeSummary& node,
                                     std::span<const SplitCandidate> candidates,
                                     std::span<double> log_weights,
                                     double& stop_log_weight) const {
  const NodeStripStats parent = stats(node);
  const double lo = node.box->lo[0];
  const double hi = node.box->hi[0];
  thread_local std::vector<std::pair<NodeStripStats, NodeStripStats>> children;
  children.clear();
  for (const auto& c : candidates) {
    double l_hi = hi, r_lo = lo;
    if (c.feature == 0) {
      l_hi = std::min(hi, c.threshold);
      r_lo = std::max(lo, c.threshold);
    }
    children.emplace_back(node_strip_stats(c.left.n, c.left_tags, lo, l_hi, cutoff_),
                          node_strip_stats(c.right.n, c.right_tags, r_lo, hi, cutoff_));
  }
  auto adj = apply_policy(log_weights, stop_log_weight, parent, children, cfg_);
  return {adj.invalid_leaf};
}

void check_root_condition(const StripIndex& strip, const ConstraintConfig& cfg) {
  const auto need = static_cast<std::size_t>(cfg.n_omin);
  if (std::min(strip.left_ids.size(), strip.right_ids.size()) < need)
    throw ConfigError("identification strip too sparse for (h=" + io::format_double(cfg.h) +
                      ", n_omin=" + std::to_string(cfg.n_omin) + "): " +
                      std::to_string(strip.left_ids.size()) + " points left of the cutoff, " +
                      std::to_string(strip.right_ids.size()) + " right");
}

AuditReport audit_forest(const Forest& forest, const Matrix& features, double cutoff,
                         const ConstraintConfig& cfg) {
  AuditReport report;
  auto tags = strip_tags(features.col(0), cutoff, cfg.h);
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < forest.size(); ++t) {
    const auto& nodes = forest[t].nodes();
    std::vector<double> lo(nodes.size(), -inf), hi(nodes.size(), inf);
    for (std::size_t id = 0; id < nodes.size(); ++id) {
      const auto& nd = nodes[id];
      if (nd.is_leaf()) continue;
      lo[nd.left] = lo[nd.right] = lo[id];
      hi[nd.left] = hi[nd.right] = hi[id];
      if (nd.feature == 0) {
        hi[nd.left] = std::min(hi[id], nd.threshold);
        lo[nd.right] = std::max(lo[id], nd.threshold);
      }
    }
    std::vector<NodeStripStats> leaf_stats(nodes.size());
    for (std::size_t i = 0; i < features.rows(); ++i) {
      auto& s = leaf_stats[forest[t].leaf_index(features, i)];
      ++s.n_b;
      if (tags[i] == kLeftStrip) ++s.n_l;
      if (tags[i] == kRightStrip) ++s.n_r;
    }
    for (std::size_t id = 0; id < nodes.size(); ++id) {
      if (!nodes[id].is_leaf() || !interval_contains_cutoff(lo[id], hi[id], cutoff)) continue;
      LeafAudit a;
      a.tree = t;
      a.leaf = static_cast<int>(id);
      a.lo = lo[id];
      a.hi = hi[id];
      a.stats = leaf_stats[id];
      a.stats.contains_cutoff = true;
      const bool cond_i = std::min(a.stats.n_l, a.stats.n_r) >= static_cast<std::size_t>(cfg.n_omin);
      const bool cond_ii =
          a.stats.n_b > 0 &&
          static_cast<double>(a.stats.n_l + a.stats.n_r) / static_cast<double>(a.stats.n_b) >= cfg.alpha;
      a.valid = cond_i && cond_ii;
      if (!a.valid) ++report.violations;
      report.cutoff_leaves.push_back(a);
    }
  }
  return report;
}

}  // namespace bartrdd
