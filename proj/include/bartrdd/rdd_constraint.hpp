#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "bartrdd/data.hpp"
#include "bartrdd/forest.hpp"

namespace bartrdd {

/// Strip occupancy of one tree node.
struct NodeStripStats {
  bool contains_cutoff = false;  // an (x = c, w) query can route here
  std::size_t n_l = 0;           // members with x in [c - h, c)
  std::size_t n_r = 0;           // members with x in [c, c + h]
  std::size_t n_b = 0;           // all members

  bool operator==(const NodeStripStats&) const = default;
};

enum class SplitValidity { Valid, InvalidConditionI };
enum class StopValidity { MayStop, MustSplit };

/// Whether the x-interval (lo, hi] of a node covers the cutoff under
/// "<= goes left" routing.
inline bool interval_contains_cutoff(double lo, double hi, double cutoff) {
  return lo < cutoff && cutoff <= hi;
}

NodeStripStats node_strip_stats(std::span<const std::size_t> node_ids, double lo, double hi,
                                const Dataset& ds, const StripIndex& strip);

/// Stats from tag counts carried by the growth engine.
NodeStripStats node_strip_stats(std::size_t n, const TagCounts& tags, double lo, double hi,
                                double cutoff);

SplitValidity split_validity(const NodeStripStats& parent, const NodeStripStats& left,
                             const NodeStripStats& right, const ConstraintConfig& cfg);

StopValidity stop_validity(const NodeStripStats& node, const ConstraintConfig& cfg);

struct PolicyAdjustment {
  std::size_t invalid_candidates = 0;
  bool must_split = false;
  bool invalid_leaf = false;  // forced fallback: L(stop) = 1 with every split invalid
};

/// Zeroes (sets to -inf) the log-weight of every split violating condition i
/// and the stop weight when condition ii binds.
PolicyAdjustment apply_policy(std::span<double> log_weights, double& stop_log_weight,
                              const NodeStripStats& parent,
                              std::span<const std::pair<NodeStripStats, NodeStripStats>> children,
                              const ConstraintConfig& cfg);

/// Split policy enforcing the identification-strip constraint during growth.
/// Feature 0 of the grower's matrix must be the running variable.
class RddSplitPolicy : public SplitPolicy {
 public:
  RddSplitPolicy(std::span<const double> x, double cutoff, ConstraintConfig cfg);

  std::span<const std::uint8_t> tags() const override { return tags_; }
  bool must_split(const NodeSummary& node) const override;
  PolicyOutcome adjust(const NodeSummary& node, std::span<const SplitCandidate> candidates,
                       std::span<double> log_weights, double& stop_log_weight) const override;

  const ConstraintConfig& config() const { return cfg_; }
  double cutoff() const { return cutoff_; }

 private:
  NodeStripStats stats(const NodeSummary& node) const;

  std::vector<std::uint8_t> tags_;
  double cutoff_;
  ConstraintConfig cfg_;
};

/// Condition i at the root: both strip sides need at least n_omin points.
void check_root_condition(const StripIndex& strip, const ConstraintConfig& cfg);

struct LeafAudit {
  std::size_t tree = 0;
  int leaf = 0;
  double lo = 0.0;
  double hi = 0.0;
  NodeStripStats stats;
  bool valid = true;
};

struct AuditReport {
  std::vector<LeafAudit> cutoff_leaves;
  std::size_t violations = 0;
};

/// Routes the training rows through every tree and checks each leaf whose
/// x-interval covers the cutoff against both strip conditions.
AuditReport audit_forest(const Forest& forest, const Matrix& features, double cutoff,
                         const ConstraintConfig& cfg);

}  // namespace bartrdd
