#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "bartrdd/data.hpp"
#include "bartrdd/rng.hpp"

namespace bartrdd {

// ---------------------------------------------------------------------------
// Tree structure

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf parameter

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

/// Binary regression tree stored as a flat node array; node 0 is the root.
/// Routing: feature value <= threshold goes left.
class Tree {
 public:
  Tree() : nodes_(1) {}
  explicit Tree(double leaf_value) : nodes_(1) { nodes_[0].value = leaf_value; }

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::vector<TreeNode>& nodes() { return nodes_; }

  /// Index of the leaf a row routes to.
  int leaf_index(std::span<const double> row) const;
  int leaf_index(const Matrix& features, std::size_t i) const;
  double predict(std::span<const double> row) const { return nodes_[leaf_index(row)].value; }
  double predict(const Matrix& features, std::size_t i) const {
    return nodes_[leaf_index(features, i)].value;
  }

  std::size_t num_leaves() const;
  std::size_t num_internal() const { return nodes_.size() - num_leaves(); }
  int depth() const;

  /// Turns leaf `id` into an internal node; returns {left, right} indices.
  std::pair<int, int> split(int id, int feature, double threshold);

  bool operator==(const Tree&) const = default;

 private:
  std::vector<TreeNode> nodes_;
};

/// Sum-of-trees regression function.
class Forest {
 public:
  Forest() = default;
  explicit Forest(std::size_t num_trees, double init_leaf = 0.0)
      : trees_(num_trees, Tree(init_leaf)) {}

  std::size_t size() const { return trees_.size(); }
  Tree& operator[](std::size_t j) { return trees_[j]; }
  const Tree& operator[](std::size_t j) const { return trees_[j]; }
  const std::vector<Tree>& trees() const { return trees_; }
  std::vector<Tree>& trees() { return trees_; }

  double predict(std::span<const double> row) const;
  double predict(const Matrix& features, std::size_t i) const;

  bool operator==(const Forest&) const = default;

 private:
  std::vector<Tree> trees_;
};

/// Preorder JSON-like dump: {"trees":[[{"var":j,"threshold":t},{"leaf":v},...],...]}.
std::string serialize_forests(std::span<const Forest> forests);
std::vector<Forest> deserialize_forests(const std::string& text);

// ---------------------------------------------------------------------------
// Conjugate Gaussian leaf model

/// Homoscedastic sufficient statistics of partial residuals at a node.
struct SuffStat {
  std::size_t n = 0;
  double sum_r = 0.0;
  double sum_r2 = 0.0;

  SuffStat& operator+=(const SuffStat& o) {
    n += o.n;
    sum_r += o.sum_r;
    sum_r2 += o.sum_r2;
    return *this;
  }
  friend SuffStat operator+(SuffStat a, const SuffStat& b) { return a += b; }
  bool operator==(const SuffStat&) const = default;

  static SuffStat of(std::span<const double> r);
};

/// Precision-weighted statistics used by the growth engine. An observation
/// with response r_i = s_i * mu + e_i, e_i ~ N(0, v_i), contributes
/// precision s_i^2 / v_i and weighted_sum s_i r_i / v_i.
struct LeafStat {
  std::size_t n = 0;
  double precision = 0.0;
  double weighted_sum = 0.0;

  LeafStat& operator+=(const LeafStat& o) {
    n += o.n;
    precision += o.precision;
    weighted_sum += o.weighted_sum;
    return *this;
  }
  LeafStat& operator-=(const LeafStat& o) {
    n -= o.n;
    precision -= o.precision;
    weighted_sum -= o.weighted_sum;
    return *this;
  }
  friend LeafStat operator-(LeafStat a, const LeafStat& b) { return a -= b; }
  friend LeafStat operator+(LeafStat a, const LeafStat& b) { return a += b; }

  static LeafStat homoscedastic(const SuffStat& s, double sigma2) {
    return {s.n, static_cast<double>(s.n) / sigma2, s.sum_r / sigma2};
  }
};

/// log of the integral of N(r | mu 1, sigma2 I) N(mu | 0, tau_leaf) over mu,
/// dropping the mu-free Gaussian factor shared by every candidate at a node.
double log_marginal_likelihood(const SuffStat& s, double sigma2, double tau_leaf);
double log_marginal_likelihood(const LeafStat& s, double tau_leaf);

/// The additive constant dropped by log_marginal_likelihood.
double log_marginal_constant(const SuffStat& s, double sigma2);

double sample_leaf(const SuffStat& s, double sigma2, double tau_leaf, Rng& rng);
double sample_leaf(const LeafStat& s, double tau_leaf, Rng& rng);

/// Draw from InverseGamma(shape + n/2, rate + sum(r^2)/2).
double sample_sigma2(std::span<const double> residuals, double prior_shape, double prior_rate,
                     Rng& rng);
double sample_sigma2(std::size_t n, double sum_sq, double prior_shape, double prior_rate,
                     Rng& rng);

// ---------------------------------------------------------------------------
// Cutpoints

/// Positions p in a sorted vector such that splitting after p (left = [0, p])
/// leaves both sides nonempty. At most k positions are returned; when there
/// are more distinct boundaries than k they are taken at evenly spaced
/// empirical quantiles and snapped to the end of their tie run.
std::vector<std::size_t> select_split_positions(std::span<const double> sorted_values,
                                                std::size_t k);
/// Same, writing into a reused buffer.
void select_split_positions(std::span<const double> sorted_values, std::size_t k,
                            std::vector<std::size_t>& out);

struct CutpointSet {
  std::vector<std::vector<double>> thresholds;  // per feature, ascending

  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& f : thresholds) t += f.size();
    return t;
  }
};

CutpointSet candidate_cutpoints(std::span<const std::size_t> node_ids, const Matrix& features,
                                std::size_t k);

// ---------------------------------------------------------------------------
// Grow-from-root

/// Per-feature interval (lo, hi] implied by the splits on the path to a node.
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  static Box unbounded(std::size_t num_features) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    return {std::vector<double>(num_features, -inf), std::vector<double>(num_features, inf)};
  }
  bool contains(std::size_t feature, double v) const { return lo[feature] < v && v <= hi[feature]; }
};

/// Count of node members by policy tag (see SplitPolicy::tags).
using TagCounts = std::array<std::size_t, 3>;

struct NodeSummary {
  std::size_t n = 0;
  TagCounts tags{};
  const Box* box = nullptr;
  int depth = 0;
};

struct SplitCandidate {
  int feature = 0;
  std::size_t position = 0;  // split after this sorted position
  double threshold = 0.0;
  LeafStat left;
  LeafStat right;
  TagCounts left_tags{};
  TagCounts right_tags{};
};

/// Outcome of a policy adjustment at one node.
struct PolicyOutcome {
  bool invalid_leaf = false;  // stop forced although the policy required a split
};

/// Hook that may veto candidate splits or the stop option at each node.
/// Log-weights of -inf encode a zero likelihood.
class SplitPolicy {
 public:
  virtual ~SplitPolicy() = default;

  /// One tag in {0, 1, 2} per training observation; counts of these are
  /// carried for every node and candidate child.
  virtual std::span<const std::uint8_t> tags() const = 0;

  /// Whether stopping at this node is forbidden.
  virtual bool must_split(const NodeSummary& node) const = 0;

  virtual PolicyOutcome adjust(const NodeSummary& node, std::span<const SplitCandidate> candidates,
                               std::span<double> log_weights, double& stop_log_weight) const = 0;
};

struct GrowSettings {
  int max_depth = 10;
  int min_node_size = 5;
  int num_cutpoints = 100;
  double prior_alpha = 0.95;
  double prior_beta = 1.25;
  double tau_leaf = 0.01;
  /// Use the OpenMP candidate scan for nodes at least this large (0 = never).
  std::size_t parallel_scan_min_node = 0;

  static GrowSettings from(const SamplerConfig& cfg, double tau_leaf);
};

struct GrowDiagnostics {
  std::size_t invalid_leaves = 0;
  std::size_t forced_splits = 0;
};

/// Log of the stop weight |C| ((1 + d)^beta / alpha - 1) m(s).
double log_stop_weight(std::size_t num_candidates, int depth, double alpha, double beta,
                       double log_m_parent);

/// Draws an index from unnormalised log-weights; index == size means `stop`.
std::size_t sample_log_weights(std::span<const double> log_weights, double stop_log_weight,
                               Rng& rng);

/// Grow-from-root sampler over a fixed feature matrix. Per-feature argsorts
/// are computed once and partitioned stably as the tree grows.
class TreeGrower {
 public:
  TreeGrower(const Matrix& features, GrowSettings settings, const SplitPolicy* policy = nullptr);

  /// Grows a tree on rows `ids` (all rows if empty). Observation i enters
  /// with weight[i] (precision) and weighted_resid[i]; the sampled leaf value
  /// of each row is written to leaf_out[i].
  Tree grow(std::span<const double> weight, std::span<const double> weighted_resid,
            std::span<double> leaf_out, Rng& rng, GrowDiagnostics* diag = nullptr);

  /// Restrict growth to a subset of rows (default: every row).
  void set_rows(std::span<const std::size_t> ids);

  const GrowSettings& settings() const { return settings_; }
  GrowSettings& settings() { return settings_; }
  std::size_t num_features() const { return features_->cols(); }

 private:
  void grow_node(Tree& tree, int node_id, std::vector<std::vector<std::uint32_t>>& orders,
                 Box& box, int depth, Rng& rng, GrowDiagnostics& diag);
  void make_leaf(Tree& tree, int node_id, const std::vector<std::uint32_t>& members,
                 const LeafStat& stat, Rng& rng);

  const Matrix* features_;
  GrowSettings settings_;
  const SplitPolicy* policy_;
  std::vector<std::vector<std::uint32_t>> root_orders_;
  std::vector<std::uint8_t> goes_left_;

  // per-call views
  std::span<const double> weight_;
  std::span<const double> wresid_;
  std::span<double> leaf_out_;
};

}  // namespace bartrdd
