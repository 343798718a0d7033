#include "bartrdd/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <nlohmann/json.hpp>

#include "bartrdd/errors.hpp"
#include "bartrdd/kernels.hpp"

namespace bartrdd {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// Tree

int Tree::leaf_index(std::span<const double> row) const {
  int id = 0;
  while (!nodes_[id].is_leaf()) {
    const auto& nd = nodes_[id];
    id = row[nd.feature] <= nd.threshold ? nd.left : nd.right;
  }
  return id;
}

int Tree::leaf_index(const Matrix& features, std::size_t i) const {
  int id = 0;
  while (!nodes_[id].is_leaf()) {
    const auto& nd = nodes_[id];
    id = features(i, nd.feature) <= nd.threshold ? nd.left : nd.right;
  }
  return id;
}

std::size_t Tree::num_leaves() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int Tree::depth() const {
  std::vector<int> d(nodes_.size(), 0);
  int best = 0;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const auto& nd = nodes_[id];
    if (nd.is_leaf()) continue;
    d[nd.left] = d[nd.right] = d[id] + 1;
    best = std::max(best, d[id] + 1);
  }
  return best;
}

std::pair<int, int> Tree::split(int id, int feature, double threshold) {
  const int l = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  nodes_.emplace_back();
  auto& nd = nodes_[id];
  nd.feature = feature;
  nd.threshold = threshold;
  nd.left = l;
  nd.right = l + 1;
  nd.value = 0.0;
  return {l, l + 1};
}

double Forest::predict(std::span<const double> row) const {
  double s = 0.0;
  for (const auto& t : trees_) s += t.predict(row);
  return s;
}

double Forest::predict(const Matrix& features, std::size_t i) const {
  double s = 0.0;
  for (const auto& t : trees_) s += t.predict(features, i);
  return s;
}

namespace {

void dump_preorder(const Tree& t, int id, nlohmann::json& out) {
  const auto& nd = t.nodes()[id];
  if (nd.is_leaf()) {
    out.push_back({{"leaf", nd.value}});
    return;
  }
  out.push_back({{"var", nd.feature}, {"threshold", nd.threshold}});
  dump_preorder(t, nd.left, out);
  dump_preorder(t, nd.right, out);
}

void load_preorder(const nlohmann::json& arr, std::size_t& pos, Tree& t, int id) {
  if (pos >= arr.size()) throw Error("forest dump: truncated preorder array");
  const auto& node = arr[pos++];
  if (node.contains("leaf")) {
    t.nodes()[id].value = node.at("leaf").get<double>();
    return;
  }
  auto [l, r] = t.split(id, node.at("var").get<int>(), node.at("threshold").get<double>());
  load_preorder(arr, pos, t, l);
  load_preorder(arr, pos, t, r);
}

}  // namespace

std::string serialize_forests(std::span<const Forest> forests) {
  nlohmann::json doc;
  doc["forests"] = nlohmann::json::array();
  for (const auto& f : forests) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : f.trees()) {
      nlohmann::json nodes = nlohmann::json::array();
      dump_preorder(t, 0, nodes);
      trees.push_back(std::move(nodes));
    }
    doc["forests"].push_back({{"trees", std::move(trees)}});
  }
  return doc.dump();
}

std::vector<Forest> deserialize_forests(const std::string& text) {
  auto doc = nlohmann::json::parse(text);
  std::vector<Forest> out;
  for (const auto& f : doc.at("forests")) {
    Forest forest;
    for (const auto& arr : f.at("trees")) {
      Tree t;
      std::size_t pos = 0;
      load_preorder(arr, pos, t, 0);
      if (pos != arr.size()) throw Error("forest dump: trailing nodes in preorder array");
      forest.trees().push_back(std::move(t));
    }
    out.push_back(std::move(forest));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Leaf model

SuffStat SuffStat::of(std::span<const double> r) {
  SuffStat s;
  s.n = r.size();
  for (double v : r) {
    s.sum_r += v;
    s.sum_r2 += v * v;
  }
  return s;
}

double log_marginal_likelihood(const LeafStat& s, double tau_leaf) {
  if (!(tau_leaf > 0)) throw DomainError("leaf prior variance must be positive");
  if (s.n == 0) return 0.0;
  const double post_prec = 1.0 / tau_leaf + s.precision;
  return -0.5 * std::log1p(tau_leaf * s.precision) +
         0.5 * s.weighted_sum * s.weighted_sum / post_prec;
}

double log_marginal_likelihood(const SuffStat& s, double sigma2, double tau_leaf) {
  if (!(sigma2 > 0) || !(tau_leaf > 0)) throw DomainError("variances must be positive");
  if (s.n == 0) return 0.0;
  const double n = static_cast<double>(s.n);
  const double denom = sigma2 + tau_leaf * n;
  return 0.5 * std::log(sigma2 / denom) + tau_leaf * s.sum_r * s.sum_r / (2.0 * sigma2 * denom);
}

double log_marginal_constant(const SuffStat& s, double sigma2) {
  const double n = static_cast<double>(s.n);
  return -0.5 * n * std::log(2.0 * M_PI * sigma2) - s.sum_r2 / (2.0 * sigma2);
}

double sample_leaf(const LeafStat& s, double tau_leaf, Rng& rng) {
  if (!(tau_leaf > 0)) throw DomainError("leaf prior variance must be positive");
  const double post_prec = 1.0 / tau_leaf + s.precision;
  return rng.normal(s.weighted_sum / post_prec, std::sqrt(1.0 / post_prec));
}

double sample_leaf(const SuffStat& s, double sigma2, double tau_leaf, Rng& rng) {
  if (!(sigma2 > 0) || !(tau_leaf > 0)) throw DomainError("variances must be positive");
  const double n = static_cast<double>(s.n);
  const double denom = sigma2 + tau_leaf * n;
  return rng.normal(tau_leaf * s.sum_r / denom, std::sqrt(sigma2 * tau_leaf / denom));
}

double sample_sigma2(std::size_t n, double sum_sq, double prior_shape, double prior_rate,
                     Rng& rng) {
  const double shape = prior_shape + 0.5 * static_cast<double>(n);
  const double rate = prior_rate + 0.5 * sum_sq;
  return 1.0 / rng.gamma(shape, 1.0 / rate);
}

double sample_sigma2(std::span<const double> residuals, double prior_shape, double prior_rate,
                     Rng& rng) {
  double ss = 0.0;
  for (double r : residuals) ss += r * r;
  return sample_sigma2(residuals.size(), ss, prior_shape, prior_rate, rng);
}

// ---------------------------------------------------------------------------
// Cutpoints

std::vector<std::size_t> select_split_positions(std::span<const double> v, std::size_t k) {
  std::vector<std::size_t> out;
  select_split_positions(v, k, out);
  return out;
}

void select_split_positions(std::span<const double> v, std::size_t k,
                            std::vector<std::size_t>& out) {
  out.clear();
  const std::size_t m = v.size();
  if (m < 2 || k == 0) return;
  std::size_t boundaries = 0;
  for (std::size_t p = 0; p + 1 < m; ++p) boundaries += v[p] < v[p + 1];
  if (boundaries <= k) {
    out.reserve(boundaries);
    for (std::size_t p = 0; p + 1 < m; ++p)
      if (v[p] < v[p + 1]) out.push_back(p);
    return;
  }
  out.reserve(k);
  for (std::size_t i = 1; i <= k; ++i) {
    std::size_t q = (i * m) / (k + 1);
    if (q >= m) q = m - 1;
    while (q + 1 < m && v[q + 1] == v[q]) ++q;
    if (q + 1 >= m) continue;
    if (out.empty() || out.back() != q) out.push_back(q);
  }
  return;
}

CutpointSet candidate_cutpoints(std::span<const std::size_t> node_ids, const Matrix& features,
                                std::size_t k) {
  CutpointSet set;
  set.thresholds.resize(features.cols());
  std::vector<double> vals(node_ids.size());
  for (std::size_t j = 0; j < features.cols(); ++j) {
    for (std::size_t t = 0; t < node_ids.size(); ++t) vals[t] = features(node_ids[t], j);
    std::sort(vals.begin(), vals.end());
    for (auto p : select_split_positions(vals, k)) set.thresholds[j].push_back(vals[p]);
  }
  return set;
}

// ---------------------------------------------------------------------------
// Grow-from-root

GrowSettings GrowSettings::from(const SamplerConfig& cfg, double tau_leaf) {
  GrowSettings s;
  s.max_depth = cfg.max_depth;
  s.min_node_size = cfg.min_node_size;
  s.num_cutpoints = cfg.num_cutpoint_candidates;
  s.prior_alpha = cfg.tree_prior_alpha;
  s.prior_beta = cfg.tree_prior_beta;
  s.tau_leaf = tau_leaf;
  return s;
}

double log_stop_weight(std::size_t num_candidates, int depth, double alpha, double beta,
                       double log_m_parent) {
  const double depth_term = std::pow(1.0 + depth, beta) / alpha - 1.0;
  if (num_candidates == 0 || !(depth_term > 0)) return kNegInf;
  return std::log(static_cast<double>(num_candidates)) + std::log(depth_term) + log_m_parent;
}

std::size_t sample_log_weights(std::span<const double> log_weights, double stop_log_weight,
                               Rng& rng) {
  double mx = stop_log_weight;
  for (double w : log_weights) mx = std::max(mx, w);
  const std::size_t stop = log_weights.size();
  if (mx == kNegInf || std::isnan(mx)) return stop;
  double total = 0.0;
  for (double w : log_weights) total += std::exp(w - mx);
  total += std::exp(stop_log_weight - mx);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    const double p = std::exp(log_weights[i] - mx);
    if (u < p) return i;
    u -= p;
  }
  if (stop_log_weight > kNegInf) return stop;
  // Rounding left u past the last positive weight: take the last admissible split.
  for (std::size_t i = log_weights.size(); i-- > 0;)
    if (log_weights[i] > kNegInf) return i;
  return stop;
}

TreeGrower::TreeGrower(const Matrix& features, GrowSettings settings, const SplitPolicy* policy)
    : features_(&features), settings_(settings), policy_(policy), goes_left_(features.rows(), 0) {
  std::vector<std::size_t> all(features.rows());
  std::iota(all.begin(), all.end(), 0);
  set_rows(all);
}

void TreeGrower::set_rows(std::span<const std::size_t> ids) {
  const std::size_t p = features_->cols();
  root_orders_.assign(p, {});
  for (std::size_t j = 0; j < p; ++j) {
    auto col = features_->col(j);
    auto& ord = root_orders_[j];
    ord.assign(ids.begin(), ids.end());
    std::stable_sort(ord.begin(), ord.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
  }
  if (p == 0) throw Error("tree grower needs at least one feature");
}

Tree TreeGrower::grow(std::span<const double> weight, std::span<const double> weighted_resid,
                      std::span<double> leaf_out, Rng& rng, GrowDiagnostics* diag) {
  weight_ = weight;
  wresid_ = weighted_resid;
  leaf_out_ = leaf_out;
  GrowDiagnostics local;
  Tree tree;
  auto orders = root_orders_;
  Box box = Box::unbounded(features_->cols());
  if (orders[0].empty()) throw Error("tree grower: no rows to grow on");
  grow_node(tree, 0, orders, box, 0, rng, diag ? *diag : local);
  return tree;
}

void TreeGrower::make_leaf(Tree& tree, int node_id, const std::vector<std::uint32_t>& members,
                           const LeafStat& stat, Rng& rng) {
  const double v = sample_leaf(stat, settings_.tau_leaf, rng);
  tree.nodes()[node_id].value = v;
  for (auto i : members) leaf_out_[i] = v;
}

void TreeGrower::grow_node(Tree& tree, int node_id,
                           std::vector<std::vector<std::uint32_t>>& orders, Box& box, int depth,
                           Rng& rng, GrowDiagnostics& diag) {
  const auto& members = orders[0];
  const std::size_t m = members.size();

  LeafStat parent;
  parent.n = m;
  TagCounts parent_tags{};
  std::span<const std::uint8_t> tags = policy_ ? policy_->tags() : std::span<const std::uint8_t>{};
  for (auto i : members) {
    parent.precision += weight_[i];
    parent.weighted_sum += wresid_[i];
    if (!tags.empty()) ++parent_tags[tags[i]];
  }

  NodeSummary node{m, parent_tags, &box, depth};
  const bool forced_stop = depth >= settings_.max_depth ||
                           m < 2 * static_cast<std::size_t>(settings_.min_node_size) || m < 2;
  const bool must = policy_ && policy_->must_split(node);
  if (forced_stop && !must) {
    make_leaf(tree, node_id, members, parent, rng);
    return;
  }

  kernels::ScanInput in{features_, orders, weight_, wresid_, tags,
                        static_cast<std::size_t>(settings_.num_cutpoints)};
  const bool parallel = settings_.parallel_scan_min_node > 0 && m >= settings_.parallel_scan_min_node;
  auto cands = parallel ? kernels::scan_candidates_omp(in, parent, parent_tags)
                        : kernels::scan_candidates_serial(in, parent, parent_tags);
  if (cands.empty()) {
    if (must) ++diag.invalid_leaves;
    make_leaf(tree, node_id, members, parent, rng);
    return;
  }

  std::vector<double> logw(cands.size());
  if (parallel)
    kernels::candidate_log_weights_omp(cands, settings_.tau_leaf, logw);
  else
    kernels::candidate_log_weights_serial(cands, settings_.tau_leaf, logw);
  double stop = forced_stop ? kNegInf
                            : log_stop_weight(cands.size(), depth, settings_.prior_alpha,
                                              settings_.prior_beta,
                                              log_marginal_likelihood(parent, settings_.tau_leaf));
  if (policy_) {
    auto outcome = policy_->adjust(node, cands, logw, stop);
    if (outcome.invalid_leaf) ++diag.invalid_leaves;
  }

  const std::size_t pick = sample_log_weights(logw, stop, rng);
  if (pick == cands.size()) {
    make_leaf(tree, node_id, members, parent, rng);
    return;
  }
  if (forced_stop) ++diag.forced_splits;

  const auto& c = cands[pick];
  const auto& split_order = orders[c.feature];
  for (std::size_t t = 0; t < m; ++t) goes_left_[split_order[t]] = t <= c.position ? 1 : 0;

  const std::size_t p = orders.size();
  std::vector<std::vector<std::uint32_t>> left(p), right(p);
  const std::size_t nl = c.position + 1;
  for (std::size_t j = 0; j < p; ++j) {
    left[j].reserve(nl);
    right[j].reserve(m - nl);
    for (auto i : orders[j]) (goes_left_[i] ? left[j] : right[j]).push_back(i);
  }
  orders.clear();
  orders.shrink_to_fit();

  const int feature = c.feature;
  const double thr = c.threshold;
  auto [l, r] = tree.split(node_id, feature, thr);

  const double saved_hi = box.hi[feature];
  box.hi[feature] = std::min(saved_hi, thr);
  grow_node(tree, l, left, box, depth + 1, rng, diag);
  box.hi[feature] = saved_hi;

  const double saved_lo = box.lo[feature];
  box.lo[feature] = std::max(saved_lo, thr);
  grow_node(tree, r, right, box, depth + 1, rng, diag);
  box.lo[feature] = saved_lo;
}

}  // namespace bartrdd
