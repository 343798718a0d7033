#include "bartrdd/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "bartrdd/errors.hpp"
#include "bartrdd/io.hpp"

namespace bartrdd {

double quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

IntervalSummary summarize(std::span<const double> draws, double level) {
  if (draws.size() < 2) throw Error("summarize needs at least 2 draws");
  if (!(level > 0 && level < 1)) throw ConfigError("credible level must lie in (0, 1)");
  std::vector<double> s(draws.begin(), draws.end());
  std::sort(s.begin(), s.end());
  IntervalSummary out;
  out.level = level;
  const double n = static_cast<double>(s.size());
  out.mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : s) ss += (v - out.mean) * (v - out.mean);
  out.sd = std::sqrt(ss / (n - 1.0));
  const double tail = (1.0 - level) / 2.0;
  out.lower = quantile(s, tail);
  out.upper = quantile(s, 1.0 - tail);
  out.median = quantile(s, 0.5);
  out.min = s.front();
  out.max = s.back();
  // Rounding in the running sum can push the mean a hair outside [min, max].
  out.mean = std::clamp(out.mean, out.min, out.max);
  return out;
}

DrawsSummary summarize(const PosteriorDraws& draws, double level) {
  DrawsSummary out;
  out.ate = summarize(draws.ate, level);
  std::vector<double> col(draws.cate.rows());
  for (std::size_t j = 0; j < draws.cate.cols(); ++j) {
    auto c = draws.cate.col(j);
    out.cate.push_back(summarize(c, level));
  }
  return out;
}

SubgroupContrast subgroup_contrast(const PosteriorDraws& draws, std::span<const std::size_t> a,
                                   std::span<const std::size_t> b) {
  if (a.empty() || b.empty()) throw Error("subgroup contrast: empty group");
  for (auto j : a)
    if (j >= draws.num_units()) throw Error("subgroup contrast: unit index out of range");
  for (auto j : b)
    if (j >= draws.num_units()) throw Error("subgroup contrast: unit index out of range");
  SubgroupContrast out;
  const std::size_t S = draws.cate.rows();
  out.differences.resize(S);
  std::size_t positive = 0;
  for (std::size_t s = 0; s < S; ++s) {
    double ma = 0.0, mb = 0.0;
    for (auto j : a) ma += draws.cate(s, j);
    for (auto j : b) mb += draws.cate(s, j);
    const double d = ma / static_cast<double>(a.size()) - mb / static_cast<double>(b.size());
    out.differences[s] = d;
    positive += d > 0.0;
  }
  out.prob_positive = S ? static_cast<double>(positive) / static_cast<double>(S) : 0.0;
  return out;
}

namespace {

struct BestSplit {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

BestSplit best_cart_split(std::span<const double> y, const Matrix& w,
                          const std::vector<std::size_t>& ids, std::size_t min_leaf) {
  BestSplit best;
  const std::size_t m = ids.size();
  if (m < 2 * min_leaf) return best;
  double total = 0.0, total2 = 0.0;
  for (auto i : ids) {
    total += y[i];
    total2 += y[i] * y[i];
  }
  const double sse_parent = total2 - total * total / static_cast<double>(m);
  std::vector<std::size_t> order(ids);
  for (std::size_t j = 0; j < w.cols(); ++j) {
    auto col = w.col(j);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return col[a] < col[b]; });
    double ls = 0.0, ls2 = 0.0;
    for (std::size_t t = 0; t + 1 < m; ++t) {
      const auto i = order[t];
      ls += y[i];
      ls2 += y[i] * y[i];
      if (col[order[t]] == col[order[t + 1]]) continue;
      const std::size_t nl = t + 1, nr = m - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      const double rs = total - ls, rs2 = total2 - ls2;
      const double sse = (ls2 - ls * ls / static_cast<double>(nl)) +
                         (rs2 - rs * rs / static_cast<double>(nr));
      const double gain = sse_parent - sse;
      if (gain > best.gain + 1e-12 * std::max(1.0, std::abs(sse_parent))) {
        best.feature = static_cast<int>(j);
        best.threshold = col[order[t]];
        best.gain = gain;
      }
    }
  }
  return best;
}

void grow_summary(SummaryTree& tree, int id, std::vector<std::size_t> ids, std::span<const double> y,
                  const Matrix& w, const SummaryTreeConfig& cfg, std::size_t min_leaf,
                  double total_n) {
  auto& nd = tree.nodes[id];
  nd.n = ids.size();
  nd.share = static_cast<double>(ids.size()) / total_n;
  double s = 0.0;
  for (auto i : ids) s += y[i];
  nd.mean = s / static_cast<double>(ids.size());
  if (nd.depth >= cfg.max_depth) return;
  auto split = best_cart_split(y, w, ids, min_leaf);
  if (split.feature < 0) return;
  std::vector<std::size_t> l, r;
  for (auto i : ids) (w(i, split.feature) <= split.threshold ? l : r).push_back(i);
  const int depth = nd.depth;
  const int li = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back({});
  tree.nodes.push_back({});
  tree.nodes[id].feature = split.feature;
  tree.nodes[id].threshold = split.threshold;
  tree.nodes[id].left = li;
  tree.nodes[id].right = li + 1;
  tree.nodes[li].depth = tree.nodes[li + 1].depth = depth + 1;
  grow_summary(tree, li, std::move(l), y, w, cfg, min_leaf, total_n);
  grow_summary(tree, li + 1, std::move(r), y, w, cfg, min_leaf, total_n);
}

void render(const SummaryTree& t, int id, std::ostringstream& os, const std::string& label) {
  const auto& nd = t.nodes[id];
  os << std::string(2 * nd.depth, ' ') << label << "mean=" << io::format_double(nd.mean)
     << " share=" << io::format_double(nd.share) << " n=" << nd.n << '\n';
  if (nd.feature < 0) return;
  const std::string& name = t.feature_names[nd.feature];
  const std::string thr = io::format_double(nd.threshold);
  render(t, nd.left, os, name + " <= " + thr + ": ");
  render(t, nd.right, os, name + " > " + thr + ": ");
}

}  // namespace

std::string SummaryTree::to_text() const {
  std::ostringstream os;
  if (!nodes.empty()) render(*this, 0, os, "");
  return os.str();
}

SummaryTree fit_summary_tree(std::span<const double> estimates, const Matrix& covariates,
                             const SummaryTreeConfig& cfg, std::vector<std::string> names) {
  const std::size_t n = estimates.size();
  if (covariates.rows() != n) throw Error("summary tree: covariate rows differ from estimates");
  std::size_t min_leaf = cfg.min_leaf > 0
                             ? static_cast<std::size_t>(cfg.min_leaf)
                             : std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.05 * n)));
  if (n < 2 * min_leaf) throw Error("summary tree needs at least 2 * min_leaf units");
  if (names.empty())
    for (std::size_t j = 0; j < covariates.cols(); ++j) names.push_back("w" + std::to_string(j + 1));
  SummaryTree tree;
  tree.feature_names = std::move(names);
  tree.nodes.push_back({});
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  grow_summary(tree, 0, std::move(ids), estimates, covariates, cfg, min_leaf,
               static_cast<double>(n));
  return tree;
}

}  // namespace bartrdd
