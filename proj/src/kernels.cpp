#include "bartrdd/kernels.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bartrdd::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void scan_feature(const ScanInput& in, std::size_t feature, const LeafStat& parent,
                  const TagCounts& parent_tags, std::vector<SplitCandidate>& out) {
  const auto& order = in.orders[feature];
  const std::size_t m = order.size();
  if (m < 2) return;
  auto col = in.features->col(feature);

  thread_local std::vector<double> values;
  thread_local std::vector<std::size_t> positions;
  values.resize(m);
  for (std::size_t t = 0; t < m; ++t) values[t] = col[order[t]];
  select_split_positions(values, in.max_candidates, positions);
  if (positions.empty()) return;

  const bool tagged = !in.tags.empty();
  LeafStat left;
  TagCounts left_tags{};
  std::size_t next = 0;
  for (std::size_t t = 0; t < m && next < positions.size(); ++t) {
    const auto i = order[t];
    left.n += 1;
    left.precision += in.weight[i];
    left.weighted_sum += in.weighted_resid[i];
    if (tagged) ++left_tags[in.tags[i]];
    if (t == positions[next]) {
      SplitCandidate c;
      c.feature = static_cast<int>(feature);
      c.position = t;
      c.threshold = values[t];
      c.left = left;
      c.right = parent - left;
      c.left_tags = left_tags;
      for (int g = 0; g < 3; ++g) c.right_tags[g] = parent_tags[g] - left_tags[g];
      out.push_back(c);
      ++next;
    }
  }
}

std::vector<SplitCandidate> scan_candidates_serial(const ScanInput& in, const LeafStat& parent,
                                                   const TagCounts& parent_tags) {
  std::vector<SplitCandidate> out;
  std::size_t cap = 0;
  for (const auto& o : in.orders) cap += std::min<std::size_t>(o.size(), in.max_candidates);
  out.reserve(cap);
  for (std::size_t j = 0; j < in.orders.size(); ++j) scan_feature(in, j, parent, parent_tags, out);
  return out;
}

std::vector<SplitCandidate> scan_candidates_omp(const ScanInput& in, const LeafStat& parent,
                                                const TagCounts& parent_tags) {
  const std::size_t p = in.orders.size();
  std::vector<std::vector<SplitCandidate>> per_feature(p);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(p); ++j) {
    per_feature[j].reserve(std::min<std::size_t>(in.orders[j].size(), in.max_candidates));
    scan_feature(in, static_cast<std::size_t>(j), parent, parent_tags, per_feature[j]);
  }
  std::vector<SplitCandidate> out;
  std::size_t total = 0;
  for (const auto& f : per_feature) total += f.size();
  out.reserve(total);
  for (auto& f : per_feature) out.insert(out.end(), f.begin(), f.end());
  return out;
}

void candidate_log_weights_serial(std::span<const SplitCandidate> cands, double tau_leaf,
                                  std::span<double> out) {
  for (std::size_t k = 0; k < cands.size(); ++k)
    out[k] = log_marginal_likelihood(cands[k].left, tau_leaf) +
             log_marginal_likelihood(cands[k].right, tau_leaf);
}

void candidate_log_weights_omp(std::span<const SplitCandidate> cands, double tau_leaf,
                               std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(cands.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < n; ++k)
    out[k] = log_marginal_likelihood(cands[k].left, tau_leaf) +
             log_marginal_likelihood(cands[k].right, tau_leaf);
}

void predict_rows_serial(const Forest& forest, const Matrix& features, std::span<double> out) {
  for (std::size_t i = 0; i < features.rows(); ++i) out[i] = forest.predict(features, i);
}

void predict_rows_omp(const Forest& forest, const Matrix& features, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(features.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    out[i] = forest.predict(features, static_cast<std::size_t>(i));
}

}  // namespace bartrdd::kernels
