#pragma once

// Data-parallel inner loops of the sampler. Each kernel has a serial
// reference and an OpenMP variant that must produce identical output.

#include <cstdint>
#include <span>
#include <vector>

#include "bartrdd/data.hpp"
#include "bartrdd/forest.hpp"

namespace bartrdd::kernels {

struct ScanInput {
  const Matrix* features = nullptr;
  /// Per-feature node members sorted by that feature's value.
  std::span<const std::vector<std::uint32_t>> orders;
  std::span<const double> weight;
  std::span<const double> weighted_resid;
  /// Empty when no policy is active.
  std::span<const std::uint8_t> tags;
  std::size_t max_candidates = 100;
};

/// Candidates for one feature, in ascending threshold order.
void scan_feature(const ScanInput& in, std::size_t feature, const LeafStat& parent,
                  const TagCounts& parent_tags, std::vector<SplitCandidate>& out);

/// All candidates, grouped by feature in ascending feature order.
std::vector<SplitCandidate> scan_candidates_serial(const ScanInput& in, const LeafStat& parent,
                                                   const TagCounts& parent_tags);
std::vector<SplitCandidate> scan_candidates_omp(const ScanInput& in, const LeafStat& parent,
                                                const TagCounts& parent_tags);

/// Log-likelihood of every candidate: m(left) + m(right).
void candidate_log_weights_serial(std::span<const SplitCandidate> cands, double tau_leaf,
                                  std::span<double> out);
void candidate_log_weights_omp(std::span<const SplitCandidate> cands, double tau_leaf,
                               std::span<double> out);

void predict_rows_serial(const Forest& forest, const Matrix& features, std::span<double> out);
void predict_rows_omp(const Forest& forest, const Matrix& features, std::span<double> out);

/// Number of OpenMP threads available (1 without OpenMP).
int max_threads();

}  // namespace bartrdd::kernels
