#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bartrdd/data.hpp"
#include "bartrdd/forest.hpp"
#include "bartrdd/rdd_constraint.hpp"
#include "bartrdd/rng.hpp"

namespace bartrdd {

enum class Estimator { BartRdd, SBart, TBart };

std::string to_string(Estimator e);
/// Accepts "bart-rdd", "s-bart", "t-bart"; throws ConfigError otherwise.
Estimator parse_estimator(const std::string& name);

/// Retained draws of a plain sum-of-trees regression, on the standardized scale.
struct BartPosterior {
  std::vector<Forest> forests;
  std::vector<double> sigma2;
  ScalingRecord scaling;
  GrowDiagnostics diagnostics;

  std::size_t num_draws() const { return forests.size(); }
  /// Prediction on the original outcome scale.
  double predict(std::size_t draw, std::span<const double> row) const {
    return scaling.inverse(forests[draw].predict(row));
  }
};

/// Plain BART by grow-from-root backfitting. The outcome is standardized
/// internally. An optional policy constrains every tree.
BartPosterior fit_bart(const Matrix& features, std::span<const double> y, const SamplerConfig& cfg,
                       const SplitPolicy* policy = nullptr);

/// CATE draws at the cutoff for the units inside the identification strip.
struct PosteriorDraws {
  std::vector<std::size_t> units;  // row indices of strip units
  Matrix cate;                     // draws x units, original outcome scale
  std::vector<double> ate;         // per-draw strip mean of cate
  std::size_t invalid_leaves = 0;

  std::size_t num_draws() const { return ate.size(); }
  std::size_t num_units() const { return units.size(); }
  /// Recomputes ate from cate.
  void refresh_ate();
};

/// State of one retained sweep of the constrained causal forest, standardized scale.
struct BartRddState {
  Forest mu_forest;
  Forest tau_forest;
  double a = 1.0;
  double b0 = -0.5;
  double b1 = 0.5;
  double sigma2_0 = 1.0;
  double sigma2_1 = 1.0;
  /// Tracked in-sampler fit a*mu + b_z*tau~, kept only when requested.
  std::vector<double> fitted;
};

struct ChainRow {
  int sweep = 0;
  double a = 0, b0 = 0, b1 = 0, sigma_0 = 0, sigma_1 = 0;  // sigmas on the outcome scale
};

struct RddFitOptions {
  /// Evaluate tau~ at (c, w_i); when false at (x_i, w_i).
  bool cate_at_cutoff = true;
  /// Single noise variance shared by both arms.
  bool pooled_variance = false;
  /// Disables the strip policy (unconstrained causal forest).
  bool constrained = true;
  bool keep_states = false;
  /// Keeps only the last sweep's state (for forest dumps).
  bool keep_final_state = false;
};

struct BartRddFit {
  PosteriorDraws draws;
  std::vector<BartRddState> states;  // retained sweeps, only with keep_states
  std::vector<ChainRow> chain;       // every sweep
  ScalingRecord scaling;
  GrowDiagnostics diagnostics;
};

BartRddFit fit_bart_rdd(const Dataset& ds, const SamplerConfig& scfg, const ConstraintConfig& ccfg,
                        const RddFitOptions& opts = {});

/// S-learner: one forest on (x, w, z).
PosteriorDraws fit_s_bart(const Dataset& ds, const SamplerConfig& cfg, const ConstraintConfig& ccfg);
/// T-learner: separate forests per arm, draws paired by sweep.
PosteriorDraws fit_t_bart(const Dataset& ds, const SamplerConfig& cfg, const ConstraintConfig& ccfg);

/// Dispatch by estimator id. The strip (ccfg.h) defines the CATE units for every estimator.
PosteriorDraws fit_estimator(Estimator e, const Dataset& ds, const SamplerConfig& scfg,
                             const ConstraintConfig& ccfg);

struct ScaleParams {
  double a = 1.0;
  double b0 = -0.5;
  double b1 = 0.5;
};

/// Conjugate Gaussian draws of (a, b0, b1) given the forest fits.
/// a ~ N(0, 1) prior with response y - b_z tau~; b_z ~ N(0, 1/2) with response y - a mu.
ScaleParams sample_scale_params(std::span<const double> mu_fit, std::span<const double> tau_fit,
                                std::span<const double> y, std::span<const std::uint8_t> z,
                                const ScaleParams& current, double sigma2_0, double sigma2_1,
                                Rng& rng);

/// Rows (c, w_i) for the given units; with x_i kept when at_cutoff is false.
Matrix cutoff_rows(const Dataset& ds, std::span<const std::size_t> units, bool at_cutoff = true);

}  // namespace bartrdd
