#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bartrdd/data.hpp"
#include "bartrdd/models.hpp"
#include "bartrdd/rng.hpp"

namespace bartrdd {

/// One cell of the simulation grid. X = 2 Beta(2, 4) - 0.75, four covariates.
struct DgpConfig {
  std::size_t n = 1000;
  double tau_bar = 0.2;
  double delta_mu = 0.5;
  double delta_tau = 0.1;
  double cutoff = 0.0;
  std::uint64_t seed = 1;
};

struct SimTruth {
  std::vector<double> mu;              // prognostic function at (x_i, w_i)
  std::vector<double> tau;             // treatment effect at (x_i, w_i)
  std::vector<double> tau_at_cutoff;   // tau(c, w_i)
  double sd_mu0 = 1.0;
  double sd_tau0 = 1.0;
  std::vector<double> w_means;         // empirical E[w_p] used for centering
};

struct SimSample {
  Dataset data;
  SimTruth truth;
};

SimSample generate_sim_dataset(const DgpConfig& cfg, Rng& rng);

/// Prior-elicitation outcome: mu = mean(w) + logistic(5x), tau = 0.4 - log(1 + x)/50.
std::vector<double> generate_elicitation_outcome(std::span<const double> x, const Matrix& w,
                                                 double cutoff, Rng& rng);

inline constexpr double kElicitationAte = 0.4;

struct ReplicationResult {
  std::size_t replication = 0;
  Estimator estimator = Estimator::BartRdd;
  bool ok = false;
  std::string error;
  double ate_estimate = 0.0;
  double ate_lower = 0.0;
  double ate_upper = 0.0;
  double ate_truth = 0.0;           // per-sample strip mean of tau(c, w_i)
  double ate_truth_analytic = 0.0;  // tau_bar + delta_tau * (-0.1 c) / sd(tau0)
  std::size_t invalid_leaves = 0;
  std::vector<double> cate_estimate;
  std::vector<double> cate_lower;
  std::vector<double> cate_upper;
  std::vector<double> cate_truth;
};

struct ReplicationPlan {
  DgpConfig dgp;
  std::vector<Estimator> estimators;
  std::size_t reps = 1;
  int workers = 1;
  SamplerConfig sampler;
  ConstraintConfig constraint;
  double level = 0.95;
};

/// Replications ordered by (replication, estimator). Bitwise identical for
/// any worker count.
std::vector<ReplicationResult> run_replications(const ReplicationPlan& plan);

enum class Target { Ate, Cate };

struct MetricsRow {
  std::string estimator;
  Target target = Target::Ate;
  double rmse = 0, abs_bias = 0, variance = 0, coverage = 0, interval_size = 0;
  std::size_t replications = 0;
  std::size_t failures = 0;
};

/// Metrics per estimator and target over successful replications. Errors are
/// est - truth; variance is the population variance of the errors, so
/// rmse^2 = bias^2 + variance. CATE metrics weight units equally within a
/// replication and replications equally overall.
std::vector<MetricsRow> compute_metrics(std::span<const ReplicationResult> results);

std::string to_string(Target t);

/// Fixed-column CSV renderings.
std::string metrics_csv_header();
std::string metrics_csv(std::span<const MetricsRow> rows, const DgpConfig& dgp, bool header = true);
std::string results_csv(std::span<const ReplicationResult> rows, const DgpConfig& dgp,
                        bool header = true);

}  // namespace bartrdd
