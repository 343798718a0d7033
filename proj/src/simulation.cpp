#include "bartrdd/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "bartrdd/errors.hpp"
#include "bartrdd/inference.hpp"
#include "bartrdd/io.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bartrdd {

namespace {

double sample_sd(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / (n - 1.0));
}

double prognostic_poly(double x) {
  return 3 * std::pow(x, 5) - 2.5 * std::pow(x, 4) - 1.5 * std::pow(x, 3) + 2 * x * x + 3 * x + 2;
}

}  // namespace

SimSample generate_sim_dataset(const DgpConfig& cfg, Rng& rng) {
  const std::size_t n = cfg.n;
  if (n < 2) throw ConfigError("simulation sample size must be >= 2");
  std::vector<double> x(n);
  Matrix w(n, 4);
  const double c = cfg.cutoff;
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = 2.0 * rng.beta(2.0, 4.0) - 0.75;
    w(i, 0) = -0.1 + 0.2 * rng.uniform();
    w(i, 1) = rng.normal(0.0, 0.2);
    w(i, 2) = rng.bernoulli(0.4) ? 1.0 : 0.0;
    const double u = (x[i] - c) / 0.5;
    const double p = kInvSqrt2Pi * std::exp(-0.5 * u * u) / 0.5;
    w(i, 3) = rng.bernoulli(p) ? 1.0 : 0.0;
  }

  SimTruth truth;
  truth.w_means.resize(4);
  for (std::size_t j = 0; j < 4; ++j) {
    auto col = w.col(j);
    truth.w_means[j] = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(n);
  }
  std::vector<double> mu0(n), tau0(n), wsum(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += w(i, j) - truth.w_means[j];
    wsum[i] = s;
    mu0[i] = prognostic_poly(x[i]) + 0.5 * s;
    tau0[i] = -0.1 * x[i] + 0.25 * s;
  }
  truth.sd_mu0 = sample_sd(mu0);
  truth.sd_tau0 = sample_sd(tau0);
  truth.mu.resize(n);
  truth.tau.resize(n);
  truth.tau_at_cutoff.resize(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    truth.mu[i] = mu0[i] / truth.sd_mu0 * cfg.delta_mu;
    truth.tau[i] = cfg.tau_bar + tau0[i] / truth.sd_tau0 * cfg.delta_tau;
    truth.tau_at_cutoff[i] = cfg.tau_bar + (-0.1 * c + 0.25 * wsum[i]) / truth.sd_tau0 * cfg.delta_tau;
    const double z = x[i] >= c ? 1.0 : 0.0;
    y[i] = truth.mu[i] + truth.tau[i] * z + rng.normal();
  }
  Dataset ds(std::move(y), std::move(x), std::move(w), c, {"w1", "w2", "w3", "w4"});
  return {std::move(ds), std::move(truth)};
}

std::vector<double> generate_elicitation_outcome(std::span<const double> x, const Matrix& w,
                                                 double cutoff, Rng& rng) {
  const std::size_t n = x.size();
  for (double v : x)
    if (!(1.0 + v > 0.0)) throw DomainError("elicitation outcome needs x > -1 (log(1 + x))");
  const double p = static_cast<double>(w.cols());
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mw = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) mw += w(i, j);
    if (p > 0) mw /= p;
    const double mu = mw + 1.0 / (1.0 + std::exp(-5.0 * x[i]));
    const double tau = kElicitationAte - std::log1p(x[i]) / 50.0;
    const double z = x[i] >= cutoff ? 1.0 : 0.0;
    y[i] = mu + tau * z + rng.normal();
  }
  return y;
}

std::vector<ReplicationResult> run_replications(const ReplicationPlan& plan) {
  if (plan.reps < 1) throw ConfigError("replications must be >= 1");
  if (plan.estimators.empty()) throw ConfigError("no estimators requested");
  const std::size_t ne = plan.estimators.size();
  const std::size_t tasks = plan.reps * ne;
  std::vector<ReplicationResult> out(tasks);

  auto run_one = [&](std::size_t task) {
    const std::size_t rep = task / ne;
    const Estimator est = plan.estimators[task % ne];
    ReplicationResult& r = out[task];
    r.replication = rep;
    r.estimator = est;
    try {
      Rng data_rng(derive_seed(plan.dgp.seed, {rep}));
      auto sample = generate_sim_dataset(plan.dgp, data_rng);
      SamplerConfig scfg = plan.sampler;
      scfg.seed = derive_seed(plan.dgp.seed, {rep, 1000 + static_cast<std::uint64_t>(est)});
      auto draws = fit_estimator(est, sample.data, scfg, plan.constraint);
      auto summary = summarize(draws, plan.level);
      r.ate_estimate = summary.ate.mean;
      r.ate_lower = summary.ate.lower;
      r.ate_upper = summary.ate.upper;
      r.invalid_leaves = draws.invalid_leaves;
      double truth = 0.0;
      for (std::size_t j = 0; j < draws.num_units(); ++j) {
        const auto& cs = summary.cate[j];
        r.cate_estimate.push_back(cs.mean);
        r.cate_lower.push_back(cs.lower);
        r.cate_upper.push_back(cs.upper);
        r.cate_truth.push_back(sample.truth.tau_at_cutoff[draws.units[j]]);
        truth += r.cate_truth.back();
      }
      r.ate_truth = truth / static_cast<double>(draws.num_units());
      r.ate_truth_analytic = plan.dgp.tau_bar +
                             (-0.1 * plan.dgp.cutoff) / sample.truth.sd_tau0 * plan.dgp.delta_tau;
      r.ok = true;
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
  };

#ifdef _OPENMP
  const int workers = std::max(1, plan.workers);
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(tasks); ++t)
    run_one(static_cast<std::size_t>(t));
#else
  for (std::size_t t = 0; t < tasks; ++t) run_one(t);
#endif
  return out;
}

std::string to_string(Target t) { return t == Target::Ate ? "ATE" : "CATE"; }

std::vector<MetricsRow> compute_metrics(std::span<const ReplicationResult> results) {
  if (results.empty()) throw Error("compute_metrics: no replications");
  std::vector<Estimator> order;
  for (const auto& r : results)
    if (std::find(order.begin(), order.end(), r.estimator) == order.end()) order.push_back(r.estimator);

  std::vector<MetricsRow> rows;
  for (auto est : order) {
    MetricsRow ate{to_string(est), Target::Ate};
    MetricsRow cate{to_string(est), Target::Cate};
    double se = 0, se2 = 0, scov = 0, swid = 0;
    double ce = 0, ce2 = 0, ccov = 0, cwid = 0;
    std::vector<double> errs, cate_means;
    std::size_t ok = 0, failed = 0, cate_reps = 0;
    for (const auto& r : results) {
      if (r.estimator != est) continue;
      if (!r.ok) {
        ++failed;
        continue;
      }
      ++ok;
      const double e = r.ate_estimate - r.ate_truth;
      errs.push_back(e);
      se += e;
      se2 += e * e;
      scov += (r.ate_lower <= r.ate_truth && r.ate_truth <= r.ate_upper) ? 1.0 : 0.0;
      swid += r.ate_upper - r.ate_lower;
      const std::size_t u = r.cate_estimate.size();
      if (u == 0) continue;
      ++cate_reps;
      double m = 0, m2 = 0, cov = 0, wid = 0;
      for (std::size_t j = 0; j < u; ++j) {
        const double d = r.cate_estimate[j] - r.cate_truth[j];
        m += d;
        m2 += d * d;
        cov += (r.cate_lower[j] <= r.cate_truth[j] && r.cate_truth[j] <= r.cate_upper[j]) ? 1.0 : 0.0;
        wid += r.cate_upper[j] - r.cate_lower[j];
      }
      const double du = static_cast<double>(u);
      ce += m / du;
      ce2 += m2 / du;
      ccov += cov / du;
      cwid += wid / du;
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    auto finish = [&](MetricsRow& row, std::size_t count, double s, double s2, double cov,
                      double wid) {
      row.replications = count;
      row.failures = failed;
      if (count == 0) {
        row.rmse = row.abs_bias = row.variance = row.coverage = row.interval_size = nan;
        return;
      }
      const double k = static_cast<double>(count);
      const double mean = s / k;
      const double msq = s2 / k;
      row.rmse = std::sqrt(msq);
      row.abs_bias = std::abs(mean);
      row.variance = msq - mean * mean;
      row.coverage = cov / k;
      row.interval_size = wid / k;
    };
    finish(ate, ok, se, se2, scov, swid);
    if (ok > 0) {
      // Two-pass variance for accuracy; identical in exact arithmetic.
      const double mean = se / static_cast<double>(ok);
      double v = 0.0;
      for (double e : errs) v += (e - mean) * (e - mean);
      ate.variance = v / static_cast<double>(ok);
      ate.rmse = std::sqrt(ate.abs_bias * ate.abs_bias + ate.variance);
    }
    finish(cate, cate_reps, ce, ce2, ccov, cwid);
    if (cate_reps > 0) {
      cate.variance = std::max(0.0, cate.variance);
      cate.rmse = std::sqrt(cate.abs_bias * cate.abs_bias + cate.variance);
    }
    rows.push_back(ate);
    rows.push_back(cate);
  }
  return rows;
}

std::string metrics_csv_header() {
  return "tau_bar,delta_mu,delta_tau,estimator,target,rmse,abs_bias,variance,coverage,"
         "interval_size,replications,failures";
}

std::string metrics_csv(std::span<const MetricsRow> rows, const DgpConfig& dgp, bool header) {
  std::ostringstream os;
  if (header) os << metrics_csv_header() << '\n';
  auto f = [](double v) { return io::format_double(v); };
  for (const auto& r : rows)
    os << f(dgp.tau_bar) << ',' << f(dgp.delta_mu) << ',' << f(dgp.delta_tau) << ','
       << r.estimator << ',' << to_string(r.target) << ',' << f(r.rmse) << ',' << f(r.abs_bias)
       << ',' << f(r.variance) << ',' << f(r.coverage) << ',' << f(r.interval_size) << ','
       << r.replications << ',' << r.failures << '\n';
  return os.str();
}

std::string results_csv(std::span<const ReplicationResult> rows, const DgpConfig& dgp, bool header) {
  std::ostringstream os;
  if (header)
    os << "tau_bar,delta_mu,delta_tau,replication,estimator,ok,ate_estimate,ate_lower,ate_upper,"
          "ate_truth,ate_truth_analytic,strip_units,cate_mean_error,cate_mse,cate_coverage,"
          "cate_interval_size,invalid_leaves,error\n";
  auto f = [](double v) { return io::format_double(v); };
  for (const auto& r : rows) {
    double me = 0, mse = 0, cov = 0, wid = 0;
    const std::size_t u = r.cate_estimate.size();
    for (std::size_t j = 0; j < u; ++j) {
      const double d = r.cate_estimate[j] - r.cate_truth[j];
      me += d;
      mse += d * d;
      cov += (r.cate_lower[j] <= r.cate_truth[j] && r.cate_truth[j] <= r.cate_upper[j]) ? 1 : 0;
      wid += r.cate_upper[j] - r.cate_lower[j];
    }
    const double du = u ? static_cast<double>(u) : 1.0;
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    std::replace(err.begin(), err.end(), '"', '\'');
    os << f(dgp.tau_bar) << ',' << f(dgp.delta_mu) << ',' << f(dgp.delta_tau) << ','
       << r.replication << ',' << to_string(r.estimator) << ',' << (r.ok ? 1 : 0) << ','
       << f(r.ate_estimate) << ',' << f(r.ate_lower) << ',' << f(r.ate_upper) << ','
       << f(r.ate_truth) << ',' << f(r.ate_truth_analytic) << ',' << u << ',' << f(me / du) << ','
       << f(mse / du) << ',' << f(cov / du) << ',' << f(wid / du) << ',' << r.invalid_leaves << ','
       << err << '\n';
  }
  return os.str();
}

}  // namespace bartrdd
