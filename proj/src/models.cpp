#include "bartrdd/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bartrdd/errors.hpp"

namespace bartrdd {

namespace {

// Stream keys for the per-sweep child generators.
enum StreamKey : std::uint64_t { kMuForest = 0, kTauForest = 1, kScale = 2, kSigma = 3 };

/// Backfits one forest. contrib holds each tree's per-row leaf value and
/// fit their sum; residual(i) must exclude the whole forest.
template <class WeightFn>
void backfit_forest(Forest& forest, std::vector<std::vector<double>>& contrib,
                    std::vector<double>& fit, TreeGrower& grower, WeightFn&& weights,
                    std::uint64_t seed, int sweep, std::uint64_t forest_key,
                    GrowDiagnostics& diag) {
  const std::size_t n = fit.size();
  std::vector<double> w(n), wr(n), leaf(n);
  for (std::size_t t = 0; t < forest.size(); ++t) {
    auto& c = contrib[t];
    for (std::size_t i = 0; i < n; ++i) fit[i] -= c[i];
    weights(fit, w, wr);
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(sweep), forest_key, t}));
    forest[t] = grower.grow(w, wr, leaf, rng, &diag);
    c = leaf;
    for (std::size_t i = 0; i < n; ++i) fit[i] += c[i];
  }
  // Resum to keep the tracked fit free of accumulated rounding.
  std::fill(fit.begin(), fit.end(), 0.0);
  for (const auto& c : contrib)
    for (std::size_t i = 0; i < n; ++i) fit[i] += c[i];
}

}  // namespace

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::BartRdd: return "bart-rdd";
    case Estimator::SBart: return "s-bart";
    case Estimator::TBart: return "t-bart";
  }
  return "unknown";
}

Estimator parse_estimator(const std::string& name) {
  if (name == "bart-rdd") return Estimator::BartRdd;
  if (name == "s-bart") return Estimator::SBart;
  if (name == "t-bart") return Estimator::TBart;
  throw ConfigError("unknown estimator '" + name + "' (expected bart-rdd, s-bart or t-bart)");
}

void PosteriorDraws::refresh_ate() {
  ate.assign(cate.rows(), 0.0);
  const std::size_t u = cate.cols();
  for (std::size_t s = 0; s < cate.rows(); ++s) {
    double acc = 0.0;
    for (std::size_t j = 0; j < u; ++j) acc += cate(s, j);
    ate[s] = u ? acc / static_cast<double>(u) : 0.0;
  }
}

Matrix cutoff_rows(const Dataset& ds, std::span<const std::size_t> units, bool at_cutoff) {
  Matrix rows = ds.features().select_rows(units);
  if (at_cutoff)
    for (auto& v : rows.col(0)) v = ds.cutoff();
  return rows;
}

BartPosterior fit_bart(const Matrix& features, std::span<const double> y_raw,
                       const SamplerConfig& cfg, const SplitPolicy* policy) {
  cfg.validate();
  const std::size_t n = y_raw.size();
  if (n < 2) throw DomainError("fit_bart needs at least 2 observations");
  if (features.rows() != n) throw Error("fit_bart: feature rows differ from outcome length");

  BartPosterior post;
  post.scaling = fit_scaling(y_raw);
  const auto y = apply_scaling(y_raw, post.scaling);

  TreeGrower grower(features, GrowSettings::from(cfg, cfg.leaf_variance_mu()), policy);
  Forest forest(cfg.num_trees_mu);
  std::vector<std::vector<double>> contrib(cfg.num_trees_mu, std::vector<double>(n, 0.0));
  std::vector<double> fit(n, 0.0);
  double sigma2 = 1.0;

  for (int sweep = 0; sweep < cfg.num_sweeps; ++sweep) {
    auto weights = [&](const std::vector<double>& partial, std::vector<double>& w,
                       std::vector<double>& wr) {
      const double prec = 1.0 / sigma2;
      for (std::size_t i = 0; i < n; ++i) {
        w[i] = prec;
        wr[i] = (y[i] - partial[i]) * prec;
      }
    };
    backfit_forest(forest, contrib, fit, grower, weights, cfg.seed, sweep, kMuForest,
                   post.diagnostics);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (y[i] - fit[i]) * (y[i] - fit[i]);
    Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(sweep), kSigma}));
    sigma2 = sample_sigma2(n, ss, cfg.sigma_prior_shape, cfg.sigma_prior_rate, rng);
    if (sweep >= cfg.burn_in) {
      post.forests.push_back(forest);
      post.sigma2.push_back(sigma2);
    }
  }
  return post;
}

ScaleParams sample_scale_params(std::span<const double> mu_fit, std::span<const double> tau_fit,
                                std::span<const double> y, std::span<const std::uint8_t> z,
                                const ScaleParams& current, double sigma2_0, double sigma2_1,
                                Rng& rng) {
  ScaleParams out = current;
  const std::size_t n = y.size();
  auto var_of = [&](std::size_t i) { return z[i] ? sigma2_1 : sigma2_0; };

  // a | b: y - b_z tau~ = a mu + e, prior N(0, 1)
  double prec = 1.0, num = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = var_of(i);
    const double b = z[i] ? current.b1 : current.b0;
    prec += mu_fit[i] * mu_fit[i] / v;
    num += mu_fit[i] * (y[i] - b * tau_fit[i]) / v;
  }
  out.a = rng.normal(num / prec, std::sqrt(1.0 / prec));

  // b_z | a: y - a mu = b_z tau~ + e over arm z, prior N(0, 1/2)
  double prec0 = 2.0, num0 = 0.0, prec1 = 2.0, num1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = var_of(i);
    const double r = y[i] - out.a * mu_fit[i];
    if (z[i]) {
      prec1 += tau_fit[i] * tau_fit[i] / v;
      num1 += tau_fit[i] * r / v;
    } else {
      prec0 += tau_fit[i] * tau_fit[i] / v;
      num0 += tau_fit[i] * r / v;
    }
  }
  out.b0 = rng.normal(num0 / prec0, std::sqrt(1.0 / prec0));
  out.b1 = rng.normal(num1 / prec1, std::sqrt(1.0 / prec1));
  return out;
}

BartRddFit fit_bart_rdd(const Dataset& ds, const SamplerConfig& scfg, const ConstraintConfig& ccfg,
                        const RddFitOptions& opts) {
  scfg.validate();
  ccfg.validate();
  const std::size_t n = ds.size();
  if (n < 2) throw DomainError("fit_bart_rdd needs at least 2 observations");
  const auto z = ds.z();
  const std::size_t n1 = static_cast<std::size_t>(std::count(z.begin(), z.end(), 1));
  if (n1 == 0 || n1 == n) throw ConfigError("fit_bart_rdd: both treatment arms must be nonempty");

  const StripIndex strip = build_strip_index(ds, ccfg);
  if (opts.constrained) check_root_condition(strip, ccfg);

  BartRddFit out;
  out.scaling = fit_scaling(ds.y());
  const auto y = apply_scaling(ds.y(), out.scaling);
  const Matrix features = ds.features();

  RddSplitPolicy policy(ds.x(), ds.cutoff(), ccfg);
  const SplitPolicy* pol = opts.constrained ? &policy : nullptr;
  TreeGrower mu_grower(features, GrowSettings::from(scfg, scfg.leaf_variance_mu()), pol);
  TreeGrower tau_grower(features, GrowSettings::from(scfg, scfg.leaf_variance_tau()), pol);

  BartRddState st;
  st.mu_forest = Forest(scfg.num_trees_mu);
  st.tau_forest = Forest(scfg.num_trees_tau);
  std::vector<std::vector<double>> mu_contrib(scfg.num_trees_mu, std::vector<double>(n, 0.0));
  std::vector<std::vector<double>> tau_contrib(scfg.num_trees_tau, std::vector<double>(n, 0.0));
  std::vector<double> mu_fit(n, 0.0), tau_fit(n, 0.0);

  const auto units = strip.all();
  const Matrix query = cutoff_rows(ds, units, opts.cate_at_cutoff);
  out.draws.units = units;
  out.draws.cate = Matrix(static_cast<std::size_t>(scfg.num_retained()), units.size());
  const double sd = out.scaling.sd;

  for (int sweep = 0; sweep < scfg.num_sweeps; ++sweep) {
    auto b_of = [&](std::size_t i) { return z[i] ? st.b1 : st.b0; };
    auto var_of = [&](std::size_t i) { return z[i] ? st.sigma2_1 : st.sigma2_0; };

    // mu-forest: y - b_z tau~ = a mu + e
    backfit_forest(
        st.mu_forest, mu_contrib, mu_fit, mu_grower,
        [&](const std::vector<double>& partial, std::vector<double>& w, std::vector<double>& wr) {
          for (std::size_t i = 0; i < n; ++i) {
            const double r = y[i] - b_of(i) * tau_fit[i] - st.a * partial[i];
            const double v = var_of(i);
            w[i] = st.a * st.a / v;
            wr[i] = st.a * r / v;
          }
        },
        scfg.seed, sweep, kMuForest, out.diagnostics);

    // tau-forest: y - a mu = b_z tau~ + e
    backfit_forest(
        st.tau_forest, tau_contrib, tau_fit, tau_grower,
        [&](const std::vector<double>& partial, std::vector<double>& w, std::vector<double>& wr) {
          for (std::size_t i = 0; i < n; ++i) {
            const double b = b_of(i);
            const double r = y[i] - st.a * mu_fit[i] - b * partial[i];
            const double v = var_of(i);
            w[i] = b * b / v;
            wr[i] = b * r / v;
          }
        },
        scfg.seed, sweep, kTauForest, out.diagnostics);

    if (scfg.update_scale_params) {
      Rng rng(derive_seed(scfg.seed, {static_cast<std::uint64_t>(sweep), kScale}));
      auto sp = sample_scale_params(mu_fit, tau_fit, y, z, {st.a, st.b0, st.b1}, st.sigma2_0,
                                    st.sigma2_1, rng);
      st.a = sp.a;
      st.b0 = sp.b0;
      st.b1 = sp.b1;
    }
    {
      Rng rng(derive_seed(scfg.seed, {static_cast<std::uint64_t>(sweep), kSigma}));
      double ss0 = 0.0, ss1 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = y[i] - st.a * mu_fit[i] - b_of(i) * tau_fit[i];
        (z[i] ? ss1 : ss0) += e * e;
      }
      if (opts.pooled_variance) {
        st.sigma2_0 = st.sigma2_1 =
            sample_sigma2(n, ss0 + ss1, scfg.sigma_prior_shape, scfg.sigma_prior_rate, rng);
      } else {
        st.sigma2_0 = sample_sigma2(n - n1, ss0, scfg.sigma_prior_shape, scfg.sigma_prior_rate, rng);
        st.sigma2_1 = sample_sigma2(n1, ss1, scfg.sigma_prior_shape, scfg.sigma_prior_rate, rng);
      }
    }

    out.chain.push_back({sweep, st.a, st.b0, st.b1, std::sqrt(st.sigma2_0) * sd,
                         std::sqrt(st.sigma2_1) * sd});

    if (sweep >= scfg.burn_in) {
      const std::size_t s = static_cast<std::size_t>(sweep - scfg.burn_in);
      const double scale = (st.b1 - st.b0) * sd;
      for (std::size_t j = 0; j < units.size(); ++j)
        out.draws.cate(s, j) = scale * st.tau_forest.predict(query, j);
      if (opts.keep_states || (opts.keep_final_state && sweep + 1 == scfg.num_sweeps)) {
        BartRddState kept = st;
        kept.fitted.resize(n);
        for (std::size_t i = 0; i < n; ++i) kept.fitted[i] = st.a * mu_fit[i] + b_of(i) * tau_fit[i];
        out.states.push_back(std::move(kept));
      }
    }
  }
  out.draws.refresh_ate();
  out.draws.invalid_leaves = out.diagnostics.invalid_leaves;
  return out;
}

PosteriorDraws fit_s_bart(const Dataset& ds, const SamplerConfig& cfg, const ConstraintConfig& ccfg) {
  const StripIndex strip = build_strip_index(ds, ccfg);
  std::vector<double> zcol(ds.z().begin(), ds.z().end());
  const Matrix features = ds.features().with_column(zcol);
  auto post = fit_bart(features, ds.y(), cfg);

  PosteriorDraws d;
  d.units = strip.all();
  const Matrix base = cutoff_rows(ds, d.units);
  Matrix treated = base.with_column(std::vector<double>(d.units.size(), 1.0));
  Matrix control = base.with_column(std::vector<double>(d.units.size(), 0.0));
  d.cate = Matrix(post.num_draws(), d.units.size());
  for (std::size_t s = 0; s < post.num_draws(); ++s)
    for (std::size_t j = 0; j < d.units.size(); ++j)
      d.cate(s, j) = post.scaling.inverse_effect(post.forests[s].predict(treated, j) -
                                                 post.forests[s].predict(control, j));
  d.refresh_ate();
  d.invalid_leaves = post.diagnostics.invalid_leaves;
  return d;
}

PosteriorDraws fit_t_bart(const Dataset& ds, const SamplerConfig& cfg, const ConstraintConfig& ccfg) {
  const StripIndex strip = build_strip_index(ds, ccfg);
  std::vector<std::size_t> arm0, arm1;
  for (std::size_t i = 0; i < ds.size(); ++i) (ds.z()[i] ? arm1 : arm0).push_back(i);
  if (arm0.empty() || arm1.empty()) throw ConfigError("fit_t_bart: a treatment arm is empty");
  if (arm0.size() < 2 || arm1.size() < 2)
    throw DomainError("fit_t_bart: each arm needs at least 2 observations");

  const Matrix features = ds.features();
  auto arm_y = [&](const std::vector<std::size_t>& ids) {
    std::vector<double> y(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) y[k] = ds.y()[ids[k]];
    return y;
  };
  SamplerConfig cfg0 = cfg, cfg1 = cfg;
  cfg0.seed = derive_seed(cfg.seed, {0});
  cfg1.seed = derive_seed(cfg.seed, {1});
  auto post0 = fit_bart(features.select_rows(arm0), arm_y(arm0), cfg0);
  auto post1 = fit_bart(features.select_rows(arm1), arm_y(arm1), cfg1);

  PosteriorDraws d;
  d.units = strip.all();
  const Matrix query = cutoff_rows(ds, d.units);
  d.cate = Matrix(post0.num_draws(), d.units.size());
  for (std::size_t s = 0; s < post0.num_draws(); ++s)
    for (std::size_t j = 0; j < d.units.size(); ++j)
      d.cate(s, j) = post1.scaling.inverse(post1.forests[s].predict(query, j)) -
                     post0.scaling.inverse(post0.forests[s].predict(query, j));
  d.refresh_ate();
  return d;
}

PosteriorDraws fit_estimator(Estimator e, const Dataset& ds, const SamplerConfig& scfg,
                             const ConstraintConfig& ccfg) {
  switch (e) {
    case Estimator::BartRdd: return fit_bart_rdd(ds, scfg, ccfg).draws;
    case Estimator::SBart: return fit_s_bart(ds, scfg, ccfg);
    case Estimator::TBart: return fit_t_bart(ds, scfg, ccfg);
  }
  throw ConfigError("unknown estimator");
}

}  // namespace bartrdd
