#include "bartrdd/elicitation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "bartrdd/errors.hpp"
#include "bartrdd/io.hpp"
#include "bartrdd/models.hpp"
#include "bartrdd/rdd_constraint.hpp"
#include "bartrdd/simulation.hpp"

namespace bartrdd {

void ElicitationGrid::validate() const {
  if (h_values.empty() || n_omin_values.empty() || alpha_values.empty())
    throw ConfigError("elicitation grid lists must be nonempty");
  if (samples < 1) throw ConfigError("elicitation needs at least one synthetic sample");
  for (double h : h_values)
    if (!(h > 0)) throw ConfigError("elicitation grid: h values must be > 0");
  for (int n : n_omin_values)
    if (n < 1) throw ConfigError("elicitation grid: n_omin values must be >= 1");
  for (double a : alpha_values)
    if (!(a > 0 && a < 1)) throw ConfigError("elicitation grid: alpha values must lie in (0, 1)");
}

SamplerConfig elicitation_sampler_defaults() {
  SamplerConfig s;
  s.num_trees_mu = 6;
  s.num_trees_tau = 3;
  s.num_sweeps = 15;
  s.burn_in = 5;
  s.num_cutpoint_candidates = 16;
  return s;
}

ElicitationTable elicit(const ElicitationFeatures& f, const ElicitationGrid& grid,
                        const SamplerConfig& scfg, std::uint64_t seed, int workers) {
  grid.validate();
  scfg.validate();
  const std::size_t n = f.x.size();
  if (n < 2) throw DomainError("elicitation needs at least 2 observations");

  const std::size_t S = static_cast<std::size_t>(grid.samples);
  std::vector<Dataset> synthetic;
  synthetic.reserve(S);
  for (std::size_t s = 0; s < S; ++s) {
    Rng rng(derive_seed(seed, {s}));
    synthetic.emplace_back(generate_elicitation_outcome(f.x, f.w, f.cutoff, rng), f.x, f.w,
                           f.cutoff);
  }

  std::vector<ElicitationCell> cells;
  for (double h : grid.h_values)
    for (int nm : grid.n_omin_values)
      for (double a : grid.alpha_values) {
        ElicitationCell c;
        c.h = h;
        c.n_omin = nm;
        c.alpha = a;
        cells.push_back(c);
      }

  // Feasibility depends on (x, h, n_omin) only.
  for (auto& c : cells) {
    ConstraintConfig cc{c.h, c.n_omin, c.alpha};
    try {
      auto strip = build_strip_index(synthetic.front(), cc);
      check_root_condition(strip, cc);
      c.feasible = true;
    } catch (const ConfigError& e) {
      c.feasible = false;
      c.note = e.what();
      c.rmse = std::numeric_limits<double>::quiet_NaN();
    }
  }

  const std::size_t tasks = cells.size() * S;
  std::vector<double> sq_err(tasks, 0.0);
  std::vector<char> ok(tasks, 0);
  auto run_one = [&](std::size_t t) {
    const auto& c = cells[t / S];
    const std::size_t s = t % S;
    if (!c.feasible) return;
    SamplerConfig sc = scfg;
    sc.seed = derive_seed(seed, {s, 7});
    try {
      auto fit = fit_bart_rdd(synthetic[s], sc, {c.h, c.n_omin, c.alpha});
      double mean = 0.0;
      for (double v : fit.draws.ate) mean += v;
      mean /= static_cast<double>(fit.draws.ate.size());
      sq_err[t] = (mean - kElicitationAte) * (mean - kElicitationAte);
      ok[t] = 1;
    } catch (const std::exception&) {
      ok[t] = 0;
    }
  };
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(1, workers))
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(tasks); ++t)
    run_one(static_cast<std::size_t>(t));
#else
  (void)workers;
  for (std::size_t t = 0; t < tasks; ++t) run_one(t);
#endif

  for (std::size_t k = 0; k < cells.size(); ++k) {
    auto& c = cells[k];
    if (!c.feasible) continue;
    double acc = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      if (ok[k * S + s]) {
        acc += sq_err[k * S + s];
        ++c.fits;
      } else {
        ++c.failures;
      }
    }
    c.rmse = c.fits ? std::sqrt(acc / static_cast<double>(c.fits))
                    : std::numeric_limits<double>::quiet_NaN();
    if (!c.fits) {
      c.feasible = false;
      c.note = "every fit failed";
    }
  }

  if (std::none_of(cells.begin(), cells.end(), [](const auto& c) { return c.feasible; }))
    throw ConfigError("every elicitation cell is infeasible: the strip holds too few points on "
                      "one side of the cutoff; try larger h values");

  std::stable_sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) {
    if (a.feasible != b.feasible) return a.feasible;
    if (!a.feasible) return false;
    return a.rmse < b.rmse;
  });
  return {std::move(cells)};
}

Recommendation recommend(const ElicitationTable& table, double multiple) {
  Recommendation rec;
  rec.sensitivity_multiple = multiple;
  const ElicitationCell* best = nullptr;
  for (const auto& c : table.cells)
    if (c.feasible && (!best || c.rmse < best->rmse)) best = &c;
  if (!best) throw ConfigError("recommend: no feasible elicitation cell");
  rec.best = *best;

  for (const auto& c : table.cells) {
    if (!c.feasible) continue;
    auto it = std::find_if(rec.strata.begin(), rec.strata.end(),
                           [&](const StratumSpread& s) { return s.h == c.h; });
    if (it == rec.strata.end()) {
      rec.strata.push_back({c.h, 0.0, 0});
      it = rec.strata.end() - 1;
    }
    ++it->cells;
  }
  for (auto& s : rec.strata) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& c : table.cells)
      if (c.feasible && c.h == s.h) {
        lo = std::min(lo, c.rmse);
        hi = std::max(hi, c.rmse);
      }
    s.spread = hi - lo;
  }
  std::sort(rec.strata.begin(), rec.strata.end(),
            [](const auto& a, const auto& b) { return a.h < b.h; });
  double min_spread = std::numeric_limits<double>::infinity();
  for (const auto& s : rec.strata) min_spread = std::min(min_spread, s.spread);
  for (auto& s : rec.strata) s.high_sensitivity = s.spread > multiple * min_spread;

  auto flagged = [&](double h) {
    for (const auto& s : rec.strata)
      if (s.h == h) return s.high_sensitivity;
    return false;
  };
  rec.best.high_sensitivity = flagged(rec.best.h);
  const ElicitationCell* stable = nullptr;
  for (const auto& c : table.cells)
    if (c.feasible && !flagged(c.h) && (!stable || c.rmse < stable->rmse)) stable = &c;
  rec.best_stable = stable ? *stable : rec.best;
  return rec;
}

std::string elicitation_csv(const ElicitationTable& table) {
  std::ostringstream os;
  os << "rank,h,n_omin,alpha,feasible,rmse,fits,failures,note\n";
  std::size_t rank = 0;
  for (const auto& c : table.cells) {
    std::string note = c.note;
    std::replace(note.begin(), note.end(), ',', ';');
    os << ++rank << ',' << io::format_double(c.h) << ',' << c.n_omin << ','
       << io::format_double(c.alpha) << ',' << (c.feasible ? 1 : 0) << ','
       << (c.feasible ? io::format_double(c.rmse) : std::string("NA")) << ',' << c.fits << ','
       << c.failures << ',' << note << '\n';
  }
  return os.str();
}

std::string recommendation_json(const Recommendation& rec) {
  auto cell = [](const ElicitationCell& c) {
    return nlohmann::json{{"h", c.h},           {"n_omin", c.n_omin},
                          {"alpha", c.alpha},   {"rmse", c.rmse},
                          {"fits", c.fits},     {"high_sensitivity", c.high_sensitivity}};
  };
  nlohmann::json doc;
  doc["best"] = cell(rec.best);
  doc["best_stable"] = cell(rec.best_stable);
  doc["sensitivity_multiple"] = rec.sensitivity_multiple;
  doc["strata"] = nlohmann::json::array();
  for (const auto& s : rec.strata)
    doc["strata"].push_back({{"h", s.h},
                             {"spread", s.spread},
                             {"cells", s.cells},
                             {"high_sensitivity", s.high_sensitivity}});
  return doc.dump(2);
}

}  // namespace bartrdd
