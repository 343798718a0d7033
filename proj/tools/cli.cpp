#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <random>
#include <sstream>

#include "bartrdd/data.hpp"
#include "bartrdd/elicitation.hpp"
#include "bartrdd/errors.hpp"
#include "bartrdd/inference.hpp"
#include "bartrdd/io.hpp"
#include "bartrdd/models.hpp"
#include "bartrdd/simulation.hpp"

#ifndef BARTRDD_VERSION
#define BARTRDD_VERSION "dev"
#endif

namespace bartrdd::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ','))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

/// Collects every file a command writes so the manifest can digest them.
class OutputDir {
 public:
  explicit OutputDir(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  void write(const std::string& name, std::string_view contents) {
    io::write_file(path(name), contents);
    note(name);
  }
  void note(const std::string& name) {
    if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
  }

  json inventory() const {
    json arr = json::array();
    for (const auto& f : files_)
      arr.push_back({{"file", f},
                     {"bytes", fs::file_size(path(f))},
                     {"sha256", io::sha256_file(path(f))}});
    return arr;
  }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

/// Flags shared by the model-running commands.
struct Common {
  std::string data;
  std::string config;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  int workers = 1;
  std::string estimator = "bart-rdd";
  std::string outcome = "y";
  std::string running = "x";
  std::string covariates;
  double cutoff = 0.0;
  double level = 0.95;
};

void add_common(CLI::App* app, Common& c, bool with_estimator, bool with_data) {
  if (with_data) {
    app->add_option("--data", c.data, "Input CSV")->required()->check(CLI::ExistingFile);
    app->add_option("--outcome", c.outcome, "Outcome column")->capture_default_str();
    app->add_option("--running", c.running, "Running-variable column")->capture_default_str();
    app->add_option("--covariates", c.covariates,
                    "Comma-separated covariate columns (default: every other column)");
    app->add_option("--cutoff", c.cutoff, "Treatment cutoff on the running variable")
        ->capture_default_str();
  }
  app->add_option("--config", c.config, "Key = value configuration file")
      ->check(CLI::ExistingFile);
  app->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
  app->add_option("--seed", c.seed, "Root seed (drawn and recorded when absent)");
  app->add_option("--workers", c.workers, "Worker threads for replications and grids")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  if (with_estimator)
    app->add_option("--estimator", c.estimator, "bart-rdd, s-bart or t-bart")
        ->check(CLI::IsMember({"bart-rdd", "s-bart", "t-bart"}))
        ->capture_default_str();
}

Dataset load_dataset(const Common& c, bool outcome_optional) {
  CsvSchema schema;
  schema.outcome = c.outcome;
  schema.running = c.running;
  schema.outcome_optional = outcome_optional;
  if (!c.covariates.empty()) {
    schema.covariates = split_list(c.covariates);
  } else {
    std::ifstream in(c.data);
    std::string line;
    std::getline(in, line);
    for (auto& name : io::split_csv_line(line))
      if (name != c.outcome && name != c.running) schema.covariates.push_back(name);
  }
  return load_csv(c.data, schema, c.cutoff);
}

void load_config(const Common& c, SamplerConfig& s, ConstraintConfig& cc) {
  if (c.config.empty()) return;
  auto unknown = apply_config(read_key_values(c.config), s, cc);
  if (!unknown.empty()) throw ConfigError("unknown config key '" + unknown.front() + "'");
}

json key_values_json(const std::string& kv_text) {
  json obj = json::object();
  for (const auto& [k, v] : parse_key_values(kv_text)) obj[k] = v;
  return obj;
}

json to_json(const IntervalSummary& s) {
  return {{"mean", s.mean},     {"sd", s.sd},         {"lower", s.lower}, {"upper", s.upper},
          {"median", s.median}, {"min", s.min},       {"max", s.max},     {"level", s.level}};
}

std::string fmt(double v) { return io::format_double(v); }

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  std::uint64_t seed = 0;
  json config = json::object();
  std::string started;

  void write(OutputDir& out) const {
    json doc;
    doc["command"] = command;
    doc["argv"] = argv;
    doc["seed"] = seed;
    doc["version"] = BARTRDD_VERSION;
    doc["config"] = config;
    doc["started_at"] = started;
    doc["finished_at"] = utc_now();
    doc["outputs"] = out.inventory();
    io::write_file(out.path("manifest.json"), doc.dump(2) + "\n");
  }
};

// ---------------------------------------------------------------------------
// Predicates over named columns, e.g. "w3>0.5" or "w1<=0&&w3==1".

struct Condition {
  std::size_t column = 0;
  std::string op;
  double value = 0.0;

  bool holds(double v) const {
    if (op == ">") return v > value;
    if (op == ">=") return v >= value;
    if (op == "<") return v < value;
    if (op == "<=") return v <= value;
    if (op == "==") return v == value;
    return v != value;
  }
};

std::string trim(std::string s) {
  auto ws = [](unsigned char ch) { return std::isspace(ch); };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

std::vector<Condition> parse_predicate(const std::string& text,
                                       const std::vector<std::string>& columns) {
  std::vector<Condition> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find("&&", start);
    if (end == std::string::npos) end = text.size();
    std::string term = trim(text.substr(start, end - start));
    std::size_t pos = term.find_first_of("<>=!");
    if (term.empty() || pos == std::string::npos || pos == 0)
      throw ConfigError("cannot parse predicate '" + text + "'");
    std::string name = trim(term.substr(0, pos));
    std::size_t op_len = (pos + 1 < term.size() && term[pos + 1] == '=') ? 2 : 1;
    Condition c;
    c.op = term.substr(pos, op_len);
    if (c.op == "=" || c.op == "!") throw ConfigError("bad operator in predicate '" + text + "'");
    if (!io::parse_double(trim(term.substr(pos + op_len)), c.value))
      throw ConfigError("predicate '" + text + "': value is not a number");
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw ConfigError("predicate refers to unknown column '" + name + "'");
    c.column = static_cast<std::size_t>(it - columns.begin());
    out.push_back(c);
    start = end + 2;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::uint64_t resolve_seed(CLI::App* app, Common& c, std::vector<std::string>& argv) {
  if (app->count("--seed") == 0) {
    std::random_device rd;
    c.seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    argv.push_back("--seed");
    argv.push_back(std::to_string(c.seed));
  }
  return c.seed;
}

void write_draws(OutputDir& out, const PosteriorDraws& d) {
  std::ostringstream os;
  std::vector<std::string> header{"draw"};
  for (auto u : d.units) header.push_back("row_" + std::to_string(u));
  io::write_csv_row(os, header);
  std::vector<double> row(d.num_units() + 1);
  for (std::size_t s = 0; s < d.num_draws(); ++s) {
    row[0] = static_cast<double>(s);
    for (std::size_t j = 0; j < d.num_units(); ++j) row[j + 1] = d.cate(s, j);
    io::write_csv_row(os, row);
  }
  out.write("draws.csv", os.str());

  std::ostringstream ate;
  io::write_csv_row(ate, std::vector<std::string>{"draw", "ate"});
  for (std::size_t s = 0; s < d.num_draws(); ++s)
    io::write_csv_row(ate, std::vector<double>{static_cast<double>(s), d.ate[s]});
  out.write("ate_draws.csv", ate.str());
}

void write_units(OutputDir& out, const Dataset& ds, const PosteriorDraws& d, const DrawsSummary& s,
                 const std::string& running) {
  std::ostringstream os;
  std::vector<std::string> header{"unit", "row", running};
  for (const auto& n : ds.covariate_names()) header.push_back(n);
  for (const char* f : {"cate_mean", "cate_sd", "cate_lower", "cate_upper", "cate_median"})
    header.push_back(f);
  io::write_csv_row(os, header);
  for (std::size_t j = 0; j < d.num_units(); ++j) {
    const auto r = d.units[j];
    std::vector<double> row{static_cast<double>(j), static_cast<double>(r), ds.x()[r]};
    for (std::size_t k = 0; k < ds.num_covariates(); ++k) row.push_back(ds.w()(r, k));
    const auto& c = s.cate[j];
    for (double v : {c.mean, c.sd, c.lower, c.upper, c.median}) row.push_back(v);
    io::write_csv_row(os, row);
  }
  out.write("units.csv", os.str());
}

int cmd_fit(CLI::App* app, Common& c, bool cate_at_x, bool pooled, bool unconstrained,
            std::vector<std::string> argv, std::ostream& log) {
  Manifest m;
  m.command = "fit";
  m.started = utc_now();
  m.seed = resolve_seed(app, c, argv);
  m.argv = argv;

  SamplerConfig sc;
  ConstraintConfig cc;
  load_config(c, sc, cc);
  sc.seed = c.seed;
  sc.validate();
  cc.validate();
  const Estimator est = parse_estimator(c.estimator);
  const Dataset ds = load_dataset(c, false);

  OutputDir out(c.out_dir);
  PosteriorDraws draws;
  json extra = json::object();
  if (est == Estimator::BartRdd) {
    RddFitOptions opts;
    opts.cate_at_cutoff = !cate_at_x;
    opts.pooled_variance = pooled;
    opts.constrained = !unconstrained;
    opts.keep_final_state = true;
    auto fit = fit_bart_rdd(ds, sc, cc, opts);
    draws = std::move(fit.draws);
    extra["forced_splits"] = fit.diagnostics.forced_splits;

    std::ostringstream chain;
    io::write_csv_row(chain, std::vector<std::string>{"sweep", "a", "b0", "b1", "sigma_0",
                                                      "sigma_1"});
    for (const auto& r : fit.chain)
      io::write_csv_row(chain, std::vector<double>{static_cast<double>(r.sweep), r.a, r.b0, r.b1,
                                                   r.sigma_0, r.sigma_1});
    out.write("chain.csv", chain.str());
    if (!fit.states.empty()) {
      const auto& st = fit.states.back();
      std::vector<Forest> forests{st.mu_forest, st.tau_forest};
      out.write("forests.json", serialize_forests(forests));
    }
  } else {
    draws = fit_estimator(est, ds, sc, cc);
  }

  const DrawsSummary summary = summarize(draws, c.level);
  write_draws(out, draws);
  write_units(out, ds, draws, summary, c.running);

  json sj;
  sj["estimator"] = to_string(est);
  sj["ate"] = to_json(summary.ate);
  sj["observations"] = ds.size();
  sj["strip_units"] = draws.num_units();
  sj["draws"] = draws.num_draws();
  sj["invalid_leaves"] = draws.invalid_leaves;
  for (auto& [k, v] : extra.items()) sj[k] = v;
  out.write("summary.json", sj.dump(2) + "\n");

  const std::string kv = to_key_values(sc, cc);
  out.write("config.txt", kv);
  m.config = key_values_json(kv);
  m.config["estimator"] = to_string(est);
  m.config["cutoff"] = c.cutoff;
  m.write(out);

  log << "ATE " << to_string(est) << ": mean " << fmt(summary.ate.mean) << ", sd "
      << fmt(summary.ate.sd) << ", " << summary.ate.level * 100 << "% interval ["
      << fmt(summary.ate.lower) << ", " << fmt(summary.ate.upper) << "] over "
      << draws.num_units() << " strip units\n";
  return kExitOk;
}

struct SimulateArgs {
  std::vector<double> tau_bar{0.2, 0.5};
  std::vector<double> delta_mu{0.5, 1.25};
  std::vector<double> delta_tau{0.1, 0.3};
  std::size_t reps = 50;
  std::size_t n = 1000;
  std::string estimators = "bart-rdd,s-bart,t-bart";
};

int cmd_simulate(CLI::App* app, Common& c, const SimulateArgs& a, std::vector<std::string> argv,
                 std::ostream& log) {
  Manifest m;
  m.command = "simulate";
  m.started = utc_now();
  m.seed = resolve_seed(app, c, argv);
  m.argv = argv;

  SamplerConfig sc;
  ConstraintConfig cc;
  load_config(c, sc, cc);
  sc.validate();
  cc.validate();
  std::vector<Estimator> ests;
  for (const auto& e : split_list(a.estimators)) ests.push_back(parse_estimator(e));
  if (ests.empty()) throw ConfigError("no estimators requested");
  if (a.reps < 1) throw ConfigError("reps must be >= 1");

  OutputDir out(c.out_dir);
  std::string metrics, results;
  std::uint64_t cell = 0;
  for (double tb : a.tau_bar)
    for (double dm : a.delta_mu)
      for (double dt : a.delta_tau) {
        ReplicationPlan plan;
        plan.dgp.n = a.n;
        plan.dgp.tau_bar = tb;
        plan.dgp.delta_mu = dm;
        plan.dgp.delta_tau = dt;
        plan.dgp.seed = derive_seed(c.seed, {cell});
        plan.estimators = ests;
        plan.reps = a.reps;
        plan.workers = c.workers;
        plan.sampler = sc;
        plan.constraint = cc;
        plan.level = c.level;
        auto rows = run_replications(plan);
        auto mrows = compute_metrics(rows);
        metrics += metrics_csv(mrows, plan.dgp, cell == 0);
        results += results_csv(rows, plan.dgp, cell == 0);
        for (const auto& r : mrows)
          if (r.target == Target::Ate)
            log << "tau_bar=" << tb << " delta_mu=" << dm << " delta_tau=" << dt << " "
                << r.estimator << ": ATE rmse " << fmt(r.rmse) << ", coverage "
                << fmt(r.coverage) << "\n";
        ++cell;
      }
  out.write("metrics.csv", metrics);
  out.write("results.csv", results);
  const std::string kv = to_key_values(sc, cc);
  out.write("config.txt", kv);
  m.config = key_values_json(kv);
  m.config["reps"] = a.reps;
  m.config["n"] = a.n;
  m.config["estimators"] = a.estimators;
  m.config["tau_bar"] = a.tau_bar;
  m.config["delta_mu"] = a.delta_mu;
  m.config["delta_tau"] = a.delta_tau;
  m.write(out);
  return kExitOk;
}

struct ElicitArgs {
  std::vector<double> h{0.05, 0.1, 0.15, 0.2};
  std::vector<int> n_omin{1, 5, 10};
  std::vector<double> alpha{0.6, 0.75, 0.9};
  int samples = 20;
  double multiple = 3.0;
};

int cmd_elicit(CLI::App* app, Common& c, const ElicitArgs& a, std::vector<std::string> argv,
               std::ostream& log) {
  Manifest m;
  m.command = "elicit";
  m.started = utc_now();
  m.seed = resolve_seed(app, c, argv);
  m.argv = argv;

  SamplerConfig sc = elicitation_sampler_defaults();
  ConstraintConfig unused;
  load_config(c, sc, unused);
  sc.validate();
  ElicitationGrid grid;
  grid.h_values = a.h;
  grid.n_omin_values = a.n_omin;
  grid.alpha_values = a.alpha;
  grid.samples = a.samples;
  const Dataset ds = load_dataset(c, true);

  auto table = elicit(ElicitationFeatures::of(ds), grid, sc, c.seed, c.workers);
  auto rec = recommend(table, a.multiple);

  OutputDir out(c.out_dir);
  out.write("elicitation.csv", elicitation_csv(table));
  out.write("recommendation.json", recommendation_json(rec));
  const std::string kv = to_key_values(sc, unused);
  out.write("config.txt", kv);
  m.config = key_values_json(kv);
  m.config.erase("h");
  m.config.erase("n_omin");
  m.config.erase("alpha");
  m.config["grid_h"] = a.h;
  m.config["grid_n_omin"] = a.n_omin;
  m.config["grid_alpha"] = a.alpha;
  m.config["samples"] = a.samples;
  m.config["sensitivity_multiple"] = a.multiple;
  m.write(out);

  log << "lowest RMSE: h=" << fmt(rec.best.h) << " n_omin=" << rec.best.n_omin
      << " alpha=" << fmt(rec.best.alpha) << " (rmse " << fmt(rec.best.rmse) << ")\n";
  if (rec.best_stable.h != rec.best.h || rec.best_stable.n_omin != rec.best.n_omin ||
      rec.best_stable.alpha != rec.best.alpha)
    log << "lowest RMSE outside high-sensitivity strata: h=" << fmt(rec.best_stable.h)
        << " n_omin=" << rec.best_stable.n_omin << " alpha=" << fmt(rec.best_stable.alpha)
        << " (rmse " << fmt(rec.best_stable.rmse) << ")\n";
  return kExitOk;
}

struct SummarizeArgs {
  std::string fit_dir;
  std::string group;
  std::string versus;
  int tree_depth = 3;
  int min_leaf = 0;
  bool include_x = false;
};

/// Reloads draws.csv and units.csv from a fit directory.
struct LoadedFit {
  PosteriorDraws draws;
  std::vector<std::string> unit_columns;  // unit, row, running, covariates...
  std::vector<std::vector<double>> unit_values;
  std::size_t first_covariate = 3;
  std::size_t end_covariate = 3;
};

LoadedFit load_fit(const fs::path& dir) {
  LoadedFit f;
  auto dt = io::read_csv_table(dir / "draws.csv");
  auto ut = io::read_csv_table(dir / "units.csv");
  if (dt.header.size() < 2 || dt.rows.size() < 2)
    throw Error("'" + (dir / "draws.csv").string() + "' needs at least two draws and one unit");
  const std::size_t units = dt.header.size() - 1;
  if (ut.rows.size() != units) throw Error("draws.csv and units.csv disagree on the unit count");
  auto num = [](const std::string& s, const std::string& where) {
    double v = 0.0;
    if (!io::parse_double(s, v)) throw Error(where + ": '" + s + "' is not a number");
    return v;
  };
  f.draws.cate = Matrix(dt.rows.size(), units);
  for (std::size_t s = 0; s < dt.rows.size(); ++s) {
    if (dt.rows[s].size() != units + 1) throw Error("draws.csv row " + std::to_string(s + 1) + " is ragged");
    for (std::size_t j = 0; j < units; ++j) f.draws.cate(s, j) = num(dt.rows[s][j + 1], "draws.csv");
  }
  f.unit_columns = ut.header;
  const int row_col = ut.column("row");
  const int mean_col = ut.column("cate_mean");
  if (row_col < 0 || mean_col < 3) throw Error("units.csv is missing its row or cate_mean column");
  f.end_covariate = static_cast<std::size_t>(mean_col);
  for (const auto& r : ut.rows) {
    std::vector<double> vals;
    for (const auto& cell : r) vals.push_back(num(cell, "units.csv"));
    f.draws.units.push_back(static_cast<std::size_t>(vals[static_cast<std::size_t>(row_col)]));
    f.unit_values.push_back(std::move(vals));
  }
  f.draws.refresh_ate();
  return f;
}

int cmd_summarize(Common& c, const SummarizeArgs& a, std::vector<std::string> argv,
                  std::ostream& log) {
  Manifest m;
  m.command = "summarize";
  m.started = utc_now();
  m.argv = argv;

  LoadedFit f = load_fit(a.fit_dir);
  const auto& d = f.draws;
  const std::size_t U = d.num_units();

  // Summary tree on posterior means over covariates (and optionally x).
  std::vector<double> means(U, 0.0);
  for (std::size_t j = 0; j < U; ++j) {
    double s = 0.0;
    for (std::size_t t = 0; t < d.num_draws(); ++t) s += d.cate(t, j);
    means[j] = s / static_cast<double>(d.num_draws());
  }
  std::vector<std::size_t> cols;
  if (a.include_x) cols.push_back(2);
  for (std::size_t k = f.first_covariate; k < f.end_covariate; ++k) cols.push_back(k);
  std::vector<std::string> names;
  Matrix cov(U, cols.size());
  for (std::size_t k = 0; k < cols.size(); ++k) {
    names.push_back(f.unit_columns[cols[k]]);
    for (std::size_t j = 0; j < U; ++j) cov(j, k) = f.unit_values[j][cols[k]];
  }
  if (a.tree_depth < 0) throw ConfigError("tree depth must be >= 0");
  SummaryTreeConfig tcfg{a.tree_depth, a.min_leaf};
  SummaryTree tree = fit_summary_tree(means, cov, tcfg, names);

  OutputDir out(c.out_dir);
  out.write("summary_tree.txt", tree.to_text());
  json nodes = json::array();
  for (const auto& nd : tree.nodes) {
    json jn{{"mean", nd.mean}, {"share", nd.share}, {"n", nd.n}, {"depth", nd.depth}};
    if (nd.feature >= 0) {
      jn["feature"] = names[static_cast<std::size_t>(nd.feature)];
      jn["threshold"] = nd.threshold;
      jn["left"] = nd.left;
      jn["right"] = nd.right;
    }
    nodes.push_back(jn);
  }
  out.write("summary_tree.json", json{{"features", names}, {"nodes", nodes}}.dump(2) + "\n");

  if (!a.group.empty()) {
    auto select = [&](const std::string& pred) {
      auto conds = parse_predicate(pred, f.unit_columns);
      std::vector<std::size_t> ids;
      for (std::size_t j = 0; j < U; ++j) {
        bool ok = true;
        for (const auto& cd : conds) ok = ok && cd.holds(f.unit_values[j][cd.column]);
        if (ok) ids.push_back(j);
      }
      if (ids.empty()) throw ConfigError("predicate '" + pred + "' selects no strip units");
      return ids;
    };
    const auto ga = select(a.group);
    std::vector<std::size_t> gb;
    if (a.versus.empty()) {
      for (std::size_t j = 0; j < U; ++j)
        if (!std::binary_search(ga.begin(), ga.end(), j)) gb.push_back(j);
      if (gb.empty()) throw ConfigError("the complement of '" + a.group + "' is empty");
    } else {
      gb = select(a.versus);
      for (auto j : gb)
        if (std::binary_search(ga.begin(), ga.end(), j))
          throw ConfigError("groups '" + a.group + "' and '" + a.versus + "' overlap");
    }
    auto con = subgroup_contrast(d, ga, gb);
    std::ostringstream os;
    io::write_csv_row(os, std::vector<std::string>{"draw", "difference"});
    for (std::size_t s = 0; s < con.differences.size(); ++s)
      io::write_csv_row(os, std::vector<double>{static_cast<double>(s), con.differences[s]});
    out.write("contrast_draws.csv", os.str());
    json cj;
    cj["group_a"] = a.group;
    cj["group_b"] = a.versus.empty() ? "complement" : a.versus;
    cj["size_a"] = ga.size();
    cj["size_b"] = gb.size();
    cj["prob_positive"] = con.prob_positive;
    cj["difference"] = to_json(summarize(con.differences, c.level));
    out.write("contrast.json", cj.dump(2) + "\n");
    log << "P(mean CATE[" << a.group << "] > mean CATE[" << cj["group_b"].get<std::string>()
        << "]) = " << fmt(con.prob_positive) << "\n";
  }
  m.config = {{"fit_dir", a.fit_dir},       {"tree_depth", a.tree_depth},
              {"min_leaf", a.min_leaf},     {"include_x", a.include_x},
              {"group", a.group},           {"versus", a.versus},
              {"level", c.level}};
  m.write(out);
  log << tree.to_text();
  return kExitOk;
}

struct GenerateArgs {
  std::size_t n = 1000;
  double tau_bar = 0.2, delta_mu = 0.5, delta_tau = 0.1;
};

int cmd_generate(CLI::App* app, Common& c, const GenerateArgs& a, std::vector<std::string> argv,
                 std::ostream& log) {
  Manifest m;
  m.command = "generate";
  m.started = utc_now();
  m.seed = resolve_seed(app, c, argv);
  m.argv = argv;
  DgpConfig d;
  d.n = a.n;
  d.tau_bar = a.tau_bar;
  d.delta_mu = a.delta_mu;
  d.delta_tau = a.delta_tau;
  d.seed = c.seed;
  Rng rng(c.seed);
  auto sim = generate_sim_dataset(d, rng);

  OutputDir out(c.out_dir);
  write_csv(out.path("data.csv"), sim.data);
  out.note("data.csv");
  std::ostringstream os;
  io::write_csv_row(os, std::vector<std::string>{"row", "mu", "tau", "tau_at_cutoff"});
  for (std::size_t i = 0; i < sim.data.size(); ++i)
    io::write_csv_row(os, std::vector<double>{static_cast<double>(i), sim.truth.mu[i],
                                              sim.truth.tau[i], sim.truth.tau_at_cutoff[i]});
  out.write("truth.csv", os.str());
  m.config = {{"n", a.n}, {"tau_bar", a.tau_bar}, {"delta_mu", a.delta_mu},
              {"delta_tau", a.delta_tau}};
  m.write(out);
  log << "wrote " << sim.data.size() << " rows to " << out.path("data.csv").string() << "\n";
  return kExitOk;
}

/// Re-runs the argv recorded in a manifest into a new output directory.
std::vector<std::string> replay_args(const fs::path& manifest, const std::string& out_dir) {
  json doc = json::parse(io::read_file(manifest));
  std::vector<std::string> args{doc.at("command").get<std::string>()};
  auto argv = doc.at("argv").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < argv.size(); ++i) {
    if (argv[i] == "--out-dir") {
      ++i;
      continue;
    }
    if (argv[i].rfind("--out-dir=", 0) == 0) continue;
    args.push_back(argv[i]);
  }
  args.push_back("--out-dir");
  args.push_back(out_dir);
  return args;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian regression trees for regression discontinuity designs", "bartrdd"};
  app.require_subcommand(1);
  app.set_version_flag("--version", BARTRDD_VERSION);

  Common c;
  bool cate_at_x = false, pooled = false, unconstrained = false;
  auto* fit = app.add_subcommand("fit", "Fit one estimator and write posterior draws");
  add_common(fit, c, true, true);
  fit->add_option("--level", c.level, "Credible level")->check(CLI::Range(0.0, 1.0));
  fit->add_flag("--cate-at-x", cate_at_x, "Evaluate CATEs at (x_i, w_i) instead of (c, w_i)");
  fit->add_flag("--pooled-variance", pooled, "One noise variance for both arms");
  fit->add_flag("--unconstrained", unconstrained, "Drop the identification-strip constraint");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Replicated estimator comparison on the simulation grid");
  add_common(sim, c, false, false);
  sim->add_option("--tau-bar", sa.tau_bar, "Comma-separated tau_bar values")->delimiter(',');
  sim->add_option("--delta-mu", sa.delta_mu, "Comma-separated delta_mu values")->delimiter(',');
  sim->add_option("--delta-tau", sa.delta_tau, "Comma-separated delta_tau values")->delimiter(',');
  sim->add_option("--reps", sa.reps, "Replications per cell")->capture_default_str();
  sim->add_option("--n", sa.n, "Sample size")->capture_default_str();
  sim->add_option("--estimators", sa.estimators, "Comma-separated estimators")
      ->capture_default_str();
  sim->add_option("--level", c.level, "Interval level")->check(CLI::Range(0.0, 1.0));

  ElicitArgs ea;
  auto* eli = app.add_subcommand("elicit", "Prior elicitation over (h, n_omin, alpha)");
  add_common(eli, c, false, true);
  eli->add_option("--h-grid", ea.h, "Comma-separated h values")->delimiter(',');
  eli->add_option("--n-omin-grid", ea.n_omin, "Comma-separated n_omin values")->delimiter(',');
  eli->add_option("--alpha-grid", ea.alpha, "Comma-separated alpha values")->delimiter(',');
  eli->add_option("--samples", ea.samples, "Synthetic samples per cell")->capture_default_str();
  eli->add_option("--multiple", ea.multiple, "Spread multiple that flags an h stratum")
      ->capture_default_str();

  SummarizeArgs ua;
  auto* sum = app.add_subcommand("summarize", "Summary tree and subgroup contrasts from a fit");
  sum->add_option("--fit-dir", ua.fit_dir, "Directory written by fit")
      ->required()
      ->check(CLI::ExistingDirectory);
  sum->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
  sum->add_option("--group", ua.group, "Predicate such as 'w3>0.5' or 'w1<=0&&w3==1'");
  sum->add_option("--versus", ua.versus, "Second predicate (default: complement of --group)");
  sum->add_option("--tree-depth", ua.tree_depth, "Summary tree depth")->capture_default_str();
  sum->add_option("--min-leaf", ua.min_leaf, "Minimum units per leaf (0: 5% of units)");
  sum->add_flag("--include-x", ua.include_x, "Let the summary tree split on the running variable");
  sum->add_option("--level", c.level, "Interval level")->check(CLI::Range(0.0, 1.0));

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Write one sample from the simulation design");
  gen->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
  gen->add_option("--seed", c.seed, "Seed (drawn and recorded when absent)");
  gen->add_option("--n", ga.n, "Sample size")->capture_default_str();
  gen->add_option("--tau-bar", ga.tau_bar)->capture_default_str();
  gen->add_option("--delta-mu", ga.delta_mu)->capture_default_str();
  gen->add_option("--delta-tau", ga.delta_tau)->capture_default_str();

  std::string manifest_path, replay_out = "replay";
  auto* rep = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  rep->add_option("--manifest", manifest_path, "manifest.json")
      ->required()
      ->check(CLI::ExistingFile);
  rep->add_option("--out-dir", replay_out, "Output directory")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  std::vector<std::string> argv;
  if (!args.empty()) argv.assign(args.begin() + 1, args.end());
  try {
    if (*fit) return cmd_fit(fit, c, cate_at_x, pooled, unconstrained, argv, out);
    if (*sim) return cmd_simulate(sim, c, sa, argv, out);
    if (*eli) return cmd_elicit(eli, c, ea, argv, out);
    if (*sum) return cmd_summarize(c, ua, argv, out);
    if (*gen) return cmd_generate(gen, c, ga, argv, out);
    if (*rep) return run(replay_args(manifest_path, replay_out), out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace bartrdd::cli
