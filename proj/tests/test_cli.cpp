#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bartrdd/io.hpp"
#include "cli.hpp"
#include "support.hpp"

using namespace bartrdd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string quick_config(const fs::path& dir) {
  auto p = dir / "quick.cfg";
  std::ofstream(p) << "num_trees_mu = 8\nnum_trees_tau = 4\nnum_sweeps = 14\nburn_in = 4\n"
                      "num_cutpoint_candidates = 20\n";
  return p.string();
}

std::string slurp(const fs::path& p) { return io::read_file(p); }

std::vector<double> numbers(const std::vector<std::string>& cells) {
  std::vector<double> v;
  for (const auto& c : cells) {
    double d = 0;
    REQUIRE(io::parse_double(c, d));
    v.push_back(d);
  }
  return v;
}

/// One quick fit on the demo data, shared by several cases.
fs::path demo_fit() {
  static fs::path dir;
  if (dir.empty()) {
    auto base = testing::scratch_dir("cli_fit");
    auto r = run_cli({"fit", "--data", BARTRDD_DEMO_CSV, "--config", quick_config(base),
                      "--out-dir", (base / "fit").string(), "--seed", "5"});
    REQUIRE(r.code == 0);
    dir = base / "fit";
  }
  return dir;
}

}  // namespace

TEST_CASE("fit on the demo data with defaults") {
  auto dir = testing::scratch_dir("cli_demo");
  auto r = run_cli({"fit", "--data", BARTRDD_DEMO_CSV, "--out-dir", (dir / "o").string(),
                    "--seed", "1"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("ATE bart-rdd") != std::string::npos);
  auto s = json::parse(slurp(dir / "o" / "summary.json"));
  REQUIRE(s.contains("ate"));
  for (const char* k : {"mean", "sd", "lower", "upper", "median"}) CHECK(s["ate"].contains(k));
  CHECK(s["ate"]["lower"].get<double>() <= s["ate"]["upper"].get<double>());
}

TEST_CASE("usage errors exit with 2") {
  CHECK(run_cli({"fit", "--data", BARTRDD_DEMO_CSV, "--estimator", "x-bart"}).code == 2);
  CHECK(run_cli({}).code == 2);
  CHECK(run_cli({"nonsense"}).code == 2);
  CHECK(run_cli({"fit"}).code == 2);
}

TEST_CASE("runtime errors exit with 1 and name the problem") {
  auto dir = testing::scratch_dir("cli_err");
  std::ofstream(dir / "bad.cfg") << "mystery_key = 3\n";
  auto r = run_cli({"fit", "--data", BARTRDD_DEMO_CSV, "--config", (dir / "bad.cfg").string(),
                    "--out-dir", (dir / "o").string(), "--seed", "1"});
  CHECK(r.code == 1);
  CHECK(r.err.find("mystery_key") != std::string::npos);
  std::ofstream(dir / "tight.cfg") << "n_omin = 5000\n";
  r = run_cli({"fit", "--data", BARTRDD_DEMO_CSV, "--config", (dir / "tight.cfg").string(),
               "--out-dir", (dir / "o2").string(), "--seed", "1"});
  CHECK(r.code == 1);
  CHECK(r.err.find("n_omin=5000") != std::string::npos);
}

TEST_CASE("manifest digests match the files and replay is byte-identical") {
  auto dir = demo_fit();
  auto m = json::parse(slurp(dir / "manifest.json"));
  CHECK(m["command"] == "fit");
  CHECK(m["seed"] == 5);
  bool saw_draws = false;
  for (const auto& o : m["outputs"]) {
    const fs::path p = dir / o["file"].get<std::string>();
    CHECK(o["sha256"] == io::sha256_file(p));
    CHECK(o["bytes"] == fs::file_size(p));
    saw_draws = saw_draws || o["file"] == "draws.csv";
  }
  CHECK(saw_draws);

  auto again = dir.parent_path() / "replay";
  auto r = run_cli({"replay", "--manifest", (dir / "manifest.json").string(), "--out-dir",
                    again.string()});
  REQUIRE(r.code == 0);
  CHECK(slurp(again / "draws.csv") == slurp(dir / "draws.csv"));
  CHECK(slurp(again / "units.csv") == slurp(dir / "units.csv"));
}

TEST_CASE("fit outputs parse strictly") {
  auto dir = demo_fit();
  auto draws = io::read_csv_table(dir / "draws.csv");
  auto ate = io::read_csv_table(dir / "ate_draws.csv");
  REQUIRE(draws.rows.size() == 10);
  REQUIRE(ate.rows.size() == 10);
  // The ATE column is the row mean of the CATE columns.
  for (std::size_t s = 0; s < draws.rows.size(); ++s) {
    auto v = numbers(draws.rows[s]);
    double m = 0;
    for (std::size_t j = 1; j < v.size(); ++j) m += v[j];
    m /= static_cast<double>(v.size() - 1);
    CHECK(numbers(ate.rows[s])[1] == doctest::Approx(m).epsilon(1e-12));
  }
  for (const char* f : {"summary.json", "manifest.json"}) CHECK_NOTHROW(json::parse(slurp(dir / f)));
}

TEST_CASE("summarize recomputes the contrast from the persisted draws") {
  auto fit = demo_fit();
  auto out = fit.parent_path() / "sum";
  auto r = run_cli({"summarize", "--fit-dir", fit.string(), "--out-dir", out.string(), "--group",
                    "w3>0.5"});
  REQUIRE(r.code == 0);
  auto c = json::parse(slurp(out / "contrast.json"));
  const double p = c["prob_positive"];
  CHECK(p >= 0.0);
  CHECK(p <= 1.0);

  auto draws = io::read_csv_table(fit / "draws.csv");
  auto units = io::read_csv_table(fit / "units.csv");
  std::size_t w3 = 0;
  while (units.header[w3] != "w3") ++w3;
  std::vector<bool> in_a;
  for (const auto& row : units.rows) in_a.push_back(numbers(row)[w3] > 0.5);
  std::size_t pos = 0;
  for (const auto& row : draws.rows) {
    auto v = numbers(row);
    double sa = 0, sb = 0, na = 0, nb = 0;
    for (std::size_t j = 0; j < in_a.size(); ++j) (in_a[j] ? (sa += v[j + 1], na += 1) : (sb += v[j + 1], nb += 1));
    pos += sa / na - sb / nb > 0;
  }
  CHECK(p == doctest::Approx(static_cast<double>(pos) / draws.rows.size()));
  CHECK(c["size_a"].get<double>() + c["size_b"].get<double>() == in_a.size());
}

TEST_CASE("depth-0 summary tree is a single root line") {
  auto fit = demo_fit();
  auto out = fit.parent_path() / "sum0";
  auto r = run_cli({"summarize", "--fit-dir", fit.string(), "--out-dir", out.string(),
                    "--tree-depth", "0"});
  REQUIRE(r.code == 0);
  auto text = slurp(out / "summary_tree.txt");
  CHECK(std::count(text.begin(), text.end(), '\n') == 1);
  auto j = json::parse(slurp(out / "summary_tree.json"));
  CHECK(j["nodes"].size() == 1);
}

TEST_CASE("summarize predicate errors") {
  auto fit = demo_fit();
  auto out = (fit.parent_path() / "sumerr").string();
  auto r = run_cli({"summarize", "--fit-dir", fit.string(), "--out-dir", out, "--group", "age>3"});
  CHECK(r.code == 1);
  CHECK(r.err.find("'age'") != std::string::npos);
  r = run_cli({"summarize", "--fit-dir", fit.string(), "--out-dir", out, "--group", "w1>100"});
  CHECK(r.code == 1);
  CHECK(r.err.find("selects no strip units") != std::string::npos);
}

TEST_CASE("simulate writes the documented schema and ignores the worker count") {
  auto dir = testing::scratch_dir("cli_sim");
  auto cfg = quick_config(dir);
  std::vector<std::string> base{"simulate", "--reps", "2", "--n", "200", "--tau-bar", "0.2",
                                "--delta-mu", "0.5", "--delta-tau", "0.1", "--estimators",
                                "bart-rdd,s-bart", "--config", cfg, "--seed", "9"};
  auto a = base, b = base;
  a.insert(a.end(), {"--workers", "1", "--out-dir", (dir / "a").string()});
  b.insert(b.end(), {"--workers", "3", "--out-dir", (dir / "b").string()});
  REQUIRE(run_cli(a).code == 0);
  REQUIRE(run_cli(b).code == 0);
  CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv"));
  CHECK(slurp(dir / "a" / "results.csv") == slurp(dir / "b" / "results.csv"));
  auto t = io::read_csv_table(dir / "a" / "metrics.csv");
  CHECK(t.header == std::vector<std::string>{"tau_bar", "delta_mu", "delta_tau", "estimator",
                                             "target", "rmse", "abs_bias", "variance", "coverage",
                                             "interval_size", "replications", "failures"});
  CHECK(t.rows.size() == 4);
  for (const auto& row : t.rows) CHECK(row.size() == t.header.size());
}

TEST_CASE("elicit ranks a small grid, replays exactly and rejects an infeasible grid") {
  auto dir = testing::scratch_dir("cli_elicit");
  auto r = run_cli({"elicit", "--data", BARTRDD_DEMO_CSV, "--h-grid", "0.1,0.2", "--n-omin-grid",
                    "1,5", "--alpha-grid", "0.6", "--samples", "2", "--seed", "3", "--out-dir",
                    (dir / "e").string()});
  REQUIRE(r.code == 0);
  auto table = io::read_csv_table(dir / "e" / "elicitation.csv");
  CHECK(table.rows.size() == 4);
  auto rec = json::parse(slurp(dir / "e" / "recommendation.json"));
  CHECK(rec.contains("best"));
  CHECK(rec["strata"].size() == 2);

  r = run_cli({"replay", "--manifest", (dir / "e" / "manifest.json").string(), "--out-dir",
               (dir / "e2").string()});
  REQUIRE(r.code == 0);
  CHECK(slurp(dir / "e" / "elicitation.csv") == slurp(dir / "e2" / "elicitation.csv"));

  r = run_cli({"elicit", "--data", BARTRDD_DEMO_CSV, "--h-grid", "0.000001", "--samples", "1",
               "--seed", "3", "--out-dir", (dir / "e3").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("infeasible") != std::string::npos);
}

TEST_CASE("generate writes a sample with truth") {
  auto dir = testing::scratch_dir("cli_gen");
  auto r = run_cli({"generate", "--n", "150", "--seed", "4", "--out-dir", (dir / "g").string()});
  REQUIRE(r.code == 0);
  auto d = io::read_csv_table(dir / "g" / "data.csv");
  CHECK(d.rows.size() == 150);
  CHECK(io::read_csv_table(dir / "g" / "truth.csv").rows.size() == 150);
}
