#include <doctest.h>

#include <cmath>
#include <fstream>

#include "bartrdd/data.hpp"
#include "bartrdd/errors.hpp"
#include "bartrdd/io.hpp"
#include "bartrdd/simulation.hpp"
#include "support.hpp"

using namespace bartrdd;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p) << s;
}

}  // namespace

TEST_CASE("dataset derives the sharp assignment from x") {
  Dataset ds({1, 2, 3}, {-0.1, 0.0, 0.2}, Matrix(3, 0), 0.0);
  CHECK(ds.z()[0] == 0);
  CHECK(ds.z()[1] == 1);
  CHECK(ds.z()[2] == 1);
}

TEST_CASE("dataset rejects inconsistent or non-finite input") {
  CHECK_THROWS_AS(Dataset({1, 2}, {0.0}, Matrix(1, 0), 0.0), Error);
  CHECK_THROWS_AS(Dataset({}, {}, Matrix(), 0.0), EmptyDataError);
  CHECK_THROWS_AS(Dataset({NAN}, {0.0}, Matrix(1, 0), 0.0), DomainError);
  Matrix w(2, 1);
  w(1, 0) = INFINITY;
  CHECK_THROWS_AS(Dataset({1, 2}, {0.0, 1.0}, w, 0.0), DomainError);
}

TEST_CASE("property: z is 1 exactly when x >= c") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = testing::uniform_int(rng, 1, 200);
    const double c = rng.normal(0.0, 0.5);
    auto ds = testing::random_dataset(rng, n, 2, c);
    for (std::size_t i = 0; i < n; ++i) REQUIRE((ds.z()[i] == 1) == (ds.x()[i] >= c));
  }
}

TEST_CASE("load_csv maps named columns and derives z") {
  auto dir = testing::scratch_dir("load_csv");
  write_text(dir / "a.csv", "w1,y,x\n5,1.5,-0.1\n6,2.5,0.0\n7,3.5,0.2\n");
  CsvSchema schema;
  schema.covariates = {"w1"};
  auto ds = load_csv(dir / "a.csv", schema, 0.0);
  REQUIRE(ds.size() == 3);
  CHECK(ds.y()[1] == 2.5);
  CHECK(ds.w()(2, 0) == 7.0);
  CHECK(ds.z()[0] == 0);
  CHECK(ds.z()[1] == 1);
  CHECK(ds.z()[2] == 1);
  CHECK(ds.covariate_names() == std::vector<std::string>{"w1"});
}

TEST_CASE("load_csv error paths") {
  auto dir = testing::scratch_dir("load_csv_errors");
  CsvSchema schema;

  SUBCASE("blank outcome cell names its row") {
    write_text(dir / "b.csv", "y,x\n1,0.1\n,0.2\n");
    try {
      load_csv(dir / "b.csv", schema, 0.0);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.row() == 2);
      CHECK(e.column() == "y");
      CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    }
  }
  SUBCASE("missing column") {
    write_text(dir / "c.csv", "y,z\n1,0.1\n");
    CHECK_THROWS_AS(load_csv(dir / "c.csv", schema, 0.0), SchemaError);
  }
  SUBCASE("header only") {
    write_text(dir / "d.csv", "y,x\n");
    CHECK_THROWS_AS(load_csv(dir / "d.csv", schema, 0.0), EmptyDataError);
  }
  SUBCASE("optional outcome") {
    write_text(dir / "e.csv", "x,w1\n0.1,1\n-0.2,0\n");
    schema.outcome_optional = true;
    schema.covariates = {"w1"};
    auto ds = load_csv(dir / "e.csv", schema, 0.0);
    CHECK(ds.y()[0] == 0.0);
  }
}

TEST_CASE("simulation sample survives a CSV round trip bit for bit") {
  DgpConfig cfg;
  cfg.n = 300;
  Rng rng(5);
  auto sim = generate_sim_dataset(cfg, rng);
  auto dir = testing::scratch_dir("roundtrip");
  write_csv(dir / "s.csv", sim.data);
  CsvSchema schema;
  schema.covariates = sim.data.covariate_names();
  auto back = load_csv(dir / "s.csv", schema, sim.data.cutoff());
  REQUIRE(back.size() == sim.data.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    REQUIRE(back.y()[i] == sim.data.y()[i]);
    REQUIRE(back.x()[i] == sim.data.x()[i]);
  }
  CHECK(back.w() == sim.data.w());
}

TEST_CASE("standardize uses the sample sd") {
  Dataset ds({2, 4}, {0.0, 1.0}, Matrix(2, 0), 0.5);
  auto [s, rec] = standardize(ds);
  CHECK(rec.mean == doctest::Approx(3.0));
  CHECK(rec.sd == doctest::Approx(std::sqrt(2.0)));
  CHECK(s.y()[0] == doctest::Approx(-1.0 / std::sqrt(2.0)));
  CHECK(s.y()[1] == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(s.x()[1] == 1.0);
}

TEST_CASE("standardize leaves a constant outcome alone") {
  Dataset ds({5, 5, 5}, {0.0, 1.0, 2.0}, Matrix(3, 0), 0.5);
  auto [s, rec] = standardize(ds);
  CHECK(rec.mean == 5.0);
  CHECK(rec.sd == 1.0);
  CHECK(s.y()[2] == 5.0);
}

TEST_CASE("property: scaling round trip is the identity") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = testing::uniform_int(rng, 2, 300);
    auto y = testing::normal_vector(rng, n, 1.0 + 50.0 * rng.uniform());
    for (auto& v : y) v += 100.0 * rng.normal();
    auto rec = fit_scaling(y);
    auto back = invert_scaling(apply_scaling(y, rec), rec);
    for (std::size_t i = 0; i < n; ++i) REQUIRE(std::abs(back[i] - y[i]) <= 1e-12 * (1 + std::abs(y[i])));
    auto z = apply_scaling(y, rec);
    double m = 0, ss = 0;
    for (double v : z) m += v;
    m /= n;
    for (double v : z) ss += (v - m) * (v - m);
    CHECK(std::abs(m) < 1e-10);
    CHECK(std::sqrt(ss / (n - 1)) == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("strip membership follows [c-h, c) and [c, c+h]") {
  Dataset ds({0, 0, 0}, {-0.05, 0.0, 0.2}, Matrix(3, 0), 0.0);
  auto idx = build_strip_index(ds, {0.1, 1, 0.6});
  CHECK(idx.left_ids == std::vector<std::size_t>{0});
  CHECK(idx.right_ids == std::vector<std::size_t>{1});

  Dataset edges({0, 0, 0, 0}, {-0.5, -0.25, 0.25, 0.3}, Matrix(4, 0), 0.0);
  auto e = build_strip_index(edges, {0.25, 1, 0.6});
  CHECK(e.left_ids == std::vector<std::size_t>{1});   // c - h included
  CHECK(e.right_ids == std::vector<std::size_t>{2});  // c + h included
}

TEST_CASE("empty strip is an error") {
  Dataset ds({0, 0}, {0.5, 0.9}, Matrix(2, 0), 0.0);
  CHECK_THROWS_AS(build_strip_index(ds, {0.1, 1, 0.6}), StripEmptyError);
}

TEST_CASE("property: strip index matches a linear scan") {
  Rng rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    DgpConfig cfg;
    cfg.n = 400;
    auto sim = generate_sim_dataset(cfg, rng);
    const double h = 0.02 + 0.3 * rng.uniform();
    auto idx = build_strip_index(sim.data, {h, 1, 0.6});
    std::size_t left = 0, right = 0;
    for (double x : sim.data.x()) {
      if (-h <= x && x < 0) ++left;
      if (0 <= x && x <= h) ++right;
    }
    CHECK(idx.left_ids.size() == left);
    CHECK(idx.right_ids.size() == right);
    for (auto i : idx.left_ids) CHECK(sim.data.x()[i] < 0);
  }
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS((ConstraintConfig{0.0, 1, 0.5}.validate()), ConfigError);
  CHECK_THROWS_AS((ConstraintConfig{0.1, 0, 0.5}.validate()), ConfigError);
  CHECK_THROWS_AS((ConstraintConfig{0.1, 1, 1.0}.validate()), ConfigError);
  SamplerConfig s;
  s.burn_in = s.num_sweeps;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = SamplerConfig{};
  s.tree_prior_alpha = 1.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK_NOTHROW(SamplerConfig{}.validate());
}

TEST_CASE("key-value configuration round trip") {
  SamplerConfig s;
  s.num_trees_mu = 17;
  s.tree_prior_beta = 2.5;
  s.seed = 99;
  s.update_scale_params = true;
  ConstraintConfig c{0.15, 5, 0.75};
  auto text = to_key_values(s, c);
  SamplerConfig s2;
  ConstraintConfig c2;
  auto unknown = apply_config(parse_key_values("# comment\n" + text + "mystery = 1\n"), s2, c2);
  CHECK(unknown == std::vector<std::string>{"mystery"});
  CHECK(s2.num_trees_mu == 17);
  CHECK(s2.tree_prior_beta == 2.5);
  CHECK(s2.seed == 99);
  CHECK(s2.update_scale_params);
  CHECK(c2.h == 0.15);
  CHECK(c2.n_omin == 5);
  CHECK(c2.alpha == 0.75);
  CHECK(to_key_values(s2, c2) == text);
  CHECK_THROWS_AS(apply_config({{"num_trees_mu", "2.5"}}, s2, c2), ConfigError);
}

TEST_CASE("number formatting round-trips exactly") {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.normal() * 5);
    double back = 0;
    REQUIRE(io::parse_double(io::format_double(v), back));
    REQUIRE(back == v);
  }
  double out;
  CHECK_FALSE(io::parse_double("nan", out));
  CHECK_FALSE(io::parse_double("1.5x", out));
  CHECK_FALSE(io::parse_double("", out));
}

TEST_CASE("csv line splitting honours quotes") {
  auto cells = io::split_csv_line("a,\"b,c\",\"d\"\"e\"");
  REQUIRE(cells.size() == 3);
  CHECK(cells[1] == "b,c");
  CHECK(cells[2] == "d\"e");
}
