#include <doctest.h>
#include <unistd.h>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <random>

#include "cosbal/config.hpp"
#include "cosbal/csv.hpp"
#include "cosbal/errors.hpp"

using namespace cosbal;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
  const auto dir = fs::temp_directory_path() /
                   ("cosbal_cfg_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const auto p = dir / name;
  std::ofstream out(p);
  out << content;
  return p;
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("full config round trip") {
  const auto p = write_temp("full.yaml", R"(
schema:
  unit_file: units.csv
  cluster_file: clusters.csv
  unit_id: id
  cluster_id: school
  treatment: trt
  outcome: score
  unit_covariates: [read, math, "cat:race"]
  cluster_covariates: [enrollment]
  aggregate_unit_covariates:
    - {column: read, aggregator: mean}
features:
  include_unit: true
  standardize: true
  polynomial_degree: 2
  interactions: [[enrollment, read]]
hyperparams:
  mode: manual
  icc: 0.25
  noise_to_signal: 1.5
solver:
  max_iter: 500
  tol: 1e-6
  lower_bound: 0
  upper_bound: 20
balance:
  mode: subset
estimate:
  alpha: 0.1
  total_variance: true
simulate:
  overlap_c: [1, 10]
  reps: 7
  seed: 3
output:
  dir: out
  prefix: demo
)");
  const auto cfg = load_run_config(p);
  REQUIRE(cfg.schema.has_value());
  CHECK(cfg.schema->unit_file.filename() == "units.csv");
  CHECK(cfg.schema->unit_file.is_absolute());
  CHECK(cfg.schema->unit_covariates.size() == 3);
  CHECK(cfg.features.polynomial_degree == 2);
  CHECK(cfg.features.interactions.size() == 1);
  CHECK(cfg.hyperparams.mode == HyperMode::manual);
  CHECK(cfg.hyperparams.icc == 0.25);
  CHECK(cfg.solver.max_iter == 500);
  CHECK(cfg.bounds.upper == 20.0);
  CHECK(cfg.mode == BalanceMode::subset);
  CHECK(cfg.estimate.alpha == 0.1);
  CHECK(cfg.estimate.total_variance);
  CHECK(cfg.simulate.overlap_c == std::vector<double>{1.0, 10.0});
  CHECK(cfg.simulate.reps == 7);
  CHECK(cfg.output.prefix == "demo");
}

TEST_CASE("unknown keys are rejected") {
  const auto p = write_temp("typo.yaml", "solver:\n  maxiter: 10\n");
  CHECK_THROWS_AS(load_run_config(p), ConfigError);
}

TEST_CASE("bad values are rejected") {
  CHECK_THROWS_AS(load_run_config(write_temp("b1.yaml", "balance:\n  mode: x\n")),
                  ConfigError);
  CHECK_THROWS_AS(
      load_run_config(write_temp("b2.yaml", "estimate:\n  alpha: 2\n")),
      ConfigError);
  CHECK_THROWS_AS(
      load_run_config(write_temp("b3.yaml", "simulate:\n  overlap_c: [0]\n")),
      ConfigError);
  CHECK_THROWS_AS(
      load_run_config(write_temp("b4.yaml", "hyperparams:\n  signal: what\n")),
      ConfigError);
}

TEST_CASE("defaults survive an empty config") {
  const auto cfg = load_run_config(write_temp("empty.yaml", "# nothing\n"));
  CHECK(!cfg.schema.has_value());
  CHECK(cfg.solver.max_iter == 10000);
  CHECK(cfg.solver.tol == 1e-8);
  CHECK(cfg.bounds.lower == 0.0);
  CHECK(std::isinf(cfg.bounds.upper));
  CHECK(cfg.mode == BalanceMode::unit);
  CHECK(cfg.simulate.overlap_c.size() == 4);
}

TEST_CASE("describe_config covers every section") {
  const auto text = describe_config();
  for (const auto* section : {"schema:", "features:", "hyperparams:", "solver:",
                              "balance:", "estimate:", "simulate:", "output:"})
    CHECK(text.find(section) != std::string::npos);
}

TEST_CASE("config hash changes with content") {
  CHECK(fnv1a_hash("a") != fnv1a_hash("b"));
  CHECK(fnv1a_hash("same") == fnv1a_hash("same"));
}

}  // TEST_SUITE

TEST_SUITE("csv") {

TEST_CASE("parse handles quotes and reports bad shapes") {
  const auto t = csv::parse("a,b\n1,\"x,\"\"y\"\"\"\n", "test");
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0][1] == "x,\"y\"");
  CHECK_THROWS_AS(csv::parse("a,b\n1\n", "test"), IngestError);
  CHECK_THROWS_AS(csv::parse("", "test"), IngestError);
}

TEST_CASE("format_double round trips exactly") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = normal(rng);
    const auto s = csv::format_double(v);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    CHECK(back == v);
  }
  CHECK_THROWS_AS(csv::format_double(std::numeric_limits<double>::quiet_NaN()),
                  ValidationError);
}

TEST_CASE("writer output is stable") {
  csv::Writer w({"a", "b"});
  w.append_raw({"1", "x y"});
  w.append_raw({"2", "with,comma"});
  CHECK(w.to_string() == "a,b\n1,x y\n2,\"with,comma\"\n");
}

}  // TEST_SUITE
