#include <doctest.h>

#include "cosbal/errors.hpp"
#include "cosbal/rng.hpp"
#include "cosbal/simulator.hpp"
#include "cosbal/stats.hpp"
#include "helpers.hpp"

using namespace cosbal;

TEST_SUITE("simulator") {

TEST_CASE("same seed gives an identical population") {
  const auto a = generate_base_population(123, 10, 20);
  const auto b = generate_base_population(123, 10, 20);
  CHECK(a.cluster_sizes == b.cluster_sizes);
  CHECK(a.unit_x == b.unit_x);
  CHECK(a.cluster_w == b.cluster_w);
  CHECK(a.propensity == b.propensity);
}

TEST_CASE("reading and math scores are correlated around 0.6") {
  const auto pop = generate_base_population(7, 60, 60);
  REQUIRE(pop.n() >= 3000);
  const double corr = stats::correlation(pop.unit_x.col(0), pop.unit_x.col(1));
  CHECK(corr > 0.55);
  CHECK(corr < 0.65);
}

TEST_CASE("scores are roughly standard normal") {
  const auto pop = generate_base_population(8, 60, 60);
  for (int col = 0; col < 2; ++col) {
    CHECK(std::abs(pop.unit_x.col(col).mean()) < 0.05);
    CHECK(stats::sd(pop.unit_x.col(col)) == doctest::Approx(1.0).epsilon(0.05));
  }
}

TEST_CASE("cluster rates live in the unit interval") {
  const auto pop = generate_base_population(9, 30, 30);
  for (Eigen::Index c = 0; c < pop.cluster_w.rows(); ++c)
    for (Eigen::Index k = 2; k < pop.cluster_w.cols(); ++k) {
      CHECK(pop.cluster_w(c, k) >= 0.0);
      CHECK(pop.cluster_w(c, k) <= 1.0);
    }
}

TEST_CASE("huge c drives the treated share to one quarter") {
  const auto pop = generate_base_population(10, 800, 8);
  auto rng = substream(11, 0);
  const auto z = assign_treatment(pop, 1e9, rng);
  double share = 0.0;
  for (const bool zi : z) share += zi ? 1.0 : 0.0;
  share /= static_cast<double>(z.size());
  CHECK(share == doctest::Approx(0.25).epsilon(0.25));  // +- ~0.06 absolute
}

TEST_CASE("tiny c makes assignment deterministic in the propensity") {
  const auto pop = generate_base_population(12, 50, 10);
  auto rng = substream(13, 0);
  const auto z = assign_treatment(pop, 0.1, rng);
  for (std::size_t l = 0; l < pop.m(); ++l) {
    if (pop.propensity[static_cast<Eigen::Index>(l)] > 0.076) CHECK(z[l]);
  }
}

TEST_CASE("single-arm assignments are retried then rejected") {
  const auto pop = generate_base_population(14, 4, 8);
  auto rng = substream(15, 0);
  // c -> 0 pushes every cluster's Z* above the threshold
  CHECK_THROWS_AS(assign_treatment(pop, 1e-12, rng), Error);
}

TEST_CASE("tau multiplier zero removes the treatment effect") {
  const auto pop = generate_base_population(16, 12, 15);
  auto rng = substream(17, 0);
  const auto z = assign_treatment(pop, 10.0, rng);
  auto rng2 = substream(17, 1);
  const auto out = generate_outcomes(pop, z, rng2, 0.0, 12.0, 0.29);
  CHECK(out.tau == 0.0);
}

TEST_CASE("zero noise makes outcomes a deterministic covariate function") {
  const auto pop = generate_base_population(18, 10, 12);
  auto rng = substream(19, 0);
  const auto z = assign_treatment(pop, 10.0, rng);
  auto r1 = substream(20, 0);
  auto r2 = substream(21, 0);  // different noise stream, same outcome
  const auto o1 = generate_outcomes(pop, z, r1, 0.3, 0.0, 0.0);
  const auto o2 = generate_outcomes(pop, z, r2, 0.3, 0.0, 0.0);
  CHECK(o1.y == o2.y);
  CHECK(o1.tau == o2.tau);
}

TEST_CASE("run_study is deterministic for a fixed seed") {
  SimConfig cfg;
  cfg.overlap_c = 10.0;
  cfg.n_reps = 4;
  cfg.seed = 99;
  cfg.n_clusters = 12;
  cfg.mean_cluster_size = 12;
  cfg.run_subset = false;
  const auto a = run_study(cfg);
  const auto b = run_study(cfg);
  REQUIRE(a.estimators.size() == b.estimators.size());
  for (std::size_t e = 0; e < a.estimators.size(); ++e) {
    CHECK(a.estimators[e].bias_std == b.estimators[e].bias_std);
    CHECK(a.estimators[e].rmse_std == b.estimators[e].rmse_std);
    CHECK(a.estimators[e].coverage_plugin == b.estimators[e].coverage_plugin);
  }
  CHECK(a.icc_by_rep == b.icc_by_rep);
}

TEST_CASE("thread count does not change results") {
  SimConfig cfg;
  cfg.overlap_c = 7.5;
  cfg.n_reps = 6;
  cfg.seed = 42;
  cfg.n_clusters = 10;
  cfg.mean_cluster_size = 10;
  cfg.run_subset = false;
  cfg.threads = 1;
  const auto serial = run_study(cfg);
  cfg.threads = 3;
  const auto parallel = run_study(cfg);
  for (std::size_t e = 0; e < serial.estimators.size(); ++e) {
    CHECK(serial.estimators[e].bias_std == parallel.estimators[e].bias_std);
    CHECK(serial.estimators[e].mean_se_plugin ==
          parallel.estimators[e].mean_se_plugin);
  }
  CHECK(serial.icc_by_rep == parallel.icc_by_rep);
}

TEST_CASE("rmse dominates absolute bias and no replication fails") {
  SimConfig cfg;
  cfg.overlap_c = 2.5;
  cfg.n_reps = 8;
  cfg.seed = 5;
  cfg.n_clusters = 14;
  cfg.mean_cluster_size = 10;
  const auto res = run_study(cfg);
  CHECK(res.n_failed == 0);
  for (const auto& est : res.estimators) {
    CHECK(est.n_ok == cfg.n_reps);
    CHECK(est.rmse_std >= std::abs(est.bias_std) - 1e-12);
  }
}

TEST_CASE("residual icc estimates sit near the configured target") {
  SimConfig cfg;
  cfg.overlap_c = 10.0;
  cfg.n_reps = 12;
  cfg.seed = 31;
  cfg.n_clusters = 30;
  cfg.mean_cluster_size = 25;
  cfg.run_subset = false;
  cfg.run_balancing = false;  // hyperparameters are still estimated
  const auto res = run_study(cfg);
  REQUIRE(res.icc_by_rep.size() == static_cast<std::size_t>(cfg.n_reps));
  CHECK(res.icc_mean > 0.15);
  CHECK(res.icc_mean < 0.45);
}

TEST_CASE("resampled populations reuse base clusters") {
  SimConfig cfg;
  cfg.overlap_c = 10.0;
  cfg.n_reps = 2;
  cfg.seed = 77;
  cfg.n_clusters = 20;
  cfg.mean_cluster_size = 10;
  cfg.resample = true;
  cfg.resample_base_clusters = 8;
  cfg.run_subset = false;
  const auto res = run_study(cfg);
  CHECK(res.n_failed == 0);
}

}  // TEST_SUITE
