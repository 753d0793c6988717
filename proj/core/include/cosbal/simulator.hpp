#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cosbal/balancer.hpp"
#include "cosbal/dataset.hpp"
#include "cosbal/qp.hpp"

namespace cosbal {

// Covariates-only skeleton of a synthetic clustered population: school-like
// clusters with two correlated test scores and three indicators per unit,
// and nine cluster covariates (aggregates plus four school-level rates). A
// latent cluster quality factor ties the rates to the score distribution so
// that selection on the rates confounds the outcome.
struct Population {
  std::vector<std::size_t> cluster_sizes;
  std::vector<std::size_t> unit_cluster;  // cluster index per unit
  Eigen::MatrixXd unit_x;                 // [n x 5]
  Eigen::MatrixXd cluster_w;              // [m x 9]
  Eigen::VectorXd propensity;             // fitted treatment propensity per cluster
  std::vector<std::string> unit_cov_names;
  std::vector<std::string> cluster_cov_names;

  std::size_t n() const { return unit_cluster.size(); }
  std::size_t m() const { return cluster_sizes.size(); }
};

struct SimConfig {
  double overlap_c = 10.0;  // scales the propensity signal; small = poor overlap
  int n_reps = 200;
  std::uint64_t seed = 94025;
  int n_clusters = 44;
  int mean_cluster_size = 78;
  double tau_sd_multiplier = 0.3;
  double noise_sd = 12.0;
  double icc_target = 0.29;  // cluster share of the outcome noise variance
  bool run_naive = true;
  bool run_balancing = true;
  bool run_subset = true;
  bool resample = false;  // draw clusters with replacement from a base population
  int resample_base_clusters = 44;
  SolverOptions solver;
  Bounds bounds;
  int threads = 1;
};

struct EstimatorMetrics {
  std::string name;
  int n_ok = 0;
  double bias_std = 0.0;   // mean standardized error
  double rmse_std = 0.0;   // root mean squared standardized error
  double mean_se_plugin = 0.0;
  double mean_se_sandwich = 0.0;
  double mean_ci_len_plugin = 0.0;
  double mean_ci_len_sandwich = 0.0;
  double coverage_plugin = 0.0;
  double coverage_sandwich = 0.0;
};

struct SimResult {
  std::vector<EstimatorMetrics> estimators;
  std::vector<double> icc_by_rep;
  double icc_mean = 0.0;
  double icc_sd = 0.0;
  int n_failed = 0;
  std::vector<std::string> failures;
};

Population generate_base_population(std::uint64_t seed, int n_clusters,
                                    int mean_cluster_size);
Population generate_base_population(std::mt19937_64& rng, int n_clusters,
                                    int mean_cluster_size);

// Latent score Z* = e_hat/c + Unif(-.5,.5), treated when Z* > 0.25. Retries
// the uniform draws (up to 100 times) when one arm comes out empty.
std::vector<bool> assign_treatment(const Population& population, double c,
                                   std::mt19937_64& rng);

struct SimOutcomes {
  Eigen::VectorXd y;          // observed outcome per unit
  double tau = 0.0;           // true (constant) treatment effect
  double sd_pre_noise = 0.0;  // sd of the deterministic part, control units
};

SimOutcomes generate_outcomes(const Population& population,
                              const std::vector<bool>& treatment,
                              std::mt19937_64& rng, double tau_mult,
                              double noise_sd, double icc_target);

CosDataset to_dataset(const Population& population,
                      const std::vector<bool>& treatment,
                      const Eigen::VectorXd& y);

// Uniform n1/n0 weights on the controls: the naive difference in means
// expressed as a weight solution so it shares the inference code path.
WeightSolution uniform_weights(const CosDataset& dataset);

// Replications use counter-indexed RNG substreams, so results are identical
// for any thread count; failures are recorded per replication, not fatal.
SimResult run_study(const SimConfig& config);

}  // namespace cosbal
