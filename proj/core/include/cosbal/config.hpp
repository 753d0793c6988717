#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cosbal/balancer.hpp"
#include "cosbal/hyperparams.hpp"
#include "cosbal/ingest.hpp"
#include "cosbal/qp.hpp"
#include "cosbal/transform.hpp"

namespace cosbal {

enum class HyperMode { heuristic, manual };

struct HyperConfig {
  HyperMode mode = HyperMode::heuristic;
  double icc = 0.0;              // used when mode == manual
  double noise_to_signal = 1.0;  // used when mode == manual
  HyperParamOptions options;

  HyperParams resolve(const CosDataset& dataset,
                      const DesignMatrices& features) const;
};

struct EstimateConfig {
  double alpha = 0.05;
  double ridge_lambda = -1.0;  // < 0: automatic
  bool total_variance = false;
  bool design_effect = true;  // report the unit/cluster variance ratio
};

struct SimulateConfig {
  std::vector<double> overlap_c = {1.0, 2.5, 7.5, 10.0};
  std::vector<int> n_clusters = {44};
  int reps = 200;
  std::uint64_t seed = 94025;
  int mean_cluster_size = 78;
  double tau_sd_multiplier = 0.3;
  double noise_sd = 12.0;
  double icc_target = 0.29;  // cluster share of the outcome noise variance
  std::vector<std::string> estimators = {"naive", "balancing", "subset_weights"};
  bool resample = false;          // resample clusters from a base population
  int resample_base_clusters = 44;
  int threads = 0;  // 0: COSBAL_THREADS env var, then hardware concurrency
};

struct OutputConfig {
  std::filesystem::path dir = ".";
  std::string prefix = "run";
  double large_weight_threshold = 10.0;
};

struct RunConfig {
  std::optional<SchemaConfig> schema;
  FeatureSpec features;
  HyperConfig hyperparams;
  SolverOptions solver;
  Bounds bounds;
  BalanceMode mode = BalanceMode::unit;
  EstimateConfig estimate;
  SimulateConfig simulate;
  OutputConfig output;
  std::string raw_text;  // file contents, for the run manifest hash
};

RunConfig load_run_config(const std::filesystem::path& path);

// Reference page: every key with type, default, and allowed values.
std::string describe_config();

// FNV-1a 64-bit, used to fingerprint configs in run manifests.
std::uint64_t fnv1a_hash(const std::string& text);

BalanceMode parse_balance_mode(const std::string& text);
const char* balance_mode_name(BalanceMode mode);

}  // namespace cosbal
