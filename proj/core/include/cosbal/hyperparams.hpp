#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "cosbal/dataset.hpp"
#include "cosbal/transform.hpp"

namespace cosbal {

enum class FitSide { control_only, pooled };

enum class HyperSource { estimated, user_supplied };

// The two knobs of the variance penalty: the intra-class correlation and
// the noise-to-signal ratio multiplying the whole penalty.
struct HyperParams {
  double icc = 0.0;              // in [0, 1]
  double noise_to_signal = 0.0;  // >= 0
  HyperSource source = HyperSource::user_supplied;
  std::vector<std::string> warnings;
};

struct RandomInterceptFit {
  Eigen::VectorXd beta;   // slope coefficients on the feature columns
  double intercept = 0.0;
  double var_cluster = 0.0;  // between-cluster variance component
  double var_unit = 0.0;     // within-cluster variance component
  std::size_t clusters_used = 0;
  std::size_t units_used = 0;
  bool degenerate = false;  // residuals (numerically) identical
  std::vector<std::string> warnings;
};

// How the heuristic turns variance components into penalty hyperparameters.
struct HyperParamOptions {
  FitSide side = FitSide::control_only;
  double holdout_fraction = 0.0;   // fit on a random cluster subset if > 0
  std::uint64_t holdout_seed = 1;  // substream seed for the holdout split
  double ratio_cap = 1e6;          // noise_to_signal when the signal is ~0
  bool signal_sum_sq = false;      // (sum beta)^2 instead of ||beta||^2
  double ridge = 1e-8;
};

// Ridge-stabilized least squares of outcomes on the feature columns for the
// chosen side, followed by one-way ANOVA method-of-moments variance
// components on the residuals. Between/within mean squares use the standard
// unbalanced-design average cluster size; negative component estimates are
// truncated at zero. A perfect fit is reported via `degenerate` rather than
// thrown so the heuristic can fall back gracefully.
RandomInterceptFit fit_random_intercept(const CosDataset& dataset,
                                        const DesignMatrices& features,
                                        FitSide side, double ridge = 1e-8);

// The data-driven hyperparameter heuristic: icc from the variance-component
// split, noise-to-signal from total residual variance over the squared
// coefficient norm.
HyperParams heuristic_hyperparams(const CosDataset& dataset,
                                  const DesignMatrices& features,
                                  const HyperParamOptions& opts = {});

}  // namespace cosbal
