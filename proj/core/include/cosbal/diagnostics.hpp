#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "cosbal/balancer.hpp"
#include "cosbal/dataset.hpp"

namespace cosbal {

struct BalanceRow {
  std::string covariate;
  double treated_mean = 0.0;
  double control_mean = 0.0;
  double std_diff = 0.0;
  bool zero_pooled_sd = false;
};

// Standardized differences over the raw covariates (cluster covariates
// evaluated per unit): (treated mean - weighted control mean) / pooled sd,
// with the pooled sd computed once from the unweighted data. Without
// weights the control mean is unadjusted. Subset weights also weight the
// treated mean, matching their both-arms estimand.
std::vector<BalanceRow> standardized_differences(
    const CosDataset& dataset, const WeightSolution* weights = nullptr);

struct WeightSummary {
  double min = 0.0;
  double max = 0.0;
  std::size_t count_above = 0;  // weights above `threshold`
  double threshold = 10.0;
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
  double p90 = 0.0;
  double p99 = 0.0;
  double ess = 0.0;  // Kish (sum w)^2 / sum w^2
  std::size_t count = 0;
};

WeightSummary weight_summary(const Eigen::VectorXd& weights,
                             double threshold = 10.0);

struct ProfileRow {
  std::string covariate;
  double treated_raw = 0.0;
  double treated_weighted = 0.0;
  double control_raw = 0.0;
  double control_weighted = 0.0;
};

// Covariate means per arm before and after subset weighting; describes the
// overlap population the subset estimand refers to.
std::vector<ProfileRow> estimand_profile(const CosDataset& dataset,
                                         const WeightSolution& subset_weights);

// Aligned plain-text renderings for terminal reports.
std::string format_balance_table(const std::vector<BalanceRow>& unadjusted,
                                 const std::vector<BalanceRow>* adjusted);
std::string format_weight_summary(const WeightSummary& summary,
                                  const std::string& label);
std::string format_profile_table(const std::vector<ProfileRow>& rows);

}  // namespace cosbal
