#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cosbal/balancer.hpp"
#include "cosbal/dataset.hpp"
#include "cosbal/transform.hpp"

namespace cosbal {

enum class ModelSide { controls, treated };

// Affine outcome model over the feature columns, fitted by weighted ridge
// regression with an unpenalized intercept.
struct OutcomeModel {
  Eigen::VectorXd beta;
  double intercept = 0.0;
  double ridge_lambda = 0.0;
  ModelSide fitted_on = ModelSide::controls;
  std::vector<std::string> warnings;

  Eigen::VectorXd predict(const Eigen::MatrixXd& rows) const {
    return (rows * beta).array() + intercept;
  }
};

enum class Estimand { att_unit, att_cluster, ato_subset };

struct EffectEstimate {
  Estimand estimand = Estimand::att_unit;
  double point = 0.0;
  std::optional<double> point_bias_corrected;
  double var_plugin = 0.0;
  double var_sandwich = 0.0;
  std::pair<double, double> ci_plugin;
  std::pair<double, double> ci_sandwich;
  double alpha = 0.05;
  // Variance with the treated-arm residual cluster sums added; meaningful
  // for the ATT estimands when inference targets the unconditional effect.
  std::optional<double> var_plugin_total;
  std::optional<double> var_sandwich_total;
  std::optional<std::pair<double, double>> ci_plugin_total;
  std::optional<std::pair<double, double>> ci_sandwich_total;
  double imbalance_norm = 0.0;  // achieved balance, printed next to sqrt(var)
  double ess_control = 0.0;
  std::optional<double> ess_treated;
  std::vector<std::string> warnings;
};

struct EstimateOptions {
  double alpha = 0.05;
  double ridge_lambda = -1.0;  // < 0: 1e-3 * trace(psi^T psi) / d
  bool total_variance = false;
};

// Weighted control mean (1/n1) * sum over control units of gamma_i * y_i.
double weighted_mu0(const CosDataset& dataset, const WeightSolution& weights);

// Treated mean minus weighted_mu0.
double att_estimate(const CosDataset& dataset, const WeightSolution& weights);

// Weighted treated mean minus weighted control mean under subset weights.
double ato_estimate(const CosDataset& dataset, const WeightSolution& weights);

// Weighted ridge fit on one arm. Weights default to the balancing weights
// for that arm when provided; pass nullptr for unweighted. A ridge_lambda
// below zero selects 1e-3 * trace(psi^T psi)/d. If the normal equations come
// back singular the ridge is raised with a warning until they solve.
OutcomeModel fit_outcome_model(const CosDataset& dataset,
                               const DesignMatrices& features, ModelSide side,
                               const WeightSolution* weights,
                               double ridge_lambda = -1.0);

// Three-term bias correction: mu0_hat + treated-mean model prediction minus
// weighted control-mean model prediction.
double bias_corrected_mu0(const CosDataset& dataset,
                          const DesignMatrices& features,
                          const WeightSolution& weights,
                          const OutcomeModel& model);

// Plug-in variance: (1/n1^2) * sum over control clusters of
// (sum_i gamma_i eps_i)^2 with residuals from the outcome model. Equals the
// displayed double sum including the diagonal.
double var_plugin_unit(const CosDataset& dataset, const DesignMatrices& features,
                       const WeightSolution& weights, const OutcomeModel& model);

// Same construction with an intercept-only model (residuals around the
// weighted control mean): the cluster-robust sandwich variance of a
// weighted mean.
double var_sandwich(const CosDataset& dataset, const WeightSolution& weights);

// Cluster-only plug-in: (1/n1^2) * sum gammabar_l^2 (sum_i eps_i)^2.
double var_plugin_cluster(const CosDataset& dataset,
                          const DesignMatrices& features,
                          const WeightSolution& weights,
                          const OutcomeModel& model);

// Variance-inflation ratio of unit-varying weights over cluster-constant
// weights at intra-class correlation rho.
double design_effect(const CosDataset& dataset, const WeightSolution& unit_weights,
                     const WeightSolution& cluster_weights, double rho);

// point +/- z_{1-alpha/2} * sqrt(var).
std::pair<double, double> confidence_interval(double point, double var,
                                              double alpha);

// Full estimate for the weight solution's estimand: point, bias-corrected
// point (ATT modes), plug-in and sandwich variances and their intervals.
EffectEstimate estimate_effect(const CosDataset& dataset,
                               const DesignMatrices& features,
                               const WeightSolution& weights,
                               const EstimateOptions& opts = {});

}  // namespace cosbal
