#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "cosbal/dataset.hpp"

namespace cosbal {

// Which covariate transformation defines the balance objective.
struct FeatureSpec {
  bool include_unit = true;  // false: cluster-level covariates only
  bool standardize = true;   // center/scale features over the pooled sample
  // Explicit (cluster covariate, unit covariate) product terms. Only valid
  // when include_unit is true.
  std::vector<std::pair<std::string, std::string>> interactions;
  int polynomial_degree = 1;  // 1 or 2 (adds squares and cross products)
};

// Transformed covariates for both arms plus the treated-side target moments.
//
// Row order follows the dataset's unit order restricted to each arm, so
// per-cluster slices stay contiguous. No intercept column is ever included;
// the sum-to-n1 constraint plays that role.
struct DesignMatrices {
  Eigen::MatrixXd b0;      // control units  [n0 x d]
  Eigen::MatrixXd b1;      // treated units  [n1 x d]
  Eigen::VectorXd target;  // (1/n1) * sum of treated rows  [d]

  // Cluster-compressed form, populated when include_unit == false. One row
  // per cluster with row weight n_l; rows of b0/b1 are then cluster-constant.
  Eigen::MatrixXd phi0;                    // [m0 x d]
  Eigen::MatrixXd phi1;                    // [m1 x d]
  Eigen::VectorXd control_cluster_sizes;   // [m0]
  Eigen::VectorXd treated_cluster_sizes;   // [m1]

  std::vector<std::string> feature_names;
  Eigen::VectorXd center;  // applied center per retained feature
  Eigen::VectorXd scale;   // applied scale per retained feature
  std::vector<std::string> dropped_features;  // zero-variance, removed
  std::vector<std::string> warnings;
  bool include_unit = true;

  Eigen::Index d() const { return b0.cols(); }
};

// Builds the feature matrices for a dataset. Base covariate columns are
// standardized first (when requested), derived columns (squares, cross
// products, interactions) are computed from the standardized bases and then
// standardized themselves, so every retained column has pooled mean 0 and
// sd 1. Zero-variance columns are dropped with a warning rather than
// erroring; one-hot expansions routinely produce them in subsamples.
DesignMatrices build_features(const CosDataset& dataset, const FeatureSpec& spec);

// (1/n1) * b0^T gamma - target: the per-feature imbalance whose squared
// norm is the balance part of the objective.
Eigen::VectorXd imbalance_vector(const Eigen::MatrixXd& b0,
                                 const Eigen::VectorXd& target,
                                 const Eigen::VectorXd& gamma, double n1);

}  // namespace cosbal
