#pragma once

#include <Eigen/Dense>
#include <optional>

#include "cosbal/dataset.hpp"
#include "cosbal/hyperparams.hpp"
#include "cosbal/qp.hpp"
#include "cosbal/transform.hpp"

namespace cosbal {

enum class BalanceMode {
  unit,          // weight control units, balance psi(w, x) against treated
  cluster_only,  // weight control clusters, balance phi(w) against treated
  subset,        // weight both arms toward each other (overlap estimand)
};

struct Bounds {
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();
};

struct BalanceSpec {
  BalanceMode mode = BalanceMode::unit;
  HyperParams hyper;
  Bounds bounds;
};

// Fitted weights plus diagnostics. `gamma` covers control units for
// unit/cluster_only (in dataset control-unit order) and all units for
// subset (in dataset unit order). `cluster_weights` holds the per-cluster
// means: control clusters for unit/cluster_only, all clusters for subset.
struct WeightSolution {
  BalanceMode mode = BalanceMode::unit;
  Eigen::VectorXd gamma;
  Eigen::VectorXd cluster_weights;
  QpSolution solution_meta;
  double ess_control = 0.0;
  std::optional<double> ess_treated;

  // Weight attached to a dataset unit index: fitted weight for weighted
  // units, 1 for treated units under the ATT modes.
  double unit_weight(const CosDataset& dataset, std::size_t unit_idx) const;
};

// Variable order: control units as stored in the dataset. One penalty block
// per control cluster with the (1-rho, rho) mixture, one sum-to-n1
// constraint.
QpProblem build_unit_problem(const CosDataset& dataset,
                             const DesignMatrices& features,
                             const HyperParams& hyper, const Bounds& bounds);

// Variable order: control clusters. Diagonal penalty (1-r)*n_l + r*n_l^2
// per cluster, weighted sum constraint sum n_l*gamma_l = n1.
QpProblem build_cluster_problem(const CosDataset& dataset,
                                const DesignMatrices& features,
                                const HyperParams& hyper, const Bounds& bounds);

// Variable order: control units then treated units (each grouped by
// cluster). Balance target is zero; the two arms are scaled by 1/n0 and
// -1/n1. Two sum constraints: controls to n0, treated to n1.
QpProblem build_subset_problem(const CosDataset& dataset,
                               const DesignMatrices& features,
                               const HyperParams& hyper, const Bounds& bounds);

WeightSolution fit(const CosDataset& dataset, const DesignMatrices& features,
                   const BalanceSpec& spec, const SolverOptions& opts = {});

WeightSolution fit(const CosDataset& dataset, const FeatureSpec& featurespec,
                   const BalanceSpec& spec, const SolverOptions& opts = {});

}  // namespace cosbal
