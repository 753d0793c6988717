#include "cosbal/estimator.hpp"

#include <cmath>

#include "cosbal/errors.hpp"
#include "cosbal/stats.hpp"

namespace cosbal {

namespace {

Eigen::VectorXd control_outcomes(const CosDataset& dataset) {
  const auto& ctrl = dataset.control_units();
  Eigen::VectorXd y(static_cast<Eigen::Index>(ctrl.size()));
  for (std::size_t r = 0; r < ctrl.size(); ++r)
    y[static_cast<Eigen::Index>(r)] = dataset.outcomes()[static_cast<Eigen::Index>(ctrl[r])];
  return y;
}

Eigen::VectorXd treated_outcomes(const CosDataset& dataset) {
  const auto& trt = dataset.treated_units();
  Eigen::VectorXd y(static_cast<Eigen::Index>(trt.size()));
  for (std::size_t r = 0; r < trt.size(); ++r)
    y[static_cast<Eigen::Index>(r)] = dataset.outcomes()[static_cast<Eigen::Index>(trt[r])];
  return y;
}

// Weights over control units in control-row order, whatever the mode.
Eigen::VectorXd control_gamma(const CosDataset& dataset,
                              const WeightSolution& ws) {
  if (ws.mode != BalanceMode::subset) return ws.gamma;
  const auto& ctrl = dataset.control_units();
  Eigen::VectorXd g(static_cast<Eigen::Index>(ctrl.size()));
  for (std::size_t r = 0; r < ctrl.size(); ++r)
    g[static_cast<Eigen::Index>(r)] = ws.gamma[static_cast<Eigen::Index>(ctrl[r])];
  return g;
}

// Weights over treated units in treated-row order (1 for the ATT modes).
Eigen::VectorXd treated_gamma(const CosDataset& dataset,
                              const WeightSolution& ws) {
  const auto n1 = static_cast<Eigen::Index>(dataset.n1());
  if (ws.mode != BalanceMode::subset) return Eigen::VectorXd::Ones(n1);
  const auto& trt = dataset.treated_units();
  Eigen::VectorXd g(n1);
  for (std::size_t r = 0; r < trt.size(); ++r)
    g[static_cast<Eigen::Index>(r)] = ws.gamma[static_cast<Eigen::Index>(trt[r])];
  return g;
}

// Sum of (per-cluster weighted residual sum)^2 over one arm. Rows must be
// grouped by cluster, matching the dataset layout.
double cluster_sum_sq(const CosDataset& dataset,
                      const std::vector<std::size_t>& clusters,
                      const Eigen::VectorXd& gamma, const Eigen::VectorXd& resid) {
  double total = 0.0;
  Eigen::Index pos = 0;
  for (const auto c : clusters) {
    const auto len = static_cast<Eigen::Index>(dataset.clusters()[c].size);
    const double s = gamma.segment(pos, len).dot(resid.segment(pos, len));
    total += s * s;
    pos += len;
  }
  return total;
}

OutcomeModel fit_ridge(const Eigen::MatrixXd& psi, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, double ridge_lambda,
                       ModelSide side) {
  const auto n = psi.rows();
  const auto d = psi.cols();
  if (n < 2) throw ValidationError("outcome model needs at least 2 units");

  OutcomeModel model;
  model.fitted_on = side;
  const double wsum = w.sum();
  if (wsum <= 0.0)
    throw ValidationError("outcome model weights sum to zero");

  double lambda = ridge_lambda;
  if (lambda < 0.0)
    lambda = d > 0 ? 1e-3 * (psi.array().square().sum()) / static_cast<double>(d)
                   : 0.0;
  model.ridge_lambda = lambda;

  if (d == 0) {
    model.beta.resize(0);
    model.intercept = y.dot(w) / wsum;
    return model;
  }

  Eigen::RowVectorXd mean =
      (w.transpose() * psi) / wsum;
  const double ymean = y.dot(w) / wsum;
  Eigen::MatrixXd xc = psi.rowwise() - mean;
  Eigen::VectorXd yc = y.array() - ymean;

  Eigen::MatrixXd gram = xc.transpose() * w.asDiagonal() * xc;
  Eigen::VectorXd rhs = xc.transpose() * (w.asDiagonal() * yc);

  for (int attempt = 0;; ++attempt) {
    Eigen::MatrixXd reg = gram;
    reg.diagonal().array() += lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(reg);
    Eigen::VectorXd beta = ldlt.solve(rhs);
    if (ldlt.info() == Eigen::Success && beta.allFinite()) {
      model.beta = beta;
      break;
    }
    if (attempt >= 8)
      throw SingularSystemError("outcome model normal equations are singular");
    lambda = lambda > 0.0 ? lambda * 10.0 : 1e-8;
    model.warnings.push_back("singular system; ridge raised to " +
                             std::to_string(lambda));
  }
  model.ridge_lambda = lambda;
  model.intercept = ymean - (mean * model.beta).value();
  return model;
}

}  // namespace

double weighted_mu0(const CosDataset& dataset, const WeightSolution& weights) {
  const Eigen::VectorXd g = control_gamma(dataset, weights);
  const Eigen::VectorXd y = control_outcomes(dataset);
  return g.dot(y) / static_cast<double>(dataset.n1());
}

double att_estimate(const CosDataset& dataset, const WeightSolution& weights) {
  if (weights.mode == BalanceMode::subset)
    throw ValidationError("att_estimate requires unit or cluster_only weights");
  const double mu1 = treated_outcomes(dataset).mean();
  return mu1 - weighted_mu0(dataset, weights);
}

double ato_estimate(const CosDataset& dataset, const WeightSolution& weights) {
  if (weights.mode != BalanceMode::subset)
    throw ValidationError("ato_estimate requires subset weights");
  const Eigen::VectorXd gt = treated_gamma(dataset, weights);
  const Eigen::VectorXd gc = control_gamma(dataset, weights);
  const double trt = gt.dot(treated_outcomes(dataset)) /
                     static_cast<double>(dataset.n1());
  const double ctrl = gc.dot(control_outcomes(dataset)) /
                      static_cast<double>(dataset.n0());
  return trt - ctrl;
}

OutcomeModel fit_outcome_model(const CosDataset& dataset,
                               const DesignMatrices& features, ModelSide side,
                               const WeightSolution* weights,
                               double ridge_lambda) {
  const bool treated = side == ModelSide::treated;
  const Eigen::MatrixXd& psi = treated ? features.b1 : features.b0;
  const Eigen::VectorXd y =
      treated ? treated_outcomes(dataset) : control_outcomes(dataset);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(psi.rows());
  if (weights)
    w = treated ? treated_gamma(dataset, *weights)
                : control_gamma(dataset, *weights);
  return fit_ridge(psi, y, w, ridge_lambda, side);
}

double bias_corrected_mu0(const CosDataset& dataset,
                          const DesignMatrices& features,
                          const WeightSolution& weights,
                          const OutcomeModel& model) {
  const double n1 = static_cast<double>(dataset.n1());
  const Eigen::VectorXd g = control_gamma(dataset, weights);
  const Eigen::VectorXd pred_t = model.predict(features.b1);
  const Eigen::VectorXd pred_c = model.predict(features.b0);
  return weighted_mu0(dataset, weights) + pred_t.sum() / n1 -
         g.dot(pred_c) / n1;
}

double var_plugin_unit(const CosDataset& dataset, const DesignMatrices& features,
                       const WeightSolution& weights, const OutcomeModel& model) {
  const double n1 = static_cast<double>(dataset.n1());
  const Eigen::VectorXd g = control_gamma(dataset, weights);
  const Eigen::VectorXd resid =
      control_outcomes(dataset) - model.predict(features.b0);
  return cluster_sum_sq(dataset, dataset.control_clusters(), g, resid) /
         (n1 * n1);
}

double var_sandwich(const CosDataset& dataset, const WeightSolution& weights) {
  const double n1 = static_cast<double>(dataset.n1());
  const Eigen::VectorXd g = control_gamma(dataset, weights);
  const Eigen::VectorXd y = control_outcomes(dataset);
  const double wmean = g.dot(y) / g.sum();
  const Eigen::VectorXd resid = y.array() - wmean;
  return cluster_sum_sq(dataset, dataset.control_clusters(), g, resid) /
         (n1 * n1);
}

double var_plugin_cluster(const CosDataset& dataset,
                          const DesignMatrices& features,
                          const WeightSolution& weights,
                          const OutcomeModel& model) {
  if (weights.mode != BalanceMode::cluster_only)
    throw ValidationError("var_plugin_cluster requires cluster_only weights");
  const double n1 = static_cast<double>(dataset.n1());
  const Eigen::VectorXd resid =
      control_outcomes(dataset) - model.predict(features.b0);
  double total = 0.0;
  Eigen::Index pos = 0;
  const auto& cc = dataset.control_clusters();
  for (std::size_t c = 0; c < cc.size(); ++c) {
    const auto len = static_cast<Eigen::Index>(dataset.clusters()[cc[c]].size);
    const double rsum = resid.segment(pos, len).sum();
    const double gbar = weights.cluster_weights[static_cast<Eigen::Index>(c)];
    total += gbar * gbar * rsum * rsum;
    pos += len;
  }
  return total / (n1 * n1);
}

double design_effect(const CosDataset& dataset, const WeightSolution& unit_weights,
                     const WeightSolution& cluster_weights, double rho) {
  if (unit_weights.mode == BalanceMode::subset ||
      cluster_weights.mode == BalanceMode::subset)
    throw ValidationError("design_effect compares unit and cluster ATT weights");
  const auto& cc = dataset.control_clusters();
  double num = 0.0;
  Eigen::Index pos = 0;
  for (const auto c : cc) {
    const auto len = static_cast<Eigen::Index>(dataset.clusters()[c].size);
    const auto seg = unit_weights.gamma.segment(pos, len);
    const double s = seg.sum();
    num += (1.0 - rho) * seg.squaredNorm() + rho * s * s;
    pos += len;
  }
  double den = 0.0;
  for (std::size_t c = 0; c < cc.size(); ++c) {
    const double nl = static_cast<double>(dataset.clusters()[cc[c]].size);
    const double gbar = cluster_weights.cluster_weights[static_cast<Eigen::Index>(c)];
    den += (1.0 - rho) * nl * gbar * gbar + rho * (nl * gbar) * (nl * gbar);
  }
  if (den == 0.0) throw Error("design_effect: zero denominator");
  return num / den;
}

std::pair<double, double> confidence_interval(double point, double var,
                                              double alpha) {
  if (var < 0.0) throw ValidationError("confidence_interval: negative variance");
  const double z = stats::normal_quantile(1.0 - alpha / 2.0);
  const double half = z * std::sqrt(var);
  return {point - half, point + half};
}

EffectEstimate estimate_effect(const CosDataset& dataset,
                               const DesignMatrices& features,
                               const WeightSolution& weights,
                               const EstimateOptions& opts) {
  EffectEstimate est;
  est.alpha = opts.alpha;
  est.ess_control = weights.ess_control;
  est.ess_treated = weights.ess_treated;
  const double n1 = static_cast<double>(dataset.n1());
  const double n0 = static_cast<double>(dataset.n0());

  if (dataset.m_control() < 2)
    est.warnings.push_back(
        "variance estimated from a single control cluster is unstable");

  if (weights.mode == BalanceMode::subset) {
    est.estimand = Estimand::ato_subset;
    est.point = ato_estimate(dataset, weights);

    const Eigen::VectorXd gc = control_gamma(dataset, weights);
    const Eigen::VectorXd gt = treated_gamma(dataset, weights);
    const Eigen::VectorXd yc = control_outcomes(dataset);
    const Eigen::VectorXd yt = treated_outcomes(dataset);

    auto model_c = fit_outcome_model(dataset, features, ModelSide::controls,
                                     &weights, opts.ridge_lambda);
    auto model_t = fit_outcome_model(dataset, features, ModelSide::treated,
                                     &weights, opts.ridge_lambda);
    for (const auto& w : model_c.warnings) est.warnings.push_back(w);
    for (const auto& w : model_t.warnings) est.warnings.push_back(w);

    const Eigen::VectorXd rc = yc - model_c.predict(features.b0);
    const Eigen::VectorXd rt = yt - model_t.predict(features.b1);
    est.var_plugin =
        cluster_sum_sq(dataset, dataset.control_clusters(), gc, rc) / (n0 * n0) +
        cluster_sum_sq(dataset, dataset.treated_clusters(), gt, rt) / (n1 * n1);

    const Eigen::VectorXd rc0 = yc.array() - gc.dot(yc) / gc.sum();
    const Eigen::VectorXd rt0 = yt.array() - gt.dot(yt) / gt.sum();
    est.var_sandwich =
        cluster_sum_sq(dataset, dataset.control_clusters(), gc, rc0) / (n0 * n0) +
        cluster_sum_sq(dataset, dataset.treated_clusters(), gt, rt0) / (n1 * n1);

    est.imbalance_norm =
        ((features.b0.transpose() * gc) / n0 - (features.b1.transpose() * gt) / n1)
            .norm();
  } else {
    est.estimand = weights.mode == BalanceMode::unit ? Estimand::att_unit
                                                     : Estimand::att_cluster;
    est.point = att_estimate(dataset, weights);

    auto model = fit_outcome_model(dataset, features, ModelSide::controls,
                                   &weights, opts.ridge_lambda);
    for (const auto& w : model.warnings) est.warnings.push_back(w);

    const double mu1 = treated_outcomes(dataset).mean();
    est.point_bias_corrected =
        mu1 - bias_corrected_mu0(dataset, features, weights, model);

    est.var_plugin =
        weights.mode == BalanceMode::cluster_only
            ? var_plugin_cluster(dataset, features, weights, model)
            : var_plugin_unit(dataset, features, weights, model);
    est.var_sandwich = var_sandwich(dataset, weights);

    est.imbalance_norm =
        imbalance_vector(features.b0, features.target, weights.gamma, n1).norm();

    if (opts.total_variance) {
      // Treated-arm residual cluster sums, unweighted; added when inference
      // targets the unconditional effect rather than the design-conditional
      // one.
      auto model_t = fit_outcome_model(dataset, features, ModelSide::treated,
                                       nullptr, opts.ridge_lambda);
      const Eigen::VectorXd yt = treated_outcomes(dataset);
      const Eigen::VectorXd ones = Eigen::VectorXd::Ones(yt.size());
      const Eigen::VectorXd rt = yt - model_t.predict(features.b1);
      const double trt_plugin =
          cluster_sum_sq(dataset, dataset.treated_clusters(), ones, rt) /
          (n1 * n1);
      const Eigen::VectorXd rt0 = yt.array() - yt.mean();
      const double trt_sandwich =
          cluster_sum_sq(dataset, dataset.treated_clusters(), ones, rt0) /
          (n1 * n1);
      est.var_plugin_total = est.var_plugin + trt_plugin;
      est.var_sandwich_total = est.var_sandwich + trt_sandwich;
      est.ci_plugin_total =
          confidence_interval(est.point, *est.var_plugin_total, opts.alpha);
      est.ci_sandwich_total =
          confidence_interval(est.point, *est.var_sandwich_total, opts.alpha);
    }
  }

  est.ci_plugin = confidence_interval(est.point, est.var_plugin, opts.alpha);
  est.ci_sandwich = confidence_interval(est.point, est.var_sandwich, opts.alpha);
  return est;
}

}  // namespace cosbal
