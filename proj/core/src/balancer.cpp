#include "cosbal/balancer.hpp"

#include <algorithm>
#include <cmath>

#include "cosbal/errors.hpp"

namespace cosbal {

namespace {

double kish_ess(const Eigen::VectorXd& w) {
  const double s = w.sum();
  const double sq = w.squaredNorm();
  if (sq == 0.0) return 0.0;
  return s * s / sq;
}

// Penalty blocks for a run of clusters laid out contiguously, each block
// scaled by base * [(1-rho) on the diagonal, rho on the ones matrix].
void append_mixture_blocks(PenaltyStructure& penalty, const CosDataset& dataset,
                           const std::vector<std::size_t>& cluster_idx,
                           Eigen::Index offset, double base, double icc) {
  Eigen::Index pos = offset;
  for (const auto c : cluster_idx) {
    const auto len = static_cast<Eigen::Index>(dataset.clusters()[c].size);
    penalty.blocks.push_back(
        {pos, pos + len, base * (1.0 - icc), base * icc});
    pos += len;
  }
}

}  // namespace

double WeightSolution::unit_weight(const CosDataset& dataset,
                                   std::size_t unit_idx) const {
  if (mode == BalanceMode::subset)
    return gamma[static_cast<Eigen::Index>(unit_idx)];
  if (dataset.unit_treated(unit_idx)) return 1.0;
  // Control units appear in gamma in dataset order; recover the position.
  const auto& ctrl = dataset.control_units();
  const auto it = std::lower_bound(ctrl.begin(), ctrl.end(), unit_idx);
  return gamma[static_cast<Eigen::Index>(it - ctrl.begin())];
}

QpProblem build_unit_problem(const CosDataset& dataset,
                             const DesignMatrices& features,
                             const HyperParams& hyper, const Bounds& bounds) {
  const auto n0 = static_cast<Eigen::Index>(dataset.n0());
  const double n1 = static_cast<double>(dataset.n1());

  QpProblem qp;
  qp.m = features.b0.transpose() / n1;
  qp.t = features.target;
  qp.lower = bounds.lower;
  qp.upper = bounds.upper;

  const double base = hyper.noise_to_signal / (n1 * n1);
  append_mixture_blocks(qp.penalty, dataset, dataset.control_clusters(), 0,
                        base, hyper.icc);

  SumConstraint con;
  con.begin = 0;
  con.end = n0;
  con.required_sum = n1;
  qp.sum_constraints.push_back(std::move(con));
  return qp;
}

QpProblem build_cluster_problem(const CosDataset& dataset,
                                const DesignMatrices& features,
                                const HyperParams& hyper, const Bounds& bounds) {
  if (features.include_unit)
    throw ValidationError(
        "cluster_only balancing requires features built with include_unit=false");
  const auto m0 = static_cast<Eigen::Index>(dataset.m_control());
  const double n1 = static_cast<double>(dataset.n1());
  const auto& sizes = features.control_cluster_sizes;

  QpProblem qp;
  qp.m = features.phi0.transpose() * sizes.asDiagonal() / n1;
  qp.t = features.target;
  qp.lower = bounds.lower;
  qp.upper = bounds.upper;

  const double base = hyper.noise_to_signal / (n1 * n1);
  for (Eigen::Index c = 0; c < m0; ++c) {
    const double nl = sizes[c];
    qp.penalty.blocks.push_back(
        {c, c + 1, base * ((1.0 - hyper.icc) * nl + hyper.icc * nl * nl), 0.0});
  }

  SumConstraint con;
  con.begin = 0;
  con.end = m0;
  con.required_sum = n1;
  con.multipliers = sizes;
  qp.sum_constraints.push_back(std::move(con));
  return qp;
}

QpProblem build_subset_problem(const CosDataset& dataset,
                               const DesignMatrices& features,
                               const HyperParams& hyper, const Bounds& bounds) {
  const auto n0 = static_cast<Eigen::Index>(dataset.n0());
  const auto n1 = static_cast<Eigen::Index>(dataset.n1());
  const double n0d = static_cast<double>(n0);
  const double n1d = static_cast<double>(n1);
  const auto d = features.d();

  QpProblem qp;
  qp.m.resize(d, n0 + n1);
  qp.m.leftCols(n0) = features.b0.transpose() / n0d;
  qp.m.rightCols(n1) = -features.b1.transpose() / n1d;
  qp.t = Eigen::VectorXd::Zero(d);
  qp.lower = bounds.lower;
  qp.upper = bounds.upper;

  append_mixture_blocks(qp.penalty, dataset, dataset.control_clusters(), 0,
                        hyper.noise_to_signal / (n0d * n0d), hyper.icc);
  append_mixture_blocks(qp.penalty, dataset, dataset.treated_clusters(), n0,
                        hyper.noise_to_signal / (n1d * n1d), hyper.icc);

  SumConstraint ctrl;
  ctrl.begin = 0;
  ctrl.end = n0;
  ctrl.required_sum = n0d;
  qp.sum_constraints.push_back(std::move(ctrl));
  SumConstraint trt;
  trt.begin = n0;
  trt.end = n0 + n1;
  trt.required_sum = n1d;
  qp.sum_constraints.push_back(std::move(trt));
  return qp;
}

WeightSolution fit(const CosDataset& dataset, const DesignMatrices& features,
                   const BalanceSpec& spec, const SolverOptions& opts) {
  WeightSolution ws;
  ws.mode = spec.mode;

  switch (spec.mode) {
    case BalanceMode::unit: {
      auto qp = build_unit_problem(dataset, features, spec.hyper, spec.bounds);
      ws.solution_meta = solve(qp, opts);
      ws.gamma = ws.solution_meta.gamma;
      const auto& cc = dataset.control_clusters();
      ws.cluster_weights.resize(static_cast<Eigen::Index>(cc.size()));
      Eigen::Index pos = 0;
      for (std::size_t c = 0; c < cc.size(); ++c) {
        const auto len = static_cast<Eigen::Index>(dataset.clusters()[cc[c]].size);
        ws.cluster_weights[static_cast<Eigen::Index>(c)] =
            ws.gamma.segment(pos, len).mean();
        pos += len;
      }
      ws.ess_control = kish_ess(ws.gamma);
      break;
    }
    case BalanceMode::cluster_only: {
      auto qp = build_cluster_problem(dataset, features, spec.hyper, spec.bounds);
      ws.solution_meta = solve(qp, opts);
      ws.cluster_weights = ws.solution_meta.gamma;
      // Expand to unit weights: gamma_i = cluster weight of its cluster.
      ws.gamma.resize(static_cast<Eigen::Index>(dataset.n0()));
      const auto& cc = dataset.control_clusters();
      Eigen::Index pos = 0;
      for (std::size_t c = 0; c < cc.size(); ++c) {
        const auto len = static_cast<Eigen::Index>(dataset.clusters()[cc[c]].size);
        ws.gamma.segment(pos, len).setConstant(
            ws.cluster_weights[static_cast<Eigen::Index>(c)]);
        pos += len;
      }
      ws.ess_control = kish_ess(ws.gamma);
      break;
    }
    case BalanceMode::subset: {
      auto qp = build_subset_problem(dataset, features, spec.hyper, spec.bounds);
      ws.solution_meta = solve(qp, opts);
      const auto n0 = static_cast<Eigen::Index>(dataset.n0());
      const auto n1 = static_cast<Eigen::Index>(dataset.n1());
      // Scatter [controls..., treated...] back to dataset unit order.
      ws.gamma.resize(n0 + n1);
      const auto& ctrl = dataset.control_units();
      const auto& trt = dataset.treated_units();
      for (std::size_t r = 0; r < ctrl.size(); ++r)
        ws.gamma[static_cast<Eigen::Index>(ctrl[r])] =
            ws.solution_meta.gamma[static_cast<Eigen::Index>(r)];
      for (std::size_t r = 0; r < trt.size(); ++r)
        ws.gamma[static_cast<Eigen::Index>(trt[r])] =
            ws.solution_meta.gamma[n0 + static_cast<Eigen::Index>(r)];
      ws.cluster_weights.resize(static_cast<Eigen::Index>(dataset.m()));
      for (std::size_t c = 0; c < dataset.m(); ++c) {
        const auto& range = dataset.cluster_range(c);
        double sum = 0.0;
        for (std::size_t i = range.first; i <= range.last; ++i)
          sum += ws.gamma[static_cast<Eigen::Index>(i)];
        ws.cluster_weights[static_cast<Eigen::Index>(c)] =
            sum / static_cast<double>(range.size());
      }
      Eigen::VectorXd ctrl_w(n0);
      Eigen::VectorXd trt_w(n1);
      for (std::size_t r = 0; r < ctrl.size(); ++r)
        ctrl_w[static_cast<Eigen::Index>(r)] =
            ws.gamma[static_cast<Eigen::Index>(ctrl[r])];
      for (std::size_t r = 0; r < trt.size(); ++r)
        trt_w[static_cast<Eigen::Index>(r)] =
            ws.gamma[static_cast<Eigen::Index>(trt[r])];
      ws.ess_control = kish_ess(ctrl_w);
      ws.ess_treated = kish_ess(trt_w);
      break;
    }
  }
  return ws;
}

WeightSolution fit(const CosDataset& dataset, const FeatureSpec& featurespec,
                   const BalanceSpec& spec, const SolverOptions& opts) {
  if (spec.mode == BalanceMode::cluster_only && featurespec.include_unit)
    throw ValidationError(
        "cluster_only balancing requires include_unit=false in the feature spec");
  const auto features = build_features(dataset, featurespec);
  return fit(dataset, features, spec, opts);
}

}  // namespace cosbal
