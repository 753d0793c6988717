#include "cosbal/hyperparams.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cosbal/errors.hpp"
#include "cosbal/rng.hpp"

namespace cosbal {

namespace {

struct SideData {
  Eigen::MatrixXd psi;          // rows for the fitted units
  Eigen::VectorXd y;
  std::vector<std::size_t> cluster_sizes;  // per fitted cluster, row-contiguous
};

// Rows stay grouped by cluster because the dataset stores units that way.
SideData collect_side(const CosDataset& dataset, const DesignMatrices& features,
                      FitSide side, const std::vector<bool>* cluster_mask) {
  SideData data;
  const auto& ctrl_clusters = dataset.control_clusters();
  const auto& trt_clusters = dataset.treated_clusters();

  std::vector<std::size_t> clusters(ctrl_clusters.begin(), ctrl_clusters.end());
  if (side == FitSide::pooled)
    clusters.insert(clusters.end(), trt_clusters.begin(), trt_clusters.end());

  std::vector<Eigen::Index> rows;
  // Map from dataset unit index to its row in b0/b1.
  std::vector<Eigen::Index> unit_row(dataset.n());
  for (std::size_t r = 0; r < dataset.control_units().size(); ++r)
    unit_row[dataset.control_units()[r]] = static_cast<Eigen::Index>(r);
  for (std::size_t r = 0; r < dataset.treated_units().size(); ++r)
    unit_row[dataset.treated_units()[r]] = static_cast<Eigen::Index>(r);

  for (std::size_t k = 0; k < clusters.size(); ++k) {
    if (cluster_mask && !(*cluster_mask)[k]) continue;
    const std::size_t c = clusters[k];
    const auto& range = dataset.cluster_range(c);
    data.cluster_sizes.push_back(range.size());
    for (std::size_t i = range.first; i <= range.last; ++i) rows.push_back(
        static_cast<Eigen::Index>(i));
  }

  const auto d = features.d();
  data.psi.resize(static_cast<Eigen::Index>(rows.size()), d);
  data.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto unit = static_cast<std::size_t>(rows[r]);
    const bool treated = dataset.unit_treated(unit);
    const auto& mat = treated ? features.b1 : features.b0;
    data.psi.row(static_cast<Eigen::Index>(r)) = mat.row(unit_row[unit]);
    data.y[static_cast<Eigen::Index>(r)] = dataset.outcomes()[rows[r]];
  }
  return data;
}

RandomInterceptFit fit_on(const SideData& data, double ridge) {
  const auto n = data.psi.rows();
  const auto k = data.cluster_sizes.size();
  if (k < 2) throw TooFewClustersError("random intercept fit needs >= 2 clusters");

  RandomInterceptFit fit;
  fit.clusters_used = k;
  fit.units_used = static_cast<std::size_t>(n);

  // Least squares with an unpenalized intercept: center columns and outcome,
  // ridge only on the slopes.
  Eigen::RowVectorXd col_means = data.psi.colwise().mean();
  const double y_mean = data.y.mean();
  Eigen::MatrixXd xc = data.psi.rowwise() - col_means;
  Eigen::VectorXd yc = data.y.array() - y_mean;
  Eigen::MatrixXd gram = xc.transpose() * xc;
  gram.diagonal().array() += ridge;
  fit.beta = gram.ldlt().solve(xc.transpose() * yc);
  fit.intercept = y_mean - (col_means * fit.beta).value();

  Eigen::VectorXd resid = yc - xc * fit.beta;

  // One-way ANOVA method of moments on the residuals.
  const double grand = resid.mean();
  double ss_within = 0.0;
  double ss_between = 0.0;
  double sum_sq_sizes = 0.0;
  Eigen::Index pos = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const auto sz = static_cast<Eigen::Index>(data.cluster_sizes[c]);
    const auto seg = resid.segment(pos, sz);
    const double cm = seg.mean();
    ss_within += (seg.array() - cm).square().sum();
    ss_between += static_cast<double>(sz) * (cm - grand) * (cm - grand);
    sum_sq_sizes += static_cast<double>(sz) * static_cast<double>(sz);
    pos += sz;
  }
  const double nn = static_cast<double>(n);
  const double kk = static_cast<double>(k);
  const double msb = ss_between / (kk - 1.0);
  const double n_tilde = (nn - sum_sq_sizes / nn) / (kk - 1.0);
  double msw = 0.0;
  if (n > static_cast<Eigen::Index>(k)) {
    msw = ss_within / (nn - kk);
  } else {
    fit.warnings.push_back("all clusters are singletons; within-cluster variance is not identified");
  }
  fit.var_unit = msw;
  fit.var_cluster = n_tilde > 0.0 ? std::max(0.0, (msb - msw) / n_tilde) : 0.0;

  // A perfect fit leaves only numerical noise in the residuals (exactly
  // zero, or ridge-sized); the components are then meaningless.
  const double var_y = yc.squaredNorm() / std::max<double>(1, nn - 1.0);
  if (fit.var_cluster + fit.var_unit <= 1e-10 * var_y || var_y == 0.0) {
    fit.degenerate = true;
    fit.var_cluster = 0.0;
    fit.var_unit = 0.0;
    fit.warnings.push_back(
        "residual variance is numerically zero; variance components set to 0");
  }
  return fit;
}

}  // namespace

RandomInterceptFit fit_random_intercept(const CosDataset& dataset,
                                        const DesignMatrices& features,
                                        FitSide side, double ridge) {
  return fit_on(collect_side(dataset, features, side, nullptr), ridge);
}

HyperParams heuristic_hyperparams(const CosDataset& dataset,
                                  const DesignMatrices& features,
                                  const HyperParamOptions& opts) {
  std::vector<bool> mask;
  const std::vector<bool>* mask_ptr = nullptr;
  const std::size_t side_clusters = opts.side == FitSide::pooled
                                        ? dataset.m()
                                        : dataset.m_control();
  if (opts.holdout_fraction > 0.0) {
    auto want = static_cast<std::size_t>(
        std::ceil(opts.holdout_fraction * static_cast<double>(side_clusters)));
    want = std::clamp<std::size_t>(want, 2, side_clusters);
    std::vector<std::size_t> order(side_clusters);
    std::iota(order.begin(), order.end(), 0);
    auto rng = substream(opts.holdout_seed, 0);
    std::shuffle(order.begin(), order.end(), rng);
    mask.assign(side_clusters, false);
    for (std::size_t i = 0; i < want; ++i) mask[order[i]] = true;
    mask_ptr = &mask;
  }

  auto fit = fit_on(collect_side(dataset, features, opts.side, mask_ptr),
                    opts.ridge);

  HyperParams hp;
  hp.source = HyperSource::estimated;
  hp.warnings = fit.warnings;

  const double total = fit.var_cluster + fit.var_unit;
  if (total <= 0.0) {
    hp.icc = 0.0;
    hp.warnings.push_back("icc undefined (zero residual variance); reported as 0");
  } else {
    hp.icc = std::clamp(fit.var_cluster / total, 0.0, 1.0);
  }

  const double signal = opts.signal_sum_sq
                            ? fit.beta.sum() * fit.beta.sum()
                            : fit.beta.squaredNorm();
  if (signal < 1e-12) {
    hp.noise_to_signal = opts.ratio_cap;
    hp.warnings.push_back("zero signal (coefficients ~ 0); noise-to-signal set to cap");
  } else {
    hp.noise_to_signal = total / signal;
  }
  return hp;
}

}  // namespace cosbal
