#include "cosbal/transform.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cosbal/errors.hpp"

namespace cosbal {

namespace {

constexpr double kZeroVarianceSd = 1e-12;

struct ColumnSet {
  std::vector<Eigen::VectorXd> values;  // each length n
  std::vector<std::string> names;
};

// Pooled mean/sd standardization in place; returns false for zero variance.
bool standardize_column(Eigen::VectorXd& col, double& center, double& scale) {
  const double m = col.mean();
  const double var =
      (col.array() - m).square().sum() / static_cast<double>(col.size() - 1);
  const double s = std::sqrt(var);
  if (s < kZeroVarianceSd) return false;
  col = (col.array() - m) / s;
  center = m;
  scale = s;
  return true;
}

bool is_constant(const Eigen::VectorXd& col) {
  const double m = col.mean();
  const double var =
      (col.array() - m).square().sum() / static_cast<double>(col.size() - 1);
  return std::sqrt(var) < kZeroVarianceSd;
}

int find_name(const std::vector<std::string>& names, const std::string& name) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

}  // namespace

DesignMatrices build_features(const CosDataset& dataset, const FeatureSpec& spec) {
  if (spec.polynomial_degree != 1 && spec.polynomial_degree != 2)
    throw ValidationError("polynomial_degree must be 1 or 2");
  if (!spec.include_unit && !spec.interactions.empty())
    throw ValidationError("interactions require include_unit=true");

  const auto n = static_cast<Eigen::Index>(dataset.n());
  const auto& cluster_names = dataset.cluster_covariate_names();
  const auto& unit_names = dataset.unit_covariate_names();

  DesignMatrices out;
  out.include_unit = spec.include_unit;

  // Base columns: cluster covariates evaluated per unit, then unit
  // covariates. Tags keep track of which base columns exist for the
  // interaction lookup below.
  ColumnSet base;
  std::vector<bool> base_is_cluster;
  for (std::size_t k = 0; k < cluster_names.size(); ++k) {
    Eigen::VectorXd col(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto c = dataset.cluster_of_unit(static_cast<std::size_t>(i));
      col[i] = dataset.clusters()[c].w[static_cast<Eigen::Index>(k)];
    }
    base.values.push_back(std::move(col));
    base.names.push_back(cluster_names[k]);
    base_is_cluster.push_back(true);
  }
  if (spec.include_unit) {
    for (std::size_t k = 0; k < unit_names.size(); ++k) {
      Eigen::VectorXd col(n);
      for (Eigen::Index i = 0; i < n; ++i)
        col[i] = dataset.units()[static_cast<std::size_t>(i)]
                     .x[static_cast<Eigen::Index>(k)];
      base.values.push_back(std::move(col));
      base.names.push_back(unit_names[k]);
      base_is_cluster.push_back(false);
    }
  }

  for (const auto& [wname, xname] : spec.interactions) {
    if (find_name(cluster_names, wname) < 0)
      throw UnknownCovariateError("interaction references unknown cluster covariate '" +
                                  wname + "'");
    if (find_name(unit_names, xname) < 0)
      throw UnknownCovariateError("interaction references unknown unit covariate '" +
                                  xname + "'");
  }

  // Standardize (or just drop constants) at the base level first so derived
  // terms are products of comparable columns.
  ColumnSet kept;
  std::vector<double> centers;
  std::vector<double> scales;
  std::vector<bool> kept_is_cluster;
  for (std::size_t k = 0; k < base.values.size(); ++k) {
    Eigen::VectorXd col = base.values[k];
    double center = 0.0;
    double scale = 1.0;
    bool ok;
    if (spec.standardize) {
      ok = standardize_column(col, center, scale);
    } else {
      ok = !is_constant(col);
    }
    if (!ok) {
      out.dropped_features.push_back(base.names[k]);
      out.warnings.push_back("zero-variance feature dropped: " + base.names[k]);
      continue;
    }
    kept.values.push_back(std::move(col));
    kept.names.push_back(base.names[k]);
    kept_is_cluster.push_back(base_is_cluster[k]);
    centers.push_back(center);
    scales.push_back(scale);
  }

  // Derived columns: degree-2 monomials and explicit interactions, computed
  // from the standardized bases, then standardized themselves.
  struct Derived {
    Eigen::VectorXd col;
    std::string name;
    bool cluster_only;
  };
  std::vector<Derived> derived;
  std::set<std::pair<int, int>> seen_pairs;
  if (spec.polynomial_degree == 2) {
    const auto kb = static_cast<int>(kept.values.size());
    for (int a = 0; a < kb; ++a) {
      derived.push_back({kept.values[a].cwiseProduct(kept.values[a]),
                         kept.names[a] + "^2", kept_is_cluster[a]});
      seen_pairs.emplace(a, a);
    }
    for (int a = 0; a < kb; ++a) {
      for (int b = a + 1; b < kb; ++b) {
        derived.push_back({kept.values[a].cwiseProduct(kept.values[b]),
                           kept.names[a] + "*" + kept.names[b],
                           kept_is_cluster[a] && kept_is_cluster[b]});
        seen_pairs.emplace(a, b);
      }
    }
  }
  for (const auto& [wname, xname] : spec.interactions) {
    const int a = find_name(kept.names, wname);
    const int b = find_name(kept.names, xname);
    if (a < 0 || b < 0) {
      out.warnings.push_back("interaction " + wname + "*" + xname +
                             " skipped: component feature was dropped");
      continue;
    }
    const auto key = std::minmax(a, b);
    if (seen_pairs.count({key.first, key.second})) continue;  // degree 2 covers it
    seen_pairs.emplace(key.first, key.second);
    derived.push_back({kept.values[a].cwiseProduct(kept.values[b]),
                       wname + "*" + xname, false});
  }

  for (auto& dcol : derived) {
    double center = 0.0;
    double scale = 1.0;
    bool ok;
    if (spec.standardize) {
      ok = standardize_column(dcol.col, center, scale);
    } else {
      ok = !is_constant(dcol.col);
    }
    if (!ok) {
      out.dropped_features.push_back(dcol.name);
      out.warnings.push_back("zero-variance feature dropped: " + dcol.name);
      continue;
    }
    kept.values.push_back(std::move(dcol.col));
    kept.names.push_back(dcol.name);
    kept_is_cluster.push_back(dcol.cluster_only);
    centers.push_back(center);
    scales.push_back(scale);
  }

  const auto d = static_cast<Eigen::Index>(kept.values.size());
  Eigen::MatrixXd all(n, d);
  for (Eigen::Index j = 0; j < d; ++j)
    all.col(j) = kept.values[static_cast<std::size_t>(j)];

  out.feature_names = kept.names;
  out.center = Eigen::Map<Eigen::VectorXd>(centers.data(), d);
  out.scale = Eigen::Map<Eigen::VectorXd>(scales.data(), d);

  const auto& ctrl = dataset.control_units();
  const auto& trt = dataset.treated_units();
  out.b0.resize(static_cast<Eigen::Index>(ctrl.size()), d);
  out.b1.resize(static_cast<Eigen::Index>(trt.size()), d);
  for (std::size_t r = 0; r < ctrl.size(); ++r)
    out.b0.row(static_cast<Eigen::Index>(r)) =
        all.row(static_cast<Eigen::Index>(ctrl[r]));
  for (std::size_t r = 0; r < trt.size(); ++r)
    out.b1.row(static_cast<Eigen::Index>(r)) =
        all.row(static_cast<Eigen::Index>(trt[r]));
  out.target = out.b1.colwise().sum() / static_cast<double>(dataset.n1());

  if (!spec.include_unit) {
    const auto& cc = dataset.control_clusters();
    const auto& tc = dataset.treated_clusters();
    out.phi0.resize(static_cast<Eigen::Index>(cc.size()), d);
    out.control_cluster_sizes.resize(static_cast<Eigen::Index>(cc.size()));
    for (std::size_t r = 0; r < cc.size(); ++r) {
      const auto& range = dataset.cluster_range(cc[r]);
      out.phi0.row(static_cast<Eigen::Index>(r)) =
          all.row(static_cast<Eigen::Index>(range.first));
      out.control_cluster_sizes[static_cast<Eigen::Index>(r)] =
          static_cast<double>(dataset.clusters()[cc[r]].size);
    }
    out.phi1.resize(static_cast<Eigen::Index>(tc.size()), d);
    out.treated_cluster_sizes.resize(static_cast<Eigen::Index>(tc.size()));
    for (std::size_t r = 0; r < tc.size(); ++r) {
      const auto& range = dataset.cluster_range(tc[r]);
      out.phi1.row(static_cast<Eigen::Index>(r)) =
          all.row(static_cast<Eigen::Index>(range.first));
      out.treated_cluster_sizes[static_cast<Eigen::Index>(r)] =
          static_cast<double>(dataset.clusters()[tc[r]].size);
    }
  }
  return out;
}

Eigen::VectorXd imbalance_vector(const Eigen::MatrixXd& b0,
                                 const Eigen::VectorXd& target,
                                 const Eigen::VectorXd& gamma, double n1) {
  if (gamma.size() != b0.rows())
    throw DimensionMismatchError("imbalance_vector: gamma length " +
                                 std::to_string(gamma.size()) + " != rows " +
                                 std::to_string(b0.rows()));
  if (target.size() != b0.cols())
    throw DimensionMismatchError("imbalance_vector: target length mismatch");
  return (b0.transpose() * gamma) / n1 - target;
}

}  // namespace cosbal
