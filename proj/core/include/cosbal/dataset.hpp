#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace cosbal {

struct UnitRecord {
  std::string unit_id;
  std::string cluster_id;
  Eigen::VectorXd x;  // unit-level covariates, numeric (indicators expanded)
  double y = 0.0;     // outcome
};

struct ClusterRecord {
  std::string cluster_id;
  bool treated = false;
  Eigen::VectorXd w;      // cluster-level covariates
  std::size_t size = 0;   // number of member units; filled at construction
};

// Inclusive range [first, last] of unit indices belonging to one cluster.
struct UnitRange {
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t size() const { return last - first + 1; }
};

struct Counts {
  std::size_t n = 0;   // units
  std::size_t m = 0;   // clusters
  std::size_t n1 = 0;  // units in treated clusters
  std::size_t n0 = 0;  // units in control clusters
};

// A clustered observational study: units grouped into clusters, treatment
// assigned at the cluster level. Immutable after construction; units are
// stored grouped by cluster (clusters ordered by id, units by id within a
// cluster) so per-cluster reductions are contiguous slices.
class CosDataset {
 public:
  // Validates invariants: ids resolve and are unique, covariate dimensions
  // agree, all values finite, every cluster nonempty, and both a treated
  // and a control cluster exist. Throws ValidationError otherwise.
  static CosDataset create(std::vector<UnitRecord> units,
                           std::vector<ClusterRecord> clusters,
                           std::vector<std::string> unit_covariate_names,
                           std::vector<std::string> cluster_covariate_names);

  Counts counts() const { return counts_; }
  std::size_t n() const { return counts_.n; }
  std::size_t m() const { return counts_.m; }
  std::size_t n1() const { return counts_.n1; }
  std::size_t n0() const { return counts_.n0; }
  std::size_t m_treated() const { return m_treated_; }
  std::size_t m_control() const { return counts_.m - m_treated_; }

  const std::vector<UnitRecord>& units() const { return units_; }
  const std::vector<ClusterRecord>& clusters() const { return clusters_; }

  const UnitRange& cluster_range(std::size_t cluster_idx) const {
    return ranges_[cluster_idx];
  }
  std::size_t cluster_of_unit(std::size_t unit_idx) const {
    return unit_cluster_[unit_idx];
  }
  bool unit_treated(std::size_t unit_idx) const {
    return clusters_[unit_cluster_[unit_idx]].treated;
  }

  // Map from cluster id to its contiguous unit index range.
  std::map<std::string, UnitRange> cluster_index() const;

  // Unit indices of control/treated units, in storage order.
  const std::vector<std::size_t>& control_units() const { return control_units_; }
  const std::vector<std::size_t>& treated_units() const { return treated_units_; }
  // Cluster indices of control/treated clusters, in storage order.
  const std::vector<std::size_t>& control_clusters() const { return control_clusters_; }
  const std::vector<std::size_t>& treated_clusters() const { return treated_clusters_; }

  const Eigen::VectorXd& outcomes() const { return outcomes_; }

  const std::vector<std::string>& unit_covariate_names() const {
    return unit_cov_names_;
  }
  const std::vector<std::string>& cluster_covariate_names() const {
    return cluster_cov_names_;
  }

 private:
  CosDataset() = default;

  std::vector<UnitRecord> units_;
  std::vector<ClusterRecord> clusters_;
  std::vector<UnitRange> ranges_;
  std::vector<std::size_t> unit_cluster_;
  std::vector<std::size_t> control_units_;
  std::vector<std::size_t> treated_units_;
  std::vector<std::size_t> control_clusters_;
  std::vector<std::size_t> treated_clusters_;
  Eigen::VectorXd outcomes_;
  std::vector<std::string> unit_cov_names_;
  std::vector<std::string> cluster_cov_names_;
  Counts counts_;
  std::size_t m_treated_ = 0;
};

}  // namespace cosbal
