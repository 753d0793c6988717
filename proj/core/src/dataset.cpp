#include "cosbal/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "cosbal/errors.hpp"

namespace cosbal {

namespace {

bool all_finite(const Eigen::VectorXd& v) {
  return v.allFinite();
}

}  // namespace

CosDataset CosDataset::create(std::vector<UnitRecord> units,
                              std::vector<ClusterRecord> clusters,
                              std::vector<std::string> unit_covariate_names,
                              std::vector<std::string> cluster_covariate_names) {
  if (units.empty()) throw ValidationError("dataset has no units");
  if (clusters.empty()) throw ValidationError("dataset has no clusters");

  // Canonical order: clusters by id, units by id within cluster. All
  // downstream results are therefore invariant to input permutation.
  std::sort(clusters.begin(), clusters.end(),
            [](const ClusterRecord& a, const ClusterRecord& b) {
              return a.cluster_id < b.cluster_id;
            });
  std::unordered_map<std::string, std::size_t> cluster_pos;
  cluster_pos.reserve(clusters.size());
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    if (!cluster_pos.emplace(clusters[c].cluster_id, c).second)
      throw ValidationError("duplicate cluster id '" + clusters[c].cluster_id + "'");
  }

  std::sort(units.begin(), units.end(),
            [](const UnitRecord& a, const UnitRecord& b) {
              if (a.cluster_id != b.cluster_id) return a.cluster_id < b.cluster_id;
              return a.unit_id < b.unit_id;
            });

  const Eigen::Index xdim = units.front().x.size();
  const Eigen::Index wdim = clusters.front().w.size();
  std::unordered_set<std::string> seen_units;
  seen_units.reserve(units.size());
  for (const auto& u : units) {
    if (!seen_units.insert(u.unit_id).second)
      throw ValidationError("duplicate unit id '" + u.unit_id + "'");
    if (!cluster_pos.count(u.cluster_id))
      throw ValidationError("unit '" + u.unit_id + "' references unknown cluster '" +
                            u.cluster_id + "'");
    if (u.x.size() != xdim)
      throw ValidationError("unit '" + u.unit_id + "' has covariate dimension " +
                            std::to_string(u.x.size()) + ", expected " +
                            std::to_string(xdim));
    if (!all_finite(u.x) || !std::isfinite(u.y))
      throw ValidationError("unit '" + u.unit_id + "' has non-finite values");
  }
  for (const auto& c : clusters) {
    if (c.w.size() != wdim)
      throw ValidationError("cluster '" + c.cluster_id + "' has covariate dimension " +
                            std::to_string(c.w.size()) + ", expected " +
                            std::to_string(wdim));
    if (!all_finite(c.w))
      throw ValidationError("cluster '" + c.cluster_id + "' has non-finite values");
  }
  if (static_cast<std::size_t>(xdim) != unit_covariate_names.size())
    throw ValidationError("unit covariate names do not match dimension");
  if (static_cast<std::size_t>(wdim) != cluster_covariate_names.size())
    throw ValidationError("cluster covariate names do not match dimension");

  CosDataset ds;
  ds.units_ = std::move(units);
  ds.clusters_ = std::move(clusters);
  ds.unit_cov_names_ = std::move(unit_covariate_names);
  ds.cluster_cov_names_ = std::move(cluster_covariate_names);

  const std::size_t n = ds.units_.size();
  const std::size_t m = ds.clusters_.size();
  ds.ranges_.assign(m, UnitRange{});
  ds.unit_cluster_.assign(n, 0);
  ds.outcomes_.resize(static_cast<Eigen::Index>(n));

  std::vector<std::size_t> sizes(m, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = cluster_pos.at(ds.units_[i].cluster_id);
    ds.unit_cluster_[i] = c;
    if (sizes[c] == 0) ds.ranges_[c].first = i;
    ds.ranges_[c].last = i;
    ++sizes[c];
    ds.outcomes_[static_cast<Eigen::Index>(i)] = ds.units_[i].y;
  }
  std::size_t n1 = 0;
  std::size_t m1 = 0;
  for (std::size_t c = 0; c < m; ++c) {
    if (sizes[c] == 0)
      throw ValidationError("cluster '" + ds.clusters_[c].cluster_id + "' has no units");
    ds.clusters_[c].size = sizes[c];
    if (ds.clusters_[c].treated) {
      n1 += sizes[c];
      ++m1;
      ds.treated_clusters_.push_back(c);
    } else {
      ds.control_clusters_.push_back(c);
    }
  }
  if (m1 == 0) throw ValidationError("no treated clusters");
  if (m1 == m) throw ValidationError("no control clusters");

  for (std::size_t i = 0; i < n; ++i) {
    if (ds.clusters_[ds.unit_cluster_[i]].treated)
      ds.treated_units_.push_back(i);
    else
      ds.control_units_.push_back(i);
  }

  ds.counts_ = Counts{n, m, n1, n - n1};
  ds.m_treated_ = m1;
  return ds;
}

std::map<std::string, UnitRange> CosDataset::cluster_index() const {
  std::map<std::string, UnitRange> idx;
  for (std::size_t c = 0; c < clusters_.size(); ++c)
    idx.emplace(clusters_[c].cluster_id, ranges_[c]);
  return idx;
}

}  // namespace cosbal
