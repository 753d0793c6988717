#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "cosbal/dataset.hpp"
#include "cosbal/qp.hpp"

namespace cosbal::testing {

// Compact dataset construction for fixtures.
struct ClusterSpec {
  std::string id;
  bool treated;
  std::vector<double> w;
  // one entry per unit: (unit covariates, outcome)
  std::vector<std::pair<std::vector<double>, double>> units;
};

inline CosDataset make_dataset(const std::vector<ClusterSpec>& specs,
                               std::vector<std::string> unit_names,
                               std::vector<std::string> cluster_names) {
  std::vector<UnitRecord> units;
  std::vector<ClusterRecord> clusters;
  for (const auto& cs : specs) {
    ClusterRecord c;
    c.cluster_id = cs.id;
    c.treated = cs.treated;
    c.w = Eigen::Map<const Eigen::VectorXd>(cs.w.data(),
                                            static_cast<Eigen::Index>(cs.w.size()));
    clusters.push_back(std::move(c));
    std::size_t k = 0;
    for (const auto& [x, y] : cs.units) {
      UnitRecord u;
      u.unit_id = cs.id + "_u" + std::to_string(k++);
      u.cluster_id = cs.id;
      u.x = Eigen::Map<const Eigen::VectorXd>(x.data(),
                                              static_cast<Eigen::Index>(x.size()));
      u.y = y;
      units.push_back(std::move(u));
    }
  }
  return CosDataset::create(std::move(units), std::move(clusters),
                            std::move(unit_names), std::move(cluster_names));
}

// Random clustered dataset: covariates standard normal, outcomes linear in
// covariates plus cluster and unit noise.
inline CosDataset random_dataset(std::uint64_t seed, int m_treated,
                                 int m_control, int min_size, int max_size,
                                 int xdim = 2, int wdim = 2) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> size_dist(min_size, max_size);

  std::vector<ClusterSpec> specs;
  const int m = m_treated + m_control;
  for (int c = 0; c < m; ++c) {
    ClusterSpec cs;
    cs.id = "c" + std::string(c < 10 ? "0" : "") + std::to_string(c);
    cs.treated = c < m_treated;
    for (int k = 0; k < wdim; ++k) cs.w.push_back(normal(rng));
    const double cluster_effect = normal(rng);
    const int sz = size_dist(rng);
    for (int i = 0; i < sz; ++i) {
      std::vector<double> x;
      for (int k = 0; k < xdim; ++k) x.push_back(normal(rng));
      double y = cluster_effect + 0.5 * normal(rng);
      for (int k = 0; k < xdim; ++k) y += 0.7 * x[static_cast<std::size_t>(k)];
      for (int k = 0; k < wdim; ++k) y += 0.4 * cs.w[static_cast<std::size_t>(k)];
      cs.units.emplace_back(std::move(x), y);
    }
    specs.push_back(std::move(cs));
  }
  std::vector<std::string> xn;
  std::vector<std::string> wn;
  for (int k = 0; k < xdim; ++k) xn.push_back("x" + std::to_string(k));
  for (int k = 0; k < wdim; ++k) wn.push_back("w" + std::to_string(k));
  return make_dataset(specs, xn, wn);
}

// Treated and control arms with identical covariate and outcome structure:
// every treated cluster has an exact control twin. Uniform weights then
// achieve exact balance.
inline CosDataset mirrored_dataset(std::uint64_t seed, int pairs,
                                   int units_per_cluster, int xdim = 2,
                                   int wdim = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<ClusterSpec> specs;
  for (int p = 0; p < pairs; ++p) {
    ClusterSpec proto;
    proto.treated = true;
    proto.id = "t" + std::to_string(p);
    for (int k = 0; k < wdim; ++k) proto.w.push_back(normal(rng));
    for (int i = 0; i < units_per_cluster; ++i) {
      std::vector<double> x;
      for (int k = 0; k < xdim; ++k) x.push_back(normal(rng));
      double y = normal(rng);
      proto.units.emplace_back(std::move(x), y);
    }
    ClusterSpec twin = proto;
    twin.treated = false;
    twin.id = "k" + std::to_string(p);
    specs.push_back(std::move(proto));
    specs.push_back(std::move(twin));
  }
  std::vector<std::string> xn;
  std::vector<std::string> wn;
  for (int k = 0; k < xdim; ++k) xn.push_back("x" + std::to_string(k));
  for (int k = 0; k < wdim; ++k) wn.push_back("w" + std::to_string(k));
  return make_dataset(specs, xn, wn);
}

// Standard normal quantile by Newton iteration on the CDF written with
// erfc; independent of the library's rational approximation.
inline double normal_quantile_oracle(double p) {
  auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
  auto pdf = [](double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
  };
  double x = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double err = cdf(x) - p;
    if (std::abs(err) < 1e-16) break;
    x -= err / pdf(x);
  }
  return x;
}

// Grid-search oracle for QP instances whose single sum constraint (unit
// multipliers) spans all coordinates. The last coordinate is eliminated via
// the constraint; the grid over the free coordinates is refined around the
// incumbent, which converges for convex objectives.
inline double grid_search_objective(const QpProblem& qp, int points_per_dim = 9,
                                    int rounds = 16) {
  const auto k = qp.size();
  const auto& con = qp.sum_constraints.at(0);
  const double s = con.required_sum;
  const double lo = qp.lower;
  const double hi = std::isfinite(qp.upper)
                        ? qp.upper
                        : s - static_cast<double>(k - 1) * lo;

  auto objective = [&](const Eigen::VectorXd& g) {
    return (qp.m * g - qp.t).squaredNorm() + penalty_value(g, qp.penalty);
  };

  const auto free_dims = k - 1;
  Eigen::VectorXd center = Eigen::VectorXd::Constant(k, s / static_cast<double>(k));
  center = center.cwiseMax(lo).cwiseMin(hi);
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_g = center;
  {
    Eigen::VectorXd g = center;
    g[k - 1] = s - g.head(free_dims).sum();
    if (g[k - 1] >= lo - 1e-12 && g[k - 1] <= hi + 1e-12) {
      best = objective(g);
      best_g = g;
    }
  }

  double radius = 0.5 * (hi - lo);
  std::vector<int> idx(static_cast<std::size_t>(free_dims), 0);
  Eigen::VectorXd g(k);
  for (int round = 0; round < rounds; ++round) {
    std::fill(idx.begin(), idx.end(), 0);
    const Eigen::VectorXd base = best_g;
    for (;;) {
      bool feasible = true;
      double sum = 0.0;
      for (Eigen::Index j = 0; j < free_dims; ++j) {
        const double step =
            2.0 * radius / static_cast<double>(points_per_dim - 1);
        double v = base[j] - radius +
                   step * static_cast<double>(idx[static_cast<std::size_t>(j)]);
        v = std::min(std::max(v, lo), hi);
        g[j] = v;
        sum += v;
      }
      g[k - 1] = s - sum;
      if (g[k - 1] < lo - 1e-12 || g[k - 1] > hi + 1e-12) feasible = false;
      if (feasible) {
        const double f = objective(g);
        if (f < best) {
          best = f;
          best_g = g;
        }
      }
      // odometer over the free dimensions
      Eigen::Index j = 0;
      for (; j < free_dims; ++j) {
        auto& cur = idx[static_cast<std::size_t>(j)];
        if (++cur < points_per_dim) break;
        cur = 0;
      }
      if (j == free_dims) break;
    }
    radius *= 0.45;
  }
  return best;
}

}  // namespace cosbal::testing
