#include "cosbal/diagnostics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "cosbal/stats.hpp"

namespace cosbal {

namespace {

// Raw covariate columns over all units: unit covariates then cluster
// covariates evaluated per unit.
struct RawColumns {
  std::vector<std::string> names;
  std::vector<Eigen::VectorXd> values;
};

RawColumns raw_columns(const CosDataset& dataset) {
  RawColumns out;
  const auto n = static_cast<Eigen::Index>(dataset.n());
  const auto& unit_names = dataset.unit_covariate_names();
  for (std::size_t k = 0; k < unit_names.size(); ++k) {
    Eigen::VectorXd col(n);
    for (Eigen::Index i = 0; i < n; ++i)
      col[i] = dataset.units()[static_cast<std::size_t>(i)]
                   .x[static_cast<Eigen::Index>(k)];
    out.names.push_back(unit_names[k]);
    out.values.push_back(std::move(col));
  }
  const auto& cluster_names = dataset.cluster_covariate_names();
  for (std::size_t k = 0; k < cluster_names.size(); ++k) {
    Eigen::VectorXd col(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto c = dataset.cluster_of_unit(static_cast<std::size_t>(i));
      col[i] = dataset.clusters()[c].w[static_cast<Eigen::Index>(k)];
    }
    out.names.push_back(cluster_names[k]);
    out.values.push_back(std::move(col));
  }
  return out;
}

double side_mean(const Eigen::VectorXd& col, const std::vector<std::size_t>& idx,
                 const Eigen::VectorXd* w) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const double wi = w ? (*w)[static_cast<Eigen::Index>(r)] : 1.0;
    num += wi * col[static_cast<Eigen::Index>(idx[r])];
    den += wi;
  }
  return num / den;
}

double side_variance(const Eigen::VectorXd& col,
                     const std::vector<std::size_t>& idx) {
  if (idx.size() < 2) return 0.0;
  double m = side_mean(col, idx, nullptr);
  double ss = 0.0;
  for (const auto i : idx) {
    const double d = col[static_cast<Eigen::Index>(i)] - m;
    ss += d * d;
  }
  return ss / static_cast<double>(idx.size() - 1);
}

Eigen::VectorXd side_weights(const CosDataset& dataset, const WeightSolution& ws,
                             bool treated) {
  const auto& idx = treated ? dataset.treated_units() : dataset.control_units();
  Eigen::VectorXd w(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r)
    w[static_cast<Eigen::Index>(r)] = ws.unit_weight(dataset, idx[r]);
  return w;
}

std::string fixed(double v, int width, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%*.*f", width, prec, v);
  return buf;
}

}  // namespace

std::vector<BalanceRow> standardized_differences(const CosDataset& dataset,
                                                 const WeightSolution* weights) {
  const auto cols = raw_columns(dataset);
  const auto& trt = dataset.treated_units();
  const auto& ctrl = dataset.control_units();

  Eigen::VectorXd wt;
  Eigen::VectorXd wc;
  const Eigen::VectorXd* wt_ptr = nullptr;
  const Eigen::VectorXd* wc_ptr = nullptr;
  if (weights) {
    wc = side_weights(dataset, *weights, false);
    wc_ptr = &wc;
    if (weights->mode == BalanceMode::subset) {
      wt = side_weights(dataset, *weights, true);
      wt_ptr = &wt;
    }
  }

  std::vector<BalanceRow> rows;
  rows.reserve(cols.names.size());
  for (std::size_t k = 0; k < cols.names.size(); ++k) {
    const auto& col = cols.values[k];
    BalanceRow row;
    row.covariate = cols.names[k];
    row.treated_mean = side_mean(col, trt, wt_ptr);
    row.control_mean = side_mean(col, ctrl, wc_ptr);
    const double pooled_sd =
        std::sqrt(0.5 * (side_variance(col, trt) + side_variance(col, ctrl)));
    if (pooled_sd < 1e-12) {
      row.std_diff = 0.0;
      row.zero_pooled_sd = true;
    } else {
      row.std_diff = (row.treated_mean - row.control_mean) / pooled_sd;
    }
    rows.push_back(row);
  }
  return rows;
}

WeightSummary weight_summary(const Eigen::VectorXd& weights, double threshold) {
  WeightSummary s;
  s.threshold = threshold;
  s.count = static_cast<std::size_t>(weights.size());
  if (weights.size() == 0) return s;
  s.min = weights.minCoeff();
  s.max = weights.maxCoeff();
  s.count_above = static_cast<std::size_t>((weights.array() > threshold).count());
  s.p25 = stats::quantile(weights, 0.25);
  s.p50 = stats::quantile(weights, 0.50);
  s.p75 = stats::quantile(weights, 0.75);
  s.p90 = stats::quantile(weights, 0.90);
  s.p99 = stats::quantile(weights, 0.99);
  const double sum = weights.sum();
  const double sq = weights.squaredNorm();
  s.ess = sq > 0.0 ? sum * sum / sq : 0.0;
  return s;
}

std::vector<ProfileRow> estimand_profile(const CosDataset& dataset,
                                         const WeightSolution& subset_weights) {
  const auto cols = raw_columns(dataset);
  const auto& trt = dataset.treated_units();
  const auto& ctrl = dataset.control_units();
  const Eigen::VectorXd wt = side_weights(dataset, subset_weights, true);
  const Eigen::VectorXd wc = side_weights(dataset, subset_weights, false);

  std::vector<ProfileRow> rows;
  rows.reserve(cols.names.size());
  for (std::size_t k = 0; k < cols.names.size(); ++k) {
    const auto& col = cols.values[k];
    ProfileRow row;
    row.covariate = cols.names[k];
    row.treated_raw = side_mean(col, trt, nullptr);
    row.treated_weighted = side_mean(col, trt, &wt);
    row.control_raw = side_mean(col, ctrl, nullptr);
    row.control_weighted = side_mean(col, ctrl, &wc);
    rows.push_back(row);
  }
  return rows;
}

std::string format_balance_table(const std::vector<BalanceRow>& unadjusted,
                                 const std::vector<BalanceRow>* adjusted) {
  std::size_t width = 9;
  for (const auto& r : unadjusted) width = std::max(width, r.covariate.size());
  std::ostringstream out;
  out << std::string(width, ' ') << "  treated   control  std_diff";
  if (adjusted) out << "  adj_control  adj_std_diff";
  out << '\n';
  for (std::size_t i = 0; i < unadjusted.size(); ++i) {
    const auto& r = unadjusted[i];
    out << r.covariate << std::string(width - r.covariate.size(), ' ')
        << fixed(r.treated_mean, 9, 3) << fixed(r.control_mean, 10, 3)
        << fixed(r.std_diff, 10, 3);
    if (adjusted) {
      const auto& a = (*adjusted)[i];
      out << fixed(a.control_mean, 13, 3) << fixed(a.std_diff, 14, 3);
    }
    out << '\n';
  }
  return out.str();
}

std::string format_weight_summary(const WeightSummary& s,
                                  const std::string& label) {
  std::ostringstream out;
  out << label << ": n=" << s.count << " min=" << fixed(s.min, 0, 4)
      << " p25=" << fixed(s.p25, 0, 4) << " median=" << fixed(s.p50, 0, 4)
      << " p75=" << fixed(s.p75, 0, 4) << " p90=" << fixed(s.p90, 0, 4)
      << " p99=" << fixed(s.p99, 0, 4) << " max=" << fixed(s.max, 0, 4)
      << " above_" << s.threshold << "=" << s.count_above
      << " ess=" << fixed(s.ess, 0, 1) << '\n';
  return out.str();
}

std::string format_profile_table(const std::vector<ProfileRow>& rows) {
  std::size_t width = 9;
  for (const auto& r : rows) width = std::max(width, r.covariate.size());
  std::ostringstream out;
  out << std::string(width, ' ')
      << "  trt_raw  trt_wt   ctrl_raw  ctrl_wt\n";
  for (const auto& r : rows) {
    out << r.covariate << std::string(width - r.covariate.size(), ' ')
        << fixed(r.treated_raw, 9, 3) << fixed(r.treated_weighted, 8, 3)
        << fixed(r.control_raw, 10, 3) << fixed(r.control_weighted, 9, 3)
        << '\n';
  }
  return out.str();
}

}  // namespace cosbal
