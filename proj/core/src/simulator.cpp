#include "cosbal/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "cosbal/errors.hpp"
#include "cosbal/estimator.hpp"
#include "cosbal/rng.hpp"
#include "cosbal/stats.hpp"
#include "cosbal/transform.hpp"

namespace cosbal {

namespace {

// DGP constants. Scores are marginally standard normal with correlation
// 0.6; the cluster loading on the latent quality factor and the sharpness
// of the assignment model are calibrated so that at c=1 the naive estimator
// is biased by roughly 0.3 control-group standard deviations.
constexpr double kScoreQualityLoad = 0.45;   // shared cluster quality loading
constexpr double kScoreClusterLoad = 0.15;   // idiosyncratic cluster loading
constexpr double kScoreCorrelation = 0.6;
constexpr double kOutcomeIntercept = 50.0;
constexpr double kCoefRead = 2.5;
constexpr double kCoefMath = 2.5;
constexpr double kCoefProficient = 1.9;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Draws {
  std::normal_distribution<double> normal{0.0, 1.0};
  std::uniform_real_distribution<double> unif{0.0, 1.0};
};

Population generate_covariates(std::mt19937_64& rng, int n_clusters,
                               int mean_cluster_size) {
  if (n_clusters < 2) throw ValidationError("need at least 2 clusters");
  if (mean_cluster_size < 1) throw ValidationError("mean cluster size must be >= 1");

  Population pop;
  pop.unit_cov_names = {"read", "math", "minority", "hispanic", "female"};
  pop.cluster_cov_names = {"read_mean", "math_mean",  "prof_share",
                           "minority_prop", "hispanic_prop", "lunch_pct",
                           "ell_pct",   "novice_pct", "attendance"};

  Draws d;
  std::poisson_distribution<int> size_dist(mean_cluster_size);

  const auto m = static_cast<std::size_t>(n_clusters);
  pop.cluster_sizes.resize(m);
  std::vector<double> quality(m);
  std::vector<double> cluster_shift(m);
  std::size_t total = 0;
  for (std::size_t c = 0; c < m; ++c) {
    pop.cluster_sizes[c] = static_cast<std::size_t>(std::max(5, size_dist(rng)));
    quality[c] = d.normal(rng);
    cluster_shift[c] = d.normal(rng);
    total += pop.cluster_sizes[c];
  }

  pop.unit_cluster.resize(total);
  pop.unit_x.resize(static_cast<Eigen::Index>(total), 5);
  pop.cluster_w.resize(static_cast<Eigen::Index>(m), 9);

  const double beta = std::sqrt(1.0 - kScoreQualityLoad * kScoreQualityLoad -
                                kScoreClusterLoad * kScoreClusterLoad);
  const double rho_unit =
      (kScoreCorrelation - kScoreQualityLoad * kScoreQualityLoad -
       kScoreClusterLoad * kScoreClusterLoad) /
      (beta * beta);

  std::size_t unit = 0;
  for (std::size_t c = 0; c < m; ++c) {
    const double q = quality[c];
    const double g = cluster_shift[c];
    const double cluster_part =
        kScoreQualityLoad * q + kScoreClusterLoad * g;
    const double p_minority = logistic(-0.8 - 0.5 * q);
    const double p_hispanic = logistic(-1.5 - 0.3 * q);

    double prof_count = 0.0;
    double minority_sum = 0.0;
    double hispanic_sum = 0.0;
    double read_sum = 0.0;
    double math_sum = 0.0;
    const auto sz = pop.cluster_sizes[c];
    for (std::size_t k = 0; k < sz; ++k, ++unit) {
      const double zr = d.normal(rng);
      const double zm = rho_unit * zr +
                        std::sqrt(1.0 - rho_unit * rho_unit) * d.normal(rng);
      const double read = cluster_part + beta * zr;
      const double math = cluster_part + beta * zm;
      const double minority = d.unif(rng) < p_minority ? 1.0 : 0.0;
      const double hispanic = d.unif(rng) < p_hispanic ? 1.0 : 0.0;
      const double female = d.unif(rng) < 0.5 ? 1.0 : 0.0;
      const auto i = static_cast<Eigen::Index>(unit);
      pop.unit_cluster[unit] = c;
      pop.unit_x(i, 0) = read;
      pop.unit_x(i, 1) = math;
      pop.unit_x(i, 2) = minority;
      pop.unit_x(i, 3) = hispanic;
      pop.unit_x(i, 4) = female;
      read_sum += read;
      math_sum += math;
      minority_sum += minority;
      hispanic_sum += hispanic;
      if (0.5 * (read + math) > 0.0) prof_count += 1.0;
    }
    const double inv = 1.0 / static_cast<double>(sz);
    const auto cc = static_cast<Eigen::Index>(c);
    pop.cluster_w(cc, 0) = read_sum * inv;
    pop.cluster_w(cc, 1) = math_sum * inv;
    pop.cluster_w(cc, 2) = prof_count * inv;
    pop.cluster_w(cc, 3) = minority_sum * inv;
    pop.cluster_w(cc, 4) = hispanic_sum * inv;
    pop.cluster_w(cc, 5) = logistic(-0.2 - 1.1 * q + 0.6 * d.normal(rng));
    pop.cluster_w(cc, 6) = logistic(-1.2 - 0.7 * q + 0.5 * d.normal(rng));
    pop.cluster_w(cc, 7) = logistic(-1.0 - 0.5 * q + 0.5 * d.normal(rng));
    pop.cluster_w(cc, 8) = logistic(1.8 + 0.8 * q + 0.4 * d.normal(rng));
  }
  return pop;
}

// Draws a synthetic "true" assignment from the four school-level rates and
// fits a logistic model to it; the fitted probabilities play the role of an
// estimated propensity score.
void fit_propensity(Population& pop, std::mt19937_64& rng) {
  Draws d;
  const auto m = static_cast<Eigen::Index>(pop.m());
  Eigen::MatrixXd rates = pop.cluster_w.rightCols(4);
  Eigen::VectorXd assign(m);
  for (Eigen::Index c = 0; c < m; ++c) {
    const double eta = -0.1 - 5.0 * (rates(c, 0) - 0.45) -
                       3.0 * (rates(c, 1) - 0.25) -
                       2.5 * (rates(c, 2) - 0.30) +
                       6.0 * (rates(c, 3) - 0.85);
    assign[c] = d.unif(rng) < logistic(eta) ? 1.0 : 0.0;
  }
  // Guard against a degenerate draw; a constant response makes the logistic
  // fit drift to infinity even with ridge.
  if (assign.sum() < 1.5 || assign.sum() > static_cast<double>(m) - 1.5) {
    const Eigen::Index flip = assign.sum() < 1.5 ? 0 : m - 1;
    assign[flip] = 1.0 - assign[flip];
  }
  const auto fit = stats::fit_logistic(rates, assign, 1e-3);
  pop.propensity = stats::predict_logistic(fit, rates);
}

struct RepRecord {
  bool ok = false;
  std::string error;
  double icc = std::numeric_limits<double>::quiet_NaN();
  double sd_ctrl = 1.0;
  double tau = 0.0;
  struct PerEstimator {
    bool present = false;
    double point = 0.0;
    double se_plugin = 0.0;
    double se_sandwich = 0.0;
    double ci_plugin_lo = 0.0, ci_plugin_hi = 0.0;
    double ci_sandwich_lo = 0.0, ci_sandwich_hi = 0.0;
  };
  PerEstimator naive, balancing, subset;
};

RepRecord run_replication(const SimConfig& config, int rep) {
  RepRecord rec;
  auto rng = substream(config.seed, static_cast<std::uint64_t>(rep));

  Population pop;
  if (config.resample) {
    Population base =
        generate_covariates(rng, config.resample_base_clusters,
                            config.mean_cluster_size);
    std::uniform_int_distribution<std::size_t> pick(0, base.m() - 1);
    Population sampled;
    sampled.unit_cov_names = base.unit_cov_names;
    sampled.cluster_cov_names = base.cluster_cov_names;
    sampled.cluster_w.resize(config.n_clusters, base.cluster_w.cols());
    std::size_t total = 0;
    std::vector<std::size_t> chosen(config.n_clusters);
    for (int c = 0; c < config.n_clusters; ++c) {
      chosen[c] = pick(rng);
      total += base.cluster_sizes[chosen[c]];
    }
    sampled.cluster_sizes.resize(config.n_clusters);
    sampled.unit_cluster.resize(total);
    sampled.unit_x.resize(static_cast<Eigen::Index>(total), base.unit_x.cols());
    // Unit rows of each source cluster are contiguous by construction.
    std::vector<std::size_t> first_unit(base.m(), 0);
    for (std::size_t u = 0; u < base.n(); ++u)
      if (u == 0 || base.unit_cluster[u] != base.unit_cluster[u - 1])
        first_unit[base.unit_cluster[u]] = u;
    std::size_t unit = 0;
    for (int c = 0; c < config.n_clusters; ++c) {
      const auto src = chosen[c];
      sampled.cluster_sizes[c] = base.cluster_sizes[src];
      sampled.cluster_w.row(c) = base.cluster_w.row(static_cast<Eigen::Index>(src));
      for (std::size_t k = 0; k < base.cluster_sizes[src]; ++k, ++unit) {
        sampled.unit_cluster[unit] = static_cast<std::size_t>(c);
        sampled.unit_x.row(static_cast<Eigen::Index>(unit)) =
            base.unit_x.row(static_cast<Eigen::Index>(first_unit[src] + k));
      }
    }
    fit_propensity(sampled, rng);
    pop = std::move(sampled);
  } else {
    pop = generate_covariates(rng, config.n_clusters, config.mean_cluster_size);
    fit_propensity(pop, rng);
  }

  const auto treatment = assign_treatment(pop, config.overlap_c, rng);
  const auto outcomes =
      generate_outcomes(pop, treatment, rng, config.tau_sd_multiplier,
                        config.noise_sd, config.icc_target);
  const auto dataset = to_dataset(pop, treatment, outcomes.y);

  rec.tau = outcomes.tau;
  rec.sd_ctrl = stats::sd(
      [&] {
        Eigen::VectorXd yc(static_cast<Eigen::Index>(dataset.n0()));
        const auto& ctrl = dataset.control_units();
        for (std::size_t r = 0; r < ctrl.size(); ++r)
          yc[static_cast<Eigen::Index>(r)] =
              dataset.outcomes()[static_cast<Eigen::Index>(ctrl[r])];
        return yc;
      }());

  FeatureSpec fspec;
  fspec.include_unit = true;
  fspec.standardize = true;
  fspec.polynomial_degree = 1;
  const auto features = build_features(dataset, fspec);

  const auto hyper = heuristic_hyperparams(dataset, features, {});
  rec.icc = hyper.icc;

  EstimateOptions eopts;
  eopts.alpha = 0.05;
  eopts.total_variance = true;  // coverage targets the unconditional effect

  auto fill = [](RepRecord::PerEstimator& slot, const EffectEstimate& est,
                 bool use_total) {
    slot.present = true;
    slot.point = est.point;
    const double vp = use_total ? *est.var_plugin_total : est.var_plugin;
    const double vs = use_total ? *est.var_sandwich_total : est.var_sandwich;
    slot.se_plugin = std::sqrt(vp);
    slot.se_sandwich = std::sqrt(vs);
    const auto cip = use_total ? *est.ci_plugin_total : est.ci_plugin;
    const auto cis = use_total ? *est.ci_sandwich_total : est.ci_sandwich;
    slot.ci_plugin_lo = cip.first;
    slot.ci_plugin_hi = cip.second;
    slot.ci_sandwich_lo = cis.first;
    slot.ci_sandwich_hi = cis.second;
  };

  if (config.run_naive) {
    const auto ws = uniform_weights(dataset);
    fill(rec.naive, estimate_effect(dataset, features, ws, eopts), true);
  }
  if (config.run_balancing) {
    BalanceSpec spec;
    spec.mode = BalanceMode::unit;
    spec.hyper = hyper;
    spec.bounds = config.bounds;
    const auto ws = fit(dataset, features, spec, config.solver);
    fill(rec.balancing, estimate_effect(dataset, features, ws, eopts), true);
  }
  if (config.run_subset) {
    BalanceSpec spec;
    spec.mode = BalanceMode::subset;
    spec.hyper = hyper;
    spec.bounds = config.bounds;
    const auto ws = fit(dataset, features, spec, config.solver);
    fill(rec.subset, estimate_effect(dataset, features, ws, eopts), false);
  }
  rec.ok = true;
  return rec;
}

EstimatorMetrics aggregate(const std::string& name,
                           const std::vector<RepRecord>& records,
                           RepRecord::PerEstimator RepRecord::* member) {
  EstimatorMetrics m;
  m.name = name;
  double se_p = 0.0, se_s = 0.0, len_p = 0.0, len_s = 0.0;
  double bias = 0.0, sq = 0.0;
  int cover_p = 0, cover_s = 0;
  for (const auto& rec : records) {
    const auto& slot = rec.*member;
    if (!rec.ok || !slot.present) continue;
    ++m.n_ok;
    const double err = (slot.point - rec.tau) / rec.sd_ctrl;
    bias += err;
    sq += err * err;
    se_p += slot.se_plugin;
    se_s += slot.se_sandwich;
    len_p += slot.ci_plugin_hi - slot.ci_plugin_lo;
    len_s += slot.ci_sandwich_hi - slot.ci_sandwich_lo;
    if (slot.ci_plugin_lo <= rec.tau && rec.tau <= slot.ci_plugin_hi) ++cover_p;
    if (slot.ci_sandwich_lo <= rec.tau && rec.tau <= slot.ci_sandwich_hi)
      ++cover_s;
  }
  if (m.n_ok > 0) {
    const double k = static_cast<double>(m.n_ok);
    m.bias_std = bias / k;
    m.rmse_std = std::sqrt(sq / k);
    m.mean_se_plugin = se_p / k;
    m.mean_se_sandwich = se_s / k;
    m.mean_ci_len_plugin = len_p / k;
    m.mean_ci_len_sandwich = len_s / k;
    m.coverage_plugin = cover_p / k;
    m.coverage_sandwich = cover_s / k;
  }
  return m;
}

}  // namespace

Population generate_base_population(std::uint64_t seed, int n_clusters,
                                    int mean_cluster_size) {
  auto rng = substream(seed, 0);
  return generate_base_population(rng, n_clusters, mean_cluster_size);
}

Population generate_base_population(std::mt19937_64& rng, int n_clusters,
                                    int mean_cluster_size) {
  Population pop = generate_covariates(rng, n_clusters, mean_cluster_size);
  fit_propensity(pop, rng);
  return pop;
}

std::vector<bool> assign_treatment(const Population& population, double c,
                                   std::mt19937_64& rng) {
  if (c <= 0.0) throw ValidationError("overlap c must be > 0");
  if (population.propensity.size() !=
      static_cast<Eigen::Index>(population.m()))
    throw ValidationError("population is missing fitted propensities");
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  const auto m = population.m();
  std::vector<bool> z(m);
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::size_t treated = 0;
    for (std::size_t l = 0; l < m; ++l) {
      const double zstar =
          population.propensity[static_cast<Eigen::Index>(l)] / c + unif(rng);
      z[l] = zstar > 0.25;
      treated += z[l] ? 1 : 0;
    }
    if (treated > 0 && treated < m) return z;
  }
  throw Error("treatment assignment produced a single arm 100 times in a row");
}

SimOutcomes generate_outcomes(const Population& population,
                              const std::vector<bool>& treatment,
                              std::mt19937_64& rng, double tau_mult,
                              double noise_sd, double icc_target) {
  if (treatment.size() != population.m())
    throw DimensionMismatchError("treatment length must match cluster count");
  if (icc_target < 0.0 || icc_target >= 1.0)
    throw ValidationError("icc_target must be in [0, 1)");

  const auto n = population.n();
  const double sd_cluster = noise_sd * std::sqrt(icc_target);
  const double sd_unit = noise_sd * std::sqrt(1.0 - icc_target);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> cluster_noise(population.m());
  for (auto& v : cluster_noise) v = sd_cluster * normal(rng);

  SimOutcomes out;
  out.y.resize(static_cast<Eigen::Index>(n));
  Eigen::VectorXd deterministic(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = population.unit_cluster[i];
    const auto row = static_cast<Eigen::Index>(i);
    deterministic[row] = kOutcomeIntercept +
                         kCoefRead * population.unit_x(row, 0) +
                         kCoefMath * population.unit_x(row, 1) +
                         kCoefProficient *
                             population.cluster_w(static_cast<Eigen::Index>(c), 2);
  }

  // True effect: a fraction of the pre-noise sd among control units.
  std::size_t n_ctrl = 0;
  double mean_ctrl = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (!treatment[population.unit_cluster[i]]) {
      mean_ctrl += deterministic[static_cast<Eigen::Index>(i)];
      ++n_ctrl;
    }
  if (n_ctrl < 2) throw ValidationError("control arm too small for outcome scale");
  mean_ctrl /= static_cast<double>(n_ctrl);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (!treatment[population.unit_cluster[i]]) {
      const double dlt = deterministic[static_cast<Eigen::Index>(i)] - mean_ctrl;
      ss += dlt * dlt;
    }
  out.sd_pre_noise = std::sqrt(ss / static_cast<double>(n_ctrl - 1));
  out.tau = tau_mult * out.sd_pre_noise;

  for (std::size_t i = 0; i < n; ++i) {
    const auto c = population.unit_cluster[i];
    const auto row = static_cast<Eigen::Index>(i);
    const double y0 =
        deterministic[row] + cluster_noise[c] + sd_unit * normal(rng);
    out.y[row] = treatment[c] ? y0 + out.tau : y0;
  }
  return out;
}

CosDataset to_dataset(const Population& population,
                      const std::vector<bool>& treatment,
                      const Eigen::VectorXd& y) {
  const auto m = population.m();
  const auto n = population.n();
  if (treatment.size() != m)
    throw DimensionMismatchError("treatment length must match cluster count");
  if (y.size() != static_cast<Eigen::Index>(n))
    throw DimensionMismatchError("outcome length must match unit count");

  // Zero-padded ids keep the generated order canonical.
  int cluster_digits = 1;
  for (std::size_t v = m; v >= 10; v /= 10) ++cluster_digits;
  int unit_digits = 1;
  for (std::size_t v = n; v >= 10; v /= 10) ++unit_digits;
  auto pad = [](std::size_t v, int width) {
    std::string s = std::to_string(v);
    return std::string(static_cast<std::size_t>(width) - s.size(), '0') + s;
  };

  std::vector<ClusterRecord> clusters(m);
  for (std::size_t c = 0; c < m; ++c) {
    clusters[c].cluster_id = "c" + pad(c, cluster_digits);
    clusters[c].treated = treatment[c];
    clusters[c].w = population.cluster_w.row(static_cast<Eigen::Index>(c));
  }
  std::vector<UnitRecord> units(n);
  for (std::size_t i = 0; i < n; ++i) {
    units[i].unit_id = "u" + pad(i, unit_digits);
    units[i].cluster_id = clusters[population.unit_cluster[i]].cluster_id;
    units[i].x = population.unit_x.row(static_cast<Eigen::Index>(i));
    units[i].y = y[static_cast<Eigen::Index>(i)];
  }
  return CosDataset::create(std::move(units), std::move(clusters),
                            population.unit_cov_names,
                            population.cluster_cov_names);
}

WeightSolution uniform_weights(const CosDataset& dataset) {
  WeightSolution ws;
  ws.mode = BalanceMode::unit;
  const double w = static_cast<double>(dataset.n1()) /
                   static_cast<double>(dataset.n0());
  ws.gamma = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dataset.n0()), w);
  ws.cluster_weights = Eigen::VectorXd::Constant(
      static_cast<Eigen::Index>(dataset.m_control()), w);
  ws.ess_control = static_cast<double>(dataset.n0());
  ws.solution_meta.converged = true;
  return ws;
}

SimResult run_study(const SimConfig& config) {
  if (config.n_reps < 1) throw ValidationError("n_reps must be >= 1");
  std::vector<RepRecord> records(static_cast<std::size_t>(config.n_reps));

  const int threads = std::max(1, config.threads);
  auto worker = [&](std::atomic<int>& counter) {
    for (;;) {
      const int rep = counter.fetch_add(1);
      if (rep >= config.n_reps) return;
      try {
        records[static_cast<std::size_t>(rep)] = run_replication(config, rep);
      } catch (const std::exception& e) {
        records[static_cast<std::size_t>(rep)].ok = false;
        records[static_cast<std::size_t>(rep)].error =
            "replication " + std::to_string(rep) + ": " + e.what();
      }
    }
  };
  if (threads == 1) {
    std::atomic<int> counter{0};
    worker(counter);
  } else {
    std::atomic<int> counter{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker, std::ref(counter));
    for (auto& t : pool) t.join();
  }

  SimResult result;
  for (const auto& rec : records) {
    if (!rec.ok) {
      ++result.n_failed;
      if (!rec.error.empty()) result.failures.push_back(rec.error);
      continue;
    }
    if (std::isfinite(rec.icc)) result.icc_by_rep.push_back(rec.icc);
  }
  if (!result.icc_by_rep.empty()) {
    const Eigen::Map<const Eigen::VectorXd> icc(result.icc_by_rep.data(),
                                                static_cast<Eigen::Index>(
                                                    result.icc_by_rep.size()));
    result.icc_mean = icc.mean();
    result.icc_sd = stats::sd(icc);
  }
  if (config.run_naive)
    result.estimators.push_back(aggregate("naive", records, &RepRecord::naive));
  if (config.run_balancing)
    result.estimators.push_back(
        aggregate("balancing", records, &RepRecord::balancing));
  if (config.run_subset)
    result.estimators.push_back(
        aggregate("subset_weights", records, &RepRecord::subset));
  return result;
}

}  // namespace cosbal
