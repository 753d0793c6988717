// Command line front end: fit balancing weights for clustered observational
// studies, estimate effects with cluster-robust uncertainty, emit balance
// diagnostics, and run the Monte Carlo study harness.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "cosbal/config.hpp"
#include "cosbal/csv.hpp"
#include "cosbal/diagnostics.hpp"
#include "cosbal/errors.hpp"
#include "cosbal/estimator.hpp"
#include "cosbal/ingest.hpp"
#include "cosbal/simulator.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace cosbal;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Overrides {
  std::string config_path;
  std::optional<std::string> mode;
  std::optional<double> icc;
  std::optional<double> noise_to_signal;
  std::optional<double> alpha;
  std::optional<std::string> estimand;
  std::optional<std::string> out_dir;
  std::optional<std::string> prefix;
  std::vector<double> overlap_c;
  std::vector<int> n_clusters;
  std::optional<int> reps;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;

  std::string fingerprint() const {
    std::ostringstream s;
    if (mode) s << " mode=" << *mode;
    if (icc) s << " icc=" << *icc;
    if (noise_to_signal) s << " noise_to_signal=" << *noise_to_signal;
    if (alpha) s << " alpha=" << *alpha;
    if (estimand) s << " estimand=" << *estimand;
    if (out_dir) s << " out_dir=" << *out_dir;
    if (prefix) s << " prefix=" << *prefix;
    for (const double c : overlap_c) s << " c=" << c;
    for (const int n : n_clusters) s << " clusters=" << n;
    if (reps) s << " reps=" << *reps;
    if (seed) s << " seed=" << *seed;
    if (threads) s << " threads=" << *threads;
    return s.str();
  }
};

RunConfig resolve_config(const Overrides& ov, bool config_required) {
  RunConfig cfg;
  if (!ov.config_path.empty()) {
    cfg = load_run_config(ov.config_path);
  } else if (config_required) {
    throw ConfigError("--config is required for this command");
  }
  if (ov.mode) cfg.mode = parse_balance_mode(*ov.mode);
  if (ov.icc || ov.noise_to_signal) {
    cfg.hyperparams.mode = HyperMode::manual;
    if (ov.icc) cfg.hyperparams.icc = *ov.icc;
    if (ov.noise_to_signal) cfg.hyperparams.noise_to_signal = *ov.noise_to_signal;
  }
  if (ov.alpha) cfg.estimate.alpha = *ov.alpha;
  if (ov.out_dir) cfg.output.dir = *ov.out_dir;
  if (ov.prefix) cfg.output.prefix = *ov.prefix;
  if (!ov.overlap_c.empty()) cfg.simulate.overlap_c = ov.overlap_c;
  if (!ov.n_clusters.empty()) cfg.simulate.n_clusters = ov.n_clusters;
  if (ov.reps) cfg.simulate.reps = *ov.reps;
  if (ov.seed) cfg.simulate.seed = *ov.seed;
  if (ov.threads) cfg.simulate.threads = *ov.threads;
  return cfg;
}

int resolve_threads(int configured) {
  if (configured > 0) return configured;
  if (const char* env = std::getenv("COSBAL_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

fs::path out_path(const RunConfig& cfg, const std::string& suffix) {
  return cfg.output.dir / (cfg.output.prefix + "_" + suffix);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void write_manifest(const RunConfig& cfg, const Overrides& ov,
                    const std::string& command,
                    const std::vector<std::string>& outputs) {
  json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["config_path"] = ov.config_path;
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a_hash(cfg.raw_text + ov.fingerprint())));
  m["config_hash"] = hex;
  m["overrides"] = ov.fingerprint();
  m["seed"] = cfg.simulate.seed;
  m["outputs"] = outputs;
  write_text(out_path(cfg, "manifest.json"), m.dump(2) + "\n");
}

json hyper_json(const HyperParams& hp) {
  json j;
  j["icc"] = hp.icc;
  j["noise_to_signal"] = hp.noise_to_signal;
  j["source"] =
      hp.source == HyperSource::estimated ? "estimated" : "user_supplied";
  return j;
}

struct FitBundle {
  CosDataset dataset;
  DesignMatrices features;
  HyperParams hyper;
  WeightSolution weights;
};

FitBundle run_pipeline(const RunConfig& cfg) {
  if (!cfg.schema) throw ConfigError("config is missing the schema section");
  if (cfg.mode == BalanceMode::cluster_only && cfg.features.include_unit)
    throw ConfigError(
        "balance.mode=cluster_only requires features.include_unit=false");
  FitBundle b{load_dataset(*cfg.schema), {}, {}, {}};
  b.features = build_features(b.dataset, cfg.features);
  for (const auto& w : b.features.warnings) std::cerr << "warning: " << w << "\n";
  b.hyper = cfg.hyperparams.resolve(b.dataset, b.features);
  for (const auto& w : b.hyper.warnings) std::cerr << "warning: " << w << "\n";
  BalanceSpec spec{cfg.mode, b.hyper, cfg.bounds};
  b.weights = fit(b.dataset, b.features, spec, cfg.solver);
  if (!b.weights.solution_meta.converged)
    std::cerr << "warning: solver did not converge (kkt residual "
              << b.weights.solution_meta.kkt_residual << ")\n";
  return b;
}

void write_weights_csv(const RunConfig& cfg, const FitBundle& b,
                       std::vector<std::string>& outputs) {
  csv::Writer w({"unit_id", "cluster_id", "treated", "weight"});
  for (std::size_t i = 0; i < b.dataset.n(); ++i) {
    const auto& u = b.dataset.units()[i];
    w.append_raw({u.unit_id, u.cluster_id,
                  b.dataset.unit_treated(i) ? "1" : "0",
                  csv::format_double(b.weights.unit_weight(b.dataset, i))});
  }
  const auto path = out_path(cfg, "weights.csv");
  w.save(path);
  outputs.push_back(path.filename().string());
}

void write_balance_outputs(const RunConfig& cfg, const FitBundle& b,
                           std::vector<std::string>& outputs) {
  const auto unadjusted = standardized_differences(b.dataset);
  const auto adjusted = standardized_differences(b.dataset, &b.weights);

  csv::Writer w({"covariate", "treated_mean", "control_mean", "std_diff",
                 "adj_control_mean", "adj_std_diff"});
  for (std::size_t i = 0; i < unadjusted.size(); ++i) {
    w.append_raw({unadjusted[i].covariate,
                  csv::format_double(unadjusted[i].treated_mean),
                  csv::format_double(unadjusted[i].control_mean),
                  csv::format_double(unadjusted[i].std_diff),
                  csv::format_double(adjusted[i].control_mean),
                  csv::format_double(adjusted[i].std_diff)});
  }
  const auto csv_path = out_path(cfg, "balance.csv");
  w.save(csv_path);
  outputs.push_back(csv_path.filename().string());

  std::string text = format_balance_table(unadjusted, &adjusted);
  const Eigen::VectorXd ctrl = [&] {
    Eigen::VectorXd g(static_cast<Eigen::Index>(b.dataset.n0()));
    for (std::size_t r = 0; r < b.dataset.control_units().size(); ++r)
      g[static_cast<Eigen::Index>(r)] =
          b.weights.unit_weight(b.dataset, b.dataset.control_units()[r]);
    return g;
  }();
  text += format_weight_summary(
      weight_summary(ctrl, cfg.output.large_weight_threshold),
      "control weights");
  if (b.weights.mode == BalanceMode::subset) {
    const Eigen::VectorXd trt = [&] {
      Eigen::VectorXd g(static_cast<Eigen::Index>(b.dataset.n1()));
      for (std::size_t r = 0; r < b.dataset.treated_units().size(); ++r)
        g[static_cast<Eigen::Index>(r)] =
            b.weights.unit_weight(b.dataset, b.dataset.treated_units()[r]);
      return g;
    }();
    text += format_weight_summary(
        weight_summary(trt, cfg.output.large_weight_threshold),
        "treated weights");

    const auto profile = estimand_profile(b.dataset, b.weights);
    text += "\n" + format_profile_table(profile);
    csv::Writer pw({"covariate", "treated_raw", "treated_weighted",
                    "control_raw", "control_weighted"});
    for (const auto& r : profile)
      pw.append_raw({r.covariate, csv::format_double(r.treated_raw),
                     csv::format_double(r.treated_weighted),
                     csv::format_double(r.control_raw),
                     csv::format_double(r.control_weighted)});
    const auto ppath = out_path(cfg, "profile.csv");
    pw.save(ppath);
    outputs.push_back(ppath.filename().string());
  }
  const auto txt_path = out_path(cfg, "balance.txt");
  write_text(txt_path, text);
  outputs.push_back(txt_path.filename().string());
  std::cout << text;
}

json weights_report(const FitBundle& b) {
  json j;
  j["mode"] = balance_mode_name(b.weights.mode);
  j["hyperparams"] = hyper_json(b.hyper);
  j["n"] = b.dataset.n();
  j["m"] = b.dataset.m();
  j["n1"] = b.dataset.n1();
  j["n0"] = b.dataset.n0();
  j["converged"] = b.weights.solution_meta.converged;
  j["iterations"] = b.weights.solution_meta.iterations;
  j["kkt_residual"] = b.weights.solution_meta.kkt_residual;
  j["objective_balance"] = b.weights.solution_meta.objective_balance;
  j["objective_penalty"] = b.weights.solution_meta.objective_penalty;
  j["ess_control"] = b.weights.ess_control;
  if (b.weights.ess_treated) j["ess_treated"] = *b.weights.ess_treated;
  j["features"] = b.features.feature_names;
  if (!b.features.dropped_features.empty())
    j["dropped_features"] = b.features.dropped_features;
  return j;
}

int cmd_weights(const Overrides& ov) {
  const auto cfg = resolve_config(ov, true);
  fs::create_directories(cfg.output.dir);
  const auto b = run_pipeline(cfg);

  std::vector<std::string> outputs;
  write_weights_csv(cfg, b, outputs);
  write_balance_outputs(cfg, b, outputs);

  const auto report = weights_report(b);
  write_text(out_path(cfg, "report.json"), report.dump(2) + "\n");
  outputs.push_back(out_path(cfg, "report.json").filename().string());
  write_manifest(cfg, ov, "weights", outputs);
  return b.weights.solution_meta.converged ? 0 : 2;
}

int cmd_estimate(const Overrides& ov) {
  const auto cfg = resolve_config(ov, true);
  fs::create_directories(cfg.output.dir);

  if (ov.estimand) {
    const bool want_ato = *ov.estimand == "ato";
    if (!want_ato && *ov.estimand != "att")
      throw ConfigError("--estimand must be att or ato");
    if (want_ato && cfg.mode != BalanceMode::subset)
      throw ConfigError("--estimand ato requires balance.mode=subset");
    if (!want_ato && cfg.mode == BalanceMode::subset)
      throw ConfigError("--estimand att requires balance.mode=unit or cluster_only");
  }

  const auto b = run_pipeline(cfg);

  EstimateOptions opts;
  opts.alpha = cfg.estimate.alpha;
  opts.ridge_lambda = cfg.estimate.ridge_lambda;
  opts.total_variance = cfg.estimate.total_variance;
  const auto est = estimate_effect(b.dataset, b.features, b.weights, opts);
  for (const auto& w : est.warnings) std::cerr << "warning: " << w << "\n";

  json j = weights_report(b);
  j["estimand"] = est.estimand == Estimand::att_unit      ? "att_unit"
                  : est.estimand == Estimand::att_cluster ? "att_cluster"
                                                          : "ato_subset";
  j["point"] = est.point;
  if (est.point_bias_corrected) j["point_bias_corrected"] = *est.point_bias_corrected;
  j["alpha"] = est.alpha;
  j["var_plugin"] = est.var_plugin;
  j["var_sandwich"] = est.var_sandwich;
  j["ci_plugin"] = {est.ci_plugin.first, est.ci_plugin.second};
  j["ci_sandwich"] = {est.ci_sandwich.first, est.ci_sandwich.second};
  if (est.var_plugin_total) {
    j["var_plugin_total"] = *est.var_plugin_total;
    j["var_sandwich_total"] = *est.var_sandwich_total;
    j["ci_plugin_total"] = {est.ci_plugin_total->first, est.ci_plugin_total->second};
    j["ci_sandwich_total"] = {est.ci_sandwich_total->first,
                              est.ci_sandwich_total->second};
  }
  j["imbalance_norm"] = est.imbalance_norm;
  j["se_plugin"] = std::sqrt(est.var_plugin);

  // Unit/cluster variance ratio diagnostic: refit with cluster-level
  // features and compare the two weightings at the estimated icc.
  if (cfg.estimate.design_effect && cfg.mode == BalanceMode::unit &&
      !b.dataset.cluster_covariate_names().empty()) {
    FeatureSpec cluster_spec = cfg.features;
    cluster_spec.include_unit = false;
    cluster_spec.interactions.clear();
    const auto cluster_features = build_features(b.dataset, cluster_spec);
    BalanceSpec cspec{BalanceMode::cluster_only, b.hyper, cfg.bounds};
    const auto cluster_ws = fit(b.dataset, cluster_features, cspec, cfg.solver);
    const double deff = design_effect(b.dataset, b.weights, cluster_ws, b.hyper.icc);
    j["design_effect"] = deff;
    const auto unit_fit =
        fit_random_intercept(b.dataset, b.features, cfg.hyperparams.options.side);
    const auto cluster_fit = fit_random_intercept(b.dataset, cluster_features,
                                                  cfg.hyperparams.options.side);
    const double sigma2 = unit_fit.var_cluster + unit_fit.var_unit;
    const double s2 = cluster_fit.var_cluster + cluster_fit.var_unit;
    if (s2 > 0.0) j["variance_ratio"] = sigma2 / s2 * deff;
  }

  write_text(out_path(cfg, "report.json"), j.dump(2) + "\n");

  std::ostringstream text;
  text << "estimand: " << j["estimand"].get<std::string>() << "\n";
  text << "point: " << est.point << "\n";
  if (est.point_bias_corrected)
    text << "bias corrected: " << *est.point_bias_corrected << "\n";
  text << "var plugin: " << est.var_plugin
       << "  ci [" << est.ci_plugin.first << ", " << est.ci_plugin.second << "]\n";
  text << "var sandwich: " << est.var_sandwich
       << "  ci [" << est.ci_sandwich.first << ", " << est.ci_sandwich.second
       << "]\n";
  text << "imbalance (l2): " << est.imbalance_norm
       << "  sqrt(var plugin): " << std::sqrt(est.var_plugin) << "\n";
  text << "ess control: " << est.ess_control << "\n";
  std::cout << text.str();

  std::vector<std::string> outputs;
  write_weights_csv(cfg, b, outputs);
  outputs.push_back(out_path(cfg, "report.json").filename().string());
  write_manifest(cfg, ov, "estimate", outputs);
  return b.weights.solution_meta.converged ? 0 : 2;
}

int cmd_balance(const Overrides& ov) {
  const auto cfg = resolve_config(ov, true);
  fs::create_directories(cfg.output.dir);
  const auto b = run_pipeline(cfg);
  std::vector<std::string> outputs;
  write_balance_outputs(cfg, b, outputs);
  write_manifest(cfg, ov, "balance", outputs);
  return b.weights.solution_meta.converged ? 0 : 2;
}

int cmd_simulate(const Overrides& ov) {
  const auto cfg = resolve_config(ov, false);
  fs::create_directories(cfg.output.dir);
  const int threads = resolve_threads(cfg.simulate.threads);

  const bool naive = std::count(cfg.simulate.estimators.begin(),
                                cfg.simulate.estimators.end(), "naive") > 0;
  const bool balancing = std::count(cfg.simulate.estimators.begin(),
                                    cfg.simulate.estimators.end(),
                                    "balancing") > 0;
  const bool subset = std::count(cfg.simulate.estimators.begin(),
                                 cfg.simulate.estimators.end(),
                                 "subset_weights") > 0;

  csv::Writer w({"overlap_c", "n_clusters", "estimator", "metric", "value"});
  std::ostringstream summary;
  summary << "reps=" << cfg.simulate.reps << " seed=" << cfg.simulate.seed
          << " threads=" << threads << "\n";

  for (const int m : cfg.simulate.n_clusters) {
    for (const double c : cfg.simulate.overlap_c) {
      SimConfig sc;
      sc.overlap_c = c;
      sc.n_reps = cfg.simulate.reps;
      sc.seed = cfg.simulate.seed;
      sc.n_clusters = m;
      sc.mean_cluster_size = cfg.simulate.mean_cluster_size;
      sc.tau_sd_multiplier = cfg.simulate.tau_sd_multiplier;
      sc.noise_sd = cfg.simulate.noise_sd;
      sc.icc_target = cfg.simulate.icc_target;
      sc.run_naive = naive;
      sc.run_balancing = balancing;
      sc.run_subset = subset;
      sc.resample = cfg.simulate.resample;
      sc.resample_base_clusters = cfg.simulate.resample_base_clusters;
      sc.solver = cfg.solver;
      sc.bounds = cfg.bounds;
      sc.threads = threads;
      const auto res = run_study(sc);

      const auto cs = csv::format_double(c);
      const auto ms = std::to_string(m);
      auto emit = [&](const std::string& est, const std::string& metric,
                      double value) {
        w.append_raw({cs, ms, est, metric, csv::format_double(value)});
      };
      for (const auto& est : res.estimators) {
        emit(est.name, "bias_std", est.bias_std);
        emit(est.name, "rmse_std", est.rmse_std);
        emit(est.name, "mean_se_plugin", est.mean_se_plugin);
        emit(est.name, "mean_se_sandwich", est.mean_se_sandwich);
        emit(est.name, "mean_ci_len_plugin", est.mean_ci_len_plugin);
        emit(est.name, "mean_ci_len_sandwich", est.mean_ci_len_sandwich);
        emit(est.name, "coverage_plugin", est.coverage_plugin);
        emit(est.name, "coverage_sandwich", est.coverage_sandwich);
        emit(est.name, "n_ok", static_cast<double>(est.n_ok));
        summary << "c=" << c << " m=" << m << " " << est.name
                << ": bias_std=" << est.bias_std << " rmse_std=" << est.rmse_std
                << " cover_plugin=" << est.coverage_plugin
                << " cover_sandwich=" << est.coverage_sandwich << "\n";
      }
      emit("", "icc_mean", res.icc_mean);
      emit("", "icc_sd", res.icc_sd);
      emit("", "n_failed", static_cast<double>(res.n_failed));
      summary << "c=" << c << " m=" << m << " icc=" << res.icc_mean << " (sd "
              << res.icc_sd << "), failed=" << res.n_failed << "\n";
      for (const auto& f : res.failures) std::cerr << "warning: " << f << "\n";
    }
  }

  const auto results_path = out_path(cfg, "sim_results.csv");
  w.save(results_path);
  const auto summary_path = out_path(cfg, "sim_summary.txt");
  write_text(summary_path, summary.str());
  std::cout << summary.str();
  write_manifest(cfg, ov, "simulate",
                 {results_path.filename().string(),
                  summary_path.filename().string()});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Approximate balancing weights for clustered observational studies"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Overrides ov;

  auto add_common = [&](CLI::App* sub, bool with_estimate_flags) {
    sub->add_option("--config", ov.config_path, "YAML run configuration");
    sub->add_option("--mode", ov.mode,
                    "balance mode: unit | cluster_only | subset");
    sub->add_option("--icc", ov.icc,
                    "manual intra-class correlation (switches hyperparams to manual)");
    sub->add_option("--noise-to-signal", ov.noise_to_signal,
                    "manual variance penalty scale (switches hyperparams to manual)");
    sub->add_option("--out-dir", ov.out_dir, "output directory");
    sub->add_option("--prefix", ov.prefix, "output file prefix");
    if (with_estimate_flags) {
      sub->add_option("--alpha", ov.alpha, "1-alpha confidence level (default 0.05)");
      sub->add_option("--estimand", ov.estimand, "att | ato");
    }
  };

  auto* weights = app.add_subcommand(
      "weights", "fit balancing weights and write weight/balance files");
  add_common(weights, false);

  auto* estimate = app.add_subcommand(
      "estimate", "fit weights and report effect estimates with intervals");
  add_common(estimate, true);

  auto* balance =
      app.add_subcommand("balance", "emit balance diagnostics for fitted weights");
  add_common(balance, false);

  auto* simulate = app.add_subcommand(
      "simulate", "run the synthetic Monte Carlo study over a scenario grid");
  simulate->add_option("--config", ov.config_path, "YAML run configuration");
  simulate->add_option("--c", ov.overlap_c, "overlap values (repeatable)")
      ->delimiter(',');
  simulate->add_option("--clusters", ov.n_clusters,
                       "cluster counts (repeatable)")
      ->delimiter(',');
  simulate->add_option("--reps", ov.reps, "replications per scenario");
  simulate->add_option("--seed", ov.seed, "master seed");
  simulate->add_option("--threads", ov.threads,
                       "worker threads (default: COSBAL_THREADS, then all cores)");
  simulate->add_option("--out-dir", ov.out_dir, "output directory");
  simulate->add_option("--prefix", ov.prefix, "output file prefix");

  auto* describe = app.add_subcommand(
      "describe-config", "print the configuration reference page");

  CLI11_PARSE(app, argc, argv);

  try {
    if (weights->parsed()) return cmd_weights(ov);
    if (estimate->parsed()) return cmd_estimate(ov);
    if (balance->parsed()) return cmd_balance(ov);
    if (simulate->parsed()) return cmd_simulate(ov);
    if (describe->parsed()) {
      std::cout << describe_config();
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
