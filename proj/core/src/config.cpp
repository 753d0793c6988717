#include "cosbal/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

#include "cosbal/errors.hpp"

namespace cosbal {

namespace {

void check_keys(const YAML::Node& node, const std::string& section,
                const std::set<std::string>& allowed) {
  if (!node || node.IsNull()) return;
  if (!node.IsMap())
    throw ConfigError("config section '" + section + "' must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key))
      throw ConfigError("unknown key '" + section + "." + key + "'");
  }
}

template <typename T>
T get(const YAML::Node& node, const std::string& key, T fallback) {
  if (!node || !node[key]) return fallback;
  try {
    return node[key].as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("bad value for '" + key + "'");
  }
}

double get_bound(const YAML::Node& node, const std::string& key, double fallback) {
  if (!node || !node[key]) return fallback;
  const auto text = node[key].as<std::string>();
  if (text == "inf" || text == ".inf" || text == "+inf")
    return std::numeric_limits<double>::infinity();
  if (text == "-inf" || text == "-.inf")
    return -std::numeric_limits<double>::infinity();
  try {
    return node[key].as<double>();
  } catch (const YAML::Exception&) {
    throw ConfigError("bad value for '" + key + "'");
  }
}

FitSide parse_side(const std::string& s) {
  if (s == "control_only") return FitSide::control_only;
  if (s == "pooled") return FitSide::pooled;
  throw ConfigError("hyperparams.fit_side must be control_only or pooled");
}

Aggregator parse_aggregator(const std::string& s) {
  if (s == "mean") return Aggregator::mean;
  if (s == "proportion") return Aggregator::proportion;
  throw ConfigError("aggregator must be mean or proportion");
}

}  // namespace

BalanceMode parse_balance_mode(const std::string& text) {
  if (text == "unit") return BalanceMode::unit;
  if (text == "cluster_only") return BalanceMode::cluster_only;
  if (text == "subset") return BalanceMode::subset;
  throw ConfigError("balance mode must be unit, cluster_only, or subset");
}

const char* balance_mode_name(BalanceMode mode) {
  switch (mode) {
    case BalanceMode::unit: return "unit";
    case BalanceMode::cluster_only: return "cluster_only";
    case BalanceMode::subset: return "subset";
  }
  return "?";
}

HyperParams HyperConfig::resolve(const CosDataset& dataset,
                                 const DesignMatrices& features) const {
  if (mode == HyperMode::manual) {
    HyperParams hp;
    hp.icc = icc;
    hp.noise_to_signal = noise_to_signal;
    hp.source = HyperSource::user_supplied;
    if (hp.icc < 0.0 || hp.icc > 1.0)
      throw ConfigError("hyperparams.icc must be in [0, 1]");
    if (hp.noise_to_signal < 0.0)
      throw ConfigError("hyperparams.noise_to_signal must be >= 0");
    return hp;
  }
  return heuristic_hyperparams(dataset, features, options);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();

  RunConfig cfg;
  cfg.raw_text = buf.str();

  YAML::Node root;
  try {
    root = YAML::Load(cfg.raw_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
  if (root.IsDefined() && !root.IsNull() && !root.IsMap())
    throw ConfigError("config root must be a mapping");
  check_keys(root, "top level",
             {"schema", "features", "hyperparams", "solver", "balance",
              "estimate", "simulate", "output"});

  if (const auto s = root["schema"]) {
    check_keys(s, "schema",
               {"unit_file", "cluster_file", "unit_id", "cluster_id",
                "treatment", "outcome", "unit_covariates", "cluster_covariates",
                "aggregate_unit_covariates"});
    SchemaConfig schema;
    schema.unit_file = get<std::string>(s, "unit_file", "");
    if (s["cluster_file"])
      schema.cluster_file = s["cluster_file"].as<std::string>();
    schema.unit_id_column = get<std::string>(s, "unit_id", "unit_id");
    schema.cluster_id_column = get<std::string>(s, "cluster_id", "cluster_id");
    schema.treatment_column = get<std::string>(s, "treatment", "treated");
    schema.outcome_column = get<std::string>(s, "outcome", "y");
    schema.unit_covariates =
        get<std::vector<std::string>>(s, "unit_covariates", {});
    schema.cluster_covariates =
        get<std::vector<std::string>>(s, "cluster_covariates", {});
    if (const auto aggs = s["aggregate_unit_covariates"]) {
      for (const auto& a : aggs) {
        AggregateSpec spec;
        spec.column = get<std::string>(a, "column", "");
        spec.aggregator = parse_aggregator(get<std::string>(a, "aggregator", "mean"));
        if (spec.column.empty())
          throw ConfigError("aggregate_unit_covariates entries need a column");
        schema.aggregate_unit_covariates.push_back(std::move(spec));
      }
    }
    // Paths are relative to the config file's directory.
    const auto base = path.parent_path();
    if (!schema.unit_file.empty() && schema.unit_file.is_relative())
      schema.unit_file = base / schema.unit_file;
    if (schema.cluster_file && schema.cluster_file->is_relative())
      schema.cluster_file = base / *schema.cluster_file;
    cfg.schema = std::move(schema);
  }

  if (const auto f = root["features"]) {
    check_keys(f, "features",
               {"include_unit", "standardize", "polynomial_degree", "interactions"});
    cfg.features.include_unit = get<bool>(f, "include_unit", true);
    cfg.features.standardize = get<bool>(f, "standardize", true);
    cfg.features.polynomial_degree = get<int>(f, "polynomial_degree", 1);
    if (const auto inter = f["interactions"]) {
      for (const auto& pair : inter) {
        if (!pair.IsSequence() || pair.size() != 2)
          throw ConfigError("features.interactions entries must be [cluster_cov, unit_cov]");
        cfg.features.interactions.emplace_back(pair[0].as<std::string>(),
                                               pair[1].as<std::string>());
      }
    }
  }

  if (const auto h = root["hyperparams"]) {
    check_keys(h, "hyperparams",
               {"mode", "icc", "noise_to_signal", "fit_side", "holdout_fraction",
                "holdout_seed", "ratio_cap", "signal"});
    const auto mode = get<std::string>(h, "mode", "heuristic");
    if (mode == "heuristic")
      cfg.hyperparams.mode = HyperMode::heuristic;
    else if (mode == "manual")
      cfg.hyperparams.mode = HyperMode::manual;
    else
      throw ConfigError("hyperparams.mode must be heuristic or manual");
    cfg.hyperparams.icc = get<double>(h, "icc", 0.0);
    cfg.hyperparams.noise_to_signal = get<double>(h, "noise_to_signal", 1.0);
    cfg.hyperparams.options.side =
        parse_side(get<std::string>(h, "fit_side", "control_only"));
    cfg.hyperparams.options.holdout_fraction =
        get<double>(h, "holdout_fraction", 0.0);
    cfg.hyperparams.options.holdout_seed =
        get<std::uint64_t>(h, "holdout_seed", 1);
    cfg.hyperparams.options.ratio_cap = get<double>(h, "ratio_cap", 1e6);
    const auto signal = get<std::string>(h, "signal", "norm_sq");
    if (signal == "norm_sq")
      cfg.hyperparams.options.signal_sum_sq = false;
    else if (signal == "sum_sq")
      cfg.hyperparams.options.signal_sum_sq = true;
    else
      throw ConfigError("hyperparams.signal must be norm_sq or sum_sq");
  }

  if (const auto s = root["solver"]) {
    check_keys(s, "solver", {"max_iter", "tol", "lower_bound", "upper_bound"});
    cfg.solver.max_iter = get<int>(s, "max_iter", 10000);
    cfg.solver.tol = get<double>(s, "tol", 1e-8);
    cfg.bounds.lower = get_bound(s, "lower_bound", 0.0);
    cfg.bounds.upper =
        get_bound(s, "upper_bound", std::numeric_limits<double>::infinity());
    if (cfg.solver.max_iter < 1) throw ConfigError("solver.max_iter must be >= 1");
    if (cfg.solver.tol <= 0.0) throw ConfigError("solver.tol must be > 0");
  }

  if (const auto b = root["balance"]) {
    check_keys(b, "balance", {"mode"});
    cfg.mode = parse_balance_mode(get<std::string>(b, "mode", "unit"));
  }

  if (const auto e = root["estimate"]) {
    check_keys(e, "estimate",
               {"alpha", "ridge_lambda", "total_variance", "design_effect"});
    cfg.estimate.alpha = get<double>(e, "alpha", 0.05);
    if (cfg.estimate.alpha <= 0.0 || cfg.estimate.alpha >= 1.0)
      throw ConfigError("estimate.alpha must be in (0, 1)");
    if (e["ridge_lambda"]) {
      const auto text = e["ridge_lambda"].as<std::string>();
      cfg.estimate.ridge_lambda = text == "auto" ? -1.0 : e["ridge_lambda"].as<double>();
    }
    cfg.estimate.total_variance = get<bool>(e, "total_variance", false);
    cfg.estimate.design_effect = get<bool>(e, "design_effect", true);
  }

  if (const auto s = root["simulate"]) {
    check_keys(s, "simulate",
               {"overlap_c", "n_clusters", "reps", "seed", "mean_cluster_size",
                "tau_sd_multiplier", "noise_sd", "icc_target", "estimators",
                "resample", "resample_base_clusters", "threads"});
    cfg.simulate.overlap_c =
        get<std::vector<double>>(s, "overlap_c", cfg.simulate.overlap_c);
    cfg.simulate.n_clusters =
        get<std::vector<int>>(s, "n_clusters", cfg.simulate.n_clusters);
    cfg.simulate.reps = get<int>(s, "reps", cfg.simulate.reps);
    cfg.simulate.seed = get<std::uint64_t>(s, "seed", cfg.simulate.seed);
    cfg.simulate.mean_cluster_size =
        get<int>(s, "mean_cluster_size", cfg.simulate.mean_cluster_size);
    cfg.simulate.tau_sd_multiplier =
        get<double>(s, "tau_sd_multiplier", cfg.simulate.tau_sd_multiplier);
    cfg.simulate.noise_sd = get<double>(s, "noise_sd", cfg.simulate.noise_sd);
    cfg.simulate.icc_target = get<double>(s, "icc_target", cfg.simulate.icc_target);
    cfg.simulate.estimators =
        get<std::vector<std::string>>(s, "estimators", cfg.simulate.estimators);
    cfg.simulate.resample = get<bool>(s, "resample", false);
    cfg.simulate.resample_base_clusters =
        get<int>(s, "resample_base_clusters", 44);
    cfg.simulate.threads = get<int>(s, "threads", 0);
    for (const double c : cfg.simulate.overlap_c)
      if (c <= 0.0) throw ConfigError("simulate.overlap_c entries must be > 0");
    if (cfg.simulate.reps < 1) throw ConfigError("simulate.reps must be >= 1");
    for (const auto& name : cfg.simulate.estimators)
      if (name != "naive" && name != "balancing" && name != "subset_weights")
        throw ConfigError("simulate.estimators entries must be naive, balancing, or subset_weights");
  }

  if (const auto o = root["output"]) {
    check_keys(o, "output", {"dir", "prefix", "large_weight_threshold"});
    cfg.output.dir = get<std::string>(o, "dir", ".");
    cfg.output.prefix = get<std::string>(o, "prefix", "run");
    cfg.output.large_weight_threshold =
        get<double>(o, "large_weight_threshold", 10.0);
    if (cfg.output.dir.is_relative())
      cfg.output.dir = path.parent_path() / cfg.output.dir;
  }

  return cfg;
}

std::uint64_t fnv1a_hash(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string describe_config() {
  return R"(Configuration reference (YAML). All sections and keys are optional
unless a command requires them; relative paths resolve against the config
file location.

schema:                     # data binding; required by weights/estimate/balance
  unit_file: units.csv      # CSV with one row per unit (header required)
  cluster_file: clusters.csv# optional CSV with one row per cluster
  unit_id: unit_id          # unit id column name
  cluster_id: cluster_id    # cluster id column name (both files)
  treatment: treated        # 0/1/true/false; in cluster_file when present
  outcome: y                # numeric outcome column in unit_file
  unit_covariates: [read]   # numeric columns; prefix cat: to one-hot expand
  cluster_covariates: []    # columns in cluster_file; cat: allowed
  aggregate_unit_covariates:# synthesized cluster covariates
    - {column: read, aggregator: mean}        # mean | proportion (0/1 only)

features:
  include_unit: true        # false = cluster-level covariates only
  standardize: true         # pooled mean-0/sd-1 scaling per feature
  polynomial_degree: 1      # 1 | 2 (2 adds squares and cross products)
  interactions: []          # [[cluster_cov, unit_cov], ...]

hyperparams:
  mode: heuristic           # heuristic | manual
  icc: 0.0                  # manual mode: intra-class correlation in [0,1]
  noise_to_signal: 1.0      # manual mode: variance penalty scale >= 0
  fit_side: control_only    # control_only | pooled
  holdout_fraction: 0.0     # fit the heuristic on a random cluster subset
  holdout_seed: 1
  ratio_cap: 1e6            # noise_to_signal when the fitted signal is ~0
  signal: norm_sq           # norm_sq | sum_sq (squared coefficient sum)

solver:
  max_iter: 10000
  tol: 1e-8                 # projected-gradient infinity-norm tolerance
  lower_bound: 0            # per-weight lower bound (-inf allowed)
  upper_bound: .inf         # per-weight upper bound

balance:
  mode: unit                # unit | cluster_only | subset

estimate:
  alpha: 0.05               # 1-alpha confidence level
  ridge_lambda: auto        # outcome model ridge; auto = 1e-3*tr(psi'psi)/d
  total_variance: false     # add treated-arm residual variance to the CI
  design_effect: true       # report the unit/cluster variance ratio

simulate:
  overlap_c: [1, 2.5, 7.5, 10]   # propensity scale; small = poor overlap
  n_clusters: [44]
  reps: 200
  seed: 94025
  mean_cluster_size: 78
  tau_sd_multiplier: 0.3    # true effect in pre-noise outcome sd units
  noise_sd: 12
  icc_target: 0.29          # cluster share of the outcome noise variance
  estimators: [naive, balancing, subset_weights]
  resample: false           # resample clusters from a base population
  resample_base_clusters: 44
  threads: 0                # 0 = COSBAL_THREADS env var, then all cores

output:
  dir: .
  prefix: run
  large_weight_threshold: 10
)";
}

}  // namespace cosbal
