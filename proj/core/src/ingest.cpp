#include "cosbal/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "cosbal/csv.hpp"
#include "cosbal/errors.hpp"

namespace cosbal {

namespace {

constexpr const char* kCatPrefix = "cat:";

bool is_categorical(const std::string& name) {
  return name.rfind(kCatPrefix, 0) == 0;
}

std::string strip_prefix(const std::string& name) {
  return is_categorical(name) ? name.substr(4) : name;
}

std::string cell_ref(const csv::Table& t, std::size_t row, const std::string& col) {
  return t.path + " row " + std::to_string(row + 2) + " column '" + col + "'";
}

double parse_number(const csv::Table& t, std::size_t row, std::size_t col_idx,
                    const std::string& col_name) {
  const std::string& cell = t.rows[row][col_idx];
  if (cell.empty())
    throw MissingValueError("missing value at " + cell_ref(t, row, col_name));
  double v = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v))
    throw UnparseableValueError("cannot parse '" + cell + "' as a number at " +
                                cell_ref(t, row, col_name));
  return v;
}

std::string parse_string(const csv::Table& t, std::size_t row, std::size_t col_idx,
                         const std::string& col_name) {
  const std::string& cell = t.rows[row][col_idx];
  if (cell.empty())
    throw MissingValueError("missing value at " + cell_ref(t, row, col_name));
  return cell;
}

bool parse_treatment(const csv::Table& t, std::size_t row, std::size_t col_idx,
                     const std::string& col_name) {
  std::string cell = parse_string(t, row, col_idx, col_name);
  std::transform(cell.begin(), cell.end(), cell.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (cell == "1" || cell == "true") return true;
  if (cell == "0" || cell == "false") return false;
  throw UnparseableValueError("treatment must be 0/1/true/false, got '" +
                              t.rows[row][col_idx] + "' at " +
                              cell_ref(t, row, col_name));
}

// A covariate group: one numeric column, or the one-hot expansion of a
// categorical column with levels sorted for determinism.
struct CovariateGroup {
  std::string source;
  bool categorical = false;
  std::vector<std::string> levels;            // categorical only
  std::vector<std::string> expanded_names;    // output column names
};

std::vector<CovariateGroup> plan_groups(const csv::Table& t,
                                        const std::vector<std::string>& specs) {
  std::vector<CovariateGroup> groups;
  for (const auto& spec : specs) {
    CovariateGroup g;
    g.source = strip_prefix(spec);
    g.categorical = is_categorical(spec);
    const auto idx = t.column(g.source);
    if (g.categorical) {
      std::set<std::string> levels;
      for (std::size_t r = 0; r < t.rows.size(); ++r)
        levels.insert(parse_string(t, r, idx, g.source));
      g.levels.assign(levels.begin(), levels.end());
      for (const auto& lv : g.levels)
        g.expanded_names.push_back(g.source + "=" + lv);
    } else {
      g.expanded_names.push_back(g.source);
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

void append_values(const csv::Table& t, std::size_t row,
                   const std::vector<CovariateGroup>& groups,
                   std::vector<double>& out) {
  for (const auto& g : groups) {
    const auto idx = t.column(g.source);
    if (g.categorical) {
      const std::string v = parse_string(t, row, idx, g.source);
      for (const auto& lv : g.levels) out.push_back(lv == v ? 1.0 : 0.0);
    } else {
      out.push_back(parse_number(t, row, idx, g.source));
    }
  }
}

std::string aggregate_name(const AggregateSpec& spec) {
  return spec.column + (spec.aggregator == Aggregator::mean ? "_mean" : "_prop");
}

}  // namespace

void SchemaConfig::validate() const {
  if (unit_file.empty()) throw ConfigError("schema: unit_file is required");
  auto check_dups = [](const std::vector<std::string>& names, const char* what) {
    std::set<std::string> seen;
    for (const auto& n : names)
      if (!seen.insert(strip_prefix(n)).second)
        throw ConfigError(std::string("schema: column '") + strip_prefix(n) +
                          "' listed twice in " + what);
  };
  check_dups(unit_covariates, "unit_covariates");
  check_dups(cluster_covariates, "cluster_covariates");
  std::set<std::string> agg_seen;
  for (const auto& a : aggregate_unit_covariates)
    if (!agg_seen.insert(aggregate_name(a)).second)
      throw ConfigError("schema: aggregate '" + aggregate_name(a) +
                        "' listed twice");
  const std::set<std::string> reserved = {unit_id_column, cluster_id_column,
                                          treatment_column, outcome_column};
  for (const auto& n : unit_covariates)
    if (reserved.count(strip_prefix(n)))
      throw ConfigError("schema: column '" + strip_prefix(n) +
                        "' is both an id/outcome/treatment column and a covariate");
}

CosDataset load_dataset(const SchemaConfig& schema) {
  schema.validate();
  const csv::Table units_t = csv::read_file(schema.unit_file);

  const auto uid_idx = units_t.column(schema.unit_id_column);
  const auto ucl_idx = units_t.column(schema.cluster_id_column);
  const auto y_idx = units_t.column(schema.outcome_column);
  const auto unit_groups = plan_groups(units_t, schema.unit_covariates);

  std::vector<std::string> unit_cov_names;
  for (const auto& g : unit_groups)
    for (const auto& n : g.expanded_names) unit_cov_names.push_back(n);

  std::vector<UnitRecord> units;
  units.reserve(units_t.rows.size());
  for (std::size_t r = 0; r < units_t.rows.size(); ++r) {
    UnitRecord u;
    u.unit_id = parse_string(units_t, r, uid_idx, schema.unit_id_column);
    u.cluster_id = parse_string(units_t, r, ucl_idx, schema.cluster_id_column);
    u.y = parse_number(units_t, r, y_idx, schema.outcome_column);
    std::vector<double> x;
    append_values(units_t, r, unit_groups, x);
    u.x = Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    units.push_back(std::move(u));
  }

  // Treatment per cluster: from the cluster file when present, otherwise
  // from the unit file with a within-cluster constancy check.
  std::map<std::string, bool> treatment;
  std::map<std::string, std::vector<double>> file_covariates;
  std::vector<std::string> cluster_cov_names;

  if (schema.cluster_file) {
    const csv::Table clusters_t = csv::read_file(*schema.cluster_file);
    const auto cid_idx = clusters_t.column(schema.cluster_id_column);
    const auto trt_idx = clusters_t.column(schema.treatment_column);
    const auto cluster_groups = plan_groups(clusters_t, schema.cluster_covariates);
    for (const auto& g : cluster_groups)
      for (const auto& n : g.expanded_names) cluster_cov_names.push_back(n);
    for (std::size_t r = 0; r < clusters_t.rows.size(); ++r) {
      const std::string cid =
          parse_string(clusters_t, r, cid_idx, schema.cluster_id_column);
      if (treatment.count(cid))
        throw IngestError("duplicate cluster id '" + cid + "' in " +
                          clusters_t.path);
      treatment[cid] = parse_treatment(clusters_t, r, trt_idx,
                                       schema.treatment_column);
      std::vector<double> w;
      append_values(clusters_t, r, cluster_groups, w);
      file_covariates[cid] = std::move(w);
    }
    for (const auto& u : units)
      if (!treatment.count(u.cluster_id))
        throw IngestError("cluster '" + u.cluster_id +
                          "' from the unit file is absent from " +
                          clusters_t.path);
  } else {
    if (!schema.cluster_covariates.empty())
      throw ConfigError("schema: cluster_covariates given without cluster_file");
    const auto trt_idx = units_t.column(schema.treatment_column);
    for (std::size_t r = 0; r < units_t.rows.size(); ++r) {
      const std::string cid =
          parse_string(units_t, r, ucl_idx, schema.cluster_id_column);
      const bool a = parse_treatment(units_t, r, trt_idx, schema.treatment_column);
      auto [it, inserted] = treatment.emplace(cid, a);
      if (!inserted && it->second != a)
        throw NonConstantTreatmentError(
            "treatment is not constant within cluster '" + cid + "' (" +
            cell_ref(units_t, r, schema.treatment_column) + ")");
    }
  }

  // Aggregate unit columns into cluster covariates. Values are sorted
  // before summing so file row order cannot change the result.
  std::map<std::string, std::map<std::string, std::vector<double>>> agg_values;
  if (!schema.aggregate_unit_covariates.empty()) {
    for (const auto& spec : schema.aggregate_unit_covariates) {
      const auto col_idx = units_t.column(spec.column);
      for (std::size_t r = 0; r < units_t.rows.size(); ++r) {
        const std::string cid =
            parse_string(units_t, r, ucl_idx, schema.cluster_id_column);
        const double v = parse_number(units_t, r, col_idx, spec.column);
        if (spec.aggregator == Aggregator::proportion && v != 0.0 && v != 1.0)
          throw UnparseableValueError("proportion aggregate needs 0/1 values, got '" +
                                      units_t.rows[r][col_idx] + "' at " +
                                      cell_ref(units_t, r, spec.column));
        agg_values[aggregate_name(spec)][cid].push_back(v);
      }
    }
    for (const auto& spec : schema.aggregate_unit_covariates)
      cluster_cov_names.push_back(aggregate_name(spec));
  }

  std::vector<ClusterRecord> clusters;
  clusters.reserve(treatment.size());
  for (const auto& [cid, trt] : treatment) {
    ClusterRecord c;
    c.cluster_id = cid;
    c.treated = trt;
    std::vector<double> w;
    if (schema.cluster_file) {
      const auto it = file_covariates.find(cid);
      w = it->second;
    }
    for (const auto& spec : schema.aggregate_unit_covariates) {
      auto& vals = agg_values[aggregate_name(spec)][cid];
      if (vals.empty())
        throw IngestError("cluster '" + cid + "' has no units to aggregate");
      std::sort(vals.begin(), vals.end());
      double sum = 0.0;
      for (const double v : vals) sum += v;
      w.push_back(sum / static_cast<double>(vals.size()));
    }
    c.w = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    clusters.push_back(std::move(c));
  }

  return CosDataset::create(std::move(units), std::move(clusters),
                            std::move(unit_cov_names),
                            std::move(cluster_cov_names));
}

void write_dataset(const CosDataset& dataset,
                   const std::filesystem::path& unit_path,
                   const std::filesystem::path& cluster_path) {
  std::vector<std::string> uheader = {"unit_id", "cluster_id", "y"};
  for (const auto& n : dataset.unit_covariate_names()) uheader.push_back(n);
  csv::Writer uw(uheader);
  for (const auto& u : dataset.units()) {
    std::vector<std::string> row = {u.unit_id, u.cluster_id,
                                    csv::format_double(u.y)};
    for (Eigen::Index k = 0; k < u.x.size(); ++k)
      row.push_back(csv::format_double(u.x[k]));
    uw.append_raw(std::move(row));
  }
  uw.save(unit_path);

  std::vector<std::string> cheader = {"cluster_id", "treated"};
  for (const auto& n : dataset.cluster_covariate_names()) cheader.push_back(n);
  csv::Writer cw(cheader);
  for (const auto& c : dataset.clusters()) {
    std::vector<std::string> row = {c.cluster_id, c.treated ? "1" : "0"};
    for (Eigen::Index k = 0; k < c.w.size(); ++k)
      row.push_back(csv::format_double(c.w[k]));
    cw.append_raw(std::move(row));
  }
  cw.save(cluster_path);
}

SchemaConfig roundtrip_schema(const CosDataset& dataset,
                              const std::filesystem::path& unit_path,
                              const std::filesystem::path& cluster_path) {
  SchemaConfig schema;
  schema.unit_file = unit_path;
  schema.cluster_file = cluster_path;
  schema.unit_id_column = "unit_id";
  schema.cluster_id_column = "cluster_id";
  schema.treatment_column = "treated";
  schema.outcome_column = "y";
  schema.unit_covariates = dataset.unit_covariate_names();
  schema.cluster_covariates = dataset.cluster_covariate_names();
  return schema;
}

}  // namespace cosbal
