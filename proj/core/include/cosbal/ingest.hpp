#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cosbal/dataset.hpp"

namespace cosbal {

enum class Aggregator { mean, proportion };

struct AggregateSpec {
  std::string column;
  Aggregator aggregator = Aggregator::mean;
};

// Binds file columns to the data model. Covariate entries may be prefixed
// with "cat:" to one-hot expand a categorical column; everything else must
// parse as a finite number. When cluster_file is absent, cluster covariates
// come solely from the unit-level aggregates.
struct SchemaConfig {
  std::filesystem::path unit_file;
  std::optional<std::filesystem::path> cluster_file;
  std::string unit_id_column = "unit_id";
  std::string cluster_id_column = "cluster_id";
  std::string treatment_column = "treated";
  std::string outcome_column = "y";
  std::vector<std::string> unit_covariates;
  std::vector<std::string> cluster_covariates;
  std::vector<AggregateSpec> aggregate_unit_covariates;

  void validate() const;  // no column listed twice, ids distinct, files named
};

// Reads the files, expands categoricals, synthesizes aggregate cluster
// covariates (order-independent: member values are sorted before summing),
// and assembles a validated dataset. Missing or unparseable cells and
// treatment that varies within a cluster are hard errors naming the
// offending row and column.
CosDataset load_dataset(const SchemaConfig& schema);

// Serialization counterpart: writes a unit CSV (unit_id, cluster_id,
// outcome, unit covariates) and a cluster CSV (cluster_id, treated, cluster
// covariates). Numbers round-trip exactly.
void write_dataset(const CosDataset& dataset,
                   const std::filesystem::path& unit_path,
                   const std::filesystem::path& cluster_path);

// Schema that reads back the files produced by write_dataset.
SchemaConfig roundtrip_schema(const CosDataset& dataset,
                              const std::filesystem::path& unit_path,
                              const std::filesystem::path& cluster_path);

}  // namespace cosbal
