#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "crimematch/density.hpp"
#include "crimematch/ingest.hpp"
#include "crimematch/treatment.hpp"

namespace crimematch::config {

struct StructureInput {
  std::string name;
  std::filesystem::path file;
  treatment::StructureKind kind = treatment::StructureKind::sparse;
};

struct RunConfig {
  std::filesystem::path base_dir;  // relative paths resolve against this

  std::filesystem::path tracts, boundaries, crimes;
  char delimiter = ',';
  std::vector<StructureInput> structures;
  ingest::TractSchema schema;
  std::vector<std::string> crime_categories;
  std::vector<ingest::Period> periods;
  std::string outcome_period = "S1";
  std::string outcome_attribute;  // nonempty: use this tract attribute instead of the crime rate
  std::string treatment_period;   // empty: same as outcome_period
  treatment::DropBand drop_band;

  std::size_t metric_k = 10;
  double metric_lambda = 0.01;
  std::size_t metric_budget = 200;
  double metric_tolerance = 1e-6;
  double metric_max_weight = 10.0;

  std::size_t repeats = 3;
  std::size_t folds = 5;
  std::size_t k_match = 10;
  int min_co_matches = 2;
  double prune_percentile = 95.0;

  double q_lo = 0.25;
  double q_hi = 0.75;
  std::size_t gbqr_rounds = 100;
  std::size_t gbqr_depth = 2;
  double gbqr_rate = 0.1;
  std::size_t gbqr_min_leaf = 5;
  double gbqr_subsample = 1.0;
  double heterogeneity_threshold = 0.5;

  bool density_enabled = true;
  std::vector<double> radii = density::RadiusGrid().radii();
  std::size_t n_samples = 20;
  double sample_radius_m = 750.0;
  density::Region region = density::Region::disc;
  bool inside_tract_only = false;

  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: hardware concurrency
  std::filesystem::path output_dir = "out";
  bool charts = true;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::size_t thread_count() const;
  const std::string& counts_period() const { return treatment_period.empty() ? outcome_period : treatment_period; }

  /// Named substreams of the master seed.
  std::uint64_t metric_seed() const;
  std::uint64_t folds_seed() const;
  std::uint64_t sampling_seed() const;
  std::uint64_t gbqr_seed() const;
};

/// Every key with its default value.
nlohmann::ordered_json default_json();

/// Applies `path.to.key=value`; the value is read as JSON when it parses,
/// otherwise as a string.
void apply_override(nlohmann::ordered_json& doc, std::string_view assignment);

/// Validates against default_json() (unknown keys and type mismatches are
/// config errors naming the dotted key) and fills a RunConfig.
RunConfig from_json(const nlohmann::ordered_json& doc, const std::filesystem::path& base_dir);

RunConfig load(const std::filesystem::path& file, const std::vector<std::string>& overrides = {});

/// Parameters as recorded in the report: everything except threads and output location.
nlohmann::ordered_json parameters_json(const RunConfig& config);

}  // namespace crimematch::config
