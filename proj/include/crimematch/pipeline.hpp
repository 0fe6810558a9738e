#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "crimematch/config.hpp"
#include "crimematch/density.hpp"
#include "crimematch/estimate.hpp"
#include "crimematch/ingest.hpp"
#include "crimematch/matching.hpp"
#include "crimematch/treatment.hpp"

namespace crimematch::pipeline {

/// Diagnostics in emission order; also echoed to stderr when `echo` is set.
struct Log {
  std::vector<std::string> lines;
  bool echo = false;
  void add(std::string line);
};

struct IngestResult {
  ingest::AnalysisTable table;
  std::vector<ingest::EventPoint> violent_crimes;
  std::map<std::string, std::vector<ingest::StructurePoint>> structures;
  std::size_t crimes_read = 0;
  std::size_t skipped_rows = 0;
  std::size_t unpopulated_dropped = 0;
};

IngestResult run_ingest(const config::RunConfig& config, Log& log);

treatment::Assignment run_treat(const ingest::AnalysisTable& table, const config::StructureInput& structure,
                                const config::RunConfig& config, Log& log);

/// Units entering matching: every non-dropped tract, in geoid order.
struct UnitTable {
  std::vector<std::string> geoids;
  metric::UnitSet units;
};
UnitTable build_units(const ingest::AnalysisTable& table, const treatment::Assignment& assignment,
                      const config::RunConfig& config);
double outcome_of(const ingest::Tract& tract, const config::RunConfig& config);

struct MatchResult {
  std::vector<matching::RunResult> runs;
  matching::ConsensusResult consensus;
  matching::PruneResult pruned;
  metric::LearnedMetric pooled;
};
MatchResult run_match(const UnitTable& units, const config::RunConfig& config, Log& log);

struct EstimateResult {
  std::vector<estimate::CateEstimate> estimates;
  double ate = 0.0;
  double ate_sd = 0.0;
  double naive_difference = 0.0;
  std::size_t crossings = 0;
};
EstimateResult run_estimate(const ingest::AnalysisTable& table, std::span<const matching::MatchedGroup> groups,
                            const UnitTable& units, const config::RunConfig& config, Log& log);

density::DensityCurve run_density(const IngestResult& ingested, const treatment::Assignment& assignment,
                                  std::span<const matching::MatchedGroup> groups, const std::string& structure,
                                  const config::RunConfig& config, Log& log);

std::vector<estimate::ScanRow> run_heterogeneity(std::span<const estimate::CateEstimate> estimates,
                                                 const ingest::AnalysisTable& table, const config::RunConfig& config);

/// Stage output file names under the output directory.
std::string file_stem(const std::string& structure);
std::filesystem::path table_file(const config::RunConfig& config);
std::filesystem::path treatment_file(const config::RunConfig& config, const std::string& structure);
std::filesystem::path groups_file(const config::RunConfig& config, const std::string& structure);
std::filesystem::path cate_file(const config::RunConfig& config, const std::string& structure);
std::filesystem::path density_file(const config::RunConfig& config, const std::string& structure);
std::filesystem::path heterogeneity_file(const config::RunConfig& config, const std::string& structure);
std::filesystem::path report_file(const config::RunConfig& config);

/// All stages for every configured structure type. Writes every stage file
/// plus report.json and returns the report. On failure a FAILED marker holding
/// the diagnostic is written before the error propagates.
nlohmann::ordered_json run_pipeline(const config::RunConfig& config, Log& log);

/// Stage subcommands: each reads the previous stage's files from the output
/// directory (ingest reads the raw inputs) and writes its own.
void stage_ingest(const config::RunConfig& config, Log& log);
void stage_treat(const config::RunConfig& config, Log& log);
void stage_match(const config::RunConfig& config, Log& log);
void stage_estimate(const config::RunConfig& config, Log& log);
void stage_density(const config::RunConfig& config, Log& log);
void stage_heterogeneity(const config::RunConfig& config, Log& log);

void write_failed_marker(const config::RunConfig& config, const std::string& message);
void clear_failed_marker(const config::RunConfig& config);

/// Runs `body`, writing the FAILED marker if it throws.
template <typename Body>
void guarded(const config::RunConfig& config, Body&& body) {
  try {
    clear_failed_marker(config);
    body();
  } catch (const std::exception& e) {
    write_failed_marker(config, e.what());
    throw;
  }
}

}  // namespace crimematch::pipeline
