#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "crimematch/ingest.hpp"
#include "crimematch/treatment.hpp"

namespace crimematch::synth {

enum class CrimeProfile { uniform, peaked_at_structures };

std::string_view to_string(CrimeProfile profile);
CrimeProfile parse_crime_profile(std::string_view text);

struct SynthSpec {
  std::size_t n_tracts = 600;
  std::size_t n_covariates = 15;
  std::vector<std::size_t> relevant = {0, 1, 2, 3, 4};  // zero-based covariate indices
  /// Baseline outcome coefficients on the relevant covariates; empty selects
  /// baseline_scale * (1, 0.1, 0.1, ...), i.e. the first relevant covariate dominates.
  std::vector<double> baseline_coefficients;
  double baseline_scale = 0.4;
  double tau = 1.0;                      // constant part of CATE(x)
  std::vector<double> tau_coefficients;  // linear part, one per covariate (empty: none)
  double confounding_strength = 1.0;
  double noise_sd = 0.1;
  CrimeProfile crime_profile = CrimeProfile::uniform;
  std::uint64_t seed = 1;

  // Realization of outcome rates as crime points.
  std::int64_t population = 50;      // residents per tract; crime count = round(population * rate)
  double rate_offset = 5.0;          // added to every outcome so counts stay positive
  std::size_t structures_per_treated = 3;
  double peak_fraction = 0.5;        // share of a treated tract's crimes drawn near its structures
  double peak_sd_m = 60.0;
  double border_m = 0.0;             // width of a crime-only band around the grid at the mean tract density
  double origin_lat = 41.80;
  double origin_lon = -87.75;
  std::string structure_type = "structure";
  std::string period = "S1";
};

/// Per-tract ground truth, in geoid order.
struct Truth {
  std::vector<std::string> geoids;
  std::vector<std::uint8_t> treated;
  std::vector<double> true_cate;
  std::vector<double> baseline_coefficients;  // full length, zeros for irrelevant covariates
  double true_ate = 0.0;
  double naive_difference = 0.0;  // on the realized rates
  int bias_direction = 0;         // sign of the naive estimator's expected bias
  std::size_t border_crimes = 0;
};

struct Dataset {
  SynthSpec spec;
  std::vector<ingest::Tract> tracts;
  std::vector<ingest::EventPoint> crimes;
  std::vector<ingest::StructurePoint> structures;
  ingest::AnalysisTable table;
  treatment::Assignment assignment;
  Truth truth;
};

/// Fully deterministic given spec.seed.
Dataset generate(const SynthSpec& spec);

/// Writes tracts.csv, boundaries.geojson, crimes.csv, structures.csv,
/// truth.json and a matching config.json under `dir`.
void write_dataset(const Dataset& data, const std::filesystem::path& dir);

std::string truth_json(const Dataset& data);

}  // namespace crimematch::synth
