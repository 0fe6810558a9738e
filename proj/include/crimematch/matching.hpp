#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crimematch/metric.hpp"

namespace crimematch::matching {

/// R independent shuffled partitions of the units into F near-equal folds.
struct FoldPlan {
  std::size_t repeats = 0;
  std::size_t folds = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> geoids;
  std::vector<std::vector<std::size_t>> assignment;  // [repeat][unit] -> fold

  /// Unit indices in (repeat, fold), ascending.
  std::vector<std::size_t> members(std::size_t repeat, std::size_t fold) const;
};

FoldPlan build_folds(std::vector<std::string> geoids, std::size_t repeats, std::size_t folds, std::uint64_t seed);

struct EstimationUnit {
  std::string geoid;
  std::vector<double> covariates;
  bool treated = false;
};

struct Neighbor {
  std::string geoid;
  int co_match = 1;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct MatchedGroup {
  std::string query;
  std::vector<Neighbor> treated_neighbors;  // sorted by geoid
  std::vector<Neighbor> control_neighbors;  // sorted by geoid
  double diameter = 0.0;
};

/// For every unit in the fold: its K nearest treated and K nearest control
/// units (itself excluded) under the metric, ties to the smaller geoid. A
/// fold with fewer than K units in either arm yields no groups and a warning.
std::vector<MatchedGroup> match_fold(const metric::LearnedMetric& metric, std::span<const EstimationUnit> units,
                                     std::size_t k, std::vector<std::string>* warnings = nullptr);

struct RunOutput {
  std::size_t repeat = 0;
  std::size_t fold = 0;
  std::vector<MatchedGroup> groups;
};

struct ConsensusResult {
  std::vector<MatchedGroup> groups;  // sorted by query
  std::size_t dropped_units = 0;     // queries left with an empty arm
};

/// Keeps (i, j) when j was in i's group in at least `min_count` of the runs
/// where i was an estimation unit.
ConsensusResult consensus_match(std::span<const RunOutput> runs, int min_count);

using CovariateLookup = std::map<std::string, std::vector<double>>;

/// Linear-interpolation percentile (p in [0, 100]) of `values`.
double percentile(std::vector<double> values, double p);

struct PruneResult {
  std::vector<MatchedGroup> groups;
  std::size_t pruned = 0;
  double cutoff = 0.0;
};

/// Sets each group's diameter (largest metric distance from the query to any
/// neighbor) and removes groups whose diameter exceeds the given percentile
/// of all diameters. percentile must lie in (0, 100].
PruneResult diameter_and_prune(std::vector<MatchedGroup> groups, const metric::LearnedMetric& metric,
                               const CovariateLookup& covariates, double percentile);

struct CrossValidationParams {
  std::size_t repeats = 3;
  std::size_t folds = 5;
  std::size_t k_match = 10;
  metric::MetricParams metric;  // seed is replaced per run
  std::uint64_t seed = 0;       // metric-learning substream
  std::size_t threads = 1;
};

struct RunResult {
  RunOutput output;
  metric::LearnedMetric metric;
  std::vector<std::string> warnings;
};

/// For each (repeat, fold): learn the metric on the other folds and match
/// within the held-out fold. `units` rows must be in geoid order.
std::vector<RunResult> cross_validate(const std::vector<std::string>& geoids, const metric::UnitSet& units,
                                      const FoldPlan& plan, const CrossValidationParams& params);

/// Metric used for diameters after consensus: mean of the per-run weights with
/// a standardizer fitted on every unit.
metric::LearnedMetric pooled_metric(std::span<const RunResult> runs, const metric::Matrix& all_covariates);

/// `query_geoid,neighbor_geoid,arm,co_match_count,diameter`
std::string to_csv(std::span<const MatchedGroup> groups);
std::vector<MatchedGroup> groups_from_csv(std::string_view text);

}  // namespace crimematch::matching
