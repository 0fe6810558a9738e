#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "crimematch/gbqr.hpp"
#include "crimematch/matching.hpp"

namespace crimematch::estimate {

struct CateEstimate {
  std::string geoid;
  double value = 0.0;
  double variance = 0.0;
  std::vector<double> covariates;
};

using Outcomes = std::map<std::string, double, std::less<>>;

/// Mean treated-neighbor outcome minus mean control-neighbor outcome.
double cate(const matching::MatchedGroup& group, const Outcomes& outcomes);

/// Unweighted mean of the CATE values.
double ate(std::span<const CateEstimate> estimates);

/// Difference of arm means over all units, ignoring covariates.
double naive_difference(std::span<const double> outcomes, std::span<const std::uint8_t> treated);

struct VarianceParams {
  double q_lo = 0.25;
  double q_hi = 0.75;
  gbqr::Params gbqr;
};

struct VarianceResult {
  std::vector<CateEstimate> estimates;
  std::size_t crossings = 0;  // units where the fitted upper quantile fell below the lower one
  std::vector<std::string> log;
};

/// Fits upper and lower quantile models of the CATE on the covariates and sets
/// variance = (max(0, f_hi - f_lo) / 1.349)^2.
VarianceResult cate_variance(std::vector<CateEstimate> estimates, const VarianceParams& params = {});

struct ScanRow {
  std::string covariate;
  double slope = 0.0;
  double r2 = 0.0;
  bool substantial = false;
};

/// Univariate least squares of the CATE on each covariate in turn.
std::vector<ScanRow> heterogeneity_scan(std::span<const CateEstimate> estimates,
                                        const std::vector<std::string>& covariate_names, double threshold = 0.5);

struct RankedEffect {
  std::string structure;
  double value = 0.0;
  double sd = 0.0;
};

/// Descending by value, ties by name.
std::vector<RankedEffect> rank_by_ate(const std::map<std::string, std::pair<double, double>>& ates);

/// `geoid,cate,variance`
std::string to_csv(std::span<const CateEstimate> estimates);
/// `covariate,slope,r2,substantial`
std::string to_csv(std::span<const ScanRow> rows);
std::vector<CateEstimate> estimates_from_csv(std::string_view text);

}  // namespace crimematch::estimate
