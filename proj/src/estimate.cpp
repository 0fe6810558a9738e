#include "crimematch/estimate.hpp"

#include <algorithm>
#include <cmath>

#include "crimematch/csv.hpp"
#include "crimematch/error.hpp"

namespace crimematch::estimate {

namespace {

constexpr const char* kModule = "estimate";
constexpr double kIqrPerSd = 1.349;

double arm_mean(const std::vector<matching::Neighbor>& arm, const Outcomes& outcomes) {
  double sum = 0.0;
  for (const auto& n : arm) {
    auto it = outcomes.find(n.geoid);
    if (it == outcomes.end()) throw Error(ErrorKind::data, kModule, "no outcome for tract " + n.geoid);
    sum += it->second;
  }
  return sum / static_cast<double>(arm.size());
}

}  // namespace

double cate(const matching::MatchedGroup& group, const Outcomes& outcomes) {
  if (group.treated_neighbors.empty() || group.control_neighbors.empty()) {
    throw Error(ErrorKind::data, kModule, "matched group for " + group.query + " has an empty arm");
  }
  return arm_mean(group.treated_neighbors, outcomes) - arm_mean(group.control_neighbors, outcomes);
}

double ate(std::span<const CateEstimate> estimates) {
  if (estimates.empty()) throw Error(ErrorKind::data, kModule, "no CATE estimates to average");
  double sum = 0.0;
  for (const auto& e : estimates) sum += e.value;
  const double mean = sum / static_cast<double>(estimates.size());
  if (!std::isfinite(mean)) throw Error(ErrorKind::numeric, kModule, "ATE is not finite");
  return mean;
}

double naive_difference(std::span<const double> outcomes, std::span<const std::uint8_t> treated) {
  double sums[2] = {0, 0};
  std::size_t counts[2] = {0, 0};
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const int arm = treated[i] ? 1 : 0;
    sums[arm] += outcomes[i];
    ++counts[arm];
  }
  if (counts[0] == 0 || counts[1] == 0) throw Error(ErrorKind::data, kModule, "naive difference needs both arms");
  return sums[1] / static_cast<double>(counts[1]) - sums[0] / static_cast<double>(counts[0]);
}

VarianceResult cate_variance(std::vector<CateEstimate> estimates, const VarianceParams& params) {
  if (!(params.q_lo < params.q_hi)) throw Error(ErrorKind::config, kModule, "q_lo must be below q_hi");
  VarianceResult result;
  if (estimates.empty()) return result;
  metric::Matrix x;
  std::vector<double> y;
  y.reserve(estimates.size());
  for (const auto& e : estimates) {
    x.append_row(e.covariates);
    y.push_back(e.value);
  }
  const auto lo = gbqr::fit(x, y, params.q_lo, params.gbqr);
  const auto hi = gbqr::fit(x, y, params.q_hi, params.gbqr);
  for (const auto* m : {&lo, &hi}) {
    for (const auto& line : m->log) result.log.push_back("q=" + csv::format_double(m->quantile) + ": " + line);
  }
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double spread = hi.predict(x.row(i)) - lo.predict(x.row(i));
    if (spread < 0) ++result.crossings;
    const double sd = std::max(0.0, spread) / kIqrPerSd;
    estimates[i].variance = sd * sd;
  }
  if (result.crossings > 0) {
    result.log.push_back(std::to_string(result.crossings) + " crossing quantile predictions clamped to zero spread");
  }
  result.estimates = std::move(estimates);
  return result;
}

std::vector<ScanRow> heterogeneity_scan(std::span<const CateEstimate> estimates,
                                        const std::vector<std::string>& covariate_names, double threshold) {
  if (estimates.size() < 3) throw Error(ErrorKind::data, kModule, "heterogeneity scan needs at least 3 estimates");
  const std::size_t p = covariate_names.size();
  const auto n = static_cast<double>(estimates.size());
  double y_mean = 0.0;
  for (const auto& e : estimates) {
    if (e.covariates.size() != p) throw Error(ErrorKind::data, kModule, "covariate count mismatch for " + e.geoid);
    y_mean += e.value;
  }
  y_mean /= n;
  double syy = 0.0;
  for (const auto& e : estimates) syy += (e.value - y_mean) * (e.value - y_mean);

  std::vector<ScanRow> rows;
  rows.reserve(p);
  for (std::size_t d = 0; d < p; ++d) {
    double x_mean = 0.0;
    for (const auto& e : estimates) x_mean += e.covariates[d];
    x_mean /= n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& e : estimates) {
      const double dx = e.covariates[d] - x_mean;
      sxx += dx * dx;
      sxy += dx * (e.value - y_mean);
    }
    ScanRow row{covariate_names[d], 0.0, 0.0, false};
    const double scale = std::max(1.0, std::abs(x_mean));
    if (sxx > 1e-24 * n * scale * scale) {
      row.slope = sxy / sxx;
      row.r2 = syy > 0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 0.0;
    }
    row.substantial = row.r2 >= threshold;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<RankedEffect> rank_by_ate(const std::map<std::string, std::pair<double, double>>& ates) {
  std::vector<RankedEffect> out;
  out.reserve(ates.size());
  for (const auto& [name, v] : ates) out.push_back({name, v.first, v.second});
  std::stable_sort(out.begin(), out.end(), [](const RankedEffect& a, const RankedEffect& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.structure < b.structure;
  });
  return out;
}

std::string to_csv(std::span<const CateEstimate> estimates) {
  std::string out = "geoid,cate,variance\n";
  for (const auto& e : estimates) {
    out += csv::escape(e.geoid) + ',' + csv::format_double(e.value) + ',' + csv::format_double(e.variance) + '\n';
  }
  return out;
}

std::string to_csv(std::span<const ScanRow> rows) {
  std::string out = "covariate,slope,r2,substantial\n";
  for (const auto& r : rows) {
    out += csv::escape(r.covariate) + ',' + csv::format_double(r.slope) + ',' + csv::format_double(r.r2) + ',' +
           (r.substantial ? "true" : "false") + '\n';
  }
  return out;
}

std::vector<CateEstimate> estimates_from_csv(std::string_view text) {
  std::vector<CateEstimate> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    auto fields = csv::split_line(line, ',');
    if (fields.size() != 3) {
      throw Error(ErrorKind::data, kModule, "estimates line " + std::to_string(line_no) + ": expected 3 fields");
    }
    auto value = csv::parse_double(fields[1]);
    auto variance = csv::parse_double(fields[2]);
    if (!value || !variance) {
      throw Error(ErrorKind::data, kModule, "estimates line " + std::to_string(line_no) + ": bad number");
    }
    out.push_back({fields[0], *value, *variance, {}});
  }
  return out;
}

}  // namespace crimematch::estimate
