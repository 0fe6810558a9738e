#include "crimematch/matching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "crimematch/csv.hpp"
#include "crimematch/error.hpp"
#include "crimematch/kernels.hpp"
#include "crimematch/parallel.hpp"
#include "crimematch/rng.hpp"

namespace crimematch::matching {

namespace {

constexpr const char* kModule = "matching";

bool by_geoid(const Neighbor& a, const Neighbor& b) { return a.geoid < b.geoid; }

}  // namespace

std::vector<std::size_t> FoldPlan::members(std::size_t repeat, std::size_t fold) const {
  std::vector<std::size_t> out;
  const auto& a = assignment.at(repeat);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == fold) out.push_back(i);
  }
  return out;
}

FoldPlan build_folds(std::vector<std::string> geoids, std::size_t repeats, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorKind::config, kModule, "need at least 2 folds");
  if (repeats < 1) throw Error(ErrorKind::config, kModule, "need at least 1 repeat");
  if (geoids.size() < folds) {
    throw Error(ErrorKind::data, kModule,
                std::to_string(geoids.size()) + " units cannot fill " + std::to_string(folds) + " folds");
  }
  FoldPlan plan;
  plan.repeats = repeats;
  plan.folds = folds;
  plan.seed = seed;
  plan.geoids = std::move(geoids);
  const std::size_t n = plan.geoids.size();
  for (std::size_t r = 0; r < repeats; ++r) {
    Rng rng(derive_seed(seed, r));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::size_t> fold_of(n);
    for (std::size_t pos = 0; pos < n; ++pos) fold_of[order[pos]] = pos % folds;
    plan.assignment.push_back(std::move(fold_of));
  }
  return plan;
}

std::vector<MatchedGroup> match_fold(const metric::LearnedMetric& metric, std::span<const EstimationUnit> units,
                                     std::size_t k, std::vector<std::string>* warnings) {
  if (k == 0) throw Error(ErrorKind::config, kModule, "K must be positive");
  std::vector<std::size_t> order(units.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return units[a].geoid < units[b].geoid; });

  std::size_t n_treated = 0;
  for (const auto& u : units) n_treated += u.treated ? 1 : 0;
  const std::size_t n_control = units.size() - n_treated;
  if (n_treated < k || n_control < k) {
    if (warnings) {
      warnings->push_back("fold skipped: " + std::to_string(n_treated) + " treated and " + std::to_string(n_control) +
                          " control units, K = " + std::to_string(k));
    }
    return {};
  }

  const std::size_t n = units.size();
  std::vector<std::vector<double>> z(n);
  for (std::size_t s = 0; s < n; ++s) z[s] = metric.standardizer.apply(units[order[s]].covariates);
  const auto w2 = metric.squared_weights();

  std::vector<MatchedGroup> groups(n);
  std::vector<double> dist(n);
  for (std::size_t s = 0; s < n; ++s) {
    // Ranked on the distance itself: distinct squared values can share a square root, and those are ties.
    for (std::size_t t = 0; t < n; ++t) dist[t] = std::sqrt(kernels::weighted_sq_distance(z[s], z[t], w2));
    MatchedGroup g;
    g.query = units[order[s]].geoid;
    for (const bool arm : {true, false}) {
      std::vector<std::size_t> cand;
      for (std::size_t t = 0; t < n; ++t) {
        if (t != s && units[order[t]].treated == arm) cand.push_back(t);
      }
      const std::size_t take = std::min(k, cand.size());
      // Candidates are in geoid order, so a stable partial order breaks ties by geoid.
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(),
                        [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
      auto& out = arm ? g.treated_neighbors : g.control_neighbors;
      for (std::size_t m = 0; m < take; ++m) out.push_back({units[order[cand[m]]].geoid, 1});
      std::sort(out.begin(), out.end(), by_geoid);
    }
    groups[s] = std::move(g);
  }
  return groups;
}

ConsensusResult consensus_match(std::span<const RunOutput> runs, int min_count) {
  if (min_count < 2) throw Error(ErrorKind::config, kModule, "consensus threshold m must be at least 2");
  // query -> neighbor -> (arm, count)
  std::map<std::string, std::map<std::string, std::pair<bool, int>>> tallies;
  for (const auto& run : runs) {
    for (const auto& g : run.groups) {
      auto& t = tallies[g.query];
      for (const auto& nb : g.treated_neighbors) {
        auto& e = t[nb.geoid];
        e.first = true;
        ++e.second;
      }
      for (const auto& nb : g.control_neighbors) {
        auto& e = t[nb.geoid];
        e.first = false;
        ++e.second;
      }
    }
  }
  ConsensusResult result;
  for (const auto& [query, neighbors] : tallies) {
    MatchedGroup g;
    g.query = query;
    for (const auto& [geoid, entry] : neighbors) {
      if (entry.second < min_count) continue;
      (entry.first ? g.treated_neighbors : g.control_neighbors).push_back({geoid, entry.second});
    }
    if (g.treated_neighbors.empty() || g.control_neighbors.empty()) {
      ++result.dropped_units;
      continue;
    }
    result.groups.push_back(std::move(g));
  }
  return result;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw Error(ErrorKind::data, kModule, "percentile of an empty set");
  if (!(p >= 0.0 && p <= 100.0)) throw Error(ErrorKind::config, kModule, "percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(values.size() - 1, lo + 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

PruneResult diameter_and_prune(std::vector<MatchedGroup> groups, const metric::LearnedMetric& metric,
                               const CovariateLookup& covariates, double pct) {
  if (!(pct > 0.0 && pct <= 100.0)) throw Error(ErrorKind::config, kModule, "prune percentile must lie in (0, 100]");
  auto lookup = [&](const std::string& geoid) -> const std::vector<double>& {
    auto it = covariates.find(geoid);
    if (it == covariates.end()) throw Error(ErrorKind::data, kModule, "no covariates for geoid " + geoid);
    return it->second;
  };
  PruneResult result;
  if (groups.empty()) return result;
  std::vector<double> diameters;
  diameters.reserve(groups.size());
  for (auto& g : groups) {
    const auto& xq = lookup(g.query);
    double d = 0.0;
    for (const auto* arm : {&g.treated_neighbors, &g.control_neighbors}) {
      for (const auto& nb : *arm) d = std::max(d, metric.distance(xq, lookup(nb.geoid)));
    }
    g.diameter = d;
    diameters.push_back(d);
  }
  result.cutoff = percentile(diameters, pct);
  for (auto& g : groups) {
    if (g.diameter > result.cutoff) {
      ++result.pruned;
    } else {
      result.groups.push_back(std::move(g));
    }
  }
  return result;
}

std::vector<RunResult> cross_validate(const std::vector<std::string>& geoids, const metric::UnitSet& units,
                                      const FoldPlan& plan, const CrossValidationParams& params) {
  if (geoids.size() != units.size() || plan.geoids != geoids) {
    throw Error(ErrorKind::data, kModule, "fold plan and unit set disagree");
  }
  const std::size_t n_runs = plan.repeats * plan.folds;
  std::vector<RunResult> results(n_runs);
  // Runs go in parallel; each run's optimizer stays single-threaded so the
  // output does not depend on the thread count.
  parallel_for(n_runs, params.threads, [&](std::size_t run) {
    const std::size_t r = run / plan.folds;
    const std::size_t f = run % plan.folds;
    metric::UnitSet train;
    std::vector<EstimationUnit> held_out;
    for (std::size_t i = 0; i < units.size(); ++i) {
      if (plan.assignment[r][i] == f) {
        held_out.push_back({geoids[i], std::vector<double>(units.x.row(i).begin(), units.x.row(i).end()),
                            units.treated[i] != 0});
      } else {
        train.x.append_row(units.x.row(i));
        train.y.push_back(units.y[i]);
        train.treated.push_back(units.treated[i]);
      }
    }
    auto mp = params.metric;
    mp.seed = derive_seed(params.seed, run);
    mp.threads = 1;
    RunResult& out = results[run];
    out.output.repeat = r;
    out.output.fold = f;
    out.metric = metric::learn_metric(train, mp);
    out.output.groups = match_fold(out.metric, held_out, params.k_match, &out.warnings);
    for (auto& w : out.warnings) w = "repeat " + std::to_string(r) + " fold " + std::to_string(f) + ": " + w;
  });
  return results;
}

metric::LearnedMetric pooled_metric(std::span<const RunResult> runs, const metric::Matrix& all_covariates) {
  if (runs.empty()) throw Error(ErrorKind::data, kModule, "no cross-validation runs to pool");
  metric::LearnedMetric pooled;
  pooled.standardizer = metric::fit_standardizer(all_covariates);
  pooled.weights.assign(all_covariates.cols(), 0.0);
  for (const auto& run : runs) {
    for (std::size_t d = 0; d < pooled.weights.size(); ++d) pooled.weights[d] += run.metric.weights.at(d);
  }
  for (auto& w : pooled.weights) w /= static_cast<double>(runs.size());
  return pooled;
}

std::string to_csv(std::span<const MatchedGroup> groups) {
  std::ostringstream out;
  out << "query_geoid,neighbor_geoid,arm,co_match_count,diameter\n";
  for (const auto& g : groups) {
    const std::string d = csv::format_double(g.diameter);
    for (const auto& nb : g.treated_neighbors) {
      out << csv::escape(g.query) << ',' << csv::escape(nb.geoid) << ",treated," << nb.co_match << ',' << d << '\n';
    }
    for (const auto& nb : g.control_neighbors) {
      out << csv::escape(g.query) << ',' << csv::escape(nb.geoid) << ",control," << nb.co_match << ',' << d << '\n';
    }
  }
  return out.str();
}

std::vector<MatchedGroup> groups_from_csv(std::string_view text) {
  std::map<std::string, MatchedGroup> by_query;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    const auto f = csv::split_line(line);
    const auto count = f.size() == 5 ? csv::parse_int(f[3]) : std::nullopt;
    const auto diameter = f.size() == 5 ? csv::parse_double(f[4]) : std::nullopt;
    if (!count || !diameter || (f[2] != "treated" && f[2] != "control")) {
      throw Error(ErrorKind::data, kModule, "matched groups line " + std::to_string(line_no) + " is malformed");
    }
    auto& g = by_query[f[0]];
    g.query = f[0];
    g.diameter = *diameter;
    (f[2] == "treated" ? g.treated_neighbors : g.control_neighbors).push_back({f[1], static_cast<int>(*count)});
  }
  std::vector<MatchedGroup> out;
  for (auto& [q, g] : by_query) {
    std::sort(g.treated_neighbors.begin(), g.treated_neighbors.end(), by_geoid);
    std::sort(g.control_neighbors.begin(), g.control_neighbors.end(), by_geoid);
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace crimematch::matching
