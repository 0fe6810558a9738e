#include "crimematch/pipeline.hpp"

#include <cmath>
#include <iostream>
#include <set>

#include "crimematch/csv.hpp"
#include "crimematch/error.hpp"
#include "crimematch/rng.hpp"

namespace crimematch::pipeline {

namespace {

using json = nlohmann::ordered_json;
constexpr const char* kModule = "pipeline";

const ingest::Period& find_period(const config::RunConfig& config, const std::string& name) {
  for (const auto& p : config.periods) {
    if (p.name == name) return p;
  }
  throw Error(ErrorKind::config, kModule, "unknown period '" + name + "'");
}

metric::MetricParams metric_params(const config::RunConfig& c, const std::vector<std::string>& names) {
  metric::MetricParams p;
  p.k = c.metric_k;
  p.lambda = c.metric_lambda;
  p.budget = c.metric_budget;
  p.tolerance = c.metric_tolerance;
  p.max_weight = c.metric_max_weight;
  p.covariate_names = names;
  return p;
}

std::filesystem::path run_metric_file(const config::RunConfig& c, const std::string& s, std::size_t r, std::size_t f) {
  return c.output_dir / ("metric_" + file_stem(s) + "_r" + std::to_string(r) + "_f" + std::to_string(f) + ".csv");
}

std::filesystem::path pooled_metric_file(const config::RunConfig& c, const std::string& s) {
  return c.output_dir / ("metric_" + file_stem(s) + "_pooled.csv");
}

void write_match_outputs(const config::RunConfig& c, const std::string& structure, const MatchResult& m,
                         const std::vector<std::string>& names) {
  auto params = metric_params(c, names);
  for (std::size_t i = 0; i < m.runs.size(); ++i) {
    params.seed = derive_seed(c.metric_seed(), i);
    const auto& run = m.runs[i];
    csv::write_file(run_metric_file(c, structure, run.output.repeat, run.output.fold),
                    metric::to_csv(run.metric, names, params));
  }
  params.seed = c.metric_seed();
  csv::write_file(pooled_metric_file(c, structure), metric::to_csv(m.pooled, names, params));
  csv::write_file(groups_file(c, structure), matching::to_csv(m.pruned.groups));
}

ingest::AnalysisTable read_table(const config::RunConfig& c) { return ingest::load_analysis_table(table_file(c)); }

treatment::Assignment read_assignment(const config::RunConfig& c, const config::StructureInput& s) {
  return treatment::assignment_from_csv(csv::read_file(treatment_file(c, s.name)), s.kind);
}

std::vector<matching::MatchedGroup> read_groups(const config::RunConfig& c, const std::string& structure) {
  return matching::groups_from_csv(csv::read_file(groups_file(c, structure)));
}

void require_structures(const config::RunConfig& c) {
  if (c.structures.empty()) throw Error(ErrorKind::config, kModule, "no structure types configured");
}

}  // namespace

void Log::add(std::string line) {
  if (echo) std::cerr << line << '\n';
  lines.push_back(std::move(line));
}

std::string file_stem(const std::string& structure) {
  std::string out;
  for (char ch : structure) {
    const bool keep = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') || ch == '-';
    out += keep ? ch : '_';
  }
  return out;
}

std::filesystem::path table_file(const config::RunConfig& c) { return c.output_dir / "analysis_table.json"; }
std::filesystem::path treatment_file(const config::RunConfig& c, const std::string& s) {
  return c.output_dir / ("treatment_" + file_stem(s) + ".csv");
}
std::filesystem::path groups_file(const config::RunConfig& c, const std::string& s) {
  return c.output_dir / ("matched_groups_" + file_stem(s) + ".csv");
}
std::filesystem::path cate_file(const config::RunConfig& c, const std::string& s) {
  return c.output_dir / ("cate_" + file_stem(s) + ".csv");
}
std::filesystem::path density_file(const config::RunConfig& c, const std::string& s) {
  return c.output_dir / ("density_" + file_stem(s) + ".csv");
}
std::filesystem::path heterogeneity_file(const config::RunConfig& c, const std::string& s) {
  return c.output_dir / ("heterogeneity_" + file_stem(s) + ".csv");
}
std::filesystem::path report_file(const config::RunConfig& c) { return c.output_dir / "report.json"; }

void write_failed_marker(const config::RunConfig& c, const std::string& message) {
  try {
    csv::write_file(c.output_dir / "FAILED", message + "\n");
  } catch (...) {
  }
}

void clear_failed_marker(const config::RunConfig& c) {
  std::error_code ec;
  std::filesystem::remove(c.output_dir / "FAILED", ec);
}

namespace {

IngestResult load_inputs(const config::RunConfig& c, Log& log);

}  // namespace

IngestResult run_ingest(const config::RunConfig& c, Log& log) {
  try {
    return load_inputs(c, log);
  } catch (const Error& e) {
    if (e.module() == "ingest") throw;
    throw Error(e.kind(), "ingest", e.what());
  }
}

namespace {

IngestResult load_inputs(const config::RunConfig& c, Log& log) {
  IngestResult r;
  auto tracts = ingest::load_tracts(c.resolve(c.tracts), c.resolve(c.boundaries), c.schema);
  r.unpopulated_dropped = tracts.unpopulated_dropped;
  r.skipped_rows = tracts.skips.lines.size();
  if (!tracts.skips.lines.empty()) log.add("ingest: " + std::to_string(tracts.skips.lines.size()) + " tract records skipped");
  if (tracts.unpopulated_dropped > 0) {
    log.add("ingest: " + std::to_string(tracts.unpopulated_dropped) + " unpopulated tracts excluded");
  }
  std::string skip_text = tracts.skips.text();

  auto events = ingest::load_events(c.resolve(c.crimes), c.delimiter);
  r.crimes_read = events.points.size();
  r.skipped_rows += events.skipped;
  skip_text += events.skips.text();
  if (events.skipped > 0) log.add("ingest: " + std::to_string(events.skipped) + " crime rows skipped");
  const std::set<std::string> categories(c.crime_categories.begin(), c.crime_categories.end());
  r.violent_crimes = ingest::filter_violent(events.points, categories);

  for (const auto& s : c.structures) {
    auto loaded = ingest::load_structures(c.resolve(s.file), c.delimiter);
    r.skipped_rows += loaded.skipped;
    skip_text += loaded.skips.text();
    if (loaded.skipped > 0) log.add("ingest: " + std::to_string(loaded.skipped) + " " + s.name + " rows skipped");
    r.structures[s.name] = std::move(loaded.points);
  }
  r.table = ingest::build_analysis_table(std::move(tracts.tracts), c.schema.covariates, c.periods, r.violent_crimes,
                                         r.structures);
  csv::write_file(c.output_dir / "skips.txt", skip_text);
  return r;
}

}  // namespace

treatment::Assignment run_treat(const ingest::AnalysisTable& table, const config::StructureInput& s,
                                const config::RunConfig& c, Log& log) {
  const auto type = table.structure_counts.find(s.name);
  if (type == table.structure_counts.end()) {
    throw Error(ErrorKind::data, kModule, "analysis table has no counts for structure '" + s.name + "'");
  }
  const auto period = type->second.find(c.counts_period());
  if (period == type->second.end()) {
    throw Error(ErrorKind::data, kModule, "analysis table has no period '" + c.counts_period() + "'");
  }
  auto a = s.kind == treatment::StructureKind::sparse ? treatment::classify_sparse(period->second)
                                                      : treatment::classify_dense(period->second, c.drop_band);
  log.add("treat " + s.name + ": " + std::to_string(a.count(treatment::Label::treated)) + " treated, " +
          std::to_string(a.count(treatment::Label::control)) + " control, " +
          std::to_string(a.count(treatment::Label::dropped)) + " dropped");
  return a;
}

double outcome_of(const ingest::Tract& t, const config::RunConfig& c) {
  if (!c.outcome_attribute.empty()) {
    const auto it = t.attributes.find(c.outcome_attribute);
    if (it == t.attributes.end()) {
      throw Error(ErrorKind::data, kModule, "tract " + t.geoid + " lacks outcome '" + c.outcome_attribute + "'");
    }
    return it->second;
  }
  const auto it = t.period_outcomes.find(c.outcome_period);
  if (it == t.period_outcomes.end()) {
    throw Error(ErrorKind::data, kModule, "tract " + t.geoid + " lacks period '" + c.outcome_period + "'");
  }
  return it->second;
}

UnitTable build_units(const ingest::AnalysisTable& table, const treatment::Assignment& a, const config::RunConfig& c) {
  UnitTable u;
  for (const auto& t : table.tracts) {
    const auto it = a.labels.find(t.geoid);
    if (it == a.labels.end() || it->second == treatment::Label::dropped) continue;
    u.geoids.push_back(t.geoid);
    u.units.x.append_row(t.covariates);
    u.units.y.push_back(outcome_of(t, c));
    u.units.treated.push_back(it->second == treatment::Label::treated ? 1 : 0);
  }
  return u;
}

MatchResult run_match(const UnitTable& u, const config::RunConfig& c, Log& log) {
  if (u.geoids.empty()) throw Error(ErrorKind::data, kModule, "no tracts to match");
  MatchResult m;
  const auto plan = matching::build_folds(u.geoids, c.repeats, c.folds, c.folds_seed());
  matching::CrossValidationParams cv;
  cv.repeats = c.repeats;
  cv.folds = c.folds;
  cv.k_match = c.k_match;
  cv.metric = metric_params(c, {});
  cv.seed = c.metric_seed();
  cv.threads = c.thread_count();
  m.runs = matching::cross_validate(u.geoids, u.units, plan, cv);
  std::vector<matching::RunOutput> outputs;
  for (const auto& run : m.runs) {
    for (const auto& w : run.warnings) log.add("match: " + w);
    outputs.push_back(run.output);
  }
  m.consensus = matching::consensus_match(outputs, c.min_co_matches);
  if (m.consensus.dropped_units > 0) {
    log.add("match: " + std::to_string(m.consensus.dropped_units) + " units lost an arm under consensus");
  }
  matching::CovariateLookup lookup;
  for (std::size_t i = 0; i < u.geoids.size(); ++i) {
    lookup[u.geoids[i]] = std::vector<double>(u.units.x.row(i).begin(), u.units.x.row(i).end());
  }
  m.pooled = matching::pooled_metric(m.runs, u.units.x);
  m.pruned = matching::diameter_and_prune(m.consensus.groups, m.pooled, lookup, c.prune_percentile);
  if (m.pruned.groups.empty()) throw Error(ErrorKind::data, kModule, "no matched groups survived consensus and pruning");
  return m;
}

EstimateResult run_estimate(const ingest::AnalysisTable& table, std::span<const matching::MatchedGroup> groups,
                            const UnitTable& u, const config::RunConfig& c, Log& log) {
  EstimateResult r;
  estimate::Outcomes outcomes;
  for (std::size_t i = 0; i < u.geoids.size(); ++i) outcomes[u.geoids[i]] = u.units.y[i];
  for (const auto& g : groups) {
    const auto* tract = table.find(g.query);
    if (tract == nullptr) throw Error(ErrorKind::data, kModule, "unknown query tract " + g.query);
    r.estimates.push_back({g.query, estimate::cate(g, outcomes), 0.0, tract->covariates});
  }
  if (r.estimates.size() >= 20) {
    estimate::VarianceParams vp;
    vp.q_lo = c.q_lo;
    vp.q_hi = c.q_hi;
    vp.gbqr.rounds = c.gbqr_rounds;
    vp.gbqr.depth = c.gbqr_depth;
    vp.gbqr.rate = c.gbqr_rate;
    vp.gbqr.min_leaf = c.gbqr_min_leaf;
    vp.gbqr.subsample = c.gbqr_subsample;
    vp.gbqr.seed = c.gbqr_seed();
    auto v = estimate::cate_variance(std::move(r.estimates), vp);
    r.estimates = std::move(v.estimates);
    r.crossings = v.crossings;
    for (auto& line : v.log) log.add("estimate: " + line);
  } else {
    log.add("estimate: fewer than 20 estimates, variance not estimated");
  }
  r.ate = estimate::ate(r.estimates);
  double var_sum = 0.0;
  for (const auto& e : r.estimates) var_sum += e.variance;
  r.ate_sd = std::sqrt(var_sum) / static_cast<double>(r.estimates.size());
  r.naive_difference = estimate::naive_difference(u.units.y, u.units.treated);
  return r;
}

density::DensityCurve run_density(const IngestResult& in, const treatment::Assignment& a,
                                  std::span<const matching::MatchedGroup> groups, const std::string& structure,
                                  const config::RunConfig& c, Log& log) {
  const auto& period = find_period(c, c.outcome_period);
  std::vector<geo::GeoPoint> crimes;
  for (const auto& e : in.violent_crimes) {
    if (period.contains(e.date)) crimes.push_back(e.location);
  }
  const density::RadiusGrid grid(c.radii);
  const geo::PointIndex index(crimes, grid.max());
  const auto& counts_period = find_period(c, c.counts_period());
  std::vector<ingest::StructurePoint> present;
  for (const auto& s : in.structures.at(structure)) {
    if (!s.opened || *s.opened <= counts_period.end) present.push_back(s);
  }
  density::ControlSampling sampling;
  sampling.n_samples = c.n_samples;
  sampling.radius_m = c.sample_radius_m;
  sampling.seed = c.sampling_seed();
  sampling.inside_tract_only = c.inside_tract_only;
  auto curve = density::density_analysis(a, groups, in.table, present, index, grid, sampling, c.region,
                                         c.thread_count());
  for (const auto& line : curve.log) log.add("density " + structure + ": " + line);
  return curve;
}

std::vector<estimate::ScanRow> run_heterogeneity(std::span<const estimate::CateEstimate> estimates,
                                                 const ingest::AnalysisTable& table, const config::RunConfig& c) {
  return estimate::heterogeneity_scan(estimates, table.covariate_names, c.heterogeneity_threshold);
}

json run_pipeline(const config::RunConfig& c, Log& log) {
  json report;
  guarded(c, [&] {
    require_structures(c);
    IngestResult in = run_ingest(c, log);
    ingest::save(in.table, table_file(c));

    report["version"] = 1;
    report["seed"] = c.seed;
    report["parameters"] = config::parameters_json(c);
    json ingest_summary;
    ingest_summary["tracts"] = in.table.tracts.size();
    ingest_summary["unpopulated_dropped"] = in.unpopulated_dropped;
    ingest_summary["skipped_rows"] = in.skipped_rows;
    ingest_summary["crimes_read"] = in.crimes_read;
    ingest_summary["violent_crimes"] = in.violent_crimes.size();
    ingest_summary["unassigned_crimes"] = in.table.unassigned_crimes;
    report["ingest"] = ingest_summary;

    json structures = json::array();
    std::map<std::string, std::pair<double, double>> ates;
    for (const auto& s : c.structures) {
      json entry;
      entry["name"] = s.name;
      entry["kind"] = treatment::to_string(s.kind);

      const auto assignment = run_treat(in.table, s, c, log);
      csv::write_file(treatment_file(c, s.name), treatment::to_csv(assignment));
      entry["treatment"] = {{"threshold", assignment.threshold},
                            {"treated", assignment.count(treatment::Label::treated)},
                            {"control", assignment.count(treatment::Label::control)},
                            {"dropped", assignment.count(treatment::Label::dropped)}};

      const auto units = build_units(in.table, assignment, c);
      const auto matched = run_match(units, c, log);
      write_match_outputs(c, s.name, matched, in.table.covariate_names);
      json weights;
      for (std::size_t d = 0; d < in.table.covariate_names.size(); ++d) {
        weights[in.table.covariate_names[d]] = matched.pooled.weights[d];
      }
      json warnings = json::array();
      for (const auto& run : matched.runs) {
        for (const auto& w : run.warnings) warnings.push_back(w);
      }
      entry["matching"] = {{"units", units.geoids.size()},
                           {"runs", matched.runs.size()},
                           {"warnings", warnings},
                           {"consensus_groups", matched.consensus.groups.size()},
                           {"dropped_units", matched.consensus.dropped_units},
                           {"diameter_cutoff", matched.pruned.cutoff},
                           {"pruned_groups", matched.pruned.pruned},
                           {"retained_groups", matched.pruned.groups.size()},
                           {"pooled_weights", weights}};

      const auto est = run_estimate(in.table, matched.pruned.groups, units, c, log);
      csv::write_file(cate_file(c, s.name), estimate::to_csv(est.estimates));
      double mean_var = 0.0;
      for (const auto& e : est.estimates) mean_var += e.variance;
      mean_var /= static_cast<double>(est.estimates.size());
      entry["estimate"] = {{"ate", est.ate},
                           {"ate_sd", est.ate_sd},
                           {"naive_difference", est.naive_difference},
                           {"n_estimates", est.estimates.size()},
                           {"mean_cate_variance", mean_var},
                           {"quantile_crossings", est.crossings}};
      ates[s.name] = {est.ate, est.ate_sd};

      if (est.estimates.size() >= 3) {
        const auto scan = run_heterogeneity(est.estimates, in.table, c);
        csv::write_file(heterogeneity_file(c, s.name), estimate::to_csv(scan));
        json rows = json::array();
        for (const auto& r : scan) {
          rows.push_back({{"covariate", r.covariate}, {"slope", r.slope}, {"r2", r.r2}, {"substantial", r.substantial}});
        }
        entry["heterogeneity"] = rows;
      } else {
        log.add("heterogeneity " + s.name + ": fewer than 3 estimates, scan skipped");
        entry["heterogeneity"] = json::array();
      }

      if (c.density_enabled) {
        const auto curve = run_density(in, assignment, matched.pruned.groups, s.name, c, log);
        csv::write_file(density_file(c, s.name), density::to_csv(curve));
        entry["density"] = {{"radii_m", curve.radii.radii()},
                            {"treated", curve.treated_mean},
                            {"control", curve.control_mean},
                            {"n_treated_centers", curve.n_treated_centers},
                            {"n_control_centers", curve.n_control_centers}};
      } else {
        entry["density"] = nullptr;
      }
      structures.push_back(entry);
    }
    report["structures"] = structures;
    json ranking = json::array();
    for (const auto& r : estimate::rank_by_ate(ates)) {
      ranking.push_back({{"structure", r.structure}, {"ate", r.value}, {"sd", r.sd}});
    }
    report["ranking"] = ranking;
    report["log"] = log.lines;
    csv::write_file(report_file(c), report.dump(2) + "\n");
  });
  return report;
}

void stage_ingest(const config::RunConfig& c, Log& log) {
  guarded(c, [&] {
    const auto in = run_ingest(c, log);
    ingest::save(in.table, table_file(c));
    log.add("ingest: " + std::to_string(in.table.tracts.size()) + " tracts, " +
            std::to_string(in.violent_crimes.size()) + " violent crimes");
  });
}

void stage_treat(const config::RunConfig& c, Log& log) {
  guarded(c, [&] {
    require_structures(c);
    const auto table = read_table(c);
    for (const auto& s : c.structures) {
      csv::write_file(treatment_file(c, s.name), treatment::to_csv(run_treat(table, s, c, log)));
    }
  });
}

void stage_match(const config::RunConfig& c, Log& log) {
  guarded(c, [&] {
    require_structures(c);
    const auto table = read_table(c);
    for (const auto& s : c.structures) {
      const auto units = build_units(table, read_assignment(c, s), c);
      const auto matched = run_match(units, c, log);
      write_match_outputs(c, s.name, matched, table.covariate_names);
      log.add("match " + s.name + ": " + std::to_string(matched.pruned.groups.size()) + " groups retained");
    }
  });
}

void stage_estimate(const config::RunConfig& c, Log& log) {
  guarded(c, [&] {
    require_structures(c);
    const auto table = read_table(c);
    for (const auto& s : c.structures) {
      const auto units = build_units(table, read_assignment(c, s), c);
      const auto groups = read_groups(c, s.name);
      const auto est = run_estimate(table, groups, units, c, log);
      csv::write_file(cate_file(c, s.name), estimate::to_csv(est.estimates));
      log.add("estimate " + s.name + ": ATE " + csv::format_double(est.ate));
    }
  });
}

void stage_density(const config::RunConfig& c, Log& log) {
  guarded(c, [&] {
    require_structures(c);
    const auto in = run_ingest(c, log);
    for (const auto& s : c.structures) {
      const auto curve = run_density(in, read_assignment(c, s), read_groups(c, s.name), s.name, c, log);
      csv::write_file(density_file(c, s.name), density::to_csv(curve));
    }
  });
}

void stage_heterogeneity(const config::RunConfig& c, Log& log) {
  guarded(c, [&] {
    require_structures(c);
    const auto table = read_table(c);
    for (const auto& s : c.structures) {
      auto estimates = estimate::estimates_from_csv(csv::read_file(cate_file(c, s.name)));
      for (auto& e : estimates) {
        const auto* t = table.find(e.geoid);
        if (t == nullptr) throw Error(ErrorKind::data, kModule, "unknown tract " + e.geoid + " in CATE file");
        e.covariates = t->covariates;
      }
      const auto scan = run_heterogeneity(estimates, table, c);
      csv::write_file(heterogeneity_file(c, s.name), estimate::to_csv(scan));
      for (const auto& r : scan) {
        if (r.substantial) log.add("heterogeneity " + s.name + ": " + r.covariate + " r2 " + csv::format_double(r.r2));
      }
    }
  });
}

}  // namespace crimematch::pipeline
