#include "crimematch/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include "json.hpp"

#include "crimematch/csv.hpp"
#include "crimematch/error.hpp"
#include "crimematch/rng.hpp"

namespace crimematch::synth {

namespace {

constexpr const char* kModule = "synth";
constexpr double kCellDeg = 0.01;
constexpr double kMetersPerDegLat = geo::kEarthRadiusM * 3.14159265358979323846 / 180.0;

struct Cell {
  double lat0, lon0;
};

std::string make_geoid(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "17031%06zu", i + 1);
  return buf;
}

geo::GeoPoint uniform_in_cell(Rng& rng, const Cell& c) {
  const double lat = c.lat0 + kCellDeg * rng.uniform();
  const double lon = c.lon0 + kCellDeg * rng.uniform();
  return {lat, lon};
}

ingest::Date random_date(Rng& rng, const ingest::Period& period) {
  using namespace std::chrono;
  const auto first = sys_days(period.start).time_since_epoch().count();
  const auto last = sys_days(period.end).time_since_epoch().count();
  const auto span = static_cast<std::uint64_t>(last - first + 1);
  return year_month_day(sys_days(days(first + static_cast<long>(rng.uniform_index(span)))));
}

void validate(const SynthSpec& s) {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::config, kModule, msg); };
  if (s.n_tracts < 4) fail("n_tracts must be at least 4");
  if (s.n_covariates == 0) fail("n_covariates must be positive");
  for (auto r : s.relevant) {
    if (r >= s.n_covariates) fail("relevant covariate index " + std::to_string(r) + " out of range");
  }
  if (!s.baseline_coefficients.empty() && s.baseline_coefficients.size() != s.relevant.size()) {
    fail("baseline_coefficients needs one entry per relevant covariate");
  }
  if (!s.tau_coefficients.empty() && s.tau_coefficients.size() != s.n_covariates) {
    fail("tau_coefficients needs one entry per covariate");
  }
  if (!(s.noise_sd >= 0.0)) fail("noise_sd must be nonnegative");
  if (s.population <= 0) fail("population must be positive");
  if (s.structures_per_treated == 0) fail("structures_per_treated must be positive");
  if (!(s.peak_fraction >= 0.0 && s.peak_fraction <= 1.0)) fail("peak_fraction must lie in [0, 1]");
  if (!(s.border_m >= 0.0)) fail("border_m must be nonnegative");
}

ingest::Period period_for(const SynthSpec& spec) {
  for (const auto& p : ingest::default_periods()) {
    if (p.name == spec.period) return p;
  }
  throw Error(ErrorKind::config, kModule, "unknown period " + spec.period);
}

}  // namespace

std::string_view to_string(CrimeProfile profile) {
  return profile == CrimeProfile::uniform ? "uniform" : "peaked-at-structures";
}

CrimeProfile parse_crime_profile(std::string_view text) {
  if (text == "uniform") return CrimeProfile::uniform;
  if (text == "peaked-at-structures") return CrimeProfile::peaked_at_structures;
  throw Error(ErrorKind::config, kModule, "unknown crime profile '" + std::string(text) + "'");
}

Dataset generate(const SynthSpec& spec) {
  validate(spec);
  Dataset data;
  data.spec = spec;
  const ingest::Period period = period_for(spec);
  const std::size_t n = spec.n_tracts;
  const std::size_t p = spec.n_covariates;
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));

  std::vector<double> beta(p, 0.0);
  for (std::size_t j = 0; j < spec.relevant.size(); ++j) {
    beta[spec.relevant[j]] = spec.baseline_coefficients.empty() ? spec.baseline_scale * (j == 0 ? 1.0 : 0.1)
                                                                : spec.baseline_coefficients[j];
  }
  // Confounder score: unit-norm projection onto the baseline direction, or the
  // normalized sum of relevant covariates when the baseline is flat.
  std::vector<double> direction(p, 0.0);
  double norm = 0.0;
  for (double b : beta) norm += b * b;
  norm = std::sqrt(norm);
  if (norm > 0) {
    for (std::size_t d = 0; d < p; ++d) direction[d] = beta[d] / norm;
  } else if (!spec.relevant.empty()) {
    for (auto r : spec.relevant) direction[r] = 1.0 / std::sqrt(static_cast<double>(spec.relevant.size()));
  }

  Rng cov_rng(derive_seed(spec.seed, "covariates"));
  Rng treat_rng(derive_seed(spec.seed, "treatment"));
  Rng noise_rng(derive_seed(spec.seed, "noise"));
  Rng place_rng(derive_seed(spec.seed, "placement"));

  std::vector<Cell> cells(n);
  std::vector<std::vector<double>> x(n, std::vector<double>(p));
  std::vector<double> rate(n);
  Truth& truth = data.truth;
  truth.baseline_coefficients = beta;
  for (std::size_t i = 0; i < n; ++i) {
    cells[i] = {spec.origin_lat + kCellDeg * static_cast<double>(i / cols),
                spec.origin_lon + kCellDeg * static_cast<double>(i % cols)};
    for (auto& v : x[i]) v = cov_rng.normal();
    double score = 0.0, baseline = 0.0, cate = spec.tau;
    for (std::size_t d = 0; d < p; ++d) {
      score += direction[d] * x[i][d];
      baseline += beta[d] * x[i][d];
      if (!spec.tau_coefficients.empty()) cate += spec.tau_coefficients[d] * x[i][d];
    }
    const double prob = 1.0 / (1.0 + std::exp(-spec.confounding_strength * score));
    const bool treated = treat_rng.uniform() < prob;
    rate[i] = std::max(0.0, spec.rate_offset + baseline + (treated ? cate : 0.0) + spec.noise_sd * noise_rng.normal());

    ingest::Tract t;
    t.geoid = make_geoid(i);
    // Edges come from the same expression for both neighbours, so cells tile exactly.
    const double lat_lo = spec.origin_lat + kCellDeg * static_cast<double>(i / cols);
    const double lat_hi = spec.origin_lat + kCellDeg * static_cast<double>(i / cols + 1);
    const double lon_lo = spec.origin_lon + kCellDeg * static_cast<double>(i % cols);
    const double lon_hi = spec.origin_lon + kCellDeg * static_cast<double>(i % cols + 1);
    t.boundary.emplace_back(geo::Ring{{lat_lo, lon_lo}, {lat_lo, lon_hi}, {lat_hi, lon_hi}, {lat_hi, lon_lo}});
    t.covariates = x[i];
    t.total_pop = spec.population;
    data.tracts.push_back(std::move(t));
    truth.geoids.push_back(data.tracts.back().geoid);
    truth.treated.push_back(treated ? 1 : 0);
    truth.true_cate.push_back(cate);
  }

  // Structures inside treated tracts, kept off the cell edges.
  std::vector<std::vector<geo::GeoPoint>> tract_structures(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!truth.treated[i]) continue;
    for (std::size_t s = 0; s < spec.structures_per_treated; ++s) {
      const double lat = cells[i].lat0 + kCellDeg * (0.05 + 0.9 * place_rng.uniform());
      const double lon = cells[i].lon0 + kCellDeg * (0.05 + 0.9 * place_rng.uniform());
      tract_structures[i].emplace_back(lat, lon);
      data.structures.push_back({geo::GeoPoint(lat, lon), std::nullopt});
    }
  }

  // Crime points realizing each tract's count.
  std::size_t tract_crimes = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto count = static_cast<std::size_t>(std::llround(static_cast<double>(spec.population) * rate[i]));
    const Cell& c = cells[i];
    const bool peaked = spec.crime_profile == CrimeProfile::peaked_at_structures && !tract_structures[i].empty();
    const double cos_lat = std::cos((c.lat0 + kCellDeg / 2) * 3.14159265358979323846 / 180.0);
    for (std::size_t k = 0; k < count; ++k) {
      geo::GeoPoint loc = uniform_in_cell(place_rng, c);
      if (peaked && place_rng.uniform() < spec.peak_fraction) {
        const auto& s = tract_structures[i][place_rng.uniform_index(tract_structures[i].size())];
        for (int attempt = 0; attempt < 100; ++attempt) {
          const double lat = s.lat() + spec.peak_sd_m * place_rng.normal() / kMetersPerDegLat;
          const double lon = s.lon() + spec.peak_sd_m * place_rng.normal() / (kMetersPerDegLat * cos_lat);
          if (lat > c.lat0 && lat < c.lat0 + kCellDeg && lon > c.lon0 && lon < c.lon0 + kCellDeg) {
            loc = geo::GeoPoint(lat, lon);
            break;
          }
        }
      }
      data.crimes.push_back({loc, random_date(place_rng, period), "battery"});
    }
    tract_crimes += count;
  }

  if (spec.border_m > 0.0) {
    const std::size_t rows = (n + cols - 1) / cols;
    const double mid_lat = spec.origin_lat + kCellDeg * static_cast<double>(rows) / 2;
    const double dlat = spec.border_m / kMetersPerDegLat;
    const double dlon = spec.border_m / (kMetersPerDegLat * std::cos(mid_lat * 3.14159265358979323846 / 180.0));
    const double lat_lo = spec.origin_lat - dlat, lat_hi = spec.origin_lat + kCellDeg * static_cast<double>(rows) + dlat;
    const double lon_lo = spec.origin_lon - dlon, lon_hi = spec.origin_lon + kCellDeg * static_cast<double>(cols) + dlon;
    const double box_cells = (lat_hi - lat_lo) * (lon_hi - lon_lo) / (kCellDeg * kCellDeg);
    const double per_cell = static_cast<double>(tract_crimes) / static_cast<double>(n);
    const auto target = static_cast<std::size_t>(std::llround(per_cell * (box_cells - static_cast<double>(n))));
    while (truth.border_crimes < target) {
      const double lat = lat_lo + (lat_hi - lat_lo) * place_rng.uniform();
      const double lon = lon_lo + (lon_hi - lon_lo) * place_rng.uniform();
      const double fr = (lat - spec.origin_lat) / kCellDeg, fc = (lon - spec.origin_lon) / kCellDeg;
      if (fr >= 0 && fc >= 0 && fc < static_cast<double>(cols)) {
        const auto idx = static_cast<std::size_t>(fr) * cols + static_cast<std::size_t>(fc);
        if (idx < n) continue;
      }
      data.crimes.push_back({geo::GeoPoint(lat, lon), random_date(place_rng, period), "battery"});
      ++truth.border_crimes;
    }
  }

  std::map<std::string, std::vector<ingest::StructurePoint>> structures{{spec.structure_type, data.structures}};
  std::vector<std::string> names;
  for (std::size_t d = 0; d < p; ++d) names.push_back("x" + std::to_string(d + 1));
  data.table = ingest::build_analysis_table(data.tracts, names, {period}, data.crimes, structures);
  data.assignment = treatment::classify_sparse(data.table.structure_counts.at(spec.structure_type).at(period.name));

  double cate_sum = 0.0, sums[2] = {0, 0};
  std::size_t counts[2] = {0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    cate_sum += truth.true_cate[i];
    const double realized = data.table.tracts[i].period_outcomes.at(period.name);
    sums[truth.treated[i]] += realized;
    ++counts[truth.treated[i]];
  }
  truth.true_ate = cate_sum / static_cast<double>(n);
  if (counts[0] > 0 && counts[1] > 0) {
    truth.naive_difference = sums[1] / static_cast<double>(counts[1]) - sums[0] / static_cast<double>(counts[0]);
  }
  const double drive = spec.confounding_strength * norm;
  truth.bias_direction = drive > 0 ? 1 : (drive < 0 ? -1 : 0);
  return data;
}

std::string truth_json(const Dataset& data) {
  const auto& t = data.truth;
  const auto& s = data.spec;
  nlohmann::ordered_json j;
  j["seed"] = s.seed;
  j["n_tracts"] = s.n_tracts;
  j["n_covariates"] = s.n_covariates;
  j["relevant"] = s.relevant;
  j["baseline_coefficients"] = t.baseline_coefficients;
  j["tau"] = s.tau;
  j["tau_coefficients"] = s.tau_coefficients;
  j["confounding_strength"] = s.confounding_strength;
  j["noise_sd"] = s.noise_sd;
  j["crime_profile"] = std::string(to_string(s.crime_profile));
  j["population"] = s.population;
  j["rate_offset"] = s.rate_offset;
  j["period"] = s.period;
  j["structure_type"] = s.structure_type;
  j["true_ate"] = t.true_ate;
  j["naive_difference"] = t.naive_difference;
  j["naive_bias"] = t.naive_difference - t.true_ate;
  j["bias_direction"] = t.bias_direction;
  j["n_treated"] = std::count(t.treated.begin(), t.treated.end(), std::uint8_t{1});
  j["n_crimes"] = data.crimes.size();
  j["border_crimes"] = t.border_crimes;
  j["n_structures"] = data.structures.size();
  auto& units = j["units"];
  units = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < t.geoids.size(); ++i) {
    units.push_back({{"geoid", t.geoids[i]}, {"treated", t.treated[i] != 0}, {"cate", t.true_cate[i]}});
  }
  return j.dump(2) + "\n";
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  const auto& names = data.table.covariate_names;
  std::string tracts = "geoid,total_pop";
  for (const auto& n : names) tracts += "," + n;
  tracts += "\n";
  for (const auto& t : data.tracts) {
    tracts += t.geoid + "," + std::to_string(t.total_pop);
    for (double v : t.covariates) tracts += "," + csv::format_double(v);
    tracts += "\n";
  }
  csv::write_file(dir / "tracts.csv", tracts);

  nlohmann::ordered_json fc;
  fc["type"] = "FeatureCollection";
  fc["features"] = nlohmann::ordered_json::array();
  for (const auto& t : data.tracts) {
    nlohmann::ordered_json ring = nlohmann::ordered_json::array();
    const auto& ext = t.boundary.front().exterior();
    for (const auto& v : ext) ring.push_back({v.lon(), v.lat()});
    ring.push_back({ext.front().lon(), ext.front().lat()});
    fc["features"].push_back({{"type", "Feature"},
                              {"properties", {{"geoid", t.geoid}}},
                              {"geometry", {{"type", "Polygon"}, {"coordinates", {ring}}}}});
  }
  csv::write_file(dir / "boundaries.geojson", fc.dump() + "\n");

  std::string crimes = "lat,lon,date,category\n";
  for (const auto& e : data.crimes) {
    crimes += csv::format_double(e.location.lat()) + "," + csv::format_double(e.location.lon()) + "," +
              ingest::format_date(e.date) + "," + e.category + "\n";
  }
  csv::write_file(dir / "crimes.csv", crimes);

  std::string structures = "lat,lon\n";
  for (const auto& s : data.structures) {
    structures += csv::format_double(s.location.lat()) + "," + csv::format_double(s.location.lon()) + "\n";
  }
  csv::write_file(dir / "structures.csv", structures);
  csv::write_file(dir / "truth.json", truth_json(data));

  nlohmann::ordered_json config;
  config["inputs"] = {{"tracts", "tracts.csv"}, {"boundaries", "boundaries.geojson"}, {"crimes", "crimes.csv"}};
  config["structures"] = nlohmann::ordered_json::array();
  config["structures"].push_back({{"name", data.spec.structure_type}, {"file", "structures.csv"}, {"kind", "sparse"}});
  config["schema"] = {{"covariates", names}};
  config["outcome"] = {{"period", data.spec.period}};
  config["seed"] = data.spec.seed;
  csv::write_file(dir / "config.json", config.dump(2) + "\n");
}

}  // namespace crimematch::synth
