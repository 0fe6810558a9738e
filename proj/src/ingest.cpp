#include "crimematch/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "crimematch/csv.hpp"
#include "crimematch/error.hpp"
#include "json.hpp"

namespace crimematch::ingest {

using nlohmann::json;

namespace {

constexpr const char* kModule = "ingest";

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorKind::data, kModule, msg); }

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

geo::Ring parse_ring(const json& coords) {
  if (!coords.is_array()) fail("ring is not an array of positions");
  geo::Ring ring;
  ring.reserve(coords.size());
  for (const auto& pos : coords) {
    if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number()) {
      fail("invalid GeoJSON position");
    }
    // GeoJSON positions are [lon, lat].
    ring.emplace_back(pos[1].get<double>(), pos[0].get<double>());
  }
  return ring;
}

geo::Polygon parse_polygon(const json& rings) {
  if (!rings.is_array() || rings.empty()) fail("polygon has no rings");
  std::vector<geo::Ring> holes;
  for (std::size_t i = 1; i < rings.size(); ++i) holes.push_back(parse_ring(rings[i]));
  return geo::Polygon(parse_ring(rings[0]), std::move(holes));
}

std::vector<geo::Polygon> parse_geometry_json(const json& geometry) {
  if (!geometry.is_object() || !geometry.contains("type") || !geometry.contains("coordinates")) {
    fail("geometry lacks type or coordinates");
  }
  const auto type = geometry["type"].get<std::string>();
  const auto& coords = geometry["coordinates"];
  std::vector<geo::Polygon> parts;
  if (type == "Polygon") {
    parts.push_back(parse_polygon(coords));
  } else if (type == "MultiPolygon") {
    if (!coords.is_array() || coords.empty()) fail("MultiPolygon has no parts");
    for (const auto& poly : coords) parts.push_back(parse_polygon(poly));
  } else {
    fail("unsupported geometry type '" + type + "' (expected Polygon or MultiPolygon)");
  }
  return parts;
}

std::string geoid_text(const json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_integer()) return std::to_string(value.get<std::int64_t>());
  return {};
}

json ring_to_json(const geo::Ring& ring) {
  json out = json::array();
  for (const auto& p : ring) out.push_back({p.lat(), p.lon()});
  return out;
}

geo::Ring ring_from_json(const json& j) {
  geo::Ring ring;
  for (const auto& p : j) ring.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  return ring;
}

template <typename Point, typename MakePoint>
PointLoad<Point> load_points(const std::filesystem::path& file, char delimiter,
                             std::vector<std::string_view> required, MakePoint&& make) {
  const csv::Table table = csv::read(file, delimiter);
  std::vector<std::size_t> cols;
  for (auto name : required) cols.push_back(table.require_column(name, kModule));
  PointLoad<Point> load;
  load.rows = table.rows.size();
  for (const auto& row : table.rows) {
    if (row.fields.size() != table.header.size()) {
      load.skips.add(file, row.line, "expected " + std::to_string(table.header.size()) + " fields, got " +
                                         std::to_string(row.fields.size()));
      ++load.skipped;
      continue;
    }
    std::string reason;
    auto point = make(table, row, reason);
    if (!point) {
      load.skips.add(file, row.line, reason);
      ++load.skipped;
      continue;
    }
    load.points.push_back(std::move(*point));
  }
  if (load.rows > 0 && 2 * load.skipped > load.rows) {
    fail(file.string() + ": " + std::to_string(load.skipped) + " of " + std::to_string(load.rows) +
         " rows skipped; the file probably does not match the expected schema");
  }
  return load;
}

std::optional<geo::GeoPoint> parse_location(const csv::Table& table, const csv::Row& row, std::string& reason) {
  const auto lat = csv::parse_double(row.fields[*table.column("lat")]);
  const auto lon = csv::parse_double(row.fields[*table.column("lon")]);
  if (!lat || !lon) {
    reason = "unparseable coordinates";
    return std::nullopt;
  }
  if (!geo::valid_coordinates(*lat, *lon)) {
    reason = "coordinates out of range";
    return std::nullopt;
  }
  return geo::GeoPoint(*lat, *lon);
}

}  // namespace

std::optional<Date> parse_date(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  if (text.size() > 10 && (text[10] == 'T' || text[10] == ' ')) text = text.substr(0, 10);
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u}) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) return std::nullopt;
  }
  const int y = std::stoi(std::string(text.substr(0, 4)));
  const unsigned m = static_cast<unsigned>(std::stoi(std::string(text.substr(5, 2))));
  const unsigned d = static_cast<unsigned>(std::stoi(std::string(text.substr(8, 2))));
  const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) return std::nullopt;
  return date;
}

std::string format_date(const Date& date) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
  return buf;
}

const std::vector<std::string>& default_covariates() {
  static const std::vector<std::string> names = {
      "total_pop",          "male_pop",       "female_pop",     "m_juv",         "m_ad",
      "m_eld",              "f_juv",          "f_ad",           "f_eld",         "num_households",
      "male_never_married", "male_married",   "male_divorced",  "female_never_married",
      "female_married",     "female_divorced", "white_pop",     "black_pop",     "nat_pop",
      "asian_pop",          "mixed_pop",      "other_pop",      "no_highschool", "highschool",
      "undergrad",          "postgrad",       "median_income",  "poverty",       "in_labor",
      "unemployed"};
  return names;
}

const geo::Polygon& largest_part(const Tract& tract) {
  if (tract.boundary.empty()) fail("tract " + tract.geoid + " has no boundary");
  const geo::Polygon* best = &tract.boundary.front();
  double best_area = std::fabs(geo::area_m2(*best));
  for (const auto& part : tract.boundary) {
    const double a = std::fabs(geo::area_m2(part));
    if (a > best_area) {
      best = &part;
      best_area = a;
    }
  }
  return *best;
}

geo::GeoPoint tract_centroid(const Tract& tract) { return geo::centroid(largest_part(tract)); }

void SkipReport::add(const std::filesystem::path& file, std::size_t line, std::string_view reason) {
  lines.push_back(file.string() + ":" + std::to_string(line) + ": " + std::string(reason));
}

std::string SkipReport::text() const {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

std::vector<geo::Polygon> parse_geometry(std::string_view geojson_geometry) {
  json j;
  try {
    j = json::parse(geojson_geometry);
  } catch (const json::exception& e) {
    fail(std::string("invalid GeoJSON: ") + e.what());
  }
  return parse_geometry_json(j);
}

TractLoad load_tracts(const std::filesystem::path& demographics, const std::filesystem::path& boundaries,
                      const TractSchema& schema) {
  const csv::Table table = csv::read(demographics, schema.delimiter);
  const std::size_t geoid_col = table.require_column("geoid", kModule);
  const std::size_t pop_col = table.require_column(schema.population_column, kModule);
  std::vector<std::size_t> cov_cols;
  for (const auto& name : schema.covariates) cov_cols.push_back(table.require_column(name, kModule));
  std::vector<std::pair<std::string, std::size_t>> attr_cols;
  for (const auto& name : schema.attribute_columns) {
    if (auto c = table.column(name)) attr_cols.emplace_back(name, *c);
  }

  struct Pending {
    Tract tract;
    std::size_t line;
  };
  std::map<std::string, Pending> rows;
  TractLoad load;
  for (const auto& row : table.rows) {
    const std::string where = demographics.string() + ":" + std::to_string(row.line);
    if (row.fields.size() != table.header.size()) {
      fail(where + ": malformed row (expected " + std::to_string(table.header.size()) + " fields, got " +
           std::to_string(row.fields.size()) + ")");
    }
    Tract t;
    t.geoid = row.fields[geoid_col];
    if (t.geoid.empty()) fail(where + ": empty geoid");
    const auto pop = csv::parse_int(row.fields[pop_col]);
    if (!pop || *pop < 0) fail(where + ": malformed " + schema.population_column + " '" + row.fields[pop_col] + "'");
    t.total_pop = *pop;
    t.covariates.reserve(cov_cols.size());
    for (std::size_t k = 0; k < cov_cols.size(); ++k) {
      const auto v = csv::parse_double(row.fields[cov_cols[k]]);
      if (!v) fail(where + ": malformed value for '" + schema.covariates[k] + "': '" + row.fields[cov_cols[k]] + "'");
      t.covariates.push_back(*v);
    }
    for (const auto& [name, col] : attr_cols) {
      if (auto v = csv::parse_double(row.fields[col])) t.attributes[name] = *v;
    }
    if (rows.count(t.geoid)) fail(where + ": duplicate geoid " + t.geoid);
    std::string id = t.geoid;
    rows.emplace(std::move(id), Pending{std::move(t), row.line});
  }

  json fc;
  try {
    fc = json::parse(csv::read_file(boundaries));
  } catch (const json::exception& e) {
    fail(boundaries.string() + ": invalid JSON: " + e.what());
  }
  if (!fc.is_object() || fc.value("type", "") != "FeatureCollection" || !fc.contains("features")) {
    fail(boundaries.string() + ": expected a GeoJSON FeatureCollection");
  }
  std::set<std::string> seen_boundary;
  std::size_t feature_no = 0;
  for (const auto& feature : fc["features"]) {
    ++feature_no;
    std::string geoid;
    if (feature.contains("properties") && feature["properties"].is_object() &&
        feature["properties"].contains("geoid")) {
      geoid = geoid_text(feature["properties"]["geoid"]);
    }
    if (geoid.empty()) {
      load.skips.add(boundaries, feature_no, "feature has no geoid property");
      continue;
    }
    auto it = rows.find(geoid);
    if (it == rows.end()) {
      load.skips.add(boundaries, feature_no, "geoid " + geoid + " has no demographics row");
      continue;
    }
    if (!seen_boundary.insert(geoid).second) fail(boundaries.string() + ": duplicate feature for geoid " + geoid);
    try {
      it->second.tract.boundary = parse_geometry_json(feature.at("geometry"));
    } catch (const Error& e) {
      fail(boundaries.string() + ": feature " + std::to_string(feature_no) + " (geoid " + geoid + "): " + e.what());
    } catch (const json::exception& e) {
      fail(boundaries.string() + ": feature " + std::to_string(feature_no) + ": " + e.what());
    }
  }

  for (auto& [geoid, pending] : rows) {
    if (pending.tract.boundary.empty()) {
      load.skips.add(demographics, pending.line, "geoid " + geoid + " has no boundary feature");
      continue;
    }
    if (pending.tract.total_pop == 0) {
      ++load.unpopulated_dropped;
      continue;
    }
    load.tracts.push_back(std::move(pending.tract));
  }
  return load;
}

PointLoad<EventPoint> load_events(const std::filesystem::path& file, char delimiter) {
  return load_points<EventPoint>(
      file, delimiter, {"lat", "lon", "date", "category"},
      [](const csv::Table& table, const csv::Row& row, std::string& reason) -> std::optional<EventPoint> {
        auto loc = parse_location(table, row, reason);
        if (!loc) return std::nullopt;
        auto date = parse_date(row.fields[*table.column("date")]);
        if (!date) {
          reason = "unparseable date '" + row.fields[*table.column("date")] + "'";
          return std::nullopt;
        }
        const auto& category = row.fields[*table.column("category")];
        if (category.empty()) {
          reason = "empty category";
          return std::nullopt;
        }
        return EventPoint{*loc, *date, category};
      });
}

PointLoad<StructurePoint> load_structures(const std::filesystem::path& file, char delimiter) {
  return load_points<StructurePoint>(
      file, delimiter, {"lat", "lon"},
      [](const csv::Table& table, const csv::Row& row, std::string& reason) -> std::optional<StructurePoint> {
        auto loc = parse_location(table, row, reason);
        if (!loc) return std::nullopt;
        StructurePoint s{*loc, std::nullopt};
        if (auto col = table.column("opened"); col && !row.fields[*col].empty()) {
          s.opened = parse_date(row.fields[*col]);
          if (!s.opened) {
            reason = "unparseable opened date '" + row.fields[*col] + "'";
            return std::nullopt;
          }
        }
        return s;
      });
}

const std::set<std::string>& default_violent_categories() {
  static const std::set<std::string> categories = {"battery", "rape", "homicide"};
  return categories;
}

std::vector<EventPoint> filter_violent(std::span<const EventPoint> events, const std::set<std::string>& categories) {
  if (categories.empty()) throw Error(ErrorKind::config, kModule, "violent category set is empty");
  std::set<std::string> wanted;
  for (const auto& c : categories) wanted.insert(lower(c));
  std::vector<EventPoint> out;
  for (const auto& e : events) {
    if (wanted.count(lower(e.category))) out.push_back(e);
  }
  return out;
}

TractLocator::TractLocator(std::span<const Tract> tracts) : tracts_(tracts) {
  std::size_t parts = 0;
  bool first = true;
  for (const auto& t : tracts) {
    for (const auto& part : t.boundary) {
      ++parts;
      const auto& b = part.bbox();
      if (first) {
        extent_ = b;
        first = false;
      } else {
        extent_.min_lat = std::min(extent_.min_lat, b.min_lat);
        extent_.min_lon = std::min(extent_.min_lon, b.min_lon);
        extent_.max_lat = std::max(extent_.max_lat, b.max_lat);
        extent_.max_lon = std::max(extent_.max_lon, b.max_lon);
      }
    }
  }
  if (parts == 0) return;
  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(parts)))) * 2;
  nx_ = ny_ = std::max<std::size_t>(1, side);
  dx_ = std::max(1e-12, (extent_.max_lon - extent_.min_lon) / static_cast<double>(nx_));
  dy_ = std::max(1e-12, (extent_.max_lat - extent_.min_lat) / static_cast<double>(ny_));
  cells_.resize(nx_ * ny_);
  auto clamp_x = [&](double lon) {
    return std::min(nx_ - 1, static_cast<std::size_t>(std::max(0.0, std::floor((lon - extent_.min_lon) / dx_))));
  };
  auto clamp_y = [&](double lat) {
    return std::min(ny_ - 1, static_cast<std::size_t>(std::max(0.0, std::floor((lat - extent_.min_lat) / dy_))));
  };
  for (std::size_t ti = 0; ti < tracts.size(); ++ti) {
    for (std::size_t pi = 0; pi < tracts[ti].boundary.size(); ++pi) {
      const auto& b = tracts[ti].boundary[pi].bbox();
      for (auto x = clamp_x(b.min_lon); x <= clamp_x(b.max_lon); ++x) {
        for (auto y = clamp_y(b.min_lat); y <= clamp_y(b.max_lat); ++y) cells_[y * nx_ + x].emplace_back(ti, pi);
      }
    }
  }
}

std::optional<std::size_t> TractLocator::locate(const geo::GeoPoint& p) const {
  if (cells_.empty() || !extent_.contains(p)) return std::nullopt;
  const auto x = std::min(nx_ - 1, static_cast<std::size_t>(std::floor((p.lon() - extent_.min_lon) / dx_)));
  const auto y = std::min(ny_ - 1, static_cast<std::size_t>(std::floor((p.lat() - extent_.min_lat) / dy_)));
  std::optional<std::size_t> best;
  for (const auto& [ti, pi] : cells_[y * nx_ + x]) {
    if (best && tracts_[ti].geoid >= tracts_[*best].geoid) continue;
    if (geo::point_in_polygon(p, tracts_[ti].boundary[pi])) best = ti;
  }
  return best;
}

JoinResult spatial_join(std::span<const geo::GeoPoint> points, std::span<const Tract> tracts) {
  JoinResult result;
  for (const auto& t : tracts) result.counts[t.geoid] = 0;
  const TractLocator locator(tracts);
  result.assignment.reserve(points.size());
  for (const auto& p : points) {
    auto hit = locator.locate(p);
    result.assignment.push_back(hit);
    if (hit) {
      ++result.counts[tracts[*hit].geoid];
    } else {
      ++result.unassigned;
    }
  }
  return result;
}

double crime_rate(std::int64_t crime_count, std::int64_t total_pop) {
  if (total_pop <= 0) {
    throw Error(ErrorKind::data, kModule, "crime_rate requires a populated tract (total_pop > 0)");
  }
  return static_cast<double>(crime_count) / static_cast<double>(total_pop);
}

std::vector<Period> default_periods() {
  using namespace std::chrono;
  return {
      {"S1", year{2008} / January / 1, year{2012} / December / 31},
      {"S2", year{2013} / January / 1, year{2017} / December / 31},
      {"S3", year{2018} / January / 1, year{2022} / December / 31},
  };
}

const Tract* AnalysisTable::find(std::string_view geoid) const {
  auto it = std::lower_bound(tracts.begin(), tracts.end(), geoid,
                             [](const Tract& t, std::string_view g) { return t.geoid < g; });
  if (it == tracts.end() || it->geoid != geoid) return nullptr;
  return &*it;
}

AnalysisTable build_analysis_table(std::vector<Tract> tracts, std::vector<std::string> covariate_names,
                                   std::vector<Period> periods, std::span<const EventPoint> crimes,
                                   const std::map<std::string, std::vector<StructurePoint>>& structures) {
  std::sort(tracts.begin(), tracts.end(), [](const Tract& a, const Tract& b) { return a.geoid < b.geoid; });
  AnalysisTable table;
  table.covariate_names = std::move(covariate_names);
  table.periods = std::move(periods);
  for (const auto& t : tracts) {
    if (t.total_pop <= 0) fail("tract " + t.geoid + " is unpopulated");
    if (t.covariates.size() != table.covariate_names.size()) {
      fail("tract " + t.geoid + " has " + std::to_string(t.covariates.size()) + " covariates, schema has " +
           std::to_string(table.covariate_names.size()));
    }
  }
  table.tracts = std::move(tracts);

  std::vector<geo::GeoPoint> crime_locs;
  crime_locs.reserve(crimes.size());
  for (const auto& e : crimes) crime_locs.push_back(e.location);
  const JoinResult crime_join = spatial_join(crime_locs, table.tracts);
  for (const auto& period : table.periods) {
    auto& counts = table.crime_counts[period.name];
    for (const auto& t : table.tracts) counts[t.geoid] = 0;
    auto& unassigned = table.unassigned_crimes[period.name];
    unassigned = 0;
    for (std::size_t i = 0; i < crimes.size(); ++i) {
      if (!period.contains(crimes[i].date)) continue;
      if (const auto hit = crime_join.assignment[i]) {
        ++counts[table.tracts[*hit].geoid];
      } else {
        ++unassigned;
      }
    }
  }

  for (const auto& [type, points] : structures) {
    std::vector<geo::GeoPoint> locs;
    locs.reserve(points.size());
    for (const auto& s : points) locs.push_back(s.location);
    const JoinResult join = spatial_join(locs, table.tracts);
    for (const auto& period : table.periods) {
      auto& counts = table.structure_counts[type][period.name];
      for (const auto& t : table.tracts) counts[t.geoid] = 0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].opened && *points[i].opened > period.end) continue;
        if (const auto hit = join.assignment[i]) ++counts[table.tracts[*hit].geoid];
      }
    }
  }

  for (auto& t : table.tracts) {
    for (const auto& period : table.periods) {
      t.period_outcomes[period.name] = crime_rate(table.crime_counts[period.name][t.geoid], t.total_pop);
    }
  }
  return table;
}

std::string to_json(const AnalysisTable& table) {
  json j;
  j["covariate_names"] = table.covariate_names;
  j["periods"] = json::array();
  for (const auto& p : table.periods) {
    j["periods"].push_back({{"name", p.name}, {"start", format_date(p.start)}, {"end", format_date(p.end)}});
  }
  j["tracts"] = json::array();
  for (const auto& t : table.tracts) {
    json parts = json::array();
    for (const auto& part : t.boundary) {
      json holes = json::array();
      for (const auto& h : part.holes()) holes.push_back(ring_to_json(h));
      parts.push_back({{"exterior", ring_to_json(part.exterior())}, {"holes", holes}});
    }
    j["tracts"].push_back({{"geoid", t.geoid},
                           {"total_pop", t.total_pop},
                           {"covariates", t.covariates},
                           {"attributes", t.attributes},
                           {"period_outcomes", t.period_outcomes},
                           {"boundary", parts}});
  }
  j["structure_counts"] = table.structure_counts;
  j["crime_counts"] = table.crime_counts;
  j["unassigned_crimes"] = table.unassigned_crimes;
  return j.dump(1) + "\n";
}

AnalysisTable analysis_table_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    AnalysisTable table;
    table.covariate_names = j.at("covariate_names").get<std::vector<std::string>>();
    for (const auto& p : j.at("periods")) {
      auto start = parse_date(p.at("start").get<std::string>());
      auto end = parse_date(p.at("end").get<std::string>());
      if (!start || !end) fail("bad period dates in analysis table");
      table.periods.push_back({p.at("name").get<std::string>(), *start, *end});
    }
    for (const auto& jt : j.at("tracts")) {
      Tract t;
      t.geoid = jt.at("geoid").get<std::string>();
      t.total_pop = jt.at("total_pop").get<std::int64_t>();
      t.covariates = jt.at("covariates").get<std::vector<double>>();
      t.attributes = jt.at("attributes").get<std::map<std::string, double>>();
      t.period_outcomes = jt.at("period_outcomes").get<std::map<std::string, double>>();
      for (const auto& part : jt.at("boundary")) {
        std::vector<geo::Ring> holes;
        for (const auto& h : part.at("holes")) holes.push_back(ring_from_json(h));
        t.boundary.emplace_back(ring_from_json(part.at("exterior")), std::move(holes));
      }
      table.tracts.push_back(std::move(t));
    }
    table.structure_counts = j.at("structure_counts")
                                 .get<std::map<std::string, std::map<std::string, std::map<std::string, std::int64_t>>>>();
    table.crime_counts = j.at("crime_counts").get<std::map<std::string, std::map<std::string, std::int64_t>>>();
    table.unassigned_crimes = j.at("unassigned_crimes").get<std::map<std::string, std::int64_t>>();
    return table;
  } catch (const json::exception& e) {
    fail(std::string("malformed analysis table: ") + e.what());
  }
}

void save(const AnalysisTable& table, const std::filesystem::path& file) { csv::write_file(file, to_json(table)); }

AnalysisTable load_analysis_table(const std::filesystem::path& file) {
  return analysis_table_from_json(csv::read_file(file));
}

}  // namespace crimematch::ingest
