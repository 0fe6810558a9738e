#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crimematch/geo.hpp"

namespace crimematch::ingest {

using Date = std::chrono::year_month_day;

/// Parses `YYYY-MM-DD`; a trailing time part (`T...` or ` ...`) is ignored.
std::optional<Date> parse_date(std::string_view text);
std::string format_date(const Date& date);

/// The thirty ACS tract covariates, in canonical order.
const std::vector<std::string>& default_covariates();
inline constexpr std::string_view kPopulationColumn = "total_pop";

struct Tract {
  std::string geoid;
  std::vector<geo::Polygon> boundary;  // every part; joins use all of them
  std::vector<double> covariates;      // ordered per the configured schema
  std::int64_t total_pop = 0;
  std::map<std::string, double> period_outcomes;  // period name -> crime rate
  std::map<std::string, double> attributes;       // extra numeric columns (e.g. survey outcomes)
};

/// Largest boundary part by planar area; used for the tract centroid.
const geo::Polygon& largest_part(const Tract& tract);
geo::GeoPoint tract_centroid(const Tract& tract);

/// Non-fatal problems, one `<file>:<line>: <reason>` entry each.
struct SkipReport {
  std::vector<std::string> lines;

  void add(const std::filesystem::path& file, std::size_t line, std::string_view reason);
  std::string text() const;
};

struct TractSchema {
  std::vector<std::string> covariates = default_covariates();
  std::string population_column = std::string(kPopulationColumn);
  /// Additional numeric columns copied into Tract::attributes when present.
  std::vector<std::string> attribute_columns;
  char delimiter = ',';
};

struct TractLoad {
  std::vector<Tract> tracts;  // sorted by geoid
  SkipReport skips;
  std::size_t unpopulated_dropped = 0;
};

/// Joins the demographics table and the boundary FeatureCollection on geoid.
TractLoad load_tracts(const std::filesystem::path& demographics, const std::filesystem::path& boundaries,
                      const TractSchema& schema = {});

/// Parses a GeoJSON Polygon or MultiPolygon geometry object.
std::vector<geo::Polygon> parse_geometry(std::string_view geojson_geometry);

struct EventPoint {
  geo::GeoPoint location;
  Date date;
  std::string category;
};

struct StructurePoint {
  geo::GeoPoint location;
  std::optional<Date> opened;  // absent: present since the start of the analysis
};

template <typename Point>
struct PointLoad {
  std::vector<Point> points;
  std::size_t rows = 0;
  std::size_t skipped = 0;
  SkipReport skips;
};

PointLoad<EventPoint> load_events(const std::filesystem::path& file, char delimiter = ',');
PointLoad<StructurePoint> load_structures(const std::filesystem::path& file, char delimiter = ',');

const std::set<std::string>& default_violent_categories();

/// Keeps events whose category matches one in `categories`, ignoring case.
std::vector<EventPoint> filter_violent(std::span<const EventPoint> events,
                                       const std::set<std::string>& categories);

/// Point-in-tract lookup over a coarse grid of tract bounding boxes.
class TractLocator {
 public:
  explicit TractLocator(std::span<const Tract> tracts);

  /// Index of the containing tract; on shared boundaries the smallest geoid wins.
  std::optional<std::size_t> locate(const geo::GeoPoint& p) const;

 private:
  std::span<const Tract> tracts_;
  geo::BoundingBox extent_{};
  std::size_t nx_ = 0, ny_ = 0;
  double dx_ = 1, dy_ = 1;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> cells_;  // (tract, part)
};

struct JoinResult {
  std::map<std::string, std::int64_t> counts;  // every tract, zeros included
  std::int64_t unassigned = 0;
  std::vector<std::optional<std::size_t>> assignment;  // tract index per point
};

JoinResult spatial_join(std::span<const geo::GeoPoint> points, std::span<const Tract> tracts);

/// Crimes per resident over the analysis period.
double crime_rate(std::int64_t crime_count, std::int64_t total_pop);

struct Period {
  std::string name;
  Date start;
  Date end;  // inclusive

  bool contains(const Date& d) const { return d >= start && d <= end; }
};

std::vector<Period> default_periods();

struct AnalysisTable {
  std::vector<std::string> covariate_names;
  std::vector<Period> periods;
  std::vector<Tract> tracts;  // sorted by geoid
  /// structure type -> period -> geoid -> count
  std::map<std::string, std::map<std::string, std::map<std::string, std::int64_t>>> structure_counts;
  /// period -> geoid -> count
  std::map<std::string, std::map<std::string, std::int64_t>> crime_counts;
  std::map<std::string, std::int64_t> unassigned_crimes;  // period -> count

  const Tract* find(std::string_view geoid) const;
};

/// Aggregates filtered crimes and structures into per-tract, per-period counts
/// and fills each tract's period_outcomes with its crime rate. A structure
/// counts toward a period unless it opened after the period's end.
AnalysisTable build_analysis_table(std::vector<Tract> tracts, std::vector<std::string> covariate_names,
                                   std::vector<Period> periods, std::span<const EventPoint> crimes,
                                   const std::map<std::string, std::vector<StructurePoint>>& structures);

std::string to_json(const AnalysisTable& table);
AnalysisTable analysis_table_from_json(std::string_view text);
void save(const AnalysisTable& table, const std::filesystem::path& file);
AnalysisTable load_analysis_table(const std::filesystem::path& file);

}  // namespace crimematch::ingest
