#include <cmath>
#include <numbers>

#include "doctest.h"

#include "crimematch/density.hpp"
#include "crimematch/error.hpp"
#include "crimematch/rng.hpp"

using namespace crimematch;
using geo::GeoPoint;

namespace {

constexpr double kLat0 = 41.80, kLon0 = -87.75, kCell = 0.01;

ingest::Tract square_tract(std::size_t row, std::size_t col, std::size_t cols) {
  const double lat = kLat0 + kCell * static_cast<double>(row), lon = kLon0 + kCell * static_cast<double>(col);
  ingest::Tract t;
  char buf[16];
  std::snprintf(buf, sizeof buf, "t%04zu", row * cols + col);
  t.geoid = buf;
  t.boundary.emplace_back(geo::Ring{{lat, lon}, {lat, lon + kCell}, {lat + kCell, lon + kCell}, {lat + kCell, lon}});
  t.total_pop = 100;
  return t;
}

std::vector<GeoPoint> uniform_points(std::size_t n, double lat_lo, double lat_hi, double lon_lo, double lon_hi,
                                     Rng& rng) {
  std::vector<GeoPoint> out;
  for (std::size_t i = 0; i < n; ++i)
    out.emplace_back(lat_lo + (lat_hi - lat_lo) * rng.uniform(), lon_lo + (lon_hi - lon_lo) * rng.uniform());
  return out;
}

double brute_density(const std::vector<GeoPoint>& crimes, const GeoPoint& c, double r) {
  std::size_t n = 0;
  for (const auto& p : crimes) n += geo::haversine_m(p, c) <= r;
  return static_cast<double>(n) / (std::numbers::pi * r * r / density::kSquareMetersPerSquareMile);
}

}  // namespace

TEST_CASE("density at a radius") {
  const GeoPoint c(41.85, -87.65);
  const std::vector<GeoPoint> two{c, GeoPoint(41.8501, -87.65)};  // ~11 m apart
  const geo::PointIndex idx(two, 400.0);
  CHECK(density::density_at(idx, c, 25.0) == doctest::Approx(2638.2).epsilon(1e-4));
  const std::vector<GeoPoint> one{c};
  CHECK(density::density_at(geo::PointIndex(one, 400.0), c, 25.0) * 2.0 ==
        doctest::Approx(density::density_at(idx, c, 25.0)));
  CHECK(density::density_at(geo::PointIndex({}, 400.0), c, 25.0) == 0.0);
  CHECK_THROWS_AS(density::density_at(idx, c, 0.0), Error);
}

TEST_CASE("radius grid") {
  const density::RadiusGrid g;
  REQUIRE(g.size() == 16);
  CHECK(g.radii().front() == 25.0);
  CHECK(g.radii().back() == 400.0);
  CHECK(density::RadiusGrid::uniform(25, 25, 16).radii() == g.radii());
  CHECK_THROWS_AS(density::RadiusGrid({50.0, 50.0}), Error);
  CHECK_THROWS_AS(density::RadiusGrid({-5.0, 10.0}), Error);
  CHECK_THROWS_AS(density::RadiusGrid(std::vector<double>{}), Error);
}

TEST_CASE("fixed counts give strictly decreasing density") {
  const GeoPoint s(41.85, -87.65);
  const std::vector<GeoPoint> crimes(7, s);
  const geo::PointIndex idx(crimes, 400.0);
  const std::vector<GeoPoint> centers{s};
  const auto curve = density::treated_curve(centers, idx, density::RadiusGrid{});
  REQUIRE(curve.mean.size() == 16);
  for (std::size_t i = 1; i < 16; ++i) CHECK(curve.mean[i] < curve.mean[i - 1]);
}

TEST_CASE("treated curve equals the per-center brute-force average") {
  Rng rng(4);
  const auto crimes = uniform_points(4000, 41.84, 41.86, -87.66, -87.64, rng);
  const auto centers = uniform_points(5, 41.845, 41.855, -87.655, -87.645, rng);
  const geo::PointIndex idx(crimes, 400.0);
  const density::RadiusGrid grid;
  const auto curve = density::treated_curve(centers, idx, grid, density::Region::disc, 3);
  CHECK(curve.centers == 5);
  for (std::size_t r = 0; r < grid.size(); ++r) {
    double sum = 0.0;
    for (const auto& c : centers) sum += brute_density(crimes, c, grid.radii()[r]);
    CHECK(curve.mean[r] == doctest::Approx(sum / 5.0).epsilon(1e-12));
  }
  const std::vector<GeoPoint> single{centers[0]};
  const auto own = density::treated_curve(single, idx, grid);
  CHECK(own.mean == density::center_profile(idx, centers[0], grid));

  // Cumulative counts never shrink as the disc grows.
  for (const auto& c : centers) {
    const auto prof = density::center_profile(idx, c, grid);
    for (std::size_t r = 1; r < grid.size(); ++r) {
      const double a0 = std::numbers::pi * grid.radii()[r - 1] * grid.radii()[r - 1];
      const double a1 = std::numbers::pi * grid.radii()[r] * grid.radii()[r];
      CHECK(prof[r] * a1 >= prof[r - 1] * a0 - 1e-6);
    }
  }
  CHECK_THROWS_AS(density::treated_curve(std::span<const GeoPoint>{}, idx, grid), Error);
}

TEST_CASE("annulus profile partitions the disc counts") {
  Rng rng(8);
  const auto crimes = uniform_points(3000, 41.84, 41.86, -87.66, -87.64, rng);
  const geo::PointIndex idx(crimes, 400.0);
  const GeoPoint c(41.85, -87.65);
  const density::RadiusGrid grid;
  const auto disc = density::center_profile(idx, c, grid);
  const auto ring = density::center_profile(idx, c, grid, density::Region::annulus);
  double count = 0.0;
  for (std::size_t r = 0; r < grid.size(); ++r) {
    const double inner = r == 0 ? 0.0 : grid.radii()[r - 1];
    const double outer = grid.radii()[r];
    count += ring[r] * std::numbers::pi * (outer * outer - inner * inner);
    CHECK(count == doctest::Approx(disc[r] * std::numbers::pi * outer * outer));
  }
}

TEST_CASE("control centers") {
  const auto t = square_tract(3, 4, 10);
  density::ControlSampling s;
  s.seed = 5;
  const auto centers = density::control_centers(t, s);
  REQUIRE(centers.size() == 20);
  const auto cen = ingest::tract_centroid(t);
  for (const auto& p : centers) CHECK(geo::haversine_m(p, cen) <= 750.0 + 1e-6);
  CHECK(density::control_centers(t, s) == centers);
  CHECK(density::tract_seed(5, "a") != density::tract_seed(5, "b"));
  CHECK(density::tract_seed(5, "a") == density::tract_seed(5, "a"));

  s.inside_tract_only = true;
  for (const auto& p : density::control_centers(t, s)) CHECK(geo::point_in_polygon(p, t.boundary[0]));

  const std::vector<ingest::Tract> tracts{t, square_tract(0, 0, 10)};
  const auto zero = density::control_curve(tracts, geo::PointIndex({}, 400.0), density::RadiusGrid{}, s);
  CHECK(zero.centers == 40);
  for (double v : zero.mean) CHECK(v == 0.0);
}

TEST_CASE("uniform crimes give matching treated and control curves") {
  const std::size_t rows = 10, cols = 10;
  Rng rng(2024);
  ingest::AnalysisTable table;
  std::vector<ingest::Tract> tracts;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) table.tracts.push_back(square_tract(r, c, cols));

  // Checkerboard treatment; 20 structures in each treated tract.
  std::vector<ingest::StructurePoint> structures;
  treatment::Counts counts;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const bool treated = (r + c) % 2 == 0;
      counts[table.tracts[r * cols + c].geoid] = treated ? 20 : 0;
      if (!treated) continue;
      const double lat = kLat0 + kCell * static_cast<double>(r), lon = kLon0 + kCell * static_cast<double>(c);
      for (const auto& p : uniform_points(20, lat + 1e-4, lat + kCell - 1e-4, lon + 1e-4, lon + kCell - 1e-4, rng))
        structures.push_back({p, std::nullopt});
    }
  const auto assignment = treatment::classify_sparse(counts);

  std::vector<matching::MatchedGroup> groups;
  for (const auto& t : table.tracts) groups.push_back({t.geoid, {}, {}, 0.0});

  // Crimes cover the grid plus a margin wider than sample radius plus largest radius.
  const double margin = 0.016;
  const auto crimes = uniform_points(50'000, kLat0 - margin, kLat0 + kCell * rows + margin, kLon0 - margin * 1.35,
                                     kLon0 + kCell * cols + margin * 1.35, rng);
  const geo::PointIndex idx(crimes, 400.0);
  density::ControlSampling sampling;
  sampling.seed = 3;
  const auto curve = density::density_analysis(assignment, groups, table, structures, idx, density::RadiusGrid{},
                                               sampling, density::Region::disc, 2);
  CHECK(curve.n_treated_centers == 1000);
  CHECK(curve.n_control_centers == 1000);
  REQUIRE(curve.treated_mean.size() == 16);
  // Below 75 m the expected in-disc count is under five points per center.
  for (std::size_t r = 2; r < 16; ++r) {
    const double gap = std::abs(curve.treated_mean[r] - curve.control_mean[r]) / curve.control_mean[r];
    CHECK(gap < 0.10);
  }

  const auto csv = density::to_csv(curve);
  CHECK(csv.rfind("radius_m,treated_density,control_density,n_treated,n_control\n", 0) == 0);

  // Groups that retain no treated tract leave nothing to measure.
  std::vector<matching::MatchedGroup> control_only{{table.tracts[1].geoid, {}, {}, 0.0}};
  CHECK_THROWS_AS(density::density_analysis(assignment, control_only, table, structures, idx, density::RadiusGrid{},
                                            sampling),
                  Error);
}
