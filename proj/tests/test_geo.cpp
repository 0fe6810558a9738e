#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"

#include "crimematch/error.hpp"
#include "crimematch/geo.hpp"
#include "crimematch/rng.hpp"

using namespace crimematch;
using geo::GeoPoint;

namespace {

std::vector<GeoPoint> random_points(Rng& rng, std::size_t n, double lat0, double lon0, double span_deg) {
  std::vector<GeoPoint> pts;
  for (std::size_t i = 0; i < n; ++i) {
    pts.emplace_back(lat0 + span_deg * rng.uniform(), lon0 + span_deg * rng.uniform());
  }
  return pts;
}

std::size_t brute_count(const std::vector<GeoPoint>& pts, const GeoPoint& c, double r) {
  return static_cast<std::size_t>(
      std::count_if(pts.begin(), pts.end(), [&](const GeoPoint& p) { return geo::haversine_m(c, p) <= r; }));
}

geo::Polygon square(double lat0, double lon0, double side) {
  return geo::Polygon({{lat0, lon0}, {lat0, lon0 + side}, {lat0 + side, lon0 + side}, {lat0 + side, lon0}});
}

}  // namespace

TEST_CASE("GeoPoint rejects out-of-range coordinates") {
  CHECK_THROWS_AS(GeoPoint(90.5, 0), Error);
  CHECK_THROWS_AS(GeoPoint(0, -180.01), Error);
  CHECK_THROWS_AS(GeoPoint(NAN, 0), Error);
  CHECK_NOTHROW(GeoPoint(-90, 180));
}

TEST_CASE("haversine identity, one degree of longitude, symmetry") {
  CHECK(geo::haversine_m({10, 20}, {10, 20}) == 0.0);
  CHECK(std::abs(geo::haversine_m({0, 0}, {0, 1}) - 111194.93) <= 0.01);
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    GeoPoint a(-80 + 160 * rng.uniform(), -179 + 358 * rng.uniform());
    GeoPoint b(-80 + 160 * rng.uniform(), -179 + 358 * rng.uniform());
    CHECK(geo::haversine_m(a, b) == geo::haversine_m(b, a));
  }
}

TEST_CASE("haversine triangle inequality on random triples") {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    GeoPoint a(-80 + 160 * rng.uniform(), -179 + 358 * rng.uniform());
    GeoPoint b(-80 + 160 * rng.uniform(), -179 + 358 * rng.uniform());
    GeoPoint c(-80 + 160 * rng.uniform(), -179 + 358 * rng.uniform());
    const double ab = geo::haversine_m(a, b), bc = geo::haversine_m(b, c), ac = geo::haversine_m(a, c);
    CHECK(ac <= (ab + bc) * (1 + 1e-6) + 1e-9);
  }
}

TEST_CASE("polygon construction rules") {
  CHECK_THROWS_AS(geo::Polygon({{0, 0}, {0, 1}}), Error);
  CHECK_THROWS_AS(geo::Polygon({{0, 0}, {0, 1}, {0, 0}}), Error);  // closing duplicate leaves two vertices
  const geo::Polygon closed({{0, 0}, {0, 1}, {1, 1}, {0, 0}});
  CHECK(closed.exterior().size() == 3);
}

TEST_CASE("point in polygon") {
  const auto sq = square(0, 0, 1);
  CHECK(geo::point_in_polygon({0.5, 0.5}, sq));
  CHECK_FALSE(geo::point_in_polygon({0.5, -0.2}, sq));  // west of the bounding box
  CHECK_FALSE(geo::point_in_polygon({1.5, 0.5}, sq));

  const geo::Polygon holed({{0, 0}, {0, 4}, {4, 4}, {4, 0}}, {{{1, 1}, {1, 2}, {2, 2}, {2, 1}}});
  CHECK_FALSE(geo::point_in_polygon({1.5, 1.5}, holed));
  CHECK(geo::point_in_polygon({3, 3}, holed));
  CHECK(geo::point_in_polygon({0.5, 1.5}, holed));
}

TEST_CASE("point in polygon agrees with an even-odd crossing count on a concave ring") {
  // Star-like concave ring; oracle counts crossings of the eastward ray.
  const std::vector<GeoPoint> ring = {{0, 0}, {0, 3}, {1, 1.5}, {3, 3}, {3, 0}, {1.5, 1}};
  const geo::Polygon poly(ring);
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const double lat = -0.5 + 4 * rng.uniform(), lon = -0.5 + 4 * rng.uniform();
    int crossings = 0;
    for (std::size_t a = 0, b = ring.size() - 1; a < ring.size(); b = a++) {
      const double ya = ring[a].lat(), yb = ring[b].lat(), xa = ring[a].lon(), xb = ring[b].lon();
      if ((ya > lat) != (yb > lat)) {
        const double x_at = xa + (lat - ya) * (xb - xa) / (yb - ya);
        if (x_at > lon) ++crossings;
      }
    }
    CHECK(geo::point_in_polygon({lat, lon}, poly) == (crossings % 2 == 1));
  }
}

TEST_CASE("centroid of symmetric, translated and L-shaped polygons") {
  const auto c = geo::centroid(square(0, 0, 1));
  CHECK(c.lat() == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(c.lon() == doctest::Approx(0.5).epsilon(1e-9));

  const auto small = square(41.8, -87.7, 0.01);
  const auto moved = square(41.83, -87.64, 0.01);
  const auto c1 = geo::centroid(small), c2 = geo::centroid(moved);
  CHECK(c2.lat() - c1.lat() == doctest::Approx(0.03).epsilon(1e-7));
  CHECK(c2.lon() - c1.lon() == doctest::Approx(0.06).epsilon(1e-7));

  // Union of [0,2]x[0,1] (area 2, centroid (1, .5)) and [0,1]x[1,2] (area 1,
  // centroid (.5, 1.5)) in (lon, lat): centroid (2.5/3, 2.5/3).
  const geo::Polygon ell({{0, 0}, {0, 2}, {1, 2}, {1, 1}, {2, 1}, {2, 0}});
  const auto cl = geo::centroid(ell);
  CHECK(cl.lat() == doctest::Approx(2.5 / 3).epsilon(1e-9));
  CHECK(cl.lon() == doctest::Approx(2.5 / 3).epsilon(1e-9));
}

TEST_CASE("centroid of a zero-area ring is an error") {
  const geo::Polygon flat({{0, 0}, {1, 1}, {2, 2}});
  CHECK_THROWS_AS(geo::centroid(flat), Error);
}

TEST_CASE("disc sampling stays in the disc and is deterministic") {
  const GeoPoint c(41.88, -87.63);
  const auto a = geo::sample_points_in_disc(c, 750, 20, 99);
  const auto b = geo::sample_points_in_disc(c, 750, 20, 99);
  REQUIRE(a.size() == 20);
  CHECK(a == b);
  for (const auto& p : a) CHECK(geo::haversine_m(c, p) <= 750 * (1 + 1e-9));
}

TEST_CASE("disc sampling is area-uniform") {
  const GeoPoint c(41.88, -87.63);
  const std::size_t n = 100000;
  const double R = 500;
  const auto pts = geo::sample_points_in_disc(c, R, n, 7);
  std::vector<double> u;
  std::size_t inner = 0;
  for (const auto& p : pts) {
    const double r = geo::haversine_m(c, p);
    if (r <= R / 2) ++inner;
    u.push_back(r * r / (R * R));
  }
  CHECK(std::abs(static_cast<double>(inner) / n - 0.25) <= 0.01);
  std::sort(u.begin(), u.end());
  double ks = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ks = std::max({ks, std::abs(u[i] - static_cast<double>(i) / n), std::abs(u[i] - static_cast<double>(i + 1) / n)});
  }
  CHECK(ks < 0.02);
}

TEST_CASE("radius index: empty, coincident, and brute-force equality") {
  const geo::PointIndex empty({}, 400);
  CHECK(empty.count_within_radius({0, 0}, 100) == 0);

  const std::vector<GeoPoint> same(37, GeoPoint(41.9, -87.6));
  const geo::PointIndex coincident(same, 400);
  CHECK(coincident.count_within_radius({41.9, -87.6}, 1) == 37);

  Rng rng(17);
  const auto pts = random_points(rng, 10000, 41.8, -87.8, 0.1);
  const geo::PointIndex index(pts, 400);
  for (int q = 0; q < 60; ++q) {
    const GeoPoint c(41.78 + 0.14 * rng.uniform(), -87.82 + 0.14 * rng.uniform());
    for (double r : {5.0, 25.0, 137.0, 400.0, 1500.0}) {
      CHECK(index.count_within_radius(c, r) == brute_count(pts, c, r));
    }
  }
}

TEST_CASE("radius index ids are sorted and exact, including attached ids") {
  Rng rng(19);
  const auto pts = random_points(rng, 2000, 10, 20, 0.05);
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < pts.size(); ++i) ids.push_back(1000 + 3 * i);
  const geo::PointIndex index(pts, 200, ids);
  const GeoPoint c(10.025, 20.025);
  std::vector<std::size_t> expected;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (geo::haversine_m(c, pts[i]) <= 300) expected.push_back(ids[i]);
  }
  CHECK(index.ids_within_radius(c, 300) == expected);
}

TEST_CASE("radius index handles points on the radius boundary and across the antimeridian") {
  const GeoPoint c(0, 179.9995);
  const std::vector<GeoPoint> pts = {{0, -179.9995}, {0, 179.999}, {0.0005, 180}, {0, -179.99}};
  const geo::PointIndex index(pts, 400);
  CHECK(index.count_within_radius(c, 400) == brute_count(pts, c, 400));
  CHECK(index.count_within_radius(c, 200) == brute_count(pts, c, 200));

  // Query radius exactly equal to a point's distance.
  const GeoPoint a(41.9, -87.6), b(41.901, -87.6);
  const geo::PointIndex two(std::vector<GeoPoint>{b}, 400);
  CHECK(two.count_within_radius(a, geo::haversine_m(a, b)) == 1);
}
