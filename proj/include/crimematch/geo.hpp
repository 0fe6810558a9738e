#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

namespace crimematch::geo {

inline constexpr double kEarthRadiusM = 6'371'000.0;

/// WGS84 coordinate in degrees. Construction rejects out-of-range values.
class GeoPoint {
 public:
  GeoPoint(double lat, double lon);

  double lat() const noexcept { return lat_; }
  double lon() const noexcept { return lon_; }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

 private:
  double lat_;
  double lon_;
};

bool valid_coordinates(double lat, double lon) noexcept;

struct BoundingBox {
  double min_lat, min_lon, max_lat, max_lon;

  bool contains(const GeoPoint& p) const noexcept {
    return p.lat() >= min_lat && p.lat() <= max_lat && p.lon() >= min_lon && p.lon() <= max_lon;
  }
  GeoPoint center() const { return {(min_lat + max_lat) / 2, (min_lon + max_lon) / 2}; }
};

using Ring = std::vector<GeoPoint>;

/// Exterior ring plus holes. Closure is implicit: a trailing vertex equal to
/// the first is removed. Every ring needs at least three distinct vertices.
class Polygon {
 public:
  explicit Polygon(Ring exterior, std::vector<Ring> holes = {});

  const Ring& exterior() const noexcept { return exterior_; }
  const std::vector<Ring>& holes() const noexcept { return holes_; }
  const BoundingBox& bbox() const noexcept { return bbox_; }

 private:
  Ring exterior_;
  std::vector<Ring> holes_;
  BoundingBox bbox_;
};

/// Great-circle distance on a sphere of radius kEarthRadiusM.
double haversine_m(const GeoPoint& a, const GeoPoint& b);

/// Even-odd ray cast (ray due east) against the exterior and every hole.
bool point_in_polygon(const GeoPoint& p, const Polygon& poly);

/// Area-weighted centroid on an equirectangular projection anchored at the
/// bounding-box center. Throws a data error for zero-area geometry.
GeoPoint centroid(const Polygon& poly);

/// Planar area (m^2, holes subtracted) on the same projection as centroid().
double area_m2(const Polygon& poly);

/// Area-uniform samples over a disc: radius radius_m*sqrt(u), uniform bearing,
/// mapped off the tangent plane along the great circle so the haversine
/// distance to `center` equals the sampled radius.
std::vector<GeoPoint> sample_points_in_disc(const GeoPoint& center, double radius_m, std::size_t n,
                                            std::uint64_t seed);

/// Bounding box (degrees) of every point within radius_m of center. Longitude
/// bounds may fall outside [-180, 180] near the antimeridian; latitude bounds
/// are clamped and the longitude span widens to the full circle near a pole.
BoundingBox radius_bounds(const GeoPoint& center, double radius_m);

/// Immutable radius-query index: points bucketed into a uniform grid over an
/// equirectangular projection with cell edge equal to the largest expected
/// query radius. Queries of any radius are exact (no false positives or
/// negatives against haversine_m); larger radii just visit more cells.
class PointIndex {
 public:
  PointIndex() = default;
  /// ids[i] tags points[i]; when ids is empty, ids are 0..n-1.
  PointIndex(std::span<const GeoPoint> points, double cell_m, std::span<const std::size_t> ids = {});

  std::size_t size() const noexcept { return lat_.size(); }
  bool empty() const noexcept { return lat_.empty(); }
  double cell_m() const noexcept { return cell_m_; }

  std::size_t count_within_radius(const GeoPoint& center, double r_m) const;
  /// Ids of indexed points within r_m, ascending.
  std::vector<std::size_t> ids_within_radius(const GeoPoint& center, double r_m) const;

 private:
  template <typename Visit>
  void visit_within(const GeoPoint& center, double r_m, Visit&& visit) const;
  void visit_range(std::size_t begin, std::size_t end, const GeoPoint& center, double r_m,
                   double cx, double cy, double cz, double lo, double hi,
                   std::vector<double>& scratch, std::vector<std::size_t>* out,
                   std::size_t& count) const;
  std::int64_t cell_x(double lon) const;
  std::int64_t cell_y(double lat) const;

  double cell_m_ = 1.0;
  double ref_cos_ = 1.0;
  // Structure-of-arrays, sorted by cell.
  std::vector<double> lat_, lon_, ux_, uy_, uz_;
  std::vector<std::size_t> ids_;
  std::unordered_map<std::int64_t, std::pair<std::size_t, std::size_t>> cells_;
  std::int64_t min_cx_ = 0, max_cx_ = -1, min_cy_ = 0, max_cy_ = -1;
};

}  // namespace crimematch::geo
