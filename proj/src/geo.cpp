#include "crimematch/geo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "crimematch/error.hpp"
#include "crimematch/kernels.hpp"
#include "crimematch/rng.hpp"

namespace crimematch::geo {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Ring normalize_ring(Ring ring, const char* what) {
  if (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();
  std::vector<std::pair<double, double>> distinct;
  distinct.reserve(ring.size());
  for (const auto& p : ring) distinct.emplace_back(p.lat(), p.lon());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3) {
    throw Error(ErrorKind::data, "geo",
                std::string(what) + " ring needs at least 3 distinct vertices, got " +
                    std::to_string(distinct.size()));
  }
  return ring;
}

bool inside_ring(const GeoPoint& p, const Ring& ring) {
  bool inside = false;
  const double px = p.lon();
  const double py = p.lat();
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const double xi = ring[i].lon(), yi = ring[i].lat();
    const double xj = ring[j].lon(), yj = ring[j].lat();
    if ((yi > py) != (yj > py)) {
      const double x_cross = xi + (py - yi) * (xj - xi) / (yj - yi);
      if (px < x_cross) inside = !inside;
    }
  }
  return inside;
}

struct Projection {
  double lat0, lon0, cos0;

  explicit Projection(const BoundingBox& box)
      : lat0((box.min_lat + box.max_lat) / 2), lon0((box.min_lon + box.max_lon) / 2),
        cos0(std::cos(lat0 * kDeg)) {}

  double x(const GeoPoint& p) const { return kEarthRadiusM * (p.lon() - lon0) * kDeg * cos0; }
  double y(const GeoPoint& p) const { return kEarthRadiusM * (p.lat() - lat0) * kDeg; }
  GeoPoint inverse(double x, double y) const {
    return {lat0 + y / (kEarthRadiusM * kDeg), lon0 + x / (kEarthRadiusM * kDeg * cos0)};
  }
};

// Signed shoelace area and first moments of one ring.
struct RingMoments {
  double area = 0, mx = 0, my = 0;
};

RingMoments ring_moments(const Ring& ring, const Projection& proj) {
  RingMoments m;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const double x0 = proj.x(ring[j]), y0 = proj.y(ring[j]);
    const double x1 = proj.x(ring[i]), y1 = proj.y(ring[i]);
    const double cross = x0 * y1 - x1 * y0;
    m.area += cross;
    m.mx += (x0 + x1) * cross;
    m.my += (y0 + y1) * cross;
  }
  m.area *= 0.5;
  m.mx /= 6.0;
  m.my /= 6.0;
  return m;
}

RingMoments polygon_moments(const Polygon& poly, const Projection& proj) {
  auto oriented = [&](const Ring& ring, double sign) {
    RingMoments m = ring_moments(ring, proj);
    const double s = (m.area < 0 ? -1.0 : 1.0) * sign;
    return RingMoments{s * m.area, s * m.mx, s * m.my};
  };
  RingMoments total = oriented(poly.exterior(), 1.0);
  for (const auto& hole : poly.holes()) {
    RingMoments h = oriented(hole, -1.0);
    total.area += h.area;
    total.mx += h.mx;
    total.my += h.my;
  }
  return total;
}

void to_unit(double lat, double lon, double& x, double& y, double& z) {
  const double phi = lat * kDeg, lam = lon * kDeg;
  const double c = std::cos(phi);
  x = c * std::cos(lam);
  y = c * std::sin(lam);
  z = std::sin(phi);
}

constexpr std::int64_t kCellOffset = std::int64_t{1} << 31;

std::int64_t cell_key(std::int64_t cx, std::int64_t cy) {
  return ((cx + kCellOffset) << 32) | ((cy + kCellOffset) & 0xffffffffLL);
}

}  // namespace

bool valid_coordinates(double lat, double lon) noexcept {
  return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 && lon >= -180.0 &&
         lon <= 180.0;
}

GeoPoint::GeoPoint(double lat, double lon) : lat_(lat), lon_(lon) {
  if (!valid_coordinates(lat, lon)) {
    throw Error(ErrorKind::data, "geo",
                "coordinate out of range: (" + std::to_string(lat) + ", " + std::to_string(lon) + ")");
  }
}

Polygon::Polygon(Ring exterior, std::vector<Ring> holes)
    : exterior_(normalize_ring(std::move(exterior), "exterior")) {
  holes_.reserve(holes.size());
  for (auto& h : holes) holes_.push_back(normalize_ring(std::move(h), "hole"));
  bbox_ = {exterior_[0].lat(), exterior_[0].lon(), exterior_[0].lat(), exterior_[0].lon()};
  for (const auto& p : exterior_) {
    bbox_.min_lat = std::min(bbox_.min_lat, p.lat());
    bbox_.max_lat = std::max(bbox_.max_lat, p.lat());
    bbox_.min_lon = std::min(bbox_.min_lon, p.lon());
    bbox_.max_lon = std::max(bbox_.max_lon, p.lon());
  }
}

double haversine_m(const GeoPoint& a, const GeoPoint& b) {
  const double dlat = (b.lat() - a.lat()) * kDeg;
  const double dlon = (b.lon() - a.lon()) * kDeg;
  const double s_lat = std::sin(dlat / 2);
  const double s_lon = std::sin(dlon / 2);
  const double h = s_lat * s_lat + std::cos(a.lat() * kDeg) * std::cos(b.lat() * kDeg) * s_lon * s_lon;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

bool point_in_polygon(const GeoPoint& p, const Polygon& poly) {
  if (!poly.bbox().contains(p)) return false;
  if (!inside_ring(p, poly.exterior())) return false;
  for (const auto& hole : poly.holes()) {
    if (inside_ring(p, hole)) return false;
  }
  return true;
}

double area_m2(const Polygon& poly) {
  const Projection proj(poly.bbox());
  return polygon_moments(poly, proj).area;
}

GeoPoint centroid(const Polygon& poly) {
  const Projection proj(poly.bbox());
  const RingMoments m = polygon_moments(poly, proj);
  if (!(std::fabs(m.area) > 1e-9)) {
    throw Error(ErrorKind::data, "geo", "degenerate geometry: polygon has zero area");
  }
  return proj.inverse(m.mx / m.area, m.my / m.area);
}

std::vector<GeoPoint> sample_points_in_disc(const GeoPoint& center, double radius_m, std::size_t n,
                                            std::uint64_t seed) {
  Rng rng(seed);
  const double phi1 = center.lat() * kDeg;
  const double lam1 = center.lon() * kDeg;
  const double sin1 = std::sin(phi1), cos1 = std::cos(phi1);
  std::vector<GeoPoint> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double rho = radius_m * std::sqrt(rng.uniform());
    const double bearing = 2.0 * std::numbers::pi * rng.uniform();
    const double delta = rho / kEarthRadiusM;
    const double sin_phi2 = sin1 * std::cos(delta) + cos1 * std::sin(delta) * std::cos(bearing);
    const double phi2 = std::asin(std::clamp(sin_phi2, -1.0, 1.0));
    const double lam2 = lam1 + std::atan2(std::sin(bearing) * std::sin(delta) * cos1,
                                          std::cos(delta) - sin1 * sin_phi2);
    double lon = lam2 / kDeg;
    if (lon > 180.0) lon -= 360.0;
    if (lon < -180.0) lon += 360.0;
    out.emplace_back(std::clamp(phi2 / kDeg, -90.0, 90.0), lon);
  }
  return out;
}

BoundingBox radius_bounds(const GeoPoint& center, double radius_m) {
  constexpr double kPad = 1e-9;  // degrees
  const double delta = radius_m / kEarthRadiusM;
  const double phi = center.lat() * kDeg;
  double min_phi = phi - delta, max_phi = phi + delta;
  BoundingBox box{};
  if (min_phi > -std::numbers::pi / 2 && max_phi < std::numbers::pi / 2 && delta < std::numbers::pi / 2) {
    const double arg = std::sin(delta) / std::cos(phi);
    if (arg < 1.0) {
      const double dlam = std::asin(arg) / kDeg;
      box.min_lon = center.lon() - dlam - kPad;
      box.max_lon = center.lon() + dlam + kPad;
    } else {
      box.min_lon = -180.0;
      box.max_lon = 180.0;
    }
  } else {
    min_phi = std::max(min_phi, -std::numbers::pi / 2);
    max_phi = std::min(max_phi, std::numbers::pi / 2);
    box.min_lon = -180.0;
    box.max_lon = 180.0;
  }
  box.min_lat = std::max(-90.0, min_phi / kDeg - kPad);
  box.max_lat = std::min(90.0, max_phi / kDeg + kPad);
  return box;
}

PointIndex::PointIndex(std::span<const GeoPoint> points, double cell_m, std::span<const std::size_t> ids)
    : cell_m_(std::max(1.0, cell_m)) {
  if (!ids.empty() && ids.size() != points.size()) {
    throw Error(ErrorKind::data, "geo", "PointIndex: ids and points differ in length");
  }
  if (points.empty()) return;
  double lat_sum = 0.0;
  for (const auto& p : points) lat_sum += p.lat();
  ref_cos_ = std::max(1e-6, std::cos(lat_sum / static_cast<double>(points.size()) * kDeg));

  std::vector<std::int64_t> keys(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    keys[i] = cell_key(cell_x(points[i].lon()), cell_y(points[i].lat()));
  }
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });

  const std::size_t n = points.size();
  lat_.resize(n);
  lon_.resize(n);
  ux_.resize(n);
  uy_.resize(n);
  uz_.resize(n);
  ids_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& p = points[order[k]];
    lat_[k] = p.lat();
    lon_[k] = p.lon();
    to_unit(p.lat(), p.lon(), ux_[k], uy_[k], uz_[k]);
    ids_[k] = ids.empty() ? order[k] : ids[order[k]];
  }
  min_cx_ = min_cy_ = std::numeric_limits<std::int64_t>::max();
  max_cx_ = max_cy_ = std::numeric_limits<std::int64_t>::min();
  for (std::size_t k = 0; k < n;) {
    const std::int64_t key = keys[order[k]];
    std::size_t end = k;
    while (end < n && keys[order[end]] == key) ++end;
    cells_.emplace(key, std::pair{k, end});
    const auto cx = cell_x(lon_[k]), cy = cell_y(lat_[k]);
    min_cx_ = std::min(min_cx_, cx);
    max_cx_ = std::max(max_cx_, cx);
    min_cy_ = std::min(min_cy_, cy);
    max_cy_ = std::max(max_cy_, cy);
    k = end;
  }
}

std::int64_t PointIndex::cell_x(double lon) const {
  return static_cast<std::int64_t>(std::floor(kEarthRadiusM * lon * kDeg * ref_cos_ / cell_m_));
}

std::int64_t PointIndex::cell_y(double lat) const {
  return static_cast<std::int64_t>(std::floor(kEarthRadiusM * lat * kDeg / cell_m_));
}

void PointIndex::visit_range(std::size_t begin, std::size_t end, const GeoPoint& center, double r_m,
                             double cx, double cy, double cz, double lo, double hi,
                             std::vector<double>& scratch, std::vector<std::size_t>* out,
                             std::size_t& count) const {
  const std::size_t n = end - begin;
  scratch.resize(n);
  kernels::chord_sq(std::span(ux_).subspan(begin, n), std::span(uy_).subspan(begin, n),
                    std::span(uz_).subspan(begin, n), cx, cy, cz, scratch);
  for (std::size_t k = 0; k < n; ++k) {
    const double c2 = scratch[k];
    bool inside;
    if (c2 < lo) {
      inside = true;
    } else if (c2 > hi) {
      inside = false;
    } else {
      // Too close to the boundary for the chord test: decide with the exact metric.
      inside = haversine_m(center, GeoPoint(lat_[begin + k], lon_[begin + k])) <= r_m;
    }
    if (inside) {
      ++count;
      if (out) out->push_back(ids_[begin + k]);
    }
  }
}

template <typename Visit>
void PointIndex::visit_within(const GeoPoint& center, double r_m, Visit&& visit) const {
  if (empty() || !(r_m >= 0.0)) return;
  const BoundingBox box = radius_bounds(center, r_m);
  // Longitude intervals after wrapping around the antimeridian.
  std::vector<std::pair<double, double>> lon_ranges;
  if (box.max_lon - box.min_lon >= 360.0) {
    lon_ranges.emplace_back(-180.0, 180.0);
  } else {
    lon_ranges.emplace_back(std::max(-180.0, box.min_lon), std::min(180.0, box.max_lon));
    if (box.min_lon < -180.0) lon_ranges.emplace_back(box.min_lon + 360.0, 180.0);
    if (box.max_lon > 180.0) lon_ranges.emplace_back(-180.0, box.max_lon - 360.0);
  }
  const auto y0 = std::max(min_cy_, cell_y(box.min_lat));
  const auto y1 = std::min(max_cy_, cell_y(box.max_lat));
  for (const auto& [lon_lo, lon_hi] : lon_ranges) {
    const auto x0 = std::max(min_cx_, cell_x(lon_lo));
    const auto x1 = std::min(max_cx_, cell_x(lon_hi));
    if (x0 > x1 || y0 > y1) continue;
    const auto span_cells = static_cast<double>(x1 - x0 + 1) * static_cast<double>(y1 - y0 + 1);
    if (span_cells > static_cast<double>(cells_.size())) {
      for (const auto& [key, range] : cells_) {
        const auto cx = (key >> 32) - kCellOffset;
        const auto cy = (key & 0xffffffffLL) - kCellOffset;
        if (cx >= x0 && cx <= x1 && cy >= y0 && cy <= y1) visit(range.first, range.second);
      }
    } else {
      for (auto cx = x0; cx <= x1; ++cx) {
        for (auto cy = y0; cy <= y1; ++cy) {
          auto it = cells_.find(cell_key(cx, cy));
          if (it != cells_.end()) visit(it->second.first, it->second.second);
        }
      }
    }
  }
}

namespace {

struct ChordThresholds {
  double lo, hi;
};

ChordThresholds chord_thresholds(double r_m) {
  if (r_m >= std::numbers::pi * kEarthRadiusM) return {5.0, 5.0};
  const double s = 2.0 * std::sin(r_m / (2.0 * kEarthRadiusM));
  const double thr = s * s;
  // Band covers relative rounding in the chord and the cancellation error of
  // subtracting nearly equal unit vectors at small separations.
  const double tol = 1e-9 * thr + 4e-15 * s + 1e-30;
  return {thr - tol, thr + tol};
}

}  // namespace

std::size_t PointIndex::count_within_radius(const GeoPoint& center, double r_m) const {
  double cx, cy, cz;
  to_unit(center.lat(), center.lon(), cx, cy, cz);
  const auto [lo, hi] = chord_thresholds(r_m);
  std::vector<double> scratch;
  std::size_t count = 0;
  visit_within(center, r_m, [&](std::size_t b, std::size_t e) {
    visit_range(b, e, center, r_m, cx, cy, cz, lo, hi, scratch, nullptr, count);
  });
  return count;
}

std::vector<std::size_t> PointIndex::ids_within_radius(const GeoPoint& center, double r_m) const {
  double cx, cy, cz;
  to_unit(center.lat(), center.lon(), cx, cy, cz);
  const auto [lo, hi] = chord_thresholds(r_m);
  std::vector<double> scratch;
  std::vector<std::size_t> out;
  std::size_t count = 0;
  visit_within(center, r_m, [&](std::size_t b, std::size_t e) {
    visit_range(b, e, center, r_m, cx, cy, cz, lo, hi, scratch, &out, count);
  });
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace crimematch::geo
