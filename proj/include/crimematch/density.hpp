#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crimematch/geo.hpp"
#include "crimematch/ingest.hpp"
#include "crimematch/matching.hpp"
#include "crimematch/treatment.hpp"

namespace crimematch::density {

inline constexpr double kSquareMetersPerSquareMile = 2'589'988.110336;

/// Strictly increasing positive radii in meters.
class RadiusGrid {
 public:
  RadiusGrid();  // 25, 50, ..., 400
  explicit RadiusGrid(std::vector<double> radii);
  static RadiusGrid uniform(double first, double step, std::size_t count);

  const std::vector<double>& radii() const noexcept { return radii_; }
  std::size_t size() const noexcept { return radii_.size(); }
  double max() const noexcept { return radii_.back(); }

 private:
  std::vector<double> radii_;
};

enum class Region { disc, annulus };

/// Crimes per square mile inside the disc of radius r_m around center.
double density_at(const geo::PointIndex& crimes, const geo::GeoPoint& center, double r_m);

/// Density at every radius of the grid. In annulus mode entry i covers the
/// ring between radii i-1 and i (the first entry is the inner disc).
std::vector<double> center_profile(const geo::PointIndex& crimes, const geo::GeoPoint& center,
                                   const RadiusGrid& grid, Region region = Region::disc);

struct Curve {
  std::vector<double> mean;
  std::size_t centers = 0;
  std::vector<std::string> log;
};

Curve treated_curve(std::span<const geo::GeoPoint> structures, const geo::PointIndex& crimes, const RadiusGrid& grid,
                    Region region = Region::disc, std::size_t threads = 1);

struct ControlSampling {
  std::size_t n_samples = 20;
  double radius_m = 750.0;
  std::uint64_t seed = 0;
  bool inside_tract_only = false;  // reject samples outside the control tract
};

/// Per-tract sampling seed; independent of every other tract.
std::uint64_t tract_seed(std::uint64_t master, std::string_view geoid);

/// Centers drawn around the tract centroid (empty if the tract is skipped).
std::vector<geo::GeoPoint> control_centers(const ingest::Tract& tract, const ControlSampling& sampling);

Curve control_curve(std::span<const ingest::Tract> tracts, const geo::PointIndex& crimes, const RadiusGrid& grid,
                    const ControlSampling& sampling, Region region = Region::disc, std::size_t threads = 1);

struct DensityCurve {
  RadiusGrid radii;
  std::vector<double> treated_mean;
  std::vector<double> control_mean;
  std::size_t n_treated_centers = 0;
  std::size_t n_control_centers = 0;
  std::vector<std::string> log;
};

/// Treated series from structures inside treated tracts that appear in the
/// retained groups; control series from control tracts that appear in them.
DensityCurve density_analysis(const treatment::Assignment& assignment, std::span<const matching::MatchedGroup> groups,
                              const ingest::AnalysisTable& table, std::span<const ingest::StructurePoint> structures,
                              const geo::PointIndex& crimes, const RadiusGrid& grid, const ControlSampling& sampling,
                              Region region = Region::disc, std::size_t threads = 1);

/// `radius_m,treated_density,control_density,n_treated,n_control`
std::string to_csv(const DensityCurve& curve);

}  // namespace crimematch::density
