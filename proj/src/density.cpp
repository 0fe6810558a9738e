#include "crimematch/density.hpp"

#include <cmath>
#include <numbers>
#include <set>

#include "crimematch/csv.hpp"
#include "crimematch/error.hpp"
#include "crimematch/parallel.hpp"
#include "crimematch/rng.hpp"

namespace crimematch::density {

namespace {

constexpr const char* kModule = "density";

double disc_area_sq_mi(double r_m) { return std::numbers::pi * r_m * r_m / kSquareMetersPerSquareMile; }

Curve mean_curve(std::span<const geo::GeoPoint> centers, const geo::PointIndex& crimes, const RadiusGrid& grid,
                 Region region, std::size_t threads) {
  std::vector<std::vector<double>> profiles(centers.size());
  parallel_for(centers.size(), threads,
               [&](std::size_t i) { profiles[i] = center_profile(crimes, centers[i], grid, region); });
  Curve curve;
  curve.mean.assign(grid.size(), 0.0);
  for (const auto& p : profiles) {
    for (std::size_t r = 0; r < grid.size(); ++r) curve.mean[r] += p[r];
  }
  if (!centers.empty()) {
    for (auto& v : curve.mean) v /= static_cast<double>(centers.size());
  }
  curve.centers = centers.size();
  return curve;
}

}  // namespace

RadiusGrid::RadiusGrid() : RadiusGrid(uniform(25.0, 25.0, 16)) {}

RadiusGrid::RadiusGrid(std::vector<double> radii) : radii_(std::move(radii)) {
  if (radii_.empty()) throw Error(ErrorKind::config, kModule, "radius grid is empty");
  for (std::size_t i = 0; i < radii_.size(); ++i) {
    if (!(radii_[i] > 0.0) || !std::isfinite(radii_[i])) {
      throw Error(ErrorKind::config, kModule, "radii must be positive and finite");
    }
    if (i > 0 && !(radii_[i] > radii_[i - 1])) {
      throw Error(ErrorKind::config, kModule, "radii must be strictly increasing");
    }
  }
}

RadiusGrid RadiusGrid::uniform(double first, double step, std::size_t count) {
  std::vector<double> radii(count);
  for (std::size_t i = 0; i < count; ++i) radii[i] = first + step * static_cast<double>(i);
  return RadiusGrid(std::move(radii));
}

double density_at(const geo::PointIndex& crimes, const geo::GeoPoint& center, double r_m) {
  if (!(r_m > 0.0)) throw Error(ErrorKind::config, kModule, "radius must be positive");
  return static_cast<double>(crimes.count_within_radius(center, r_m)) / disc_area_sq_mi(r_m);
}

std::vector<double> center_profile(const geo::PointIndex& crimes, const geo::GeoPoint& center,
                                   const RadiusGrid& grid, Region region) {
  std::vector<double> out(grid.size());
  std::size_t inner_count = 0;
  double inner_r = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double r = grid.radii()[i];
    const std::size_t count = crimes.count_within_radius(center, r);
    if (region == Region::disc) {
      out[i] = static_cast<double>(count) / disc_area_sq_mi(r);
    } else {
      out[i] = static_cast<double>(count - inner_count) / (disc_area_sq_mi(r) - disc_area_sq_mi(inner_r));
    }
    inner_count = count;
    inner_r = r;
  }
  return out;
}

Curve treated_curve(std::span<const geo::GeoPoint> structures, const geo::PointIndex& crimes, const RadiusGrid& grid,
                    Region region, std::size_t threads) {
  if (structures.empty()) throw Error(ErrorKind::data, kModule, "no structures for the treated curve");
  return mean_curve(structures, crimes, grid, region, threads);
}

std::uint64_t tract_seed(std::uint64_t master, std::string_view geoid) { return derive_seed(master, geoid); }

std::vector<geo::GeoPoint> control_centers(const ingest::Tract& tract, const ControlSampling& sampling) {
  const geo::GeoPoint c = ingest::tract_centroid(tract);
  const std::uint64_t seed = tract_seed(sampling.seed, tract.geoid);
  if (!sampling.inside_tract_only) return geo::sample_points_in_disc(c, sampling.radius_m, sampling.n_samples, seed);

  std::vector<geo::GeoPoint> kept;
  const std::size_t max_batches = 1000;
  for (std::size_t batch = 0; batch < max_batches && kept.size() < sampling.n_samples; ++batch) {
    for (const auto& p : geo::sample_points_in_disc(c, sampling.radius_m, sampling.n_samples, derive_seed(seed, batch))) {
      bool inside = false;
      for (const auto& part : tract.boundary) inside = inside || geo::point_in_polygon(p, part);
      if (inside && kept.size() < sampling.n_samples) kept.push_back(p);
    }
  }
  if (kept.size() < sampling.n_samples) return {};
  return kept;
}

Curve control_curve(std::span<const ingest::Tract> tracts, const geo::PointIndex& crimes, const RadiusGrid& grid,
                    const ControlSampling& sampling, Region region, std::size_t threads) {
  if (tracts.empty()) throw Error(ErrorKind::data, kModule, "no control tracts for the control curve");
  if (sampling.n_samples == 0 || !(sampling.radius_m > 0.0)) {
    throw Error(ErrorKind::config, kModule, "control sampling needs n_samples >= 1 and a positive radius");
  }
  std::vector<std::vector<geo::GeoPoint>> per_tract(tracts.size());
  std::vector<std::string> failures(tracts.size());
  parallel_for(tracts.size(), threads, [&](std::size_t i) {
    try {
      per_tract[i] = control_centers(tracts[i], sampling);
      if (per_tract[i].empty()) failures[i] = "no sample fell inside the tract";
    } catch (const Error& e) {
      failures[i] = e.what();
    }
  });
  std::vector<geo::GeoPoint> centers;
  std::vector<std::string> log;
  for (std::size_t i = 0; i < tracts.size(); ++i) {
    if (!failures[i].empty()) {
      log.push_back("control tract " + tracts[i].geoid + " skipped: " + failures[i]);
      continue;
    }
    centers.insert(centers.end(), per_tract[i].begin(), per_tract[i].end());
  }
  Curve curve = mean_curve(centers, crimes, grid, region, threads);
  curve.log = std::move(log);
  return curve;
}

DensityCurve density_analysis(const treatment::Assignment& assignment, std::span<const matching::MatchedGroup> groups,
                              const ingest::AnalysisTable& table, std::span<const ingest::StructurePoint> structures,
                              const geo::PointIndex& crimes, const RadiusGrid& grid, const ControlSampling& sampling,
                              Region region, std::size_t threads) {
  if (groups.empty()) throw Error(ErrorKind::data, kModule, "no retained matched groups");
  auto label_of = [&](const std::string& geoid) {
    auto it = assignment.labels.find(geoid);
    return it == assignment.labels.end() ? treatment::Label::dropped : it->second;
  };
  std::set<std::string> retained;
  for (const auto& g : groups) {
    retained.insert(g.query);
    for (const auto& n : g.treated_neighbors) retained.insert(n.geoid);
    for (const auto& n : g.control_neighbors) retained.insert(n.geoid);
  }
  std::vector<ingest::Tract> treated_tracts, control_tracts;
  for (const auto& geoid : retained) {
    const auto* tract = table.find(geoid);
    if (tract == nullptr) continue;
    const auto label = label_of(geoid);
    if (label == treatment::Label::treated) treated_tracts.push_back(*tract);
    if (label == treatment::Label::control) control_tracts.push_back(*tract);
  }

  std::vector<geo::GeoPoint> centers;
  if (!treated_tracts.empty()) {
    std::vector<geo::GeoPoint> locations;
    for (const auto& s : structures) locations.push_back(s.location);
    const auto joined = ingest::spatial_join(locations, treated_tracts);
    for (std::size_t i = 0; i < locations.size(); ++i) {
      if (joined.assignment[i]) centers.push_back(locations[i]);
    }
  }
  if (centers.empty()) throw Error(ErrorKind::data, kModule, "no retained treated tract contains a structure");

  DensityCurve out;
  out.radii = grid;
  Curve treated = treated_curve(centers, crimes, grid, region, threads);
  out.treated_mean = std::move(treated.mean);
  out.n_treated_centers = treated.centers;
  if (control_tracts.empty()) throw Error(ErrorKind::data, kModule, "no retained control tracts");
  Curve control = control_curve(control_tracts, crimes, grid, sampling, region, threads);
  out.control_mean = std::move(control.mean);
  out.n_control_centers = control.centers;
  out.log = std::move(control.log);
  return out;
}

std::string to_csv(const DensityCurve& curve) {
  std::string out = "radius_m,treated_density,control_density,n_treated,n_control\n";
  for (std::size_t i = 0; i < curve.radii.size(); ++i) {
    out += csv::format_double(curve.radii.radii()[i]) + ',' + csv::format_double(curve.treated_mean[i]) + ',' +
           csv::format_double(curve.control_mean[i]) + ',' + std::to_string(curve.n_treated_centers) + ',' +
           std::to_string(curve.n_control_centers) + '\n';
  }
  return out;
}

}  // namespace crimematch::density
