#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "crimematch/synth.hpp"
#include "support.hpp"

using namespace crimematch;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

double arm_se(const synth::Dataset& d) {
  double sum[2] = {0, 0}, sq[2] = {0, 0};
  double n[2] = {0, 0};
  for (std::size_t i = 0; i < d.truth.geoids.size(); ++i) {
    const double y = d.table.tracts[i].period_outcomes.at(d.spec.period);
    const int a = d.truth.treated[i];
    sum[a] += y;
    sq[a] += y * y;
    n[a] += 1;
  }
  double se2 = 0.0;
  for (int a = 0; a < 2; ++a) {
    const double var = (sq[a] - sum[a] * sum[a] / n[a]) / (n[a] - 1);
    se2 += var / n[a];
  }
  return std::sqrt(se2);
}

}  // namespace

TEST_CASE("randomized assignment gives an unbiased naive difference") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    synth::SynthSpec spec;
    spec.confounding_strength = 0.0;
    spec.seed = seed;
    const auto d = synth::generate(spec);
    CHECK(std::abs(d.truth.naive_difference - 1.0) <= 3.0 * arm_se(d));
    CHECK(d.truth.bias_direction == 0);
  }
}

TEST_CASE("confounding biases the naive difference in the announced direction") {
  synth::SynthSpec spec;
  const auto d = synth::generate(spec);
  CHECK(d.truth.bias_direction == 1);
  CHECK((d.truth.naive_difference - d.truth.true_ate) * d.truth.bias_direction > 0.25);

  spec.baseline_coefficients = {-0.4, 0.0, 0.0, 0.0, 0.0};
  const auto neg = synth::generate(spec);
  // Treatment probability follows the baseline direction, so the bias stays positive.
  CHECK((neg.truth.naive_difference - neg.truth.true_ate) * neg.truth.bias_direction > 0.0);
}

TEST_CASE("ground truth is consistent with the spec") {
  synth::SynthSpec spec;
  spec.n_tracts = 120;
  spec.tau_coefficients.assign(spec.n_covariates, 0.0);
  spec.tau_coefficients[0] = 2.0;
  spec.tau = 0.0;
  const auto d = synth::generate(spec);
  REQUIRE(d.truth.true_cate.size() == 120);
  double mean = 0.0;
  for (std::size_t i = 0; i < 120; ++i) {
    CHECK(d.truth.true_cate[i] == doctest::Approx(2.0 * d.tracts[i].covariates[0]));
    mean += d.truth.true_cate[i] / 120.0;
  }
  CHECK(d.truth.true_ate == doctest::Approx(mean));
  CHECK(d.truth.baseline_coefficients.size() == spec.n_covariates);
  CHECK(d.truth.baseline_coefficients[0] == doctest::Approx(0.4));
  CHECK(d.truth.baseline_coefficients[1] == doctest::Approx(0.04));
  CHECK(d.truth.baseline_coefficients[7] == 0.0);

  // Every treated tract holds structures and is labeled treated.
  for (std::size_t i = 0; i < 120; ++i) {
    const auto label = d.assignment.labels.at(d.truth.geoids[i]);
    CHECK((label == treatment::Label::treated) == (d.truth.treated[i] == 1));
  }
}

TEST_CASE("generation is byte-deterministic") {
  synth::SynthSpec spec;
  spec.n_tracts = 80;
  spec.crime_profile = synth::CrimeProfile::peaked_at_structures;
  spec.border_m = 300;
  const auto a = test_support::scratch("synth_a"), b = test_support::scratch("synth_b");
  synth::write_dataset(synth::generate(spec), a);
  synth::write_dataset(synth::generate(spec), b);
  for (const char* f : {"tracts.csv", "boundaries.geojson", "crimes.csv", "structures.csv", "truth.json", "config.json"})
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
  spec.seed = 2;
  const auto c = test_support::scratch("synth_c");
  synth::write_dataset(synth::generate(spec), c);
  CHECK(slurp(a / "crimes.csv") != slurp(c / "crimes.csv"));
}

TEST_CASE("written files round-trip through ingest without skips") {
  synth::SynthSpec spec;
  spec.n_tracts = 150;
  spec.crime_profile = synth::CrimeProfile::peaked_at_structures;
  const auto d = synth::generate(spec);
  const auto dir = test_support::scratch("synth_roundtrip");
  synth::write_dataset(d, dir);

  ingest::TractSchema schema;
  schema.covariates = d.table.covariate_names;
  const auto tracts = ingest::load_tracts(dir / "tracts.csv", dir / "boundaries.geojson", schema);
  CHECK(tracts.skips.lines.empty());
  REQUIRE(tracts.tracts.size() == 150);
  const auto crimes = ingest::load_events(dir / "crimes.csv");
  CHECK(crimes.skipped == 0);
  CHECK(crimes.points.size() == d.crimes.size());
  const auto structures = ingest::load_structures(dir / "structures.csv");
  CHECK(structures.skipped == 0);
  CHECK(structures.points.size() == d.structures.size());

  const auto violent = ingest::filter_violent(crimes.points, ingest::default_violent_categories());
  CHECK(violent.size() == crimes.points.size());
  const auto table = ingest::build_analysis_table(tracts.tracts, schema.covariates, d.table.periods, violent,
                                                  {{spec.structure_type, structures.points}});
  CHECK(table.crime_counts == d.table.crime_counts);
  CHECK(table.structure_counts == d.table.structure_counts);
  for (std::size_t i = 0; i < 150; ++i) {
    CHECK(table.tracts[i].geoid == d.table.tracts[i].geoid);
    CHECK(table.tracts[i].covariates == d.table.tracts[i].covariates);
  }
}

TEST_CASE("border band surrounds the grid at tract density") {
  synth::SynthSpec spec;
  spec.n_tracts = 100;
  spec.border_m = 500;
  const auto d = synth::generate(spec);
  CHECK(d.truth.border_crimes > 0);
  CHECK(d.table.unassigned_crimes.at(spec.period) == static_cast<std::int64_t>(d.truth.border_crimes));
}
