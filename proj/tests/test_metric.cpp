#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"

#include "crimematch/error.hpp"
#include "crimematch/metric.hpp"
#include "crimematch/rng.hpp"

using namespace crimematch;
using metric::Matrix;
using metric::UnitSet;

namespace {

// Direct evaluation of the smooth leave-one-out k-NN loss, sorting every row.
double brute_objective(const std::vector<double>& w, const UnitSet& u, std::size_t k, double lambda) {
  const std::size_t n = u.size(), p = u.x.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::size_t>> cand;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || u.treated[j] != u.treated[i]) continue;
      double s = 0.0;
      for (std::size_t d = 0; d < p; ++d) s += w[d] * w[d] * (u.x(i, d) - u.x(j, d)) * (u.x(i, d) - u.x(j, d));
      cand.emplace_back(std::sqrt(s), j);
    }
    std::sort(cand.begin(), cand.end());
    double num = 0.0, den = 0.0;
    for (std::size_t m = 0; m < k; ++m) {
      const double e = std::exp(-cand[m].first);
      num += e * u.y[cand[m].second];
      den += e;
    }
    total += (u.y[i] - num / den) * (u.y[i] - num / den);
  }
  double pen = 0.0;
  for (double v : w) pen += v * v;
  return total / static_cast<double>(n) + lambda * pen;
}

UnitSet random_units(std::size_t n, std::size_t p, std::uint64_t seed, double (*outcome)(const std::vector<double>&, Rng&)) {
  Rng rng(seed);
  UnitSet u;
  u.x = Matrix(0, p);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(p);
    for (auto& v : row) v = rng.normal();
    u.x.append_row(row);
    u.y.push_back(outcome(row, rng));
    u.treated.push_back(static_cast<std::uint8_t>(i % 2));
  }
  return u;
}

double planted(const std::vector<double>& x, Rng& rng) { return 5.0 * x[0] + 0.05 * rng.normal(); }
double pure_noise(const std::vector<double>&, Rng& rng) { return rng.normal(); }

double mean_of_rest(const std::vector<double>& w, std::size_t skip) {
  double s = 0.0;
  for (std::size_t d = 0; d < w.size(); ++d)
    if (d != skip) s += w[d];
  return s / static_cast<double>(w.size() - 1);
}

std::vector<std::size_t> argsort_row(const metric::LearnedMetric& m, const Matrix& x, std::size_t i) {
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> d(x.rows());
  for (std::size_t j = 0; j < x.rows(); ++j) d[j] = m.distance(x.row(i), x.row(j));
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
  return order;
}

}  // namespace

TEST_CASE("standardizer") {
  Matrix x(0, 2);
  x.append_row(std::vector<double>{1, 0});
  x.append_row(std::vector<double>{1, 2});
  const auto s = metric::fit_standardizer(x);
  CHECK(s.means[0] == 1.0);
  CHECK(s.sds[0] == 1.0);
  CHECK(s.flagged[0]);
  CHECK(s.means[1] == 1.0);
  CHECK(s.sds[1] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK_FALSE(s.flagged[1]);

  Matrix one(1, 2);
  CHECK_THROWS_AS(metric::fit_standardizer(one), Error);

  auto u = random_units(57, 4, 5, pure_noise);
  for (std::size_t r = 0; r < u.x.rows(); ++r)
    for (std::size_t c = 0; c < 4; ++c) u.x(r, c) = 40.0 + 9.0 * u.x(r, c);
  const auto z = metric::fit_standardizer(u.x).apply(u.x);
  for (std::size_t c = 0; c < 4; ++c) {
    double m = 0.0;
    for (std::size_t r = 0; r < z.rows(); ++r) m += z(r, c);
    CHECK(std::abs(m / static_cast<double>(z.rows())) < 1e-12);
  }
}

TEST_CASE("weighted distance") {
  metric::LearnedMetric m;
  m.weights = {2.0, 0.0};
  m.standardizer.means = {0.0, 0.0};
  m.standardizer.sds = {1.0, 1.0};
  m.standardizer.flagged = {false, false};
  const std::vector<double> a{0, 0}, b{3, 6};
  CHECK(metric::distance(m, a, b) == doctest::Approx(6.0));
  CHECK(metric::distance(m, b, a) == metric::distance(m, a, b));
  CHECK(metric::distance(m, b, b) == 0.0);
  CHECK_THROWS_AS(metric::distance(m, a, std::vector<double>{1.0}), Error);

  m.standardizer.sds = {0.5, 1.0};
  CHECK(metric::distance(m, a, b) == doctest::Approx(12.0));
}

TEST_CASE("objective matches direct evaluation") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto u = random_units(64, 5, seed, planted);
    u.x = metric::fit_standardizer(u.x).apply(u.x);
    Rng rng(seed + 100);
    std::vector<double> w(5);
    for (auto& v : w) v = 3.0 * rng.uniform();
    for (std::size_t k : {1u, 4u, 10u}) {
      CHECK(metric::malts_objective(w, u, k, 0.0) == doctest::Approx(brute_objective(w, u, k, 0.0)).epsilon(1e-10));
      CHECK(metric::malts_objective(w, u, k, 0.3) == doctest::Approx(brute_objective(w, u, k, 0.3)).epsilon(1e-10));
    }
  }
}

TEST_CASE("objective special cases") {
  auto u = random_units(30, 3, 9, pure_noise);
  std::fill(u.y.begin(), u.y.end(), 4.25);
  const std::vector<double> w{1.0, 2.0, 0.5};
  CHECK(metric::malts_objective(w, u, 5, 0.0) == doctest::Approx(0.0).epsilon(1e-12));

  // Six units, all distances zero: prediction is the mean of the first k same-arm others.
  UnitSet six;
  six.x = Matrix(6, 1);
  six.y = {1, 2, 3, 10, 20, 30};
  six.treated = {0, 0, 0, 1, 1, 1};
  const std::vector<double> zero{0.0};
  // k = 2: each unit predicts the mean of the other two in its arm.
  const double expected =
      (std::pow(1 - 2.5, 2) + std::pow(2 - 2.0, 2) + std::pow(3 - 1.5, 2) + std::pow(10 - 25.0, 2) +
       std::pow(20 - 20.0, 2) + std::pow(30 - 15.0, 2)) /
      6.0;
  CHECK(metric::malts_objective(zero, six, 2, 0.0) == doctest::Approx(expected));

  const auto base = metric::malts_objective(w, random_units(30, 3, 9, pure_noise), 5, 0.0);
  const auto pen = metric::malts_objective(w, random_units(30, 3, 9, pure_noise), 5, 0.2);
  CHECK(pen - base == doctest::Approx(0.2 * (1.0 + 4.0 + 0.25)));

  CHECK_THROWS_AS(metric::malts_objective(zero, six, 3, 0.0), Error);
  CHECK_THROWS_AS(metric::malts_objective(std::vector<double>{-1.0}, six, 1, 0.0), Error);
}

TEST_CASE("incremental evaluator agrees with the full objective") {
  auto u = random_units(80, 4, 21, planted);
  u.x = metric::fit_standardizer(u.x).apply(u.x);
  metric::MaltsObjective obj(u, 6, 0.05);
  std::vector<double> w{1.0, 0.7, 1.3, 2.0};
  CHECK(obj.evaluate(w) == doctest::Approx(metric::malts_objective(w, u, 6, 0.05)).epsilon(1e-12));
  obj.focus(2);
  for (double v : {0.0, 0.4, 3.5}) {
    auto wt = w;
    wt[2] = v;
    CHECK(obj.trial(v) == doctest::Approx(metric::malts_objective(wt, u, 6, 0.05)).epsilon(1e-10));
  }
  obj.commit(0.4);
  w[2] = 0.4;
  obj.focus(0);
  CHECK(obj.trial(1.0) == doctest::Approx(metric::malts_objective(w, u, 6, 0.05)).epsilon(1e-10));
}

TEST_CASE("planted relevance dominates the learned weights") {
  const auto u = random_units(200, 10, 7, planted);
  metric::MetricParams params;
  params.seed = 11;
  const auto m = metric::learn_metric(u, params);
  REQUIRE(m.weights.size() == 10);
  CHECK(m.weights[0] >= 3.0 * mean_of_rest(m.weights, 0));
  CHECK(std::accumulate(m.weights.begin(), m.weights.end(), 0.0) == doctest::Approx(10.0));
  for (double w : m.weights) CHECK(w >= 0.0);
  for (std::size_t i = 1; i < m.objective_trace.size(); ++i) CHECK(m.objective_trace[i] <= m.objective_trace[i - 1]);

  const auto again = metric::learn_metric(u, params);
  CHECK(again.weights == m.weights);
  CHECK(again.objective_trace == m.objective_trace);
}

TEST_CASE("an extra noise covariate barely moves the relevant weight") {
  const auto u = random_units(200, 10, 7, planted);
  auto wider = u;
  Rng rng(99);
  wider.x = Matrix(0, 11);
  for (std::size_t r = 0; r < u.x.rows(); ++r) {
    std::vector<double> row(u.x.row(r).begin(), u.x.row(r).end());
    row.push_back(rng.normal());
    wider.x.append_row(row);
  }
  metric::MetricParams params;
  params.seed = 11;
  const double w0 = metric::learn_metric(u, params).weights[0];
  const double w1 = metric::learn_metric(wider, params).weights[0];
  // Weights sum to p, so compare on the same per-covariate scale.
  const double a = w0 / 10.0, b = w1 / 11.0;
  CHECK(std::abs(b - a) / a < 0.25);
}

TEST_CASE("noise-only outcome favors no covariate") {
  std::vector<double> avg(6, 0.0);
  const int seeds = 8;
  for (int s = 0; s < seeds; ++s) {
    const auto u = random_units(160, 6, 300 + s, pure_noise);
    metric::MetricParams params;
    params.seed = static_cast<std::uint64_t>(s);
    const auto m = metric::learn_metric(u, params);
    for (std::size_t d = 0; d < 6; ++d) avg[d] += m.weights[d] / seeds;
  }
  for (double w : avg) CHECK(std::abs(w - 1.0) <= 0.20);
}

TEST_CASE("zero-variance covariates get weight zero") {
  auto u = random_units(60, 3, 4, planted);
  for (std::size_t r = 0; r < u.x.rows(); ++r) u.x(r, 1) = 2.0;
  const auto m = metric::learn_metric(u, metric::MetricParams{});
  CHECK(m.weights[1] == 0.0);
  CHECK(m.weights[0] + m.weights[2] == doctest::Approx(3.0));
}

TEST_CASE("scaling the weights preserves neighbor orderings") {
  const auto u = random_units(120, 5, 17, planted);
  auto m = metric::learn_metric(u, metric::MetricParams{});
  auto scaled = m;
  for (auto& w : scaled.weights) w *= 7.0;
  for (std::size_t i = 0; i < u.x.rows(); i += 13) CHECK(argsort_row(m, u.x, i) == argsort_row(scaled, u.x, i));
}

TEST_CASE("metric csv carries metadata") {
  const auto u = random_units(60, 2, 4, planted);
  metric::MetricParams params;
  params.seed = 77;
  const auto m = metric::learn_metric(u, params);
  const auto text = metric::to_csv(m, {"a", "b"}, params);
  CHECK(text.find("# seed=77") != std::string::npos);
  CHECK(text.find("# k=10") != std::string::npos);
  CHECK(text.find("covariate,weight\n") != std::string::npos);
  CHECK(text.find("\na,") != std::string::npos);
}
