#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"

#include "crimematch/error.hpp"
#include "crimematch/gbqr.hpp"
#include "crimematch/rng.hpp"

using namespace crimematch;
using metric::Matrix;

namespace {

struct Fixture {
  Matrix x;
  std::vector<double> y;
};

Fixture step_fixture(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Fixture f{Matrix(0, 2), {}};
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.uniform(), b = rng.uniform();
    f.x.append_row(std::vector<double>{a, b});
    const double signal = (a > 0.5 ? 2.0 : 0.0) + (b > 0.3 ? 1.0 : -1.0);
    f.y.push_back(signal + (rng.uniform() - 0.5));  // symmetric noise
  }
  return f;
}

double pinball_at(const std::vector<double>& y, double pred, double q) {
  double s = 0.0;
  for (double v : y) s += v > pred ? q * (v - pred) : (1.0 - q) * (pred - v);
  return s;
}

double median_loss(const std::vector<std::size_t>& rows, const std::vector<double>& y) {
  std::vector<double> v;
  for (auto r : rows) v.push_back(y[r]);
  return pinball_at(v, gbqr::empirical_quantile(v, 0.5), 0.5);
}

// Best total loss over every axis-aligned split sequence up to `depth`, leaves at the median.
double best_tree(const Matrix& x, const std::vector<double>& y, const std::vector<std::size_t>& rows, int depth,
                 std::size_t min_leaf) {
  double best = median_loss(rows, y);
  if (depth == 0) return best;
  for (std::size_t f = 0; f < x.cols(); ++f) {
    std::vector<double> values;
    for (auto r : rows) values.push_back(x(r, f));
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t s = 0; s + 1 < values.size(); ++s) {
      const double t = 0.5 * (values[s] + values[s + 1]);
      std::vector<std::size_t> l, r;
      for (auto row : rows) (x(row, f) <= t ? l : r).push_back(row);
      if (l.size() < min_leaf || r.size() < min_leaf) continue;
      best = std::min(best, best_tree(x, y, l, depth - 1, min_leaf) + best_tree(x, y, r, depth - 1, min_leaf));
    }
  }
  return best;
}

}  // namespace

TEST_CASE("pinball loss and empirical quantile") {
  const std::vector<double> y{1, 2, 3}, p{2, 2, 2};
  CHECK(gbqr::pinball_loss(y, p, 0.5) == doctest::Approx(1.0 / 3.0));
  CHECK(gbqr::pinball_loss(y, p, 0.9) == doctest::Approx((0.1 * 1 + 0.9 * 1) / 3.0));
  CHECK(gbqr::empirical_quantile({5, 1, 3, 2, 4}, 0.5) == 3.0);
  CHECK(gbqr::empirical_quantile({1, 2, 3, 4}, 0.25) == 1.0);
  CHECK(gbqr::empirical_quantile({1, 2, 3, 4}, 0.26) == 2.0);
  CHECK(gbqr::empirical_quantile({1, 2, 3, 4}, 0.999) == 4.0);
}

TEST_CASE("constant targets are reproduced after one round") {
  Fixture f = step_fixture(40, 3);
  std::fill(f.y.begin(), f.y.end(), 7.5);
  gbqr::Params p;
  p.rounds = 1;
  const auto m = gbqr::fit(f.x, f.y, 0.3, p);
  for (std::size_t r = 0; r < f.x.rows(); ++r) CHECK(m.predict(f.x.row(r)) == doctest::Approx(7.5));
}

TEST_CASE("training loss never increases") {
  const auto f = step_fixture(200, 5);
  for (double q : {0.1, 0.25, 0.5, 0.75, 0.9}) {
    gbqr::Params p;
    p.rounds = 60;
    const auto m = gbqr::fit(f.x, f.y, q, p);
    REQUIRE(m.training_loss.size() == 61);
    for (std::size_t i = 1; i < m.training_loss.size(); ++i)
      CHECK(m.training_loss[i] <= m.training_loss[i - 1] + 1e-12);
    std::vector<double> pred;
    for (std::size_t r = 0; r < f.x.rows(); ++r) pred.push_back(m.predict(f.x.row(r)));
    CHECK(gbqr::pinball_loss(f.y, pred, q) == doctest::Approx(m.training_loss.back()));
  }
}

TEST_CASE("median boosting is close to the best exhaustive shallow tree") {
  const auto f = step_fixture(50, 11);
  std::vector<std::size_t> all(50);
  for (std::size_t i = 0; i < 50; ++i) all[i] = i;
  const double oracle = best_tree(f.x, f.y, all, 2, 5) / 50.0;
  const auto m = gbqr::fit(f.x, f.y, 0.5);
  CHECK(m.training_loss.back() <= 1.05 * oracle);
}

TEST_CASE("fitting is deterministic for a seed") {
  const auto f = step_fixture(120, 8);
  gbqr::Params p;
  p.subsample = 0.6;
  p.seed = 4;
  const auto a = gbqr::fit(f.x, f.y, 0.75, p), b = gbqr::fit(f.x, f.y, 0.75, p);
  CHECK(a.training_loss == b.training_loss);
  REQUIRE(a.trees.size() == b.trees.size());
  for (std::size_t t = 0; t < a.trees.size(); ++t)
    for (std::size_t i = 0; i < a.trees[t].nodes.size(); ++i) {
      CHECK(a.trees[t].nodes[i].threshold == b.trees[t].nodes[i].threshold);
      CHECK(a.trees[t].nodes[i].value == b.trees[t].nodes[i].value);
    }
}

TEST_CASE("depth shrinks when rows are scarce") {
  const auto f = step_fixture(24, 2);
  gbqr::Params p;
  p.depth = 4;  // would need 80 rows at min_leaf 5
  const auto m = gbqr::fit(f.x, f.y, 0.5, p);
  CHECK(m.depth == 2);
  CHECK_FALSE(m.log.empty());
}

TEST_CASE("invalid inputs") {
  const auto f = step_fixture(19, 2);
  CHECK_THROWS_AS(gbqr::fit(f.x, f.y, 0.5), Error);
  const auto g = step_fixture(30, 2);
  CHECK_THROWS_AS(gbqr::fit(g.x, g.y, 0.0), Error);
  CHECK_THROWS_AS(gbqr::fit(g.x, g.y, 1.0), Error);
  gbqr::Params p;
  p.rate = 0.0;
  CHECK_THROWS_AS(gbqr::fit(g.x, g.y, 0.5, p), Error);
}
