#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"

#include "crimematch/error.hpp"
#include "crimematch/estimate.hpp"
#include "crimematch/rng.hpp"

using namespace crimematch;
using estimate::CateEstimate;
using matching::MatchedGroup;

namespace {

MatchedGroup group(std::vector<std::string> t, std::vector<std::string> c) {
  MatchedGroup g;
  g.query = "q";
  for (auto& s : t) g.treated_neighbors.push_back({s, 2});
  for (auto& s : c) g.control_neighbors.push_back({s, 2});
  return g;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    for (std::size_t m = i; m <= j; ++m) r[order[m]] = 0.5 * static_cast<double>(i + j);
    i = j + 1;
  }
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n, mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::vector<CateEstimate> noisy(std::size_t n, std::uint64_t seed, double (*sd)(double)) {
  Rng rng(seed);
  std::vector<CateEstimate> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x1 = 2.0 * rng.uniform(), x2 = rng.normal();
    out[i].geoid = "u" + std::to_string(i);
    out[i].covariates = {x1, x2};
    out[i].value = 1.0 + sd(x1) * rng.normal();
  }
  return out;
}

}  // namespace

TEST_CASE("cate is a difference of arm means") {
  const estimate::Outcomes y{{"a", 2}, {"b", 4}, {"c", 1}, {"d", 3}};
  CHECK(estimate::cate(group({"a", "b"}, {"c", "d"}), y) == 1.0);
  CHECK(estimate::cate(group({"a", "b"}, {"a", "b"}), y) == 0.0);
  CHECK(estimate::cate(group({"c", "d"}, {"a", "b"}), y) == -1.0);

  // Seven-unit fixture: (5 + 7 + 12) / 3 - (1 + 2 + 4 + 9) / 4 = 8 - 4.
  const estimate::Outcomes seven{{"t1", 5}, {"t2", 7}, {"t3", 12}, {"c1", 1}, {"c2", 2}, {"c3", 4}, {"c4", 9}};
  const auto g = group({"t1", "t2", "t3"}, {"c1", "c2", "c3", "c4"});
  CHECK(estimate::cate(g, seven) == doctest::Approx(4.0));

  estimate::Outcomes shifted = seven, treated_shift = seven;
  for (auto& [k, v] : shifted) v += 3.5;
  for (auto& [k, v] : treated_shift)
    if (k[0] == 't') v += 3.5;
  CHECK(estimate::cate(g, shifted) == doctest::Approx(4.0));
  CHECK(estimate::cate(g, treated_shift) == doctest::Approx(7.5));

  try {
    estimate::cate(group({"a", "zz"}, {"c"}), y);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("zz") != std::string::npos);
  }
  CHECK_THROWS_AS(estimate::cate(group({}, {"c"}), y), Error);
}

TEST_CASE("ate is the mean cate") {
  std::vector<CateEstimate> one{{"a", 2.5, 0, {}}};
  CHECK(estimate::ate(one) == 2.5);
  std::vector<CateEstimate> sym{{"a", 1, 0, {}}, {"b", -1, 0, {}}};
  CHECK(estimate::ate(sym) == 0.0);
  CHECK_THROWS_AS(estimate::ate(std::span<const CateEstimate>{}), Error);

  Rng rng(3);
  std::vector<CateEstimate> many(100);
  double sum = 0.0, lo = 1e9, hi = -1e9;
  for (auto& e : many) {
    e.value = 1.0 + rng.normal();
    sum += e.value;
    lo = std::min(lo, e.value);
    hi = std::max(hi, e.value);
  }
  const double a = estimate::ate(many);
  CHECK(std::abs(a - sum / 100.0) < 1e-12);
  CHECK(a >= lo);
  CHECK(a <= hi);
}

TEST_CASE("naive difference") {
  const std::vector<double> y{1, 2, 3, 10};
  const std::vector<std::uint8_t> t{0, 0, 1, 1};
  CHECK(estimate::naive_difference(y, t) == 5.0);
}

TEST_CASE("variance recovers a homoscedastic spread") {
  auto est = noisy(1000, 7, [](double) { return 0.8; });
  const auto res = estimate::cate_variance(est);
  double mean_sd = 0.0;
  for (const auto& e : res.estimates) {
    CHECK(e.variance >= 0.0);
    mean_sd += std::sqrt(e.variance) / 1000.0;
  }
  CHECK(std::abs(mean_sd - 0.8) <= 0.25 * 0.8);
}

TEST_CASE("variance tracks planted heteroscedasticity") {
  auto est = noisy(1000, 9, [](double x1) { return 0.1 + x1; });
  const auto res = estimate::cate_variance(est);
  std::vector<double> sd, x1;
  for (const auto& e : res.estimates) {
    sd.push_back(std::sqrt(e.variance));
    x1.push_back(e.covariates[0]);
  }
  CHECK(pearson(ranks(sd), ranks(x1)) >= 0.8);
}

TEST_CASE("identical cate values have zero variance") {
  auto est = noisy(60, 2, [](double) { return 0.0; });
  const auto res = estimate::cate_variance(est);
  for (const auto& e : res.estimates) CHECK(e.variance == 0.0);
  CHECK(res.crossings == 0);
}

TEST_CASE("heterogeneity scan") {
  Rng rng(12);
  std::vector<CateEstimate> est(1000);
  for (auto& e : est) {
    e.covariates = {rng.normal(), rng.normal(), 4.0};
    e.value = 2.0 * e.covariates[0];
  }
  auto rows = estimate::heterogeneity_scan(est, {"x1", "x2", "flat"});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].r2 == doctest::Approx(1.0));
  CHECK(rows[0].slope == doctest::Approx(2.0));
  CHECK(rows[0].substantial);
  CHECK(rows[1].r2 < 0.05);
  CHECK_FALSE(rows[1].substantial);
  CHECK(rows[2].r2 == 0.0);

  for (auto& e : est) e.value = 2.0 * e.covariates[0] + 2.0 * rng.normal();  // r2 = 4 / 8
  auto affine = est;
  for (auto& e : affine) e.covariates[0] = -3.0 * e.covariates[0] + 11.0;
  const auto a = estimate::heterogeneity_scan(est, {"x1", "x2", "flat"});
  const auto b = estimate::heterogeneity_scan(affine, {"x1", "x2", "flat"});
  CHECK(a[0].r2 == doctest::Approx(b[0].r2).epsilon(1e-9));
  CHECK(a[0].r2 == doctest::Approx(0.5).epsilon(0.1));
  // Flagging is inclusive at the threshold.
  CHECK(estimate::heterogeneity_scan(est, {"x1", "x2", "flat"}, a[0].r2)[0].substantial);
  CHECK_FALSE(estimate::heterogeneity_scan(est, {"x1", "x2", "flat"}, a[0].r2 + 1e-9)[0].substantial);

  std::vector<CateEstimate> two(2, CateEstimate{"a", 1.0, 0.0, {1.0}});
  CHECK_THROWS_AS(estimate::heterogeneity_scan(two, {"x"}), Error);
}

TEST_CASE("ranking reproduces the published crime-rate order") {
  const std::map<std::string, std::pair<double, double>> crime{
      {"libraries", {1.30e-4, 0}},  {"restaurants", {2.94e-3, 0}}, {"schools", {3.88e-3, 0}},
      {"bus stops", {4.29e-3, 0}},  {"grocery stores", {6.32e-3, 0}}, {"rail stations", {7.18e-3, 0}},
      {"abandoned buildings", {8.57e-3, 0}}};
  std::vector<std::string> order;
  for (const auto& r : estimate::rank_by_ate(crime)) order.push_back(r.structure);
  CHECK(order == std::vector<std::string>{"abandoned buildings", "rail stations", "grocery stores", "bus stops",
                                          "schools", "restaurants", "libraries"});

  const std::map<std::string, std::pair<double, double>> danger{
      {"libraries", {0.440, 0}}, {"restaurants", {1.77, 0}},   {"schools", {2.83, 0}},
      {"bus stops", {0.832, 0}}, {"grocery stores", {4.78, 0}}, {"rail stations", {4.59, 0}},
      {"abandoned buildings", {7.12, 0}}};
  std::vector<std::string> order2;
  for (const auto& r : estimate::rank_by_ate(danger)) order2.push_back(r.structure);
  CHECK(order2 == std::vector<std::string>{"abandoned buildings", "grocery stores", "rail stations", "schools",
                                           "restaurants", "bus stops", "libraries"});
  // Same top three and bottom four as sets.
  CHECK(std::is_permutation(order.begin(), order.begin() + 3, order2.begin()));
  CHECK(std::is_permutation(order.begin() + 3, order.end(), order2.begin() + 3));

  CHECK(estimate::rank_by_ate({{"only", {1.0, 0.1}}}).size() == 1);
  const auto tie = estimate::rank_by_ate({{"b", {1.0, 0}}, {"a", {1.0, 0}}});
  CHECK(tie[0].structure == "a");
}

TEST_CASE("estimate csv round trip") {
  std::vector<CateEstimate> est{{"17031000100", 0.25, 0.01, {}}, {"17031000200", -1.5, 0.0, {}}};
  const auto text = estimate::to_csv(est);
  CHECK(text.rfind("geoid,cate,variance\n", 0) == 0);
  const auto back = estimate::estimates_from_csv(text);
  REQUIRE(back.size() == 2);
  CHECK(back[1].geoid == "17031000200");
  CHECK(back[1].value == -1.5);
  CHECK(back[0].variance == 0.01);
  std::vector<estimate::ScanRow> rows{{"x1", 0.5, 0.75, true}};
  CHECK(estimate::to_csv(rows).rfind("covariate,slope,r2,substantial\n", 0) == 0);
}
