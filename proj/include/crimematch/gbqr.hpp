#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crimematch/metric.hpp"

namespace crimematch::gbqr {

/// Binary regression tree; a node with feature < 0 is a leaf.
struct Tree {
  struct Node {
    int feature = -1;
    double threshold = 0.0;  // rows with x[feature] <= threshold go left
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  std::vector<Node> nodes;

  double predict(std::span<const double> x) const;
};

struct Params {
  std::size_t rounds = 100;
  std::size_t depth = 2;
  double rate = 0.1;
  std::size_t min_leaf = 5;
  double subsample = 1.0;  // fraction of rows used to grow each tree
  std::uint64_t seed = 0;
};

struct Model {
  std::vector<Tree> trees;
  double learning_rate = 0.1;
  double quantile = 0.5;
  double base_value = 0.0;
  std::size_t depth = 0;              // depth actually used
  std::vector<double> training_loss;  // mean pinball loss after each round (index 0: base only)
  std::vector<std::string> log;

  double predict(std::span<const double> x) const;
};

/// Mean pinball (check) loss at quantile q.
double pinball_loss(std::span<const double> y, std::span<const double> prediction, double q);

/// Smallest sample value v with empirical CDF(v) >= q; minimizes the pinball loss.
double empirical_quantile(std::vector<double> values, double q);

/// Gradient boosting on the pinball-loss subgradient. Each round fits a
/// depth-limited tree to the pseudo-residuals (q where y > f, q - 1
/// elsewhere) by squared-error splitting, then sets each leaf to the q-th
/// empirical quantile of y - f over its rows.
Model fit(const metric::Matrix& x, std::span<const double> y, double q, const Params& params = {});

}  // namespace crimematch::gbqr
