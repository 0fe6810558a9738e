#include "crimematch/gbqr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crimematch/error.hpp"
#include "crimematch/rng.hpp"

namespace crimematch::gbqr {

namespace {

constexpr const char* kModule = "gbqr";

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

Split best_split(const metric::Matrix& x, std::span<const double> target, const std::vector<std::size_t>& rows,
                 std::size_t min_leaf) {
  Split best;
  const std::size_t n = rows.size();
  if (n < 2 * min_leaf) return best;
  double total = 0.0;
  for (auto r : rows) total += target[r];
  std::vector<std::size_t> sorted(rows);
  for (std::size_t f = 0; f < x.cols(); ++f) {
    std::stable_sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) { return x(a, f) < x(b, f); });
    double left_sum = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      left_sum += target[sorted[i]];
      const std::size_t n_left = i + 1;
      const std::size_t n_right = n - n_left;
      if (n_left < min_leaf || n_right < min_leaf) continue;
      const double xl = x(sorted[i], f), xr = x(sorted[i + 1], f);
      if (!(xl < xr)) continue;
      // SSE reduction = sum_l^2/n_l + sum_r^2/n_r - total^2/n
      const double right_sum = total - left_sum;
      const double gain = left_sum * left_sum / static_cast<double>(n_left) +
                          right_sum * right_sum / static_cast<double>(n_right) -
                          total * total / static_cast<double>(n);
      if (gain > best.gain + 1e-12) {
        best.feature = static_cast<int>(f);
        best.threshold = xl + (xr - xl) / 2.0;
        best.gain = gain;
      }
    }
  }
  return best;
}

void grow(Tree& tree, int node, const metric::Matrix& x, std::span<const double> target,
          const std::vector<std::size_t>& rows, std::size_t depth_left, std::size_t min_leaf,
          std::vector<std::vector<std::size_t>>& leaf_rows) {
  const Split split = depth_left > 0 ? best_split(x, target, rows, min_leaf) : Split{};
  if (split.feature < 0) {
    tree.nodes[node].feature = -1;
    leaf_rows.push_back(rows);
    tree.nodes[node].left = static_cast<int>(leaf_rows.size() - 1);  // leaf slot, resolved by caller
    return;
  }
  std::vector<std::size_t> left, right;
  for (auto r : rows) (x(r, split.feature) <= split.threshold ? left : right).push_back(r);
  tree.nodes[node].feature = split.feature;
  tree.nodes[node].threshold = split.threshold;
  const int l = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  const int rnode = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  tree.nodes[node].left = l;
  tree.nodes[node].right = rnode;
  grow(tree, l, x, target, left, depth_left - 1, min_leaf, leaf_rows);
  grow(tree, rnode, x, target, right, depth_left - 1, min_leaf, leaf_rows);
}

}  // namespace

double Tree::predict(std::span<const double> x) const {
  int node = 0;
  while (nodes[node].feature >= 0) {
    node = x[static_cast<std::size_t>(nodes[node].feature)] <= nodes[node].threshold ? nodes[node].left
                                                                                     : nodes[node].right;
  }
  return nodes[node].value;
}

double Model::predict(std::span<const double> x) const {
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(x);
  return base_value + learning_rate * sum;
}

double pinball_loss(std::span<const double> y, std::span<const double> prediction, double q) {
  if (y.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - prediction[i];
    total += r >= 0 ? q * r : (q - 1.0) * r;
  }
  return total / static_cast<double>(y.size());
}

double empirical_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorKind::data, kModule, "quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::ceil(q * static_cast<double>(values.size()));
  const auto idx = static_cast<std::size_t>(std::clamp(pos, 1.0, static_cast<double>(values.size()))) - 1;
  return values[idx];
}

Model fit(const metric::Matrix& x, std::span<const double> y, double q, const Params& params) {
  if (!(q > 0.0 && q < 1.0)) throw Error(ErrorKind::config, kModule, "quantile must lie in (0, 1)");
  if (x.rows() != y.size()) throw Error(ErrorKind::data, kModule, "row count of X and y differ");
  if (y.size() < 20) {
    throw Error(ErrorKind::data, kModule, "needs at least 20 rows, got " + std::to_string(y.size()));
  }
  if (!(params.rate > 0.0)) throw Error(ErrorKind::config, kModule, "learning rate must be positive");
  const std::size_t n = y.size();
  const std::size_t min_leaf = std::max<std::size_t>(1, params.min_leaf);

  Model model;
  model.learning_rate = params.rate;
  model.quantile = q;
  model.depth = params.depth;
  while (model.depth > 0 && n < (std::size_t{1} << model.depth) * min_leaf) --model.depth;
  if (model.depth != params.depth) {
    model.log.push_back("depth reduced from " + std::to_string(params.depth) + " to " + std::to_string(model.depth) +
                        " for " + std::to_string(n) + " rows");
  }

  model.base_value = empirical_quantile(std::vector<double>(y.begin(), y.end()), q);
  std::vector<double> f(n, model.base_value);
  model.training_loss.push_back(pinball_loss(y, f, q));

  Rng rng(params.seed);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  const double frac = std::clamp(params.subsample, 0.0, 1.0);
  const auto n_sample = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(frac * static_cast<double>(n))));

  std::vector<double> pseudo(n);
  for (std::size_t round = 0; round < params.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) pseudo[i] = y[i] > f[i] ? q : q - 1.0;
    std::vector<std::size_t> rows = all;
    if (n_sample < n) {
      rng.shuffle(rows);
      rows.resize(n_sample);
      std::sort(rows.begin(), rows.end());
    }
    Tree tree;
    tree.nodes.emplace_back();
    std::vector<std::vector<std::size_t>> leaf_rows;
    grow(tree, 0, x, pseudo, rows, model.depth, min_leaf, leaf_rows);
    for (auto& node : tree.nodes) {
      if (node.feature >= 0) continue;
      std::vector<double> resid;
      for (auto r : leaf_rows[static_cast<std::size_t>(node.left)]) resid.push_back(y[r] - f[r]);
      node.value = empirical_quantile(std::move(resid), q);
      node.left = -1;
    }
    for (std::size_t i = 0; i < n; ++i) f[i] += params.rate * tree.predict(x.row(i));
    model.trees.push_back(std::move(tree));
    model.training_loss.push_back(pinball_loss(y, f, q));
  }
  return model;
}

}  // namespace crimematch::gbqr
