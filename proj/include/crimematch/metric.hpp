#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace crimematch::metric {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> data() const noexcept { return data_; }

  void append_row(std::span<const double> values);

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

/// Covariates, outcomes and binary treatment for a set of units. Row order is
/// the tie-break order everywhere (callers sort by geoid).
struct UnitSet {
  Matrix x;
  std::vector<double> y;
  std::vector<std::uint8_t> treated;

  std::size_t size() const noexcept { return y.size(); }
};

struct Standardizer {
  std::vector<double> means;
  std::vector<double> sds;
  std::vector<bool> flagged;  // zero-variance columns (sd forced to 1)

  std::vector<double> apply(std::span<const double> x) const;
  Matrix apply(const Matrix& x) const;
};

/// Per-column mean and sample standard deviation. Needs at least two rows.
Standardizer fit_standardizer(const Matrix& x);

struct LearnedMetric {
  std::vector<double> weights;
  Standardizer standardizer;
  std::vector<double> objective_trace;
  double final_objective = 0.0;

  /// sqrt(sum_d w_d^2 (z1_d - z2_d)^2) on standardized covariates.
  double distance(std::span<const double> x1, std::span<const double> x2) const;
  std::vector<double> squared_weights() const;
};

double distance(const LearnedMetric& metric, std::span<const double> x1, std::span<const double> x2);

/// Smooth leave-one-out k-NN regression loss, fitted separately per arm:
///   L(w) = mean_i (y_i - sum_{j in N_k(i)} s_ij y_j)^2 + lambda * sum_d w_d^2
/// where N_k(i) are the k nearest same-arm units (excluding i, ties by row
/// order) and s_ij = softmin(d_ij) over N_k(i). `units.x` must already be
/// standardized.
double malts_objective(std::span<const double> weights, const UnitSet& units, std::size_t k, double lambda);

struct MetricParams {
  std::size_t k = 10;
  double lambda = 0.01;
  std::size_t budget = 200;    // coordinate sweeps
  double tolerance = 1e-6;     // relative improvement over a sweep
  double max_weight = 10.0;    // line-search upper bound
  std::size_t line_search_iterations = 20;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::vector<std::string> covariate_names;  // for diagnostics only
};

/// Projected coordinate descent from all-ones weights with a golden-section
/// search per coordinate over [0, max_weight]; coordinates are visited in a
/// seeded random order each sweep. Weights are rescaled to sum to the number
/// of covariates afterwards. Zero-variance covariates are fixed at 0.
LearnedMetric learn_metric(const UnitSet& units, const MetricParams& params);

/// Incremental evaluator behind learn_metric: caches per-arm squared
/// distances so a single-coordinate change costs one pass over the pairs.
class MaltsObjective {
 public:
  MaltsObjective(const UnitSet& standardized, std::size_t k, double lambda, std::size_t threads = 1);

  double evaluate(std::span<const double> weights);
  /// Holds every coordinate except d at the weights last passed to
  /// evaluate(); trial() then varies only coordinate d and commit() adopts a
  /// value for it.
  void focus(std::size_t d);
  double trial(double value);
  void commit(double value);

 private:
  struct Arm {
    std::vector<std::size_t> rows;
    std::vector<double> dist_sq;  // n*n, current weights
    std::vector<double> partial;  // n*n, dist_sq without coordinate d
    std::vector<double> delta_sq; // n*n, squared difference on coordinate d
    std::vector<double> work;     // n*n scratch
    // n*k neighbours from the previous pass; only a cutoff, never changes results.
    mutable std::vector<std::size_t> hint;
    mutable bool hint_ready = false;
  };

  double loss(const std::vector<double>& arm_dist_sq_0, const std::vector<double>& arm_dist_sq_1) const;
  double arm_loss(const Arm& arm, const std::vector<double>& dist_sq, std::vector<double>& errors) const;

  const UnitSet& units_;
  std::size_t k_;
  double lambda_;
  std::size_t threads_;
  Arm arms_[2];
  std::vector<double> weights_;
  std::size_t focus_ = 0;
  double penalty_rest_ = 0.0;
};

/// `covariate,weight` CSV preceded by `# key=value` metadata lines.
std::string to_csv(const LearnedMetric& metric, const std::vector<std::string>& covariate_names,
                   const MetricParams& params);

}  // namespace crimematch::metric
