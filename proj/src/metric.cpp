#include "crimematch/metric.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "crimematch/csv.hpp"
#include "crimematch/error.hpp"
#include "crimematch/kernels.hpp"
#include "crimematch/parallel.hpp"
#include "crimematch/rng.hpp"

namespace crimematch::metric {

namespace {

constexpr const char* kModule = "metric";

std::string covariate_label(const MetricParams& params, std::size_t d) {
  if (d < params.covariate_names.size()) return "'" + params.covariate_names[d] + "'";
  return "#" + std::to_string(d);
}

}  // namespace

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  if (values.size() != cols_) throw Error(ErrorKind::data, kModule, "row length does not match matrix width");
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

std::vector<double> Standardizer::apply(std::span<const double> x) const {
  if (x.size() != means.size()) {
    throw Error(ErrorKind::data, kModule,
                "covariate vector has length " + std::to_string(x.size()) + ", expected " +
                    std::to_string(means.size()));
  }
  std::vector<double> z(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) z[d] = (x[d] - means[d]) / sds[d];
  return z;
}

Matrix Standardizer::apply(const Matrix& x) const {
  Matrix z(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto out = z.row(r);
    const auto in = apply(x.row(r));
    std::copy(in.begin(), in.end(), out.begin());
  }
  return z;
}

Standardizer fit_standardizer(const Matrix& x) {
  if (x.rows() < 2) throw Error(ErrorKind::data, kModule, "standardizer needs at least 2 rows");
  Standardizer s;
  const std::size_t p = x.cols();
  const auto n = static_cast<double>(x.rows());
  s.means.assign(p, 0.0);
  s.sds.assign(p, 0.0);
  s.flagged.assign(p, false);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t d = 0; d < p; ++d) s.means[d] += x(r, d);
  }
  for (auto& m : s.means) m /= n;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t d = 0; d < p; ++d) {
      const double diff = x(r, d) - s.means[d];
      s.sds[d] += diff * diff;
    }
  }
  for (std::size_t d = 0; d < p; ++d) {
    s.sds[d] = std::sqrt(s.sds[d] / (n - 1.0));
    // Relative cutoff: columns that are constant up to rounding count as constant.
    if (!(s.sds[d] > 1e-12 * std::max(1.0, std::fabs(s.means[d])))) {
      s.sds[d] = 1.0;
      s.flagged[d] = true;
    }
  }
  return s;
}

std::vector<double> LearnedMetric::squared_weights() const {
  std::vector<double> w2(weights.size());
  for (std::size_t d = 0; d < weights.size(); ++d) w2[d] = weights[d] * weights[d];
  return w2;
}

double LearnedMetric::distance(std::span<const double> x1, std::span<const double> x2) const {
  if (x1.size() != weights.size() || x2.size() != weights.size()) {
    throw Error(ErrorKind::data, kModule,
                "distance: covariate vectors of length " + std::to_string(x1.size()) + " and " +
                    std::to_string(x2.size()) + ", metric has " + std::to_string(weights.size()));
  }
  const auto z1 = standardizer.apply(x1);
  const auto z2 = standardizer.apply(x2);
  const auto w2 = squared_weights();
  return std::sqrt(kernels::weighted_sq_distance(z1, z2, w2));
}

double distance(const LearnedMetric& metric, std::span<const double> x1, std::span<const double> x2) {
  return metric.distance(x1, x2);
}

MaltsObjective::MaltsObjective(const UnitSet& standardized, std::size_t k, double lambda, std::size_t threads)
    : units_(standardized), k_(k), lambda_(lambda), threads_(std::max<std::size_t>(1, threads)) {
  if (k == 0) throw Error(ErrorKind::config, kModule, "k must be positive");
  if (standardized.treated.size() != standardized.size() || standardized.x.rows() != standardized.size()) {
    throw Error(ErrorKind::data, kModule, "unit set columns differ in length");
  }
  for (std::size_t i = 0; i < units_.size(); ++i) arms_[units_.treated[i] ? 1 : 0].rows.push_back(i);
  for (int a = 0; a < 2; ++a) {
    if (arms_[a].rows.size() < k + 1) {
      throw Error(ErrorKind::data, kModule,
                  std::string(a ? "treated" : "control") + " arm has " + std::to_string(arms_[a].rows.size()) +
                      " units; needs more than k = " + std::to_string(k));
    }
    const std::size_t n = arms_[a].rows.size();
    arms_[a].dist_sq.assign(n * n, 0.0);
    arms_[a].partial.assign(n * n, 0.0);
    arms_[a].delta_sq.assign(n * n, 0.0);
    arms_[a].work.assign(n * n, 0.0);
  }
}

double MaltsObjective::arm_loss(const Arm& arm, const std::vector<double>& dist_sq, std::vector<double>& errors) const {
  const std::size_t n = arm.rows.size();
  errors.assign(n, 0.0);
  if (n == 0) return 0.0;
  const std::size_t chunks = std::min(threads_, n);
  std::vector<std::vector<std::size_t>> idx_buf(chunks, std::vector<std::size_t>(k_));
  std::vector<std::vector<double>> val_buf(chunks, std::vector<double>(k_));
  std::vector<std::vector<std::size_t>> scratch_buf(chunks, std::vector<std::size_t>(n));
  const std::size_t per_chunk = (n + chunks - 1) / chunks;
  const std::size_t want = std::min(k_, n - 1);
  const bool use_hint = arm.hint_ready && want == k_;
  if (arm.hint.size() != n * k_) arm.hint.assign(n * k_, 0);
  parallel_for(n, threads_, [&](std::size_t i) {
    // parallel_for hands each worker one contiguous chunk, so i / per_chunk owns its buffers.
    std::size_t* idx = idx_buf[i / per_chunk].data();
    double* val = val_buf[i / per_chunk].data();
    const std::span<const double> row{dist_sq.data() + i * n, n};
    std::size_t* hint = arm.hint.data() + i * k_;
    std::size_t found = 0;
    if (use_hint) {
      double bound = row[hint[0]];
      for (std::size_t m = 1; m < k_; ++m) bound = std::max(bound, row[hint[m]]);
      found = kernels::k_smallest_bounded(row, i, k_, bound, idx, val, scratch_buf[i / per_chunk].data());
    }
    if (found != want) found = kernels::k_smallest(row, i, k_, idx, val);
    std::copy(idx, idx + found, hint);
    const double d_min = std::sqrt(std::max(0.0, val[0]));
    double num = 0.0, den = 0.0;
    for (std::size_t m = 0; m < found; ++m) {
      const double s = std::exp(-(std::sqrt(std::max(0.0, val[m])) - d_min));
      num += s * units_.y[arm.rows[idx[m]]];
      den += s;
    }
    const double resid = units_.y[arm.rows[i]] - num / den;
    errors[i] = resid * resid;
  });
  arm.hint_ready = want == k_;
  return std::accumulate(errors.begin(), errors.end(), 0.0);
}

double MaltsObjective::loss(const std::vector<double>& d0, const std::vector<double>& d1) const {
  std::vector<double> errors;
  const double total = arm_loss(arms_[0], d0, errors) + arm_loss(arms_[1], d1, errors);
  return total / static_cast<double>(units_.size());
}

double MaltsObjective::evaluate(std::span<const double> weights) {
  if (weights.size() != units_.x.cols()) throw Error(ErrorKind::data, kModule, "weight vector length mismatch");
  weights_.assign(weights.begin(), weights.end());
  std::vector<double> w2(weights.size());
  double penalty = 0.0;
  for (std::size_t d = 0; d < weights.size(); ++d) {
    if (weights[d] < 0) throw Error(ErrorKind::data, kModule, "weights must be nonnegative");
    w2[d] = weights[d] * weights[d];
    penalty += w2[d];
  }
  for (auto& arm : arms_) {
    const std::size_t n = arm.rows.size();
    parallel_for(n, threads_, [&](std::size_t i) {
      const auto xi = units_.x.row(arm.rows[i]);
      for (std::size_t j = 0; j < n; ++j) {
        arm.dist_sq[i * n + j] = kernels::weighted_sq_distance(xi, units_.x.row(arm.rows[j]), w2);
      }
    });
  }
  return loss(arms_[0].dist_sq, arms_[1].dist_sq) + lambda_ * penalty;
}

void MaltsObjective::focus(std::size_t d) {
  if (weights_.empty()) throw Error(ErrorKind::data, kModule, "focus() before evaluate()");
  const auto& weights = weights_;
  focus_ = d;
  penalty_rest_ = 0.0;
  for (std::size_t e = 0; e < weights.size(); ++e) {
    if (e != d) penalty_rest_ += weights[e] * weights[e];
  }
  const double wd2 = weights[d] * weights[d];
  for (auto& arm : arms_) {
    const std::size_t n = arm.rows.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double zi = units_.x(arm.rows[i], d);
      for (std::size_t j = 0; j < n; ++j) {
        const double diff = zi - units_.x(arm.rows[j], d);
        arm.delta_sq[i * n + j] = diff * diff;
      }
    }
    kernels::scaled_add(arm.partial, arm.dist_sq, arm.delta_sq, -wd2);
  }
}

void MaltsObjective::commit(double value) {
  for (auto& arm : arms_) kernels::scaled_add(arm.dist_sq, arm.partial, arm.delta_sq, value * value);
  weights_[focus_] = value;
}

double MaltsObjective::trial(double value) {
  for (auto& arm : arms_) kernels::scaled_add(arm.work, arm.partial, arm.delta_sq, value * value);
  return loss(arms_[0].work, arms_[1].work) + lambda_ * (penalty_rest_ + value * value);
}

double malts_objective(std::span<const double> weights, const UnitSet& units, std::size_t k, double lambda) {
  MaltsObjective objective(units, k, lambda);
  return objective.evaluate(weights);
}

LearnedMetric learn_metric(const UnitSet& units, const MetricParams& params) {
  if (units.size() != units.x.rows()) throw Error(ErrorKind::data, kModule, "unit set columns differ in length");
  LearnedMetric metric;
  metric.standardizer = fit_standardizer(units.x);
  UnitSet z{metric.standardizer.apply(units.x), units.y, units.treated};
  const std::size_t p = z.x.cols();

  MaltsObjective objective(z, params.k, params.lambda, params.threads);
  std::vector<double> w(p, 1.0);
  std::vector<std::size_t> active;
  for (std::size_t d = 0; d < p; ++d) {
    if (metric.standardizer.flagged[d]) {
      w[d] = 0.0;
    } else {
      active.push_back(d);
    }
  }

  double current = objective.evaluate(w);
  if (!std::isfinite(current)) throw Error(ErrorKind::numeric, kModule, "initial objective is not finite");
  metric.objective_trace.push_back(current);

  Rng rng(params.seed);
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (std::size_t sweep = 0; sweep < params.budget && !active.empty(); ++sweep) {
    // Fresh distances each sweep so incremental updates cannot drift.
    if (sweep > 0) objective.evaluate(w);
    const double sweep_start = current;
    std::vector<std::size_t> order = active;
    rng.shuffle(order);
    for (const std::size_t d : order) {
      objective.focus(d);
      auto eval = [&](double v) {
        const double f = objective.trial(v);
        if (!std::isfinite(f)) {
          throw Error(ErrorKind::numeric, kModule,
                      "non-finite objective while optimizing covariate " + covariate_label(params, d));
        }
        return f;
      };
      double a = 0.0, b = params.max_weight;
      double c = b - phi * (b - a), e = a + phi * (b - a);
      double fc = eval(c), fe = eval(e);
      double best_v = fc < fe ? c : e;
      double best_f = std::min(fc, fe);
      for (std::size_t it = 0; it < params.line_search_iterations; ++it) {
        if (fc < fe) {
          b = e;
          e = c;
          fe = fc;
          c = b - phi * (b - a);
          fc = eval(c);
          if (fc < best_f) best_f = fc, best_v = c;
        } else {
          a = c;
          c = e;
          fc = fe;
          e = a + phi * (b - a);
          fe = eval(e);
          if (fe < best_f) best_f = fe, best_v = e;
        }
      }
      for (const double edge : {0.0, params.max_weight}) {
        const double f = eval(edge);
        if (f < best_f) best_f = f, best_v = edge;
      }
      if (best_f < current) {
        w[d] = best_v;
        current = best_f;
        objective.commit(best_v);
        metric.objective_trace.push_back(current);
      }
    }
    const double improvement = sweep_start - current;
    if (!(improvement > params.tolerance * std::max(std::fabs(sweep_start), 1e-300))) break;
  }

  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0)) {
    throw Error(ErrorKind::numeric, kModule, "every learned weight is zero; the metric is degenerate");
  }
  metric.final_objective = current;
  for (auto& v : w) v *= static_cast<double>(p) / total;
  metric.weights = std::move(w);
  return metric;
}

std::string to_csv(const LearnedMetric& metric, const std::vector<std::string>& covariate_names,
                   const MetricParams& params) {
  std::ostringstream out;
  out << "# k=" << params.k << "\n";
  out << "# lambda=" << csv::format_double(params.lambda) << "\n";
  out << "# seed=" << params.seed << "\n";
  out << "# final_objective=" << csv::format_double(metric.final_objective) << "\n";
  out << "covariate,weight\n";
  for (std::size_t d = 0; d < metric.weights.size(); ++d) {
    const std::string name = d < covariate_names.size() ? covariate_names[d] : "x" + std::to_string(d + 1);
    out << csv::escape(name) << ',' << csv::format_double(metric.weights[d]) << '\n';
  }
  return out.str();
}

}  // namespace crimematch::metric
