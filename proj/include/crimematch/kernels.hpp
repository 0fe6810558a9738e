#pragma once

// Data-parallel inner loops. Each kernel has a portable scalar reference and,
// on x86-64, an AVX2/FMA variant chosen at runtime. The two are
// equivalence-tested; they may differ only by floating-point reassociation.

#include <cstddef>
#include <span>
#include <string_view>

namespace crimematch::kernels {

enum class Isa { scalar, avx2 };

/// Variant used by the dispatching entry points below. Resolved once from CPU
/// features; the CRIMEMATCH_ISA environment variable ("scalar" or "avx2")
/// overrides it.
Isa active_isa();
/// Pins the dispatch target (tests only). Requesting avx2 on a CPU without
/// it falls back to scalar; the return value is the variant now in effect.
Isa set_isa(Isa isa);
bool avx2_supported();
std::string_view to_string(Isa isa);

/// sum_d w2[d] * (a[d] - b[d])^2
double weighted_sq_distance(std::span<const double> a, std::span<const double> b,
                            std::span<const double> w2);

/// out[i] = base[i] + scale * x[i]
void scaled_add(std::span<double> out, std::span<const double> base, std::span<const double> x,
                double scale);

/// out[i] = |(xs[i], ys[i], zs[i]) - c|^2 for unit vectors on the sphere.
void chord_sq(std::span<const double> xs, std::span<const double> ys, std::span<const double> zs,
              double cx, double cy, double cz, std::span<double> out);

/// The k smallest entries of row[0..n) other than index `skip`, ascending,
/// equal values ordered by index. Writes min(k, n - 1) entries (n if skip >= n)
/// into idx/val and returns that count.
std::size_t k_smallest(std::span<const double> row, std::size_t skip, std::size_t k, std::size_t* idx,
                       double* val);

/// Same result as k_smallest when `bound` is at least the k-th smallest value
/// (for instance the largest of any k entries other than `skip`). Only
/// entries <= bound are ranked; `scratch` must hold row.size() indices.
std::size_t k_smallest_bounded(std::span<const double> row, std::size_t skip, std::size_t k, double bound,
                               std::size_t* idx, double* val, std::size_t* scratch);

namespace scalar {
/// Ascending indices j != skip with row[j] <= bound; returns their count.
std::size_t collect_le(const double* row, std::size_t n, std::size_t skip, double bound, std::size_t* out);
std::size_t k_smallest(const double* row, std::size_t n, std::size_t skip, std::size_t k, std::size_t* idx,
                       double* val);
double weighted_sq_distance(const double* a, const double* b, const double* w2, std::size_t n);
void scaled_add(double* out, const double* base, const double* x, double scale, std::size_t n);
void chord_sq(const double* xs, const double* ys, const double* zs, double cx, double cy, double cz,
              double* out, std::size_t n);
}  // namespace scalar

namespace avx2 {
/// Ascending indices j != skip with row[j] <= bound; returns their count.
std::size_t collect_le(const double* row, std::size_t n, std::size_t skip, double bound, std::size_t* out);
std::size_t k_smallest(const double* row, std::size_t n, std::size_t skip, std::size_t k, std::size_t* idx,
                       double* val);
double weighted_sq_distance(const double* a, const double* b, const double* w2, std::size_t n);
void scaled_add(double* out, const double* base, const double* x, double scale, std::size_t n);
void chord_sq(const double* xs, const double* ys, const double* zs, double cx, double cy, double cz,
              double* out, std::size_t n);
}  // namespace avx2

}  // namespace crimematch::kernels
