#include <atomic>
#include <cstdlib>
#include <string>

#include "crimematch/kernels.hpp"
#include "select.hpp"

namespace crimematch::kernels {

#ifndef CRIMEMATCH_HAVE_AVX2
namespace avx2 {
// Never selected: avx2_supported() is false on builds without the AVX2 unit.
double weighted_sq_distance(const double* a, const double* b, const double* w2, std::size_t n) {
  return scalar::weighted_sq_distance(a, b, w2, n);
}
void scaled_add(double* out, const double* base, const double* x, double scale, std::size_t n) {
  scalar::scaled_add(out, base, x, scale, n);
}
void chord_sq(const double* xs, const double* ys, const double* zs, double cx, double cy, double cz,
              double* out, std::size_t n) {
  scalar::chord_sq(xs, ys, zs, cx, cy, cz, out, n);
}
std::size_t k_smallest(const double* row, std::size_t n, std::size_t skip, std::size_t k, std::size_t* idx,
                       double* val) {
  return scalar::k_smallest(row, n, skip, k, idx, val);
}
std::size_t collect_le(const double* row, std::size_t n, std::size_t skip, double bound, std::size_t* out) {
  return scalar::collect_le(row, n, skip, bound, out);
}
}  // namespace avx2
#endif

namespace {

Isa detect() {
  Isa isa = avx2_supported() ? Isa::avx2 : Isa::scalar;
  if (const char* env = std::getenv("CRIMEMATCH_ISA")) {
    const std::string requested(env);
    if (requested == "scalar") isa = Isa::scalar;
  }
  return isa;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

bool avx2_supported() {
#if defined(CRIMEMATCH_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported;
#else
  return false;
#endif
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

Isa set_isa(Isa isa) {
  if (isa == Isa::avx2 && !avx2_supported()) isa = Isa::scalar;
  current().store(isa, std::memory_order_relaxed);
  return isa;
}

std::string_view to_string(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

std::size_t k_smallest(std::span<const double> row, std::size_t skip, std::size_t k, std::size_t* idx,
                       double* val) {
  if (active_isa() == Isa::avx2) return avx2::k_smallest(row.data(), row.size(), skip, k, idx, val);
  return scalar::k_smallest(row.data(), row.size(), skip, k, idx, val);
}

std::size_t k_smallest_bounded(std::span<const double> row, std::size_t skip, std::size_t k, double bound,
                               std::size_t* idx, double* val, std::size_t* scratch) {
  const std::size_t m = active_isa() == Isa::avx2 ? avx2::collect_le(row.data(), row.size(), skip, bound, scratch)
                                                   : scalar::collect_le(row.data(), row.size(), skip, bound, scratch);
  std::size_t found = 0;
  if (k == 0) return 0;
  // Candidates arrive in index order, so insertion keeps equal values ordered by index.
  for (std::size_t c = 0; c < m; ++c) {
    const double v = row[scratch[c]];
    if (found == k && !(v < val[k - 1])) continue;
    insert_sorted(scratch[c], v, k, found, idx, val);
  }
  return found;
}

double weighted_sq_distance(std::span<const double> a, std::span<const double> b,
                            std::span<const double> w2) {
  if (active_isa() == Isa::avx2) return avx2::weighted_sq_distance(a.data(), b.data(), w2.data(), a.size());
  return scalar::weighted_sq_distance(a.data(), b.data(), w2.data(), a.size());
}

void scaled_add(std::span<double> out, std::span<const double> base, std::span<const double> x,
                double scale) {
  if (active_isa() == Isa::avx2) return avx2::scaled_add(out.data(), base.data(), x.data(), scale, out.size());
  scalar::scaled_add(out.data(), base.data(), x.data(), scale, out.size());
}

void chord_sq(std::span<const double> xs, std::span<const double> ys, std::span<const double> zs,
              double cx, double cy, double cz, std::span<double> out) {
  if (active_isa() == Isa::avx2) return avx2::chord_sq(xs.data(), ys.data(), zs.data(), cx, cy, cz, out.data(), out.size());
  scalar::chord_sq(xs.data(), ys.data(), zs.data(), cx, cy, cz, out.data(), out.size());
}

}  // namespace crimematch::kernels
