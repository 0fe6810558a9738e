#include <immintrin.h>

#include "crimematch/kernels.hpp"
#include "select.hpp"

namespace crimematch::kernels::avx2 {

namespace {

inline double horizontal_sum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)));
}

}  // namespace

std::size_t collect_le(const double* row, std::size_t n, std::size_t skip, double bound, std::size_t* out) {
  std::size_t count = 0;
  const __m256d limit = _mm256_set1_pd(bound);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    unsigned mask = static_cast<unsigned>(_mm256_movemask_pd(_mm256_cmp_pd(_mm256_loadu_pd(row + j), limit, _CMP_LE_OQ)));
    while (mask != 0) {
      const std::size_t jj = j + static_cast<std::size_t>(__builtin_ctz(mask));
      mask &= mask - 1;
      if (jj != skip) out[count++] = jj;
    }
  }
  for (; j < n; ++j) {
    if (row[j] <= bound && j != skip) out[count++] = j;
  }
  return count;
}

std::size_t k_smallest(const double* row, std::size_t n, std::size_t skip, std::size_t k, std::size_t* idx,
                       double* val) {
  std::size_t found = 0;
  if (k == 0) return 0;
  std::size_t j = 0;
  for (; j < n && found < k; ++j) {
    if (j != skip) insert_sorted(j, row[j], k, found, idx, val);
  }
  // Full buffer: a block of four is skipped unless some entry beats the current k-th value.
  __m256d threshold = _mm256_set1_pd(val[k - 1]);
  for (; j + 4 <= n; j += 4) {
    int mask = _mm256_movemask_pd(_mm256_cmp_pd(_mm256_loadu_pd(row + j), threshold, _CMP_LT_OQ));
    if (mask == 0) continue;
    for (std::size_t b = 0; b < 4; ++b) {
      const std::size_t jj = j + b;
      if (jj == skip || !(row[jj] < val[k - 1])) continue;
      insert_sorted(jj, row[jj], k, found, idx, val);
    }
    threshold = _mm256_set1_pd(val[k - 1]);
  }
  for (; j < n; ++j) {
    if (j == skip || !(row[j] < val[k - 1])) continue;
    insert_sorted(j, row[j], k, found, idx, val);
  }
  return found;
}

double weighted_sq_distance(const double* a, const double* b, const double* w2, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t d = 0;
  for (; d + 4 <= n; d += 4) {
    const __m256d diff = _mm256_sub_pd(_mm256_loadu_pd(a + d), _mm256_loadu_pd(b + d));
    acc = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w2 + d), diff), diff, acc);
  }
  double sum = horizontal_sum(acc);
  for (; d < n; ++d) {
    const double diff = a[d] - b[d];
    sum += w2[d] * diff * diff;
  }
  return sum;
}

void scaled_add(double* out, const double* base, const double* x, double scale, std::size_t n) {
  const __m256d s = _mm256_set1_pd(scale);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i,
                     _mm256_fmadd_pd(s, _mm256_loadu_pd(x + i), _mm256_loadu_pd(base + i)));
  }
  for (; i < n; ++i) out[i] = base[i] + scale * x[i];
}

void chord_sq(const double* xs, const double* ys, const double* zs, double cx, double cy, double cz,
              double* out, std::size_t n) {
  const __m256d vx = _mm256_set1_pd(cx);
  const __m256d vy = _mm256_set1_pd(cy);
  const __m256d vz = _mm256_set1_pd(cz);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i), vx);
    const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i), vy);
    const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(zs + i), vz);
    __m256d acc = _mm256_mul_pd(dx, dx);
    acc = _mm256_fmadd_pd(dy, dy, acc);
    acc = _mm256_fmadd_pd(dz, dz, acc);
    _mm256_storeu_pd(out + i, acc);
  }
  for (; i < n; ++i) {
    const double dx = xs[i] - cx;
    const double dy = ys[i] - cy;
    const double dz = zs[i] - cz;
    out[i] = dx * dx + dy * dy + dz * dz;
  }
}

}  // namespace crimematch::kernels::avx2
