#include "crimematch/kernels.hpp"
#include "select.hpp"

namespace crimematch::kernels::scalar {

std::size_t collect_le(const double* row, std::size_t n, std::size_t skip, double bound, std::size_t* out) {
  std::size_t count = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (row[j] <= bound && j != skip) out[count++] = j;
  }
  return count;
}

std::size_t k_smallest(const double* row, std::size_t n, std::size_t skip, std::size_t k, std::size_t* idx,
                       double* val) {
  std::size_t found = 0;
  if (k == 0) return 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == skip) continue;
    const double v = row[j];
    if (found == k && !(v < val[k - 1])) continue;
    insert_sorted(j, v, k, found, idx, val);
  }
  return found;
}

double weighted_sq_distance(const double* a, const double* b, const double* w2, std::size_t n) {
  double sum = 0.0;
  for (std::size_t d = 0; d < n; ++d) {
    const double diff = a[d] - b[d];
    sum += w2[d] * diff * diff;
  }
  return sum;
}

void scaled_add(double* out, const double* base, const double* x, double scale, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = base[i] + scale * x[i];
}

void chord_sq(const double* xs, const double* ys, const double* zs, double cx, double cy, double cz,
              double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - cx;
    const double dy = ys[i] - cy;
    const double dz = zs[i] - cz;
    out[i] = dx * dx + dy * dy + dz * dz;
  }
}

}  // namespace crimematch::kernels::scalar
