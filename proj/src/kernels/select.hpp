#pragma once

#include <cstddef>

namespace crimematch::kernels {
namespace {  // internal linkage: each kernel TU keeps its own copy, compiled with its own ISA flags

/// Inserts (j, v) into the ascending buffer of `found` entries (capacity k).
/// Equal values keep their earlier position, so ties resolve to the smaller index.
inline void insert_sorted(std::size_t j, double v, std::size_t k, std::size_t& found, std::size_t* idx, double* val) {
  std::size_t pos = found < k ? found++ : k - 1;
  while (pos > 0 && v < val[pos - 1]) {
    val[pos] = val[pos - 1];
    idx[pos] = idx[pos - 1];
    --pos;
  }
  val[pos] = v;
  idx[pos] = j;
}

}  // namespace
}  // namespace crimematch::kernels
