#pragma once

#include <cstddef>

namespace lumen::kernels::detail {

struct KernelTable {
  double (*dot)(const float*, const float*, std::size_t);
  double (*sum)(const double*, std::size_t);
  void (*abs_diff)(const double*, const double*, double*, std::size_t);
  void (*elementwise_min)(const double*, const double*, double*, std::size_t);
};

// Each backend TU returns its table, or nullptr when the backend was not
// compiled in or the CPU lacks the required instructions.
const KernelTable* avx2_table();
const KernelTable* neon_table();

}  // namespace lumen::kernels::detail
