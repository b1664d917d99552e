#include "kernels_detail.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

namespace lumen::kernels::detail {
namespace {

// Horizontal sum of a 4-lane double register.
inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double dot_avx2(const float* a, const float* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 af = _mm256_loadu_ps(a + i);
    __m256 bf = _mm256_loadu_ps(b + i);
    // Widen to double before accumulating.
    __m256d alo = _mm256_cvtps_pd(_mm256_castps256_ps128(af));
    __m256d ahi = _mm256_cvtps_pd(_mm256_extractf128_ps(af, 1));
    __m256d blo = _mm256_cvtps_pd(_mm256_castps256_ps128(bf));
    __m256d bhi = _mm256_cvtps_pd(_mm256_extractf128_ps(bf, 1));
    acc0 = _mm256_fmadd_pd(alo, blo, acc0);
    acc1 = _mm256_fmadd_pd(ahi, bhi, acc1);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

double sum_avx2(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i];
  return s;
}

void abs_diff_avx2(const double* a, const double* b, double* out, std::size_t n) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    _mm256_storeu_pd(out + i, _mm256_andnot_pd(sign_mask, d));
  }
  for (; i < n; ++i) {
    double d = a[i] - b[i];
    out[i] = d < 0.0 ? -d : d;
  }
}

void min_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_min_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] < b[i] ? a[i] : b[i];
}

const KernelTable kTable = {dot_avx2, sum_avx2, abs_diff_avx2, min_avx2};

}  // namespace

const KernelTable* avx2_table() {
#if defined(__GNUC__) || defined(__clang__)
  if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma")) return nullptr;
#endif
  return &kTable;
}

}  // namespace lumen::kernels::detail

#else

namespace lumen::kernels::detail {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace lumen::kernels::detail

#endif
