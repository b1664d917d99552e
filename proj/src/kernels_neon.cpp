#include "kernels_detail.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

namespace lumen::kernels::detail {
namespace {

double dot_neon(const float* a, const float* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float32x4_t af = vld1q_f32(a + i);
    float32x4_t bf = vld1q_f32(b + i);
    float64x2_t alo = vcvt_f64_f32(vget_low_f32(af));
    float64x2_t ahi = vcvt_f64_f32(vget_high_f32(af));
    float64x2_t blo = vcvt_f64_f32(vget_low_f32(bf));
    float64x2_t bhi = vcvt_f64_f32(vget_high_f32(bf));
    acc0 = vfmaq_f64(acc0, alo, blo);
    acc1 = vfmaq_f64(acc1, ahi, bhi);
  }
  double acc = vaddvq_f64(acc0) + vaddvq_f64(acc1);
  for (; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

double sum_neon(const double* a, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(a + i));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += a[i];
  return s;
}

void abs_diff_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vabdq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  for (; i < n; ++i) {
    double d = a[i] - b[i];
    out[i] = d < 0.0 ? -d : d;
  }
}

void min_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vminq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] < b[i] ? a[i] : b[i];
}

const KernelTable kTable = {dot_neon, sum_neon, abs_diff_neon, min_neon};

}  // namespace

const KernelTable* neon_table() { return &kTable; }

}  // namespace lumen::kernels::detail

#else

namespace lumen::kernels::detail {
const KernelTable* neon_table() { return nullptr; }
}  // namespace lumen::kernels::detail

#endif
