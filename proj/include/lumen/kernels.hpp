#pragma once

#include <cstddef>
#include <string>

// Data-parallel primitives behind the hot inner loops: descriptor dot
// products and dense loss-raster arithmetic. Every kernel has a scalar
// reference implementation and, where the CPU supports it, a SIMD variant
// selected once at startup. The scalar path is the semantic reference;
// SIMD variants are equivalence-tested against it.
//
// Reductions accumulate in double regardless of input type so that the
// dispatched result stays within a few ulp of the sequential reference.

namespace lumen::kernels {

enum class Backend { kScalar, kAvx2, kNeon };

// Backend chosen for this process (CPU detection, done once).
Backend active_backend();

// Test hook: route all dispatched kernels through `b`. Throws
// std::runtime_error if the backend is not available on this machine.
void force_backend(Backend b);

bool backend_available(Backend b);
std::string backend_name(Backend b);

// Dot product of two float vectors, accumulated in double.
double dot(const float* a, const float* b, std::size_t n);

// Sum of a double vector.
double sum(const double* a, std::size_t n);

// out[i] = |a[i] - b[i]|
void abs_diff(const double* a, const double* b, double* out, std::size_t n);

// out[i] = min(a[i], b[i])
void elementwise_min(const double* a, const double* b, double* out, std::size_t n);

// Reference implementations, always available. Kept callable so tests can
// compare the dispatched path against them directly.
namespace scalar {
double dot(const float* a, const float* b, std::size_t n);
double sum(const double* a, std::size_t n);
void abs_diff(const double* a, const double* b, double* out, std::size_t n);
void elementwise_min(const double* a, const double* b, double* out, std::size_t n);
}  // namespace scalar

}  // namespace lumen::kernels
