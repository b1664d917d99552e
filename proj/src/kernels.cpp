#include "lumen/kernels.hpp"

#include <stdexcept>

#include "kernels_detail.hpp"

namespace lumen::kernels {

namespace {

const detail::KernelTable kScalarTable = {
    scalar::dot, scalar::sum, scalar::abs_diff, scalar::elementwise_min};

struct Dispatch {
  Backend backend = Backend::kScalar;
  const detail::KernelTable* table = &kScalarTable;
};

Dispatch pick_default() {
  if (const auto* t = detail::avx2_table()) return {Backend::kAvx2, t};
  if (const auto* t = detail::neon_table()) return {Backend::kNeon, t};
  return {};
}

Dispatch& dispatch() {
  static Dispatch d = pick_default();
  return d;
}

const detail::KernelTable* table_for(Backend b) {
  switch (b) {
    case Backend::kScalar: return &kScalarTable;
    case Backend::kAvx2: return detail::avx2_table();
    case Backend::kNeon: return detail::neon_table();
  }
  return nullptr;
}

}  // namespace

Backend active_backend() { return dispatch().backend; }

bool backend_available(Backend b) { return table_for(b) != nullptr; }

void force_backend(Backend b) {
  const auto* t = table_for(b);
  if (!t) throw std::runtime_error("kernel backend not available: " + backend_name(b));
  dispatch() = {b, t};
}

std::string backend_name(Backend b) {
  switch (b) {
    case Backend::kScalar: return "scalar";
    case Backend::kAvx2: return "avx2";
    case Backend::kNeon: return "neon";
  }
  return "unknown";
}

double dot(const float* a, const float* b, std::size_t n) {
  return dispatch().table->dot(a, b, n);
}

double sum(const double* a, std::size_t n) { return dispatch().table->sum(a, n); }

void abs_diff(const double* a, const double* b, double* out, std::size_t n) {
  dispatch().table->abs_diff(a, b, out, n);
}

void elementwise_min(const double* a, const double* b, double* out, std::size_t n) {
  dispatch().table->elementwise_min(a, b, out, n);
}

}  // namespace lumen::kernels
