#include "lumen/frame.hpp"

#include <cmath>

#include "lumen/kernels.hpp"

namespace lumen {

double Descriptor::norm() const {
  return std::sqrt(kernels::dot(v.data(), v.data(), kDescriptorDim));
}

bool Descriptor::is_normalized(double tol) const { return std::abs(norm() - 1.0) <= tol; }

void Descriptor::normalize() {
  const double n = norm();
  if (n <= 0.0) return;
  for (auto& x : v) x = static_cast<float>(x / n);
}

double cosine_similarity(const Descriptor& a, const Descriptor& b) {
  return kernels::dot(a.data(), b.data(), kDescriptorDim);
}

}  // namespace lumen
