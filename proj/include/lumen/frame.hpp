#pragma once

#include <array>
#include <vector>

#include "lumen/geometry.hpp"

namespace lumen {

inline constexpr int kDescriptorDim = 128;

// Unit-norm feature descriptor.
struct Descriptor {
  std::array<float, kDescriptorDim> v{};

  const float* data() const { return v.data(); }
  float* data() { return v.data(); }

  double norm() const;
  bool is_normalized(double tol = 1e-6) const;
  void normalize();
};

// Cosine similarity; descriptors are unit-norm so this is the dot product.
double cosine_similarity(const Descriptor& a, const Descriptor& b);

// Detected feature with its sampled depth and backprojected camera-space point.
struct Keypoint {
  Vec2 uv = Vec2::Zero();
  double depth = 0.0;  // cm
  Vec3 point3 = Vec3::Zero();
};

// Everything the pipeline knows about one frame.
struct FrameBundle {
  int id = -1;
  Intrinsics intrinsics;
  ImageRaster image;
  DepthRaster depth;
  std::vector<Keypoint> keypoints;
  std::vector<Descriptor> descriptors;
};

}  // namespace lumen
