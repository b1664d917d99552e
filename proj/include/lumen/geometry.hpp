#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <optional>
#include <vector>

// Camera model, SE(3) algebra and raster warping. All metric quantities
// are in centimeters.

namespace lumen {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Pinhole intrinsics for pre-undistorted images.
struct Intrinsics {
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 &&
           cx < width && cy >= 0.0 && cy < height;
  }
  bool contains(double u, double v) const {
    return u >= 0.0 && v >= 0.0 && u <= width - 1.0 && v <= height - 1.0;
  }
};

// Rigid transform p' = R p + t. Poses map camera coordinates into a
// reference frame; relative transforms map one camera frame into another.
struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidPose identity() { return {}; }
  static RigidPose from_quaternion(const Eigen::Quaterniond& q, const Vec3& t) {
    return {q.normalized().toRotationMatrix(), t};
  }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 operator()(const Vec3& p) const { return apply(p); }

  RigidPose inverse() const {
    return {rotation.transpose(), -(rotation.transpose() * translation)};
  }

  // Orthonormality and orientation check (tolerance 1e-9).
  bool is_valid(double tol = 1e-9) const;

  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation); }
};

// compose(a, b)(p) == a(b(p))
RigidPose compose(const RigidPose& a, const RigidPose& b);
RigidPose invert(const RigidPose& a);

// Exponential map of a 6-dof twist (translation part first, then rotation),
// first-order screw form: x -> x + rho + phi x x, orthonormalized exactly.
RigidPose se3_exp(const Eigen::Matrix<double, 6, 1>& xi);

Mat3 skew(const Vec3& v);

// Row-major depth grid in cm; entries <= 0 or non-finite are invalid.
struct DepthRaster {
  int width = 0, height = 0;
  std::vector<float> values;

  DepthRaster() = default;
  DepthRaster(int w, int h, float fill = 0.f)
      : width(w), height(h), values(static_cast<size_t>(w) * h, fill) {}

  float at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
  float& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
  bool is_valid(int x, int y) const {
    const float d = at(x, y);
    return d > 0.f && std::isfinite(d);
  }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
};

// Row-major 3-channel image, values in [0, 1].
struct ImageRaster {
  int width = 0, height = 0;
  std::vector<float> values;  // size = width*height*3, interleaved rgb

  ImageRaster() = default;
  ImageRaster(int w, int h, float fill = 0.f)
      : width(w), height(h), values(static_cast<size_t>(w) * h * 3, fill) {}

  float at(int x, int y, int c) const {
    return values[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  float& at(int x, int y, int c) {
    return values[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
};

// Boolean raster tied to the dimensions of the rasters it masks.
struct PixelMask {
  int width = 0, height = 0;
  std::vector<std::uint8_t> values;

  PixelMask() = default;
  PixelMask(int w, int h, bool fill = false)
      : width(w), height(h), values(static_cast<size_t>(w) * h, fill ? 1 : 0) {}

  bool at(int x, int y) const { return values[static_cast<size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { values[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
  size_t count() const;
};

// Pinhole projection; returns nullopt when the point is behind the camera
// or lands outside the raster.
std::optional<Vec2> project(const Vec3& p, const Intrinsics& k);

// Inverse projection at depth d (cm). Throws std::invalid_argument on d <= 0.
Vec3 backproject(const Vec2& uv, double d, const Intrinsics& k);

// Bilinear sample of a depth raster; invalid when any participating texel
// is invalid or (u, v) is outside the raster.
std::optional<double> sample_depth_bilinear(const DepthRaster& d, double u, double v);

// Bilinear sample of one image channel; caller guarantees in-bounds coords.
double sample_image_bilinear(const ImageRaster& img, double u, double v, int c);

struct WarpResult {
  ImageRaster image;
  PixelMask valid;
};

// Renders the source image into the target view. `t_rel` maps source-camera
// coordinates into target-camera coordinates. Source depth is forward-splatted
// with a nearest-neighbor z-buffer to establish target-view geometry, then
// colors are pulled back by bilinear sampling (border-invalid).
WarpResult warp_view(const ImageRaster& src, const DepthRaster& src_depth,
                     const RigidPose& t_rel, const Intrinsics& k);

// Forward-projects source depth into the target view; collisions keep the
// nearer value.
DepthRaster reproject_depth(const DepthRaster& src_depth, const RigidPose& t_rel,
                            const Intrinsics& k);

struct DepthPair {
  DepthRaster warped;  // source depth carried into the target view
  DepthRaster interp;  // target depth bilinearly sampled at the landing points
};

// Builds the raster pair consumed by the depth-consistency loss: the warped
// source depth and the target depth interpolated at the same landing
// coordinates, both on the target grid.
DepthPair reproject_depth_pair(const DepthRaster& src_depth, const DepthRaster& tgt_depth,
                               const RigidPose& t_rel, const Intrinsics& k);

}  // namespace lumen
