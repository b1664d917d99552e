#include "lumen/geometry.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace lumen {

bool RigidPose::is_valid(double tol) const {
  const Mat3 rtr = rotation.transpose() * rotation;
  if ((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  if (std::abs(rotation.determinant() - 1.0) > tol) return false;
  return translation.allFinite();
}

RigidPose compose(const RigidPose& a, const RigidPose& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

RigidPose invert(const RigidPose& a) { return a.inverse(); }

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

RigidPose se3_exp(const Eigen::Matrix<double, 6, 1>& xi) {
  const Vec3 rho = xi.head<3>();
  const Vec3 phi = xi.tail<3>();
  const double angle = phi.norm();
  Mat3 r;
  if (angle < 1e-12) {
    r = Mat3::Identity() + skew(phi);
    // First-order approximation drifts off SO(3); re-orthonormalize.
    Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    r = svd.matrixU() * svd.matrixV().transpose();
  } else {
    r = Eigen::AngleAxisd(angle, phi / angle).toRotationMatrix();
  }
  // Left Jacobian of SO(3) applied to the translation part.
  Mat3 j;
  if (angle < 1e-8) {
    j = Mat3::Identity() + 0.5 * skew(phi);
  } else {
    const Mat3 w = skew(phi / angle);
    j = Mat3::Identity() + (1.0 - std::cos(angle)) / angle * w +
        (1.0 - std::sin(angle) / angle) * w * w;
  }
  return {r, j * rho};
}

size_t PixelMask::count() const {
  size_t n = 0;
  for (auto v : values) n += v != 0;
  return n;
}

std::optional<Vec2> project(const Vec3& p, const Intrinsics& k) {
  if (p.z() <= 0.0) return std::nullopt;
  const double u = k.fx * p.x() / p.z() + k.cx;
  const double v = k.fy * p.y() / p.z() + k.cy;
  if (!k.contains(u, v)) return std::nullopt;
  return Vec2(u, v);
}

Vec3 backproject(const Vec2& uv, double d, const Intrinsics& k) {
  if (!(d > 0.0)) throw std::invalid_argument("backproject: depth must be positive");
  return {(uv.x() - k.cx) / k.fx * d, (uv.y() - k.cy) / k.fy * d, d};
}

std::optional<double> sample_depth_bilinear(const DepthRaster& d, double u, double v) {
  if (u < 0.0 || v < 0.0 || u > d.width - 1.0 || v > d.height - 1.0) return std::nullopt;
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  const int x1 = std::min(x0 + 1, d.width - 1);
  const int y1 = std::min(y0 + 1, d.height - 1);
  if (!d.is_valid(x0, y0) || !d.is_valid(x1, y0) || !d.is_valid(x0, y1) ||
      !d.is_valid(x1, y1)) {
    return std::nullopt;
  }
  const double fx = u - x0;
  const double fy = v - y0;
  const double top = (1.0 - fx) * d.at(x0, y0) + fx * d.at(x1, y0);
  const double bot = (1.0 - fx) * d.at(x0, y1) + fx * d.at(x1, y1);
  return (1.0 - fy) * top + fy * bot;
}

double sample_image_bilinear(const ImageRaster& img, double u, double v, int c) {
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = u - x0;
  const double fy = v - y0;
  const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
  const double bot = (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
  return (1.0 - fy) * top + fy * bot;
}

namespace {

void check_dims(const DepthRaster& d, const Intrinsics& k, const char* what) {
  if (d.width != k.width || d.height != k.height) {
    throw std::invalid_argument(std::string(what) + ": raster/intrinsics dimension mismatch");
  }
}

struct Splat {
  // Per target pixel: nearest z and the exact landing coordinates.
  std::vector<float> z;
  std::vector<float> u, v;
};

// Nearest-neighbor z-buffer splat of the source depth into the target view.
Splat splat_depth(const DepthRaster& src_depth, const RigidPose& t_rel,
                  const Intrinsics& k) {
  const size_t n = static_cast<size_t>(k.width) * k.height;
  Splat s;
  s.z.assign(n, 0.f);
  s.u.assign(n, 0.f);
  s.v.assign(n, 0.f);
  for (int y = 0; y < src_depth.height; ++y) {
    for (int x = 0; x < src_depth.width; ++x) {
      if (!src_depth.is_valid(x, y)) continue;
      const Vec3 p = backproject(Vec2(x, y), src_depth.at(x, y), k);
      const Vec3 q = t_rel.apply(p);
      const auto uv = project(q, k);
      if (!uv) continue;
      const int tx = static_cast<int>(std::lround(uv->x()));
      const int ty = static_cast<int>(std::lround(uv->y()));
      if (tx < 0 || ty < 0 || tx >= k.width || ty >= k.height) continue;
      const size_t idx = static_cast<size_t>(ty) * k.width + tx;
      if (s.z[idx] <= 0.f || q.z() < s.z[idx]) {
        s.z[idx] = static_cast<float>(q.z());
        s.u[idx] = static_cast<float>(uv->x());
        s.v[idx] = static_cast<float>(uv->y());
      }
    }
  }
  return s;
}

}  // namespace

WarpResult warp_view(const ImageRaster& src, const DepthRaster& src_depth,
                     const RigidPose& t_rel, const Intrinsics& k) {
  if (src.width != k.width || src.height != k.height) {
    throw std::invalid_argument("warp_view: image/intrinsics dimension mismatch");
  }
  check_dims(src_depth, k, "warp_view");

  const Splat s = splat_depth(src_depth, t_rel, k);
  const RigidPose inv = t_rel.inverse();

  WarpResult out;
  out.image = ImageRaster(k.width, k.height);
  out.valid = PixelMask(k.width, k.height);
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const size_t idx = static_cast<size_t>(y) * k.width + x;
      if (s.z[idx] <= 0.f) continue;
      // Pull the color back from the source through the splatted depth.
      const Vec3 q = backproject(Vec2(x, y), s.z[idx], k);
      const Vec3 p = inv.apply(q);
      if (p.z() <= 0.0) continue;
      const double su = k.fx * p.x() / p.z() + k.cx;
      const double sv = k.fy * p.y() / p.z() + k.cy;
      if (!k.contains(su, sv)) continue;
      for (int c = 0; c < 3; ++c) {
        out.image.at(x, y, c) = static_cast<float>(sample_image_bilinear(src, su, sv, c));
      }
      out.valid.set(x, y, true);
    }
  }
  return out;
}

DepthRaster reproject_depth(const DepthRaster& src_depth, const RigidPose& t_rel,
                            const Intrinsics& k) {
  check_dims(src_depth, k, "reproject_depth");
  const Splat s = splat_depth(src_depth, t_rel, k);
  DepthRaster out(k.width, k.height);
  out.values = s.z;
  return out;
}

DepthPair reproject_depth_pair(const DepthRaster& src_depth, const DepthRaster& tgt_depth,
                               const RigidPose& t_rel, const Intrinsics& k) {
  check_dims(src_depth, k, "reproject_depth_pair");
  check_dims(tgt_depth, k, "reproject_depth_pair");
  const Splat s = splat_depth(src_depth, t_rel, k);
  DepthPair out;
  out.warped = DepthRaster(k.width, k.height);
  out.warped.values = s.z;
  out.interp = DepthRaster(k.width, k.height);
  const size_t n = static_cast<size_t>(k.width) * k.height;
  for (size_t i = 0; i < n; ++i) {
    if (s.z[i] <= 0.f) continue;
    if (const auto d = sample_depth_bilinear(tgt_depth, s.u[i], s.v[i])) {
      out.interp.values[i] = static_cast<float>(*d);
    }
  }
  return out;
}

}  // namespace lumen
