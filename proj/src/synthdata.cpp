#include "lumen/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "lumen/rng.hpp"

namespace lumen {

namespace {

constexpr int kLutSize = 2048;
constexpr double kRaycastTol = 1e-4;
constexpr double kMaxRayLength = 60.0;

// Uniform Catmull-Rom basis on one segment.
Vec3 catmull_rom(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3, double u) {
  const double u2 = u * u, u3 = u2 * u;
  return 0.5 * ((2.0 * p1) + (-p0 + p2) * u + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * u3);
}

Vec3 catmull_rom_deriv(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3,
                       double u) {
  const double u2 = u * u;
  return 0.5 * ((-p0 + p2) + 2.0 * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u +
                3.0 * (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * u2);
}

Vec3 catmull_rom_second(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3,
                        double u) {
  return 0.5 * (2.0 * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) +
                6.0 * (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * u);
}

}  // namespace

TubeScene::TubeScene(const TubeSceneParams& params) : params_(params) {
  // Control points along a gently bending space curve.
  const int n_ctrl = std::max(6, static_cast<int>(params.length_cm / 5.0) + 1);
  control_points_.reserve(n_ctrl);
  for (int i = 0; i < n_ctrl; ++i) {
    const double z = params.length_cm * i / (n_ctrl - 1);
    const double px = params.bend_amplitude_cm * std::sin(2.0 * M_PI * z / 37.0);
    const double py =
        0.6 * params.bend_amplitude_cm * std::sin(2.0 * M_PI * z / 23.0 + 1.3);
    control_points_.emplace_back(px, py, z);
  }

  // Arclength and rotation-minimizing-frame lookup table (double reflection).
  lut_.resize(kLutSize);
  double s = 0.0;
  Vec3 prev = centerline_at(0.0);
  Vec3 normal = Vec3(1, 0, 0);
  {
    const Vec3 t0 = centerline_deriv(0.0).normalized();
    normal = (normal - normal.dot(t0) * t0).normalized();
  }
  for (int i = 0; i < kLutSize; ++i) {
    const double t = static_cast<double>(i) / (kLutSize - 1);
    const Vec3 pos = centerline_at(t);
    const Vec3 tangent = centerline_deriv(t).normalized();
    if (i > 0) {
      s += (pos - prev).norm();
      // Double-reflection transport of the previous normal.
      const Vec3& x0 = lut_[i - 1].position;
      const Vec3& t0 = lut_[i - 1].tangent;
      const Vec3& n0 = lut_[i - 1].normal;
      const Vec3 v1 = pos - x0;
      const double c1 = v1.squaredNorm();
      if (c1 > 1e-16) {
        const Vec3 nl = n0 - (2.0 / c1) * v1.dot(n0) * v1;
        const Vec3 tl = t0 - (2.0 / c1) * v1.dot(t0) * v1;
        const Vec3 v2 = tangent - tl;
        const double c2 = v2.squaredNorm();
        normal = c2 > 1e-16 ? (nl - (2.0 / c2) * v2.dot(nl) * v2) : nl;
        normal = (normal - normal.dot(tangent) * tangent).normalized();
      }
    }
    lut_[i] = {pos, tangent, normal, s, t};
    prev = pos;
  }
  total_length_ = s;

  // Landmarks on the implicit surface with unit random signatures.
  Rng rng(params.seed);
  landmarks_.reserve(params.landmark_count);
  for (int i = 0; i < params.landmark_count; ++i) {
    const double sl = rng.uniform(2.0, total_length_ - 2.0);
    const double theta = rng.uniform(0.0, 2.0 * M_PI);
    const PathFrame pf = path_frame(sl);
    const Vec3 radial = std::cos(theta) * pf.orientation.col(0) +
                        std::sin(theta) * pf.orientation.col(1);
    Vec3 x = pf.position + radius_at_arclength(sl) * radial;
    // Project onto the implicit zero level (the frame formula is only
    // approximate where the centerline bends).
    double hint = param_at_arclength(sl);
    for (int it = 0; it < 6; ++it) {
      const double f = implicit(x, &hint);
      const Vec3 c = centerline_at(hint);
      const Vec3 dir = (x - c).normalized();
      x -= f * dir;
    }
    Landmark lm;
    lm.position = x;
    for (auto& v : lm.signature.v) v = static_cast<float>(rng.normal());
    lm.signature.normalize();
    landmarks_.push_back(lm);
  }
}

Vec3 TubeScene::centerline_at(double t) const {
  const int segs = static_cast<int>(control_points_.size()) - 1;
  t = std::clamp(t, 0.0, 1.0);
  const double x = t * segs;
  int k = std::min(static_cast<int>(x), segs - 1);
  const double u = x - k;
  const auto& p = control_points_;
  const int i0 = std::max(k - 1, 0);
  const int i3 = std::min(k + 2, segs);
  return catmull_rom(p[i0], p[k], p[k + 1], p[i3], u);
}

Vec3 TubeScene::centerline_deriv(double t) const {
  const int segs = static_cast<int>(control_points_.size()) - 1;
  t = std::clamp(t, 0.0, 1.0);
  const double x = t * segs;
  int k = std::min(static_cast<int>(x), segs - 1);
  const double u = x - k;
  const auto& p = control_points_;
  const int i0 = std::max(k - 1, 0);
  const int i3 = std::min(k + 2, segs);
  return catmull_rom_deriv(p[i0], p[k], p[k + 1], p[i3], u) * segs;
}

Vec3 TubeScene::centerline_second_deriv(double t) const {
  const int segs = static_cast<int>(control_points_.size()) - 1;
  t = std::clamp(t, 0.0, 1.0);
  const double x = t * segs;
  int k = std::min(static_cast<int>(x), segs - 1);
  const double u = x - k;
  const auto& p = control_points_;
  const int i0 = std::max(k - 1, 0);
  const int i3 = std::min(k + 2, segs);
  return catmull_rom_second(p[i0], p[k], p[k + 1], p[i3], u) * segs * segs;
}

double TubeScene::radius_at_arclength(double s) const {
  return params_.base_radius_cm +
         params_.bump_amplitude_cm * std::sin(2.0 * M_PI * s / params_.bump_period_cm);
}

double TubeScene::arclength_at_param(double t) const {
  t = std::clamp(t, 0.0, 1.0);
  const double x = t * (kLutSize - 1);
  const int i = std::min(static_cast<int>(x), kLutSize - 2);
  const double u = x - i;
  return (1.0 - u) * lut_[i].arclength + u * lut_[i + 1].arclength;
}

double TubeScene::param_at_arclength(double s) const {
  s = std::clamp(s, 0.0, total_length_);
  auto it = std::lower_bound(lut_.begin(), lut_.end(), s,
                             [](const Sample& a, double v) { return a.arclength < v; });
  if (it == lut_.begin()) return 0.0;
  if (it == lut_.end()) return 1.0;
  const auto prev = it - 1;
  const double span = it->arclength - prev->arclength;
  const double u = span > 0.0 ? (s - prev->arclength) / span : 0.0;
  return prev->param + u * (it->param - prev->param);
}

double TubeScene::nearest_param(const Vec3& x, double* hint) const {
  // Locate the nearest LUT sample, warm-started when a hint is available.
  int best;
  if (hint && *hint >= 0.0) {
    best = std::clamp(static_cast<int>(*hint * (kLutSize - 1)), 0, kLutSize - 1);
  } else {
    best = 0;
    double best_d = (x - lut_[0].position).squaredNorm();
    for (int i = 16; i < kLutSize; i += 16) {
      const double d = (x - lut_[i].position).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
  }
  // Walk downhill to the locally nearest sample.
  double best_d = (x - lut_[best].position).squaredNorm();
  while (true) {
    bool moved = false;
    if (best > 0) {
      const double d = (x - lut_[best - 1].position).squaredNorm();
      if (d < best_d) {
        best_d = d;
        --best;
        moved = true;
        continue;
      }
    }
    if (best < kLutSize - 1) {
      const double d = (x - lut_[best + 1].position).squaredNorm();
      if (d < best_d) {
        best_d = d;
        ++best;
        moved = true;
      }
    }
    if (!moved) break;
  }

  // Newton refinement of g(t) = (x - C(t)) . C'(t) = 0.
  double t = lut_[best].param;
  const double seg = 1.0 / (kLutSize - 1);
  for (int it = 0; it < 5; ++it) {
    const Vec3 c = centerline_at(t);
    const Vec3 d1 = centerline_deriv(t);
    const Vec3 d2 = centerline_second_deriv(t);
    const Vec3 e = x - c;
    const double g = e.dot(d1);
    const double gp = -d1.squaredNorm() + e.dot(d2);
    if (std::abs(gp) < 1e-12) break;
    double step = g / gp;
    step = std::clamp(step, -4.0 * seg, 4.0 * seg);
    t = std::clamp(t - step, 0.0, 1.0);
    if (std::abs(step) < 1e-12) break;
  }
  if (hint) *hint = t;
  return t;
}

double TubeScene::implicit(const Vec3& x, double* param_hint) const {
  const double t = nearest_param(x, param_hint);
  const double dist = (x - centerline_at(t)).norm();
  return dist - radius_at_arclength(arclength_at_param(t));
}

void TubeScene::surface_coords(const Vec3& x, double* s, double* theta) const {
  double hint = -1.0;
  const double t = nearest_param(x, &hint);
  *s = arclength_at_param(t);
  const double fx = t * (kLutSize - 1);
  const int i = std::clamp(static_cast<int>(std::lround(fx)), 0, kLutSize - 1);
  const Vec3 tangent = lut_[i].tangent;
  const Vec3 normal = lut_[i].normal;
  const Vec3 binormal = tangent.cross(normal);
  const Vec3 radial = x - centerline_at(t);
  *theta = std::atan2(radial.dot(binormal), radial.dot(normal));
}

Vec3 TubeScene::albedo(const Vec3& x) const {
  double s = 0.0, theta = 0.0;
  surface_coords(x, &s, &theta);
  // Smooth multi-frequency bands; values kept inside (0, 1).
  const double a = std::sin(2.0 * M_PI * s / 4.3) * std::cos(3.0 * theta);
  const double b = std::sin(2.0 * M_PI * s / 1.7 + 0.9) * std::sin(2.0 * theta + 0.4);
  const double c = std::sin(2.0 * M_PI * s / 9.1 + 2.1);
  return {0.62 + 0.18 * a + 0.06 * c, 0.36 + 0.12 * b + 0.05 * a, 0.30 + 0.08 * c + 0.05 * b};
}

PathFrame TubeScene::path_frame(double s) const {
  const double t = param_at_arclength(s);
  const double fx = t * (kLutSize - 1);
  const int i = std::clamp(static_cast<int>(std::lround(fx)), 0, kLutSize - 1);
  PathFrame pf;
  pf.position = centerline_at(t);
  const Vec3 tangent = centerline_deriv(t).normalized();
  Vec3 normal = lut_[i].normal;
  normal = (normal - normal.dot(tangent) * tangent).normalized();
  const Vec3 binormal = tangent.cross(normal);
  pf.orientation.col(0) = normal;
  pf.orientation.col(1) = binormal;
  pf.orientation.col(2) = tangent;
  return pf;
}

RaycastResult raycast_depth(const TubeScene& scene, const RigidPose& pose,
                            const Intrinsics& k) {
  if (!k.valid()) throw std::invalid_argument("raycast_depth: invalid intrinsics");
  double origin_hint = -1.0;
  if (scene.implicit(pose.translation, &origin_hint) >= -0.05) {
    throw std::invalid_argument("raycast_depth: camera origin not inside the tube");
  }

  RaycastResult out;
  out.depth = DepthRaster(k.width, k.height);
  out.image = ImageRaster(k.width, k.height);

  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      // Warm start at the camera's own centerline parameter; the hint then
      // advances monotonically as the march walks down the tube.
      double hint = origin_hint;
      const Vec3 dir_cam =
          Vec3((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0).normalized();
      const Vec3 dir = pose.rotation * dir_cam;
      const Vec3& origin = pose.translation;

      // Sphere-trace toward the wall (implicit is distance-like, Lipschitz
      // bound below 2 for gentle radius profiles).
      double t_ray = 0.0;
      double f = scene.implicit(origin, &hint);
      bool hit = false;
      for (int step = 0; step < 256 && t_ray < kMaxRayLength; ++step) {
        if (f > -4.0 * kRaycastTol) {
          hit = true;
          break;
        }
        t_ray += std::max(0.5 * -f, 2.0 * kRaycastTol);
        f = scene.implicit(origin + t_ray * dir, &hint);
      }
      if (!hit && f < 0.0) continue;  // no wall within range

      // Bracket the crossing, then bisect.
      double lo = t_ray, hi = t_ray;
      if (f < 0.0) {
        double fe = f;
        while (fe < 0.0 && hi < kMaxRayLength) {
          lo = hi;
          hi += 0.02;
          fe = scene.implicit(origin + hi * dir, &hint);
        }
        if (fe < 0.0) continue;
      } else {
        // Step back to an inside point.
        lo = std::max(0.0, t_ray - 0.05);
        double fs = scene.implicit(origin + lo * dir, &hint);
        int guard = 0;
        while (fs >= 0.0 && lo > 0.0 && ++guard < 8) {
          lo = std::max(0.0, lo - 0.05);
          fs = scene.implicit(origin + lo * dir, &hint);
        }
        if (fs >= 0.0) continue;
      }
      for (int it = 0; it < 40 && (hi - lo) > kRaycastTol * 0.5; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (scene.implicit(origin + mid * dir, &hint) < 0.0) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      const double t_hit = 0.5 * (lo + hi);
      const double depth = t_hit * dir_cam.z();
      if (depth <= 0.0) continue;
      out.depth.at(x, y) = static_cast<float>(depth);

      const Vec3 p_hit = origin + t_hit * dir;
      const Vec3 color = scene.albedo(p_hit);
      // Headlight shading with the inward radial normal.
      double tpar = hint;
      scene.implicit(p_hit, &tpar);
      const Vec3 radial = (p_hit - scene.centerline_at(tpar)).normalized();
      const double ndotl = std::max(0.12, radial.dot(dir));
      const double falloff = 1.0 / (1.0 + 0.015 * t_hit * t_hit);
      const double glint = std::pow(std::max(0.0, radial.dot(dir)), 60.0);
      for (int c = 0; c < 3; ++c) {
        const double v = color[c] * ndotl * falloff + 0.55 * glint;
        out.image.at(x, y, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return out;
}

namespace {

// Landmark must land in view, pass the occlusion test against the rendered
// depth and reproduce its 3D position through raster resampling.
struct VisibleKeypoint {
  int landmark_id;
  Vec2 uv;
  double depth;
};

std::vector<VisibleKeypoint> visible_keypoints(const TubeScene& scene,
                                               const RigidPose& pose,
                                               const Intrinsics& k,
                                               const DepthRaster& depth) {
  std::vector<VisibleKeypoint> out;
  const RigidPose world_to_cam = pose.inverse();
  const auto& lms = scene.landmarks();
  for (int id = 0; id < static_cast<int>(lms.size()); ++id) {
    const Vec3 p_cam = world_to_cam.apply(lms[id].position);
    if (p_cam.z() < 0.3) continue;
    const auto uv = project(p_cam, k);
    if (!uv) continue;
    if (uv->x() < 1.0 || uv->y() < 1.0 || uv->x() > k.width - 2.0 ||
        uv->y() > k.height - 2.0) {
      continue;
    }
    const auto d = sample_depth_bilinear(depth, uv->x(), uv->y());
    if (!d) continue;
    // Occlusion: another wall in front of the landmark.
    if (*d < p_cam.z() - 0.05) continue;
    // Resampling consistency: the raster must reproduce the 3D point, else
    // the keypoint is not reliable for downstream metric use.
    const Vec3 resampled = backproject(*uv, *d, k);
    if ((resampled - p_cam).norm() > 4e-4) continue;
    out.push_back({id, *uv, *d});
  }
  return out;
}

}  // namespace

GeneratedSequence generate_sequence(const TubeScene& scene, const SequenceSpec& spec) {
  if (spec.frame_count < 1) throw std::invalid_argument("generate_sequence: empty spec");
  if (!spec.intrinsics.valid()) {
    throw std::invalid_argument("generate_sequence: invalid intrinsics");
  }
  for (const auto& occ : spec.occlusions) {
    if (occ.start_frame < 0 || occ.end_frame > spec.frame_count ||
        occ.start_frame >= occ.end_frame) {
      throw std::invalid_argument("generate_sequence: occlusion range outside sequence");
    }
  }

  Rng rng(spec.seed);
  GeneratedSequence seq;
  seq.intrinsics = spec.intrinsics;
  seq.frames.reserve(spec.frame_count);

  int empty_frames = 0;
  for (int t = 0; t < spec.frame_count; ++t) {
    // Forward path, optionally mirrored in the second half (loop protocol).
    double s;
    if (spec.forward_backward) {
      const int half = spec.frame_count / 2;
      const int step = t < half ? t : spec.frame_count - 1 - t;
      s = spec.start_arclength_cm + spec.speed_cm_per_frame * step;
    } else {
      s = spec.start_arclength_cm + spec.speed_cm_per_frame * t;
    }
    if (s > scene.arclength() - 3.0) {
      throw std::invalid_argument("generate_sequence: path runs off the tube");
    }

    PathFrame pf = scene.path_frame(s);
    if (spec.jitter_sigma_cm > 0.0) {
      const Vec3 jitter(rng.normal(0.0, spec.jitter_sigma_cm),
                        rng.normal(0.0, spec.jitter_sigma_cm),
                        rng.normal(0.0, spec.jitter_sigma_cm));
      pf.position += pf.orientation * jitter;
    }

    GeneratedFrame gf;
    gf.gt_pose = {pf.orientation, pf.position};
    gf.bundle.id = t;
    gf.bundle.intrinsics = spec.intrinsics;

    bool occluded = false;
    for (const auto& occ : spec.occlusions) {
      if (t >= occ.start_frame && t < occ.end_frame) {
        occluded = true;
        // A near wall fills the view: flat depth, dim texture, no features.
        gf.bundle.depth = DepthRaster(spec.intrinsics.width, spec.intrinsics.height,
                                      static_cast<float>(occ.wall_depth_cm));
        gf.bundle.image = ImageRaster(spec.intrinsics.width, spec.intrinsics.height, 0.18f);
        break;
      }
    }

    if (!occluded) {
      RaycastResult rc = raycast_depth(scene, gf.gt_pose, spec.intrinsics);
      auto visible = visible_keypoints(scene, gf.gt_pose, spec.intrinsics, rc.depth);

      if (spec.depth_noise_sigma_cm > 0.0) {
        for (auto& v : rc.depth.values) {
          if (v > 0.f) {
            v = static_cast<float>(
                std::max(0.05, v + rng.normal(0.0, spec.depth_noise_sigma_cm)));
          }
        }
      }

      for (const auto& vk : visible) {
        if (spec.landmark_dropout > 0.0 && rng.uniform() < spec.landmark_dropout) continue;
        // Keypoint depth comes from the (possibly degraded) raster, exactly
        // as ingestion would sample it.
        const auto d = sample_depth_bilinear(rc.depth, vk.uv.x(), vk.uv.y());
        if (!d || *d <= 0.0) continue;
        Keypoint kp;
        kp.uv = vk.uv;
        kp.depth = *d;
        kp.point3 = backproject(kp.uv, kp.depth, spec.intrinsics);
        Descriptor desc = scene.landmarks()[vk.landmark_id].signature;
        if (spec.descriptor_noise_sigma > 0.0) {
          for (auto& v : desc.v) {
            v += static_cast<float>(rng.normal(0.0, spec.descriptor_noise_sigma));
          }
          desc.normalize();
        }
        gf.bundle.keypoints.push_back(kp);
        gf.bundle.descriptors.push_back(desc);
        gf.landmark_ids.push_back(vk.landmark_id);
      }
      gf.bundle.image = std::move(rc.image);
      gf.bundle.depth = std::move(rc.depth);
    }

    if (gf.bundle.keypoints.empty()) ++empty_frames;
    seq.frames.push_back(std::move(gf));
  }

  if (2 * empty_frames > spec.frame_count) {
    throw std::invalid_argument("generate_sequence: no visible landmarks in most frames");
  }
  return seq;
}

std::vector<std::pair<int, int>> GeneratedSequence::gt_matches(int frame_a,
                                                               int frame_b) const {
  const auto& fa = frames.at(frame_a);
  const auto& fb = frames.at(frame_b);
  std::map<int, int> by_landmark;
  for (int i = 0; i < static_cast<int>(fa.landmark_ids.size()); ++i) {
    by_landmark[fa.landmark_ids[i]] = i;
  }
  std::vector<std::pair<int, int>> out;
  for (int j = 0; j < static_cast<int>(fb.landmark_ids.size()); ++j) {
    const auto it = by_landmark.find(fb.landmark_ids[j]);
    if (it != by_landmark.end()) out.emplace_back(it->second, j);
  }
  return out;
}

}  // namespace lumen
