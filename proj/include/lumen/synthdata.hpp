#pragma once

#include <cstdint>
#include <vector>

#include "lumen/frame.hpp"
#include "lumen/geometry.hpp"

// Procedural ground-truth generator: a raycastable tube with a known
// trajectory, depth, keypoints and descriptors, plus injectable
// degradations. Serves as the desk-scale oracle for the rest of the
// pipeline.

namespace lumen {

struct TubeSceneParams {
  double length_cm = 50.0;
  double base_radius_cm = 2.8;
  double bump_amplitude_cm = 0.25;
  double bump_period_cm = 2.6;
  double bend_amplitude_cm = 3.0;  // lateral excursion of the centerline
  int landmark_count = 26000;
  std::uint64_t seed = 7;
};

struct Landmark {
  Vec3 position = Vec3::Zero();  // world, on the tube surface
  Descriptor signature;          // unit norm, stable across frames
};

// Camera frame on the centerline: position plus a rotation-minimizing
// orientation (x right, y down, z forward along the tangent).
struct PathFrame {
  Vec3 position = Vec3::Zero();
  Mat3 orientation = Mat3::Identity();
};

class TubeScene {
 public:
  explicit TubeScene(const TubeSceneParams& params);

  // Signed implicit tube function: negative inside the lumen, zero on the
  // wall. `param_hint` (in/out, may be null) warm-starts the
  // nearest-centerline search for coherent query sequences.
  double implicit(const Vec3& x, double* param_hint = nullptr) const;

  // Surface albedo at a point near the wall.
  Vec3 albedo(const Vec3& x) const;

  double arclength() const { return total_length_; }
  const std::vector<Landmark>& landmarks() const { return landmarks_; }

  // Centerline pose at a given arclength (clamped to the valid range).
  PathFrame path_frame(double s) const;

  Vec3 centerline_at(double t) const;

 private:
  friend struct TubeSceneTestAccess;

  Vec3 centerline_deriv(double t) const;
  Vec3 centerline_second_deriv(double t) const;
  double radius_at_arclength(double s) const;
  double nearest_param(const Vec3& x, double* hint) const;
  double arclength_at_param(double t) const;
  double param_at_arclength(double s) const;
  void surface_coords(const Vec3& x, double* s, double* theta) const;

  std::vector<Vec3> control_points_;
  double total_length_ = 0.0;
  TubeSceneParams params_;

  struct Sample {
    Vec3 position;
    Vec3 tangent;
    Vec3 normal;  // rotation-minimizing
    double arclength;
    double param;
  };
  std::vector<Sample> lut_;
  std::vector<Landmark> landmarks_;
};

struct RaycastResult {
  DepthRaster depth;
  ImageRaster image;
};

// Per-pixel ray/wall intersection (sphere-trace plus bisection to 1e-4 cm)
// and shaded color. Throws std::invalid_argument when the camera origin is
// not inside the tube. `pose` maps camera coordinates to world.
RaycastResult raycast_depth(const TubeScene& scene, const RigidPose& pose,
                            const Intrinsics& k);

struct OcclusionEvent {
  int start_frame = 0;
  int end_frame = 0;  // exclusive
  double wall_depth_cm = 0.4;
};

struct SequenceSpec {
  int frame_count = 100;
  double start_arclength_cm = 4.0;
  double speed_cm_per_frame = 0.15;
  double jitter_sigma_cm = 0.0;
  Intrinsics intrinsics{90.0, 90.0, 31.5, 31.5, 64, 64};
  double descriptor_noise_sigma = 0.0;
  double depth_noise_sigma_cm = 0.0;
  double landmark_dropout = 0.0;
  bool forward_backward = false;  // retrace the path to create a loop
  std::vector<OcclusionEvent> occlusions;
  std::uint64_t seed = 1;
};

struct GeneratedFrame {
  FrameBundle bundle;
  RigidPose gt_pose;               // camera -> world
  std::vector<int> landmark_ids;   // per keypoint, aligned with bundle.keypoints
};

struct GeneratedSequence {
  Intrinsics intrinsics;
  std::vector<GeneratedFrame> frames;

  // Ground-truth matches for a frame pair: keypoint index pairs that
  // observe the same landmark.
  std::vector<std::pair<int, int>> gt_matches(int frame_a, int frame_b) const;
};

// Renders the full sequence with ground truth. Throws std::invalid_argument
// when the spec leaves more than half of the frames without any visible
// landmark.
GeneratedSequence generate_sequence(const TubeScene& scene, const SequenceSpec& spec);

}  // namespace lumen
