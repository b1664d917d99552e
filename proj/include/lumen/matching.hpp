#pragma once

#include <optional>
#include <vector>

#include "lumen/frame.hpp"
#include "lumen/geometry.hpp"

// Descriptor matching, outlier filtering and validated rigid transform
// estimation between frame pairs.

namespace lumen {

struct FilterConfig {
  int min_matches = 10;
  double max_residual_cm = 0.02;
  double cond_threshold = 100.0;         // eps_cn
  double kpf_distance_tol_cm = 0.5;
  double min_span_area_fraction = 0.01;
  double similarity_floor = 0.5;
};

struct Match {
  int index_i = -1;
  int index_j = -1;
  double similarity = 0.0;
};

// Filtered 3D-3D matches between a frame pair plus the estimated relative
// transform (camera_i -> camera_j coordinates) when one could be validated.
struct CorrespondenceSet {
  int frame_i = -1;
  int frame_j = -1;
  std::vector<Match> matches;
  std::optional<RigidPose> transform;
  bool valid = false;
};

// Mutual-nearest-neighbor pairs under cosine similarity, bounded below by
// the similarity floor. Each keypoint appears at most once.
std::vector<Match> match_descriptors(const FrameBundle& frame_i, const FrameBundle& frame_j,
                                     const FilterConfig& cfg);

// Greedy pairwise-rigidity pruning: repeatedly drop the match violating the
// most pairwise distance-preservation constraints until none remain.
std::vector<Match> keypoint_correspondence_filter(const std::vector<Match>& matches,
                                                  const FrameBundle& frame_i,
                                                  const FrameBundle& frame_j,
                                                  const FilterConfig& cfg);

// Rejects pairs whose matched points span too little area to constrain a
// rigid transform. Points of each frame are projected onto their two
// principal axes; the spanned bounding area must reach
// min_span_area_fraction of the metric image footprint at the matches'
// median depth, in both frames.
bool surface_area_filter(const std::vector<Match>& matches, const FrameBundle& frame_i,
                         const FrameBundle& frame_j, const FilterConfig& cfg);

// Least-squares rotation + translation minimizing sum ||T p_i - p_j||^2
// (SVD of the cross-covariance with reflection fix). Throws
// std::invalid_argument on fewer than 3 matches or a degenerate
// configuration (covariance rank < 2).
RigidPose estimate_rigid(const std::vector<Vec3>& points_i, const std::vector<Vec3>& points_j);

struct TransformDiagnostics {
  int inlier_count = 0;
  double condition_number = 0.0;
  bool area_ok = false;
  std::vector<bool> inlier_flags;
};

// Validity per the filter chain: enough inliers under the residual bound,
// well-conditioned inlier spread, and the surface-area filter passing.
TransformDiagnostics validate_transform(CorrespondenceSet& cs, const FrameBundle& frame_i,
                                        const FrameBundle& frame_j, const FilterConfig& cfg);

// Full chain: match, kpf, estimate, validate. Always returns the set;
// `valid` and `transform` are populated on success.
CorrespondenceSet build_correspondences(const FrameBundle& frame_i, const FrameBundle& frame_j,
                                        const FilterConfig& cfg);

}  // namespace lumen
