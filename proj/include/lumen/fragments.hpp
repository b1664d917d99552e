#pragma once

#include <map>
#include <memory>
#include <ostream>
#include <vector>

#include "lumen/matching.hpp"

// Online fragment construction, keyframe bookkeeping and the connectivity
// graph used for tracking-loss detection and recovery.

namespace lumen {

struct FragmentConfig {
  int min_consecutive_corrs = 100;
  double min_frustum_overlap = 0.85;
  int frustum_stride = 4;        // px
  double depth_agreement = 0.1;  // relative gate for covisibility
};

// A run of consecutive frames anchored by its first frame (the keyframe).
struct Fragment {
  int id = -1;
  int keyframe = -1;
  std::vector<int> members;
  std::map<int, RigidPose> local_poses;  // member camera -> keyframe camera
  bool active = false;
};

struct GraphEdge {
  int kf_a = -1;
  int kf_b = -1;
  CorrespondenceSet correspondences;  // transform maps a-camera -> b-camera
};

// Keyframe nodes plus validated keyframe-pair transforms. Keyframes without
// any edge are the candidate set (lost tracking); they are retained and can
// reconnect later. Edges are never removed.
class ConnectivityGraph {
 public:
  void add_keyframe(int kf);
  void add_edge(GraphEdge edge);

  const std::vector<int>& keyframes() const { return keyframes_; }
  const std::vector<GraphEdge>& edges() const { return edges_; }

  std::vector<int> candidates() const;
  bool has_edges(int kf) const;

  // Connected components over keyframes with at least one edge.
  std::vector<std::vector<int>> components() const;

  // Component containing the first keyframe (the global origin); a
  // singleton when the root has no edges yet.
  std::vector<int> root_component() const;

  // One "kf_a kf_b" pair per line.
  void write_edge_list(std::ostream& os) const;

 private:
  std::vector<int> keyframes_;
  std::vector<GraphEdge> edges_;
};

// Fraction of the frame's valid depth pixels (sampled at the configured
// stride) that land inside the keyframe's view with positive depth and
// agree with the keyframe's depth within the relative gate. Throws
// std::invalid_argument when the frame has no valid depth sample.
double frustum_overlap(const FrameBundle& frame, const FrameBundle& keyframe,
                       const RigidPose& frame_to_keyframe, const FragmentConfig& cfg);

enum class FragmentDecision { kAppend, kNewFragment };

// New fragment iff the consecutive correspondence count drops below the
// minimum or the frustum overlap with the active keyframe drops below the
// minimum.
FragmentDecision should_create_fragment(int consecutive_corrs, double overlap,
                                        const FragmentConfig& cfg);

using FramePtr = std::shared_ptr<const FrameBundle>;

struct KeyframeRegistration {
  int edges_added = 0;
  bool lone = false;
};

// Attempts validated transforms against every prior keyframe (candidates
// included) and adds each valid edge. A keyframe with no valid edge joins
// the candidate set.
KeyframeRegistration register_keyframe(const FrameBundle& new_kf,
                                       const std::vector<FramePtr>& prior_keyframes,
                                       ConnectivityGraph& graph,
                                       const FilterConfig& filter_cfg);

// Sequential coordinator: feeds frames in order, maintains the single
// active fragment, chains local odometry, closes fragments and registers
// keyframes against the connectivity graph.
class FragmentTracker {
 public:
  FragmentTracker(FragmentConfig frag_cfg, FilterConfig filter_cfg);

  struct StepResult {
    FragmentDecision decision = FragmentDecision::kNewFragment;
    int fragment_id = 0;
    int consecutive_corrs = 0;
    double overlap = 0.0;
    bool tracked = false;  // consecutive transform validated
  };

  StepResult add_frame(FramePtr frame);

  // Closes the active fragment; call once after the last frame.
  void finalize();

  const std::vector<Fragment>& fragments() const { return fragments_; }
  const ConnectivityGraph& graph() const { return graph_; }
  const std::vector<CorrespondenceSet>& intra_edges(int fragment_id) const;
  FramePtr frame(int frame_id) const;
  const std::vector<FramePtr>& keyframe_bundles() const { return keyframe_bundles_; }
  int fragment_of(int frame_id) const;

 private:
  void close_active_fragment();

  FragmentConfig frag_cfg_;
  FilterConfig filter_cfg_;
  std::vector<Fragment> fragments_;
  std::vector<std::vector<CorrespondenceSet>> intra_edges_;
  std::vector<CorrespondenceSet> pending_consecutive_;  // within active fragment
  ConnectivityGraph graph_;
  std::vector<FramePtr> frames_;
  std::vector<FramePtr> keyframe_bundles_;
  std::map<int, int> fragment_by_frame_;
  FramePtr prev_frame_;
};

}  // namespace lumen
