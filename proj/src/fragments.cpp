#include "lumen/fragments.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

namespace lumen {

void ConnectivityGraph::add_keyframe(int kf) { keyframes_.push_back(kf); }

void ConnectivityGraph::add_edge(GraphEdge edge) { edges_.push_back(std::move(edge)); }

bool ConnectivityGraph::has_edges(int kf) const {
  for (const auto& e : edges_) {
    if (e.kf_a == kf || e.kf_b == kf) return true;
  }
  return false;
}

std::vector<int> ConnectivityGraph::candidates() const {
  std::vector<int> out;
  for (int kf : keyframes_) {
    if (!has_edges(kf)) out.push_back(kf);
  }
  return out;
}

namespace {

// Union-find over an id list.
struct DisjointSet {
  std::map<int, int> parent;
  int find(int x) {
    auto it = parent.find(x);
    if (it == parent.end()) {
      parent[x] = x;
      return x;
    }
    while (it->second != x) {
      x = it->second;
      it = parent.find(x);
    }
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

std::vector<std::vector<int>> ConnectivityGraph::components() const {
  DisjointSet ds;
  for (const auto& e : edges_) ds.unite(e.kf_a, e.kf_b);
  std::map<int, std::vector<int>> groups;
  for (int kf : keyframes_) {
    if (has_edges(kf)) groups[ds.find(kf)].push_back(kf);
  }
  std::vector<std::vector<int>> out;
  for (auto& [root, members] : groups) {
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  return out;
}

std::vector<int> ConnectivityGraph::root_component() const {
  if (keyframes_.empty()) return {};
  const int root = keyframes_.front();
  for (const auto& comp : components()) {
    if (std::find(comp.begin(), comp.end(), root) != comp.end()) return comp;
  }
  return {root};
}

void ConnectivityGraph::write_edge_list(std::ostream& os) const {
  for (const auto& e : edges_) os << e.kf_a << ' ' << e.kf_b << '\n';
}

double frustum_overlap(const FrameBundle& frame, const FrameBundle& keyframe,
                       const RigidPose& frame_to_keyframe, const FragmentConfig& cfg) {
  const Intrinsics& k = keyframe.intrinsics;
  int sampled = 0, covisible = 0;
  for (int y = 0; y < frame.depth.height; y += cfg.frustum_stride) {
    for (int x = 0; x < frame.depth.width; x += cfg.frustum_stride) {
      if (!frame.depth.is_valid(x, y)) continue;
      ++sampled;
      const Vec3 p = frame_to_keyframe.apply(
          backproject(Vec2(x, y), frame.depth.at(x, y), frame.intrinsics));
      const auto uv = project(p, k);
      if (!uv) continue;
      const auto d = sample_depth_bilinear(keyframe.depth, uv->x(), uv->y());
      if (!d) continue;
      if (std::abs(p.z() - *d) <= cfg.depth_agreement * (*d)) ++covisible;
    }
  }
  if (sampled == 0) {
    throw std::invalid_argument("frustum_overlap: frame has no valid depth samples");
  }
  return static_cast<double>(covisible) / sampled;
}

FragmentDecision should_create_fragment(int consecutive_corrs, double overlap,
                                        const FragmentConfig& cfg) {
  if (consecutive_corrs < cfg.min_consecutive_corrs) return FragmentDecision::kNewFragment;
  if (overlap < cfg.min_frustum_overlap) return FragmentDecision::kNewFragment;
  return FragmentDecision::kAppend;
}

KeyframeRegistration register_keyframe(const FrameBundle& new_kf,
                                       const std::vector<FramePtr>& prior_keyframes,
                                       ConnectivityGraph& graph,
                                       const FilterConfig& filter_cfg) {
  KeyframeRegistration reg;
  for (const auto& prior : prior_keyframes) {
    CorrespondenceSet cs = build_correspondences(*prior, new_kf, filter_cfg);
    if (!cs.valid) continue;
    graph.add_edge({prior->id, new_kf.id, std::move(cs)});
    ++reg.edges_added;
  }
  reg.lone = reg.edges_added == 0;
  return reg;
}

FragmentTracker::FragmentTracker(FragmentConfig frag_cfg, FilterConfig filter_cfg)
    : frag_cfg_(frag_cfg), filter_cfg_(filter_cfg) {}

const std::vector<CorrespondenceSet>& FragmentTracker::intra_edges(int fragment_id) const {
  return intra_edges_.at(fragment_id);
}

FramePtr FragmentTracker::frame(int frame_id) const { return frames_.at(frame_id); }

int FragmentTracker::fragment_of(int frame_id) const {
  return fragment_by_frame_.at(frame_id);
}

void FragmentTracker::close_active_fragment() {
  if (fragments_.empty()) return;
  Fragment& frag = fragments_.back();
  frag.active = false;

  // Intra edges: the consecutive chain plus short skip links and
  // keyframe-to-member links, deduplicated.
  std::vector<CorrespondenceSet> edges = std::move(pending_consecutive_);
  pending_consecutive_.clear();
  std::set<std::pair<int, int>> have;
  for (const auto& cs : edges) have.insert({cs.frame_i, cs.frame_j});

  std::vector<std::pair<int, int>> extra;
  for (size_t m = 0; m + 2 < frag.members.size(); ++m) {
    extra.emplace_back(frag.members[m], frag.members[m + 2]);
  }
  for (size_t m = 3; m < frag.members.size(); ++m) {
    extra.emplace_back(frag.keyframe, frag.members[m]);
  }
  for (const auto& [a, b] : extra) {
    if (have.count({a, b})) continue;
    CorrespondenceSet cs = build_correspondences(*frames_.at(a), *frames_.at(b), filter_cfg_);
    if (cs.valid) {
      have.insert({a, b});
      edges.push_back(std::move(cs));
    }
  }
  intra_edges_[frag.id] = std::move(edges);
}

FragmentTracker::StepResult FragmentTracker::add_frame(FramePtr frame) {
  if (!frame || frame->id != static_cast<int>(frames_.size())) {
    throw std::invalid_argument("FragmentTracker: frames must arrive in id order");
  }
  frames_.push_back(frame);

  StepResult res;
  bool start_new = fragments_.empty();
  RigidPose local_pose;  // frame camera -> keyframe camera
  CorrespondenceSet consec;

  if (!start_new) {
    consec = build_correspondences(*prev_frame_, *frame, filter_cfg_);
    res.consecutive_corrs = static_cast<int>(consec.matches.size());
    res.tracked = consec.valid;

    if (consec.valid) {
      const Fragment& frag = fragments_.back();
      const RigidPose prev_local = frag.local_poses.at(prev_frame_->id);
      // transform maps prev -> frame coords; local pose chains the inverse.
      local_pose = compose(prev_local, consec.transform->inverse());
      try {
        res.overlap = frustum_overlap(*frame, *keyframe_bundles_[frag.id], local_pose,
                                      frag_cfg_);
      } catch (const std::invalid_argument&) {
        res.overlap = 0.0;
      }
      res.decision = should_create_fragment(res.consecutive_corrs, res.overlap, frag_cfg_);
      start_new = res.decision == FragmentDecision::kNewFragment;
    } else {
      // No validated consecutive transform: tracking broke, open a fragment.
      res.decision = FragmentDecision::kNewFragment;
      start_new = true;
    }
  }

  if (start_new) {
    close_active_fragment();
    Fragment frag;
    frag.id = static_cast<int>(fragments_.size());
    frag.keyframe = frame->id;
    frag.members = {frame->id};
    frag.local_poses[frame->id] = RigidPose::identity();
    frag.active = true;
    fragments_.push_back(frag);
    intra_edges_.emplace_back();
    res.decision = FragmentDecision::kNewFragment;
    res.fragment_id = frag.id;

    graph_.add_keyframe(frame->id);
    register_keyframe(*frame, keyframe_bundles_, graph_, filter_cfg_);
    keyframe_bundles_.push_back(frame);
  } else {
    Fragment& frag = fragments_.back();
    frag.members.push_back(frame->id);
    frag.local_poses[frame->id] = local_pose;
    if (consec.valid) pending_consecutive_.push_back(std::move(consec));
    res.fragment_id = frag.id;
  }

  fragment_by_frame_[frame->id] = res.fragment_id;
  prev_frame_ = std::move(frame);
  return res;
}

void FragmentTracker::finalize() { close_active_fragment(); }

}  // namespace lumen
