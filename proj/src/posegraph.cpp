#include "lumen/posegraph.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "lumen/losses.hpp"

namespace lumen {

void PoseGraph::add_vertex(int id, const RigidPose& initial) {
  if (index_.count(id)) throw std::invalid_argument("PoseGraph: duplicate vertex id");
  index_[id] = static_cast<int>(vertices_.size());
  vertices_.push_back({id, initial});
  if (fixed_ < 0) fixed_ = id;
}

void PoseGraph::add_edge(PoseEdge edge) {
  if (!index_.count(edge.i) || !index_.count(edge.j)) {
    throw std::invalid_argument("PoseGraph: edge endpoint not a vertex");
  }
  if (edge.points_i.empty()) {
    throw std::invalid_argument("PoseGraph: edge carries no correspondence points");
  }
  edges_.push_back(std::move(edge));
}

void PoseGraph::set_fixed(int id) {
  if (!index_.count(id)) throw std::invalid_argument("PoseGraph: unknown fixed vertex");
  fixed_ = id;
}

const RigidPose& PoseGraph::pose(int id) const { return vertices_[index_.at(id)].pose; }

void PoseGraph::set_pose(int id, const RigidPose& pose) {
  vertices_[index_.at(id)].pose = pose;
}

std::vector<int> PoseGraph::unreachable() const {
  std::map<int, bool> reached;
  for (const auto& v : vertices_) reached[v.id] = false;
  if (fixed_ < 0) return {};
  std::deque<int> queue{fixed_};
  reached[fixed_] = true;
  while (!queue.empty()) {
    const int cur = queue.front();
    queue.pop_front();
    for (const auto& e : edges_) {
      if (e.pruned) continue;
      int other = -1;
      if (e.i == cur) other = e.j;
      if (e.j == cur) other = e.i;
      if (other >= 0 && !reached[other]) {
        reached[other] = true;
        queue.push_back(other);
      }
    }
  }
  std::vector<int> out;
  for (const auto& [id, ok] : reached) {
    if (!ok) out.push_back(id);
  }
  return out;
}

double edge_inconsistency(const RigidPose& t_i, const RigidPose& t_j,
                          const RigidPose& t_ij, const std::vector<Vec3>& points_i) {
  if (points_i.empty()) {
    throw std::invalid_argument("edge_inconsistency: empty point set");
  }
  const RigidPose rel = compose(t_j.inverse(), t_i);
  double acc = 0.0;
  for (const auto& p : points_i) {
    acc += (rel.apply(p) - t_ij.apply(p)).squaredNorm();
  }
  return acc;
}

namespace {

inline double huber_cost(double e, double delta) {
  return e <= delta ? e * e : delta * (2.0 * e - delta);
}

inline double huber_weight(double e, double delta) {
  return e <= delta ? 1.0 : delta / e;
}

}  // namespace

double total_cost(const PoseGraph& graph, const OptimizerConfig& cfg) {
  double acc = 0.0;
  for (const auto& e : graph.edges()) {
    if (e.pruned) continue;
    const RigidPose rel = compose(graph.pose(e.j).inverse(), graph.pose(e.i));
    for (const auto& p : e.points_i) {
      const double norm = (rel.apply(p) - e.t_ij.apply(p)).norm();
      acc += huber_cost(norm, cfg.huber_delta_cm);
    }
  }
  return acc;
}

namespace {

// Robustified normal equations over the free vertices.
void assemble_normal_equations(const PoseGraph& graph, const OptimizerConfig& cfg,
                               const std::map<int, int>& param_of,
                               const std::map<int, bool>& excluded, Eigen::MatrixXd* h,
                               Eigen::VectorXd* b) {
  for (const auto& e : graph.edges()) {
    if (e.pruned) continue;
    const bool free_i = param_of.count(e.i) > 0;
    const bool free_j = param_of.count(e.j) > 0;
    if (!free_i && !free_j) continue;
    if (excluded.count(e.i) || excluded.count(e.j)) continue;
    const RigidPose& ti = graph.pose(e.i);
    const RigidPose& tj = graph.pose(e.j);
    const RigidPose rel = compose(tj.inverse(), ti);

    Eigen::Matrix<double, 3, 6> ji, jj;
    for (const auto& p : e.points_i) {
      const Vec3 r = rel.apply(p) - e.t_ij.apply(p);
      const double norm = r.norm();
      const double w = huber_weight(norm, cfg.huber_delta_cm);
      edge_jacobians(ti, tj, p, &ji, &jj);

      if (free_i) {
        const int a = param_of.at(e.i);
        if (h) h->block<6, 6>(a, a) += w * ji.transpose() * ji;
        b->segment<6>(a) += w * ji.transpose() * r;
      }
      if (free_j) {
        const int c = param_of.at(e.j);
        if (h) h->block<6, 6>(c, c) += w * jj.transpose() * jj;
        b->segment<6>(c) += w * jj.transpose() * r;
      }
      if (free_i && free_j && h) {
        const int a = param_of.at(e.i);
        const int c = param_of.at(e.j);
        const Eigen::Matrix<double, 6, 6> cross = w * ji.transpose() * jj;
        h->block<6, 6>(a, c) += cross;
        h->block<6, 6>(c, a) += cross.transpose();
      }
    }
  }
}

}  // namespace

void edge_jacobians(const RigidPose& t_i, const RigidPose& t_j, const Vec3& p,
                    Eigen::Matrix<double, 3, 6>* j_i, Eigen::Matrix<double, 3, 6>* j_j) {
  const Vec3 y = t_i.apply(p);  // point in the reference frame
  const Mat3 rjt = t_j.rotation.transpose();
  j_i->leftCols<3>() = rjt;
  j_i->rightCols<3>() = -rjt * skew(y);
  *j_j = -*j_i;
}

OptimizeResult optimize(PoseGraph& graph, const OptimizerConfig& cfg) {
  OptimizeResult res;
  res.unreachable = graph.unreachable();

  std::map<int, bool> excluded;
  for (int id : res.unreachable) excluded[id] = true;

  // Parameter layout: 6 dof per free (non-fixed, reachable) vertex.
  std::map<int, int> param_of;
  int params = 0;
  for (const auto& v : graph.vertices()) {
    if (v.id == graph.fixed_vertex() || excluded.count(v.id)) continue;
    param_of[v.id] = params;
    params += 6;
  }

  res.initial_cost = total_cost(graph, cfg);
  res.cost_history.push_back(res.initial_cost);
  res.final_cost = res.initial_cost;
  if (params == 0) {
    res.converged = true;
    return res;
  }

  double lambda = cfg.damping_init;
  double cost = res.initial_cost;

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(params, params);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(params);
    assemble_normal_equations(graph, cfg, param_of, excluded, &h, &b);

    res.gradient_norm = b.norm();
    if (res.gradient_norm < 1e-14) {
      res.converged = true;
      break;
    }

    bool accepted = false;
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::MatrixXd damped = h;
      for (int d = 0; d < params; ++d) {
        damped(d, d) += lambda * std::max(h(d, d), 1e-12);
      }
      const Eigen::VectorXd delta = damped.ldlt().solve(-b);
      if (!delta.allFinite()) {
        lambda *= 10.0;
        continue;
      }

      // Trial update: left-multiplicative retraction.
      std::map<int, RigidPose> saved;
      for (const auto& [id, off] : param_of) {
        saved[id] = graph.pose(id);
        graph.set_pose(id, compose(se3_exp(delta.segment<6>(off)), graph.pose(id)));
      }
      const double trial_cost = total_cost(graph, cfg);
      if (trial_cost < cost) {
        cost = trial_cost;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        break;
      }
      for (const auto& [id, pose] : saved) graph.set_pose(id, pose);
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }

    ++res.iterations;
    if (!accepted) {
      res.converged = true;  // no descent direction left at any damping
      break;
    }
    res.cost_history.push_back(cost);
    const double prev = res.cost_history[res.cost_history.size() - 2];
    if (prev - cost <= cfg.convergence_tol * std::max(prev, 1e-300)) {
      res.converged = true;
      break;
    }
  }

  res.final_cost = cost;
  {
    // Gradient at the exit poses (the in-loop value predates the last step).
    Eigen::VectorXd b = Eigen::VectorXd::Zero(params);
    assemble_normal_equations(graph, cfg, param_of, excluded, nullptr, &b);
    res.gradient_norm = b.norm();
  }

  // Store mean residuals for the pruning stage.
  for (auto& e : graph.mutable_edges()) {
    if (e.pruned) continue;
    const RigidPose rel = compose(graph.pose(e.j).inverse(), graph.pose(e.i));
    double acc = 0.0;
    for (const auto& p : e.points_i) acc += (rel.apply(p) - e.t_ij.apply(p)).norm();
    e.mean_residual = acc / static_cast<double>(e.points_i.size());
  }
  return res;
}

PruneReport prune_edges(PoseGraph& graph, const OptimizerConfig& cfg) {
  PruneReport report;
  std::vector<double> residuals;
  for (const auto& e : graph.edges()) {
    if (!e.pruned) residuals.push_back(e.mean_residual);
  }
  if (residuals.empty()) return report;
  const double median = percentile(residuals, 50.0);
  const double threshold = cfg.prune_residual_factor * median;

  // Worst offenders first, deterministic tie-break by index.
  std::vector<size_t> order;
  auto& edges = graph.mutable_edges();
  for (size_t idx = 0; idx < edges.size(); ++idx) {
    if (!edges[idx].pruned && edges[idx].mean_residual > threshold) order.push_back(idx);
  }
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (edges[a].mean_residual != edges[b].mean_residual) {
      return edges[a].mean_residual > edges[b].mean_residual;
    }
    return a < b;
  });

  const size_t reachable_before = graph.vertices().size() - graph.unreachable().size();
  for (size_t idx : order) {
    edges[idx].pruned = true;
    const size_t reachable_after = graph.vertices().size() - graph.unreachable().size();
    if (reachable_after < reachable_before) {
      edges[idx].pruned = false;  // bridge: keep to preserve the component
      report.retained_bridges.push_back(static_cast<int>(idx));
    } else {
      ++report.removed;
    }
  }
  return report;
}

OptimizeResult optimize_with_pruning(PoseGraph& graph, const OptimizerConfig& cfg,
                                     int* total_pruned) {
  OptimizeResult res = optimize(graph, cfg);
  int pruned = 0;
  for (int round = 0; round < cfg.prune_rounds; ++round) {
    const PruneReport report = prune_edges(graph, cfg);
    pruned += report.removed;
    if (report.removed == 0) break;
    res = optimize(graph, cfg);
  }
  if (total_pruned) *total_pruned = pruned;
  return res;
}

namespace {

std::vector<Vec3> edge_points(const CorrespondenceSet& cs, const FrameBundle& frame_i) {
  std::vector<Vec3> pts;
  pts.reserve(cs.matches.size());
  for (const auto& m : cs.matches) pts.push_back(frame_i.keypoints.at(m.index_i).point3);
  return pts;
}

}  // namespace

HierarchicalResult hierarchical_optimize(const FragmentTracker& tracker,
                                         const OptimizerConfig& cfg) {
  HierarchicalResult result;
  const auto& fragments = tracker.fragments();
  if (fragments.empty()) return result;

  // Intra stage: refine each fragment's local poses, keyframe fixed.
  std::vector<std::map<int, RigidPose>> local(fragments.size());
  for (const auto& frag : fragments) {
    local[frag.id] = frag.local_poses;
    const auto& edges = tracker.intra_edges(frag.id);
    if (frag.members.size() < 2 || edges.empty()) continue;

    PoseGraph intra;
    for (int m : frag.members) intra.add_vertex(m, frag.local_poses.at(m));
    intra.set_fixed(frag.keyframe);
    for (const auto& cs : edges) {
      if (!cs.valid || !cs.transform) continue;
      intra.add_edge({cs.frame_i, cs.frame_j, *cs.transform,
                      edge_points(cs, *tracker.frame(cs.frame_i)), false, 0.0});
    }
    optimize_with_pruning(intra, cfg);
    for (int m : frag.members) local[frag.id][m] = intra.pose(m);
  }

  // Inter stage: keyframes only, first keyframe fixed as the global origin.
  const auto& graph = tracker.graph();
  PoseGraph inter;

  // Initial keyframe poses chained over a BFS spanning tree of the
  // connectivity edges.
  std::map<int, RigidPose> kf_pose;
  const int root = graph.keyframes().front();
  kf_pose[root] = RigidPose::identity();
  std::deque<int> queue{root};
  while (!queue.empty()) {
    const int cur = queue.front();
    queue.pop_front();
    for (const auto& e : graph.edges()) {
      if (e.kf_a == cur && !kf_pose.count(e.kf_b)) {
        kf_pose[e.kf_b] = compose(kf_pose[cur], e.correspondences.transform->inverse());
        queue.push_back(e.kf_b);
      } else if (e.kf_b == cur && !kf_pose.count(e.kf_a)) {
        kf_pose[e.kf_a] = compose(kf_pose[cur], *e.correspondences.transform);
        queue.push_back(e.kf_a);
      }
    }
  }

  for (int kf : graph.keyframes()) {
    if (kf_pose.count(kf)) inter.add_vertex(kf, kf_pose[kf]);
  }
  inter.set_fixed(root);
  for (const auto& e : graph.edges()) {
    if (!kf_pose.count(e.kf_a) || !kf_pose.count(e.kf_b)) continue;
    inter.add_edge({e.kf_a, e.kf_b, *e.correspondences.transform,
                    edge_points(e.correspondences, *tracker.frame(e.kf_a)), false, 0.0});
  }
  OptimizeResult inter_res = optimize_with_pruning(inter, cfg, &result.pruned_edges);
  result.inter_cost = inter_res.final_cost;

  // Compose global frame poses for fragments whose keyframe is placed.
  for (const auto& frag : fragments) {
    if (!kf_pose.count(frag.keyframe)) {
      result.excluded_frames.insert(result.excluded_frames.end(), frag.members.begin(),
                                    frag.members.end());
      continue;
    }
    const RigidPose kf_world = inter.pose(frag.keyframe);
    for (int m : frag.members) {
      result.global_poses[m] = compose(kf_world, local[frag.id].at(m));
    }
  }
  return result;
}

}  // namespace lumen
