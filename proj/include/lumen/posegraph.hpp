#pragma once

#include <map>
#include <vector>

#include "lumen/fragments.hpp"
#include "lumen/geometry.hpp"

// Pose-graph construction and nonlinear optimization: minimizes the summed
// point-transfer inconsistency g(T_i, T_j, T_ij) = sum ||T_j^-1 T_i p - T_ij p||^2
// over all edges with a damped Gauss-Newton on the product of SE(3)
// manifolds, Huber-robustified, with residual-based edge pruning.

namespace lumen {

struct OptimizerConfig {
  int max_iterations = 50;
  double convergence_tol = 1e-8;       // relative cost decrease
  double damping_init = 1e-4;
  double prune_residual_factor = 3.0;  // x median edge mean residual
  int prune_rounds = 2;
  double huber_delta_cm = 0.1;
};

struct PoseVertex {
  int id = -1;
  RigidPose pose;  // vertex camera -> reference frame
};

struct PoseEdge {
  int i = -1;
  int j = -1;
  RigidPose t_ij;              // measured i-camera -> j-camera
  std::vector<Vec3> points_i;  // correspondence points in i coordinates
  bool pruned = false;
  double mean_residual = 0.0;  // per-point residual norm after optimization
};

class PoseGraph {
 public:
  void add_vertex(int id, const RigidPose& initial);
  // Throws std::invalid_argument on unknown endpoints or empty point sets.
  void add_edge(PoseEdge edge);
  void set_fixed(int id);

  const RigidPose& pose(int id) const;
  void set_pose(int id, const RigidPose& pose);
  int fixed_vertex() const { return fixed_; }
  const std::vector<PoseVertex>& vertices() const { return vertices_; }
  const std::vector<PoseEdge>& edges() const { return edges_; }
  std::vector<PoseEdge>& mutable_edges() { return edges_; }

  // Vertices unreachable from the fixed vertex via non-pruned edges.
  std::vector<int> unreachable() const;

 private:
  std::vector<PoseVertex> vertices_;
  std::vector<PoseEdge> edges_;
  std::map<int, int> index_;
  int fixed_ = -1;

  friend struct PoseGraphSolver;
};

// Eq-style inconsistency of one edge: sum of squared point-transfer errors.
double edge_inconsistency(const RigidPose& t_i, const RigidPose& t_j,
                          const RigidPose& t_ij, const std::vector<Vec3>& points_i);

// Robustified total cost of all non-pruned edges at the current poses.
double total_cost(const PoseGraph& graph, const OptimizerConfig& cfg);

// Analytic Jacobians of the per-point residual r = T_j^-1 T_i p - T_ij p
// with respect to left-multiplicative twists on T_i and T_j (translation
// part first). J_j = -J_i.
void edge_jacobians(const RigidPose& t_i, const RigidPose& t_j, const Vec3& p,
                    Eigen::Matrix<double, 3, 6>* j_i, Eigen::Matrix<double, 3, 6>* j_j);

struct OptimizeResult {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;          // at exit
  std::vector<double> cost_history;    // accepted costs, nonincreasing
  std::vector<int> unreachable;        // reported, not optimized
};

// Damped Gauss-Newton over the non-fixed, reachable vertices. The fixed
// vertex never moves; accepted steps never increase the robust cost.
OptimizeResult optimize(PoseGraph& graph, const OptimizerConfig& cfg);

struct PruneReport {
  int removed = 0;
  std::vector<int> retained_bridges;  // edge indices kept to preserve connectivity
};

// One pruning round: drops edges whose mean per-point residual exceeds
// prune_residual_factor x median, unless removal would disconnect the
// fixed-vertex component. Requires residuals from a prior optimize().
PruneReport prune_edges(PoseGraph& graph, const OptimizerConfig& cfg);

// optimize, then alternate pruning rounds and re-optimization.
OptimizeResult optimize_with_pruning(PoseGraph& graph, const OptimizerConfig& cfg,
                                     int* total_pruned = nullptr);

struct HierarchicalResult {
  std::map<int, RigidPose> global_poses;  // frame -> world, root component only
  std::vector<int> excluded_frames;       // members of unreachable fragments
  double inter_cost = 0.0;
  int pruned_edges = 0;
};

// Two-stage optimization: per-fragment registration against the keyframe
// (keyframe fixed), then keyframes against each other (first keyframe
// fixed). Final frame pose = inter keyframe pose composed with the intra
// local pose.
HierarchicalResult hierarchical_optimize(const FragmentTracker& tracker,
                                         const OptimizerConfig& cfg);

}  // namespace lumen
