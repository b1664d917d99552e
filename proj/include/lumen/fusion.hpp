#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <ostream>
#include <vector>

#include "lumen/geometry.hpp"

// Scalable TSDF integration over hashed 8^3 voxel blocks and triangle mesh
// extraction via marching cubes.

namespace lumen {

struct FusionConfig {
  double voxel_size_cm = 0.2;
  int truncation_voxels = 3;
  double weight_cap = 128.0;
};

// Withdrawal-based fusion gating: fuse once a fragment has not been seen
// for eps_f_na frames and the camera has moved eps_cf_d cm away.
struct FusionGate {
  double eps_f_na = 90.0;  // frames
  double eps_cf_d = 3.0;   // cm
};

struct Voxel {
  float tsdf = 0.f;  // normalized signed distance in [-1, 1]
  float weight = 0.f;
  std::array<float, 3> rgb{};
};

struct BlockIndex {
  int x = 0, y = 0, z = 0;
  auto operator<=>(const BlockIndex&) const = default;
};

class TsdfVolume {
 public:
  static constexpr int kBlockSize = 8;

  explicit TsdfVolume(const FusionConfig& cfg = {});

  double voxel_size() const { return cfg_.voxel_size_cm; }
  double truncation() const { return cfg_.voxel_size_cm * cfg_.truncation_voxels; }
  size_t allocated_blocks() const { return blocks_.size(); }
  bool empty() const { return blocks_.empty(); }

  // Sample position of a voxel lattice point, in cm.
  Vec3 voxel_position(const Eigen::Vector3i& idx) const {
    return Vec3(idx.x(), idx.y(), idx.z()) * cfg_.voxel_size_cm;
  }

  // Projective TSDF update from one depth/color frame. `cam_to_world`
  // localizes the frame; blocks are allocated only along the truncation
  // band of observed surface.
  void integrate_frame(const DepthRaster& depth, const ImageRaster& rgb,
                       const RigidPose& cam_to_world, const Intrinsics& k);

  // Direct voxel write, used to load analytic fields.
  void set_voxel(const Eigen::Vector3i& idx, float tsdf, float weight,
                 const std::array<float, 3>& rgb);

  // nullptr when the block was never allocated.
  const Voxel* voxel_at(const Eigen::Vector3i& idx) const;

  std::vector<BlockIndex> sorted_blocks() const;

 private:
  struct Block {
    std::array<Voxel, kBlockSize * kBlockSize * kBlockSize> voxels;
  };

  Voxel& voxel_ref(const Eigen::Vector3i& idx);

  FusionConfig cfg_;
  std::map<BlockIndex, Block> blocks_;
};

struct Mesh {
  std::vector<Vec3> vertices;  // cm
  std::vector<std::array<float, 3>> colors;
  std::vector<std::array<int, 3>> triangles;
};

// Marching cubes over all occupied blocks with cross-block stitching.
// Vertices sit at linearly interpolated zero crossings and are shared
// between adjacent triangles. Throws std::invalid_argument on a volume
// with no allocated blocks; a volume without sign changes yields an empty
// mesh.
Mesh extract_mesh(const TsdfVolume& volume);

struct FragmentFusionState {
  int fragment_id = -1;
  int last_seen_frame = 0;
  Vec3 keyframe_position = Vec3::Zero();
  bool fused = false;
};

// Fragments whose last observation is old enough and whose keyframe lies
// far enough from the current camera; each fragment is selected at most
// once (callers mark `fused`).
std::vector<int> fusion_scheduler(const std::vector<FragmentFusionState>& fragments,
                                  int current_frame, const Vec3& current_camera,
                                  const FusionGate& gate);

// ASCII PLY with per-vertex colors: x y z (float32), red green blue (uchar),
// faces as index triples.
void write_ply(const Mesh& mesh, std::ostream& os);

}  // namespace lumen
