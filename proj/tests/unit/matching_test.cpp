#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <set>

#include "lumen/matching.hpp"
#include "lumen/rng.hpp"

using namespace lumen;

namespace {

Descriptor unit_descriptor(Rng& rng) {
  Descriptor d;
  for (auto& v : d.v) v = static_cast<float>(rng.normal());
  d.normalize();
  return d;
}

Descriptor axis_descriptor(int axis) {
  Descriptor d;
  d.v[axis % kDescriptorDim] = 1.f;
  return d;
}

Intrinsics test_intrinsics() { return {100.0, 100.0, 32.0, 32.0, 64, 64}; }

RigidPose random_pose(Rng& rng, double angle_scale = 0.5, double t_scale = 2.0) {
  const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
  RigidPose p;
  p.rotation = Eigen::AngleAxisd(rng.uniform(-angle_scale, angle_scale), axis)
                   .toRotationMatrix();
  p.translation = Vec3(rng.normal(), rng.normal(), rng.normal()) * t_scale;
  return p;
}

// Builds a frame whose keypoints sit at the given camera-space points.
FrameBundle frame_with_points(const std::vector<Vec3>& points,
                              const std::vector<Descriptor>& descs, int id = 0) {
  FrameBundle f;
  f.id = id;
  f.intrinsics = test_intrinsics();
  for (size_t i = 0; i < points.size(); ++i) {
    Keypoint kp;
    kp.point3 = points[i];
    kp.depth = points[i].z();
    kp.uv = Vec2(f.intrinsics.fx * points[i].x() / points[i].z() + f.intrinsics.cx,
                 f.intrinsics.fy * points[i].y() / points[i].z() + f.intrinsics.cy);
    f.keypoints.push_back(kp);
    f.descriptors.push_back(descs[i]);
  }
  return f;
}

// Well-spread points in front of the camera.
std::vector<Vec3> random_cloud(Rng& rng, int n, double depth = 8.0, double spread = 2.0) {
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) {
    pts.emplace_back(rng.uniform(-spread, spread), rng.uniform(-spread, spread),
                     depth + rng.uniform(-spread, spread));
  }
  return pts;
}

std::vector<Vec3> transform_points(const std::vector<Vec3>& pts, const RigidPose& t) {
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(t.apply(p));
  return out;
}

}  // namespace

TEST_CASE("identical descriptor sets match one-to-one with similarity 1") {
  Rng rng(71);
  std::vector<Descriptor> descs;
  for (int i = 0; i < 25; ++i) descs.push_back(unit_descriptor(rng));
  const auto pts = random_cloud(rng, 25);
  const FrameBundle a = frame_with_points(pts, descs, 0);
  const FrameBundle b = frame_with_points(pts, descs, 1);

  const auto matches = match_descriptors(a, b, FilterConfig{});
  REQUIRE(matches.size() == 25);
  std::set<int> seen_i, seen_j;
  for (const auto& m : matches) {
    CHECK(m.index_i == m.index_j);
    CHECK(m.similarity == doctest::Approx(1.0).epsilon(1e-6));
    seen_i.insert(m.index_i);
    seen_j.insert(m.index_j);
  }
  CHECK(seen_i.size() == 25);  // each keypoint at most once
  CHECK(seen_j.size() == 25);
}

TEST_CASE("orthogonal descriptors produce no matches") {
  Rng rng(73);
  std::vector<Descriptor> da, db;
  for (int i = 0; i < 10; ++i) {
    da.push_back(axis_descriptor(i));
    db.push_back(axis_descriptor(i + 10));  // disjoint axes: similarity 0
  }
  const auto pts = random_cloud(rng, 10);
  const FrameBundle a = frame_with_points(pts, da, 0);
  const FrameBundle b = frame_with_points(pts, db, 1);
  CHECK(match_descriptors(a, b, FilterConfig{}).empty());
}

TEST_CASE("kpf keeps rigid-consistent matches untouched") {
  Rng rng(79);
  const auto pts_i = random_cloud(rng, 20);
  const RigidPose t = random_pose(rng);
  const auto pts_j = transform_points(pts_i, t);
  std::vector<Descriptor> descs;
  for (int i = 0; i < 20; ++i) descs.push_back(unit_descriptor(rng));
  const FrameBundle a = frame_with_points(pts_i, descs, 0);
  const FrameBundle b = frame_with_points(pts_j, descs, 1);

  std::vector<Match> matches;
  for (int i = 0; i < 20; ++i) matches.push_back({i, i, 1.0});
  const auto kept = keypoint_correspondence_filter(matches, a, b, FilterConfig{});
  CHECK(kept.size() == 20);

  // Idempotence.
  const auto again = keypoint_correspondence_filter(kept, a, b, FilterConfig{});
  CHECK(again.size() == kept.size());
}

TEST_CASE("kpf removes exactly a planted wrong match") {
  Rng rng(83);
  auto pts_i = random_cloud(rng, 21);
  const RigidPose t = random_pose(rng);
  auto pts_j = transform_points(pts_i, t);
  // Corrupt one correspondence on the j side.
  pts_j[7] += Vec3(3.0, -2.0, 1.5);

  std::vector<Descriptor> descs;
  for (int i = 0; i < 21; ++i) descs.push_back(unit_descriptor(rng));
  const FrameBundle a = frame_with_points(pts_i, descs, 0);
  const FrameBundle b = frame_with_points(pts_j, descs, 1);

  std::vector<Match> matches;
  for (int i = 0; i < 21; ++i) matches.push_back({i, i, 1.0});
  const auto kept = keypoint_correspondence_filter(matches, a, b, FilterConfig{});
  REQUIRE(kept.size() == 20);
  for (const auto& m : kept) CHECK(m.index_i != 7);
}

TEST_CASE("kpf keeps the larger of two mutually consistent cliques") {
  Rng rng(89);
  const int big = 15, small = 3, n = big + small;
  auto pts_i = random_cloud(rng, n);
  const RigidPose t1 = random_pose(rng);
  RigidPose t2 = random_pose(rng);
  t2.translation += Vec3(5, 5, 5);  // clearly different motion

  std::vector<Vec3> pts_j(n);
  for (int i = 0; i < n; ++i) {
    pts_j[i] = (i < big ? t1 : t2).apply(pts_i[i]);
  }
  std::vector<Descriptor> descs;
  for (int i = 0; i < n; ++i) descs.push_back(unit_descriptor(rng));
  const FrameBundle a = frame_with_points(pts_i, descs, 0);
  const FrameBundle b = frame_with_points(pts_j, descs, 1);

  std::vector<Match> matches;
  for (int i = 0; i < n; ++i) matches.push_back({i, i, 1.0});
  const FilterConfig cfg;
  const auto kept = keypoint_correspondence_filter(matches, a, b, cfg);

  // Brute-force max consistent subset over all 2^18 candidate subsets.
  const auto consistent = [&](const std::vector<int>& idx) {
    for (size_t x = 0; x < idx.size(); ++x) {
      for (size_t y = x + 1; y < idx.size(); ++y) {
        const double di = (pts_i[idx[x]] - pts_i[idx[y]]).norm();
        const double dj = (pts_j[idx[x]] - pts_j[idx[y]]).norm();
        if (std::abs(di - dj) > cfg.kpf_distance_tol_cm) return false;
      }
    }
    return true;
  };
  size_t best_size = 0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) idx.push_back(i);
    }
    if (idx.size() > best_size && consistent(idx)) best_size = idx.size();
  }

  CHECK(kept.size() == best_size);
  CHECK(kept.size() == static_cast<size_t>(big));
  for (const auto& m : kept) CHECK(m.index_i < big);

  // Never grows, and the survivors are themselves consistent.
  CHECK(kept.size() <= matches.size());
  std::vector<int> kept_idx;
  for (const auto& m : kept) kept_idx.push_back(m.index_i);
  CHECK(consistent(kept_idx));
}

TEST_CASE("surface area filter") {
  Rng rng(97);
  const FilterConfig cfg;  // 1% span fraction

  SUBCASE("well-spread matches pass") {
    // Points covering most of the view at depth ~10.
    std::vector<Vec3> pts;
    std::vector<Descriptor> descs;
    for (int i = 0; i < 24; ++i) {
      pts.emplace_back(rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5),
                       rng.uniform(8.0, 12.0));
      descs.push_back(unit_descriptor(rng));
    }
    const FrameBundle a = frame_with_points(pts, descs, 0);
    const FrameBundle b = frame_with_points(pts, descs, 1);
    std::vector<Match> matches;
    for (int i = 0; i < 24; ++i) matches.push_back({i, i, 1.0});
    CHECK(surface_area_filter(matches, a, b, cfg));
  }

  SUBCASE("collinear matches fail") {
    std::vector<Vec3> pts;
    std::vector<Descriptor> descs;
    for (int i = 0; i < 12; ++i) {
      pts.emplace_back(0.3 * i, 0.1 * i, 10.0 + 0.2 * i);  // a 3D line
      descs.push_back(unit_descriptor(rng));
    }
    const FrameBundle a = frame_with_points(pts, descs, 0);
    const FrameBundle b = frame_with_points(pts, descs, 1);
    std::vector<Match> matches;
    for (int i = 0; i < 12; ++i) matches.push_back({i, i, 1.0});
    CHECK(!surface_area_filter(matches, a, b, cfg));
  }

  SUBCASE("a cluster covering half the threshold fails") {
    // Footprint at z=10 with fx=fy=100, 64px: (0.64*10)^2 = 40.96 cm^2;
    // the 1% gate needs 0.4096 cm^2. Build a flat cluster of ~0.205 cm^2.
    std::vector<Vec3> pts;
    std::vector<Descriptor> descs;
    for (int i = 0; i < 16; ++i) {
      const double u = (i % 4) / 3.0, v = (i / 4) / 3.0;
      pts.emplace_back(0.64 * u, 0.32 * v, 10.0);
      descs.push_back(unit_descriptor(rng));
    }
    const FrameBundle a = frame_with_points(pts, descs, 0);
    const FrameBundle b = frame_with_points(pts, descs, 1);
    std::vector<Match> matches;
    for (int i = 0; i < 16; ++i) matches.push_back({i, i, 1.0});
    CHECK(!surface_area_filter(matches, a, b, cfg));
  }

  SUBCASE("fewer than three matches fail") {
    std::vector<Vec3> pts = {{0, 0, 10}, {1, 1, 10}};
    std::vector<Descriptor> descs = {unit_descriptor(rng), unit_descriptor(rng)};
    const FrameBundle a = frame_with_points(pts, descs, 0);
    CHECK(!surface_area_filter({{0, 0, 1.0}, {1, 1, 1.0}}, a, a, cfg));
  }
}

TEST_CASE("estimate_rigid recovers planted transforms") {
  Rng rng(101);

  SUBCASE("identical point sets give the identity") {
    const auto pts = random_cloud(rng, 10);
    const RigidPose t = estimate_rigid(pts, pts);
    CHECK((t.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(t.translation.norm() < 1e-12);
  }

  SUBCASE("noiseless recovery within 1e-9") {
    for (int trial = 0; trial < 50; ++trial) {
      const auto pts = random_cloud(rng, 12);
      const RigidPose want = random_pose(rng, 1.5, 4.0);
      const RigidPose got = estimate_rigid(pts, transform_points(pts, want));
      CHECK((got.rotation - want.rotation).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((got.translation - want.translation).norm() < 1e-9);
      CHECK(got.is_valid(1e-9));
    }
  }

  SUBCASE("residual RMS stays below 3 sigma under noise") {
    const double sigma = 0.01;
    for (int trial = 0; trial < 100; ++trial) {
      const auto pts = random_cloud(rng, 20);
      const RigidPose want = random_pose(rng);
      auto noisy = transform_points(pts, want);
      for (auto& p : noisy) {
        p += Vec3(rng.normal(0, sigma), rng.normal(0, sigma), rng.normal(0, sigma));
      }
      const RigidPose got = estimate_rigid(pts, noisy);
      double acc = 0.0;
      for (size_t i = 0; i < pts.size(); ++i) {
        acc += (got.apply(pts[i]) - noisy[i]).squaredNorm();
      }
      CHECK(std::sqrt(acc / pts.size()) <= 3.0 * sigma);
    }
  }

  SUBCASE("equivariance under a common rigid motion") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto pi = random_cloud(rng, 15);
      const RigidPose t = random_pose(rng);
      const auto pj = transform_points(pi, t);
      const RigidPose g = random_pose(rng, 1.0, 3.0);

      const RigidPose base = estimate_rigid(pi, pj);
      const RigidPose moved =
          estimate_rigid(transform_points(pi, g), transform_points(pj, g));
      const RigidPose want = compose(compose(g, base), invert(g));
      CHECK((moved.rotation - want.rotation).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((moved.translation - want.translation).norm() < 1e-9);
    }
  }

  SUBCASE("degenerate configurations throw") {
    std::vector<Vec3> line = {{0, 0, 1}, {0, 0, 2}, {0, 0, 3}, {0, 0, 4}};
    CHECK_THROWS_AS(estimate_rigid(line, line), std::invalid_argument);
    std::vector<Vec3> two = {{0, 0, 1}, {1, 0, 1}};
    CHECK_THROWS_AS(estimate_rigid(two, two), std::invalid_argument);
  }
}

TEST_CASE("validate_transform applies the filter gates") {
  Rng rng(103);
  const FilterConfig cfg;

  const auto make_cs = [&](const std::vector<Vec3>& pi, const std::vector<Vec3>& pj,
                           FrameBundle& fa, FrameBundle& fb) {
    std::vector<Descriptor> descs;
    for (size_t i = 0; i < pi.size(); ++i) descs.push_back(unit_descriptor(rng));
    fa = frame_with_points(pi, descs, 0);
    fb = frame_with_points(pj, descs, 1);
    CorrespondenceSet cs;
    cs.frame_i = 0;
    cs.frame_j = 1;
    for (size_t i = 0; i < pi.size(); ++i) {
      cs.matches.push_back({static_cast<int>(i), static_cast<int>(i), 1.0});
    }
    cs.transform = estimate_rigid(pi, pj);
    return cs;
  };

  SUBCASE("nine perfect matches are not enough") {
    const auto pi = random_cloud(rng, 9);
    const RigidPose t = random_pose(rng);
    FrameBundle fa, fb;
    auto cs = make_cs(pi, transform_points(pi, t), fa, fb);
    const auto diag = validate_transform(cs, fa, fb, cfg);
    CHECK(!cs.valid);
    CHECK(diag.inlier_count == 9);
  }

  SUBCASE("fifty perfect well-spread matches validate") {
    const auto pi = random_cloud(rng, 50);
    const RigidPose t = random_pose(rng);
    FrameBundle fa, fb;
    auto cs = make_cs(pi, transform_points(pi, t), fa, fb);
    const auto diag = validate_transform(cs, fa, fb, cfg);
    CHECK(cs.valid);
    CHECK(diag.inlier_count == 50);
    CHECK(diag.condition_number < cfg.cond_threshold);
    // Contract: stored matches of a valid set are all inliers.
    for (const auto& m : cs.matches) {
      const Vec3& a = fa.keypoints[m.index_i].point3;
      const Vec3& b = fb.keypoints[m.index_j].point3;
      CHECK((cs.transform->apply(a) - b).norm() < cfg.max_residual_cm);
    }
  }

  SUBCASE("collinear matches fail the condition gate") {
    std::vector<Vec3> pi;
    for (int i = 0; i < 50; ++i) {
      pi.emplace_back(0.1 * i, 0.05 * i, 8.0 + 0.1 * i);
    }
    // Eigenvalue oracle: covariance of a line has a vanishing eigenvalue.
    Vec3 mean = Vec3::Zero();
    for (const auto& p : pi) mean += p;
    mean /= 50.0;
    Mat3 cov = Mat3::Zero();
    for (const auto& p : pi) cov += (p - mean) * (p - mean).transpose();
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov / 50.0);
    CHECK(eig.eigenvalues()(0) < 1e-9 * eig.eigenvalues()(2));

    // estimate_rigid would throw on a pure line; offset one point slightly
    // to keep the estimate defined while the spread stays degenerate.
    auto pi_almost = pi;
    pi_almost[0] += Vec3(1e-3, 0, 0);
    FrameBundle fa, fb;
    auto cs = make_cs(pi_almost, pi_almost, fa, fb);
    validate_transform(cs, fa, fb, cfg);
    CHECK(!cs.valid);
  }

  SUBCASE("valid never flips to invalid as the residual bound loosens") {
    const auto pi = random_cloud(rng, 40);
    const RigidPose t = random_pose(rng);
    auto pj = transform_points(pi, t);
    for (auto& p : pj) {
      p += Vec3(rng.normal(0, 0.004), rng.normal(0, 0.004), rng.normal(0, 0.004));
    }
    bool was_valid = false;
    for (double bound : {0.005, 0.01, 0.02, 0.05, 0.1}) {
      FilterConfig loose = cfg;
      loose.max_residual_cm = bound;
      FrameBundle fa, fb;
      auto cs = make_cs(pi, pj, fa, fb);
      validate_transform(cs, fa, fb, loose);
      if (was_valid) CHECK(cs.valid);
      was_valid = was_valid || cs.valid;
    }
    CHECK(was_valid);  // loosest bound validates this noise level
  }
}

TEST_CASE("build_correspondences runs the full chain") {
  Rng rng(107);
  const auto pts = random_cloud(rng, 40);
  const RigidPose t = random_pose(rng, 0.3, 1.0);
  std::vector<Descriptor> descs;
  for (int i = 0; i < 40; ++i) descs.push_back(unit_descriptor(rng));
  const FrameBundle a = frame_with_points(pts, descs, 0);
  const FrameBundle b = frame_with_points(transform_points(pts, t), descs, 1);

  const CorrespondenceSet cs = build_correspondences(a, b, FilterConfig{});
  CHECK(cs.valid);
  REQUIRE(cs.transform.has_value());
  CHECK(cs.matches.size() == 40);
  CHECK((cs.transform->rotation - t.rotation).cwiseAbs().maxCoeff() < 1e-9);
  for (const auto& m : cs.matches) CHECK(m.index_i == m.index_j);
}
