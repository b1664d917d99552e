#include "lumen/matching.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lumen/kernels.hpp"

namespace lumen {

namespace {

Eigen::MatrixXd similarity_matrix(const FrameBundle& a, const FrameBundle& b) {
  const int n = static_cast<int>(a.descriptors.size());
  const int m = static_cast<int>(b.descriptors.size());
  Eigen::MatrixXd sim(n, m);
  for (int i = 0; i < n; ++i) {
    const float* da = a.descriptors[i].data();
    for (int j = 0; j < m; ++j) {
      sim(i, j) = kernels::dot(da, b.descriptors[j].data(), kDescriptorDim);
    }
  }
  return sim;
}

std::vector<Vec3> matched_points(const std::vector<Match>& matches,
                                 const FrameBundle& frame, bool first_side) {
  std::vector<Vec3> pts;
  pts.reserve(matches.size());
  for (const auto& m : matches) {
    pts.push_back(frame.keypoints.at(first_side ? m.index_i : m.index_j).point3);
  }
  return pts;
}

// Spanned area of the point set after projecting onto its two principal
// axes, and the median viewing depth, both in cm.
struct SpanStats {
  double area = 0.0;
  double median_depth = 0.0;
};

SpanStats span_stats(const std::vector<Vec3>& pts) {
  SpanStats s;
  const int n = static_cast<int>(pts.size());
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= n;
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  cov /= n;
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  // Two dominant axes (eigenvalues ascending in Eigen).
  const Vec3 axis1 = eig.eigenvectors().col(2);
  const Vec3 axis2 = eig.eigenvectors().col(1);
  double lo1 = std::numeric_limits<double>::max(), hi1 = std::numeric_limits<double>::lowest();
  double lo2 = lo1, hi2 = hi1;
  std::vector<double> depths;
  depths.reserve(n);
  for (const auto& p : pts) {
    const Vec3 d = p - mean;
    lo1 = std::min(lo1, d.dot(axis1));
    hi1 = std::max(hi1, d.dot(axis1));
    lo2 = std::min(lo2, d.dot(axis2));
    hi2 = std::max(hi2, d.dot(axis2));
    depths.push_back(p.z());
  }
  s.area = (hi1 - lo1) * (hi2 - lo2);
  std::nth_element(depths.begin(), depths.begin() + n / 2, depths.end());
  s.median_depth = depths[n / 2];
  return s;
}

}  // namespace

std::vector<Match> match_descriptors(const FrameBundle& frame_i, const FrameBundle& frame_j,
                                     const FilterConfig& cfg) {
  std::vector<Match> out;
  if (frame_i.descriptors.empty() || frame_j.descriptors.empty()) return out;
  const Eigen::MatrixXd sim = similarity_matrix(frame_i, frame_j);
  const int n = static_cast<int>(sim.rows());
  const int m = static_cast<int>(sim.cols());

  std::vector<int> best_j(n), best_i(m);
  for (int i = 0; i < n; ++i) {
    int arg = 0;
    for (int j = 1; j < m; ++j) {
      if (sim(i, j) > sim(i, arg)) arg = j;
    }
    best_j[i] = arg;
  }
  for (int j = 0; j < m; ++j) {
    int arg = 0;
    for (int i = 1; i < n; ++i) {
      if (sim(i, j) > sim(arg, j)) arg = i;
    }
    best_i[j] = arg;
  }
  for (int i = 0; i < n; ++i) {
    const int j = best_j[i];
    if (best_i[j] == i && sim(i, j) >= cfg.similarity_floor) {
      out.push_back({i, j, sim(i, j)});
    }
  }
  return out;
}

std::vector<Match> keypoint_correspondence_filter(const std::vector<Match>& matches,
                                                  const FrameBundle& frame_i,
                                                  const FrameBundle& frame_j,
                                                  const FilterConfig& cfg) {
  const int n = static_cast<int>(matches.size());
  if (n <= 1) return matches;

  const std::vector<Vec3> pi = matched_points(matches, frame_i, true);
  const std::vector<Vec3> pj = matched_points(matches, frame_j, false);

  // violated(a,b): the match pair does not preserve the inter-point distance.
  std::vector<std::vector<bool>> violated(n, std::vector<bool>(n, false));
  std::vector<int> counts(n, 0);
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const double di = (pi[a] - pi[b]).norm();
      const double dj = (pj[a] - pj[b]).norm();
      if (std::abs(di - dj) > cfg.kpf_distance_tol_cm) {
        violated[a][b] = violated[b][a] = true;
        ++counts[a];
        ++counts[b];
      }
    }
  }

  std::vector<bool> removed(n, false);
  while (true) {
    int worst = -1;
    for (int a = 0; a < n; ++a) {
      if (!removed[a] && counts[a] > 0 && (worst < 0 || counts[a] > counts[worst])) {
        worst = a;
      }
    }
    if (worst < 0) break;
    removed[worst] = true;
    counts[worst] = 0;
    for (int b = 0; b < n; ++b) {
      if (!removed[b] && violated[worst][b] && counts[b] > 0) --counts[b];
    }
  }

  std::vector<Match> out;
  out.reserve(n);
  for (int a = 0; a < n; ++a) {
    if (!removed[a]) out.push_back(matches[a]);
  }
  return out;
}

bool surface_area_filter(const std::vector<Match>& matches, const FrameBundle& frame_i,
                         const FrameBundle& frame_j, const FilterConfig& cfg) {
  if (matches.size() < 3) return false;
  for (int side = 0; side < 2; ++side) {
    const FrameBundle& frame = side == 0 ? frame_i : frame_j;
    const Intrinsics& k = frame.intrinsics;
    const SpanStats s = span_stats(matched_points(matches, frame, side == 0));
    if (s.median_depth <= 0.0) return false;
    // Metric image footprint at the median depth of the matched points.
    const double footprint = (k.width / k.fx * s.median_depth) *
                             (k.height / k.fy * s.median_depth);
    if (s.area < cfg.min_span_area_fraction * footprint) return false;
  }
  return true;
}

RigidPose estimate_rigid(const std::vector<Vec3>& points_i, const std::vector<Vec3>& points_j) {
  if (points_i.size() != points_j.size()) {
    throw std::invalid_argument("estimate_rigid: point count mismatch");
  }
  const int n = static_cast<int>(points_i.size());
  if (n < 3) throw std::invalid_argument("estimate_rigid: need at least 3 matches");

  Vec3 ci = Vec3::Zero(), cj = Vec3::Zero();
  for (int k = 0; k < n; ++k) {
    ci += points_i[k];
    cj += points_j[k];
  }
  ci /= n;
  cj /= n;

  Mat3 h = Mat3::Zero();
  for (int k = 0; k < n; ++k) {
    h += (points_i[k] - ci) * (points_j[k] - cj).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(1) <= 1e-12 * std::max(sv(0), 1.0)) {
    throw std::invalid_argument("estimate_rigid: degenerate point configuration");
  }
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 r = svd.matrixV() * d * svd.matrixU().transpose();
  return {r, cj - r * ci};
}

TransformDiagnostics validate_transform(CorrespondenceSet& cs, const FrameBundle& frame_i,
                                        const FrameBundle& frame_j, const FilterConfig& cfg) {
  TransformDiagnostics diag;
  cs.valid = false;
  if (!cs.transform || cs.matches.empty()) return diag;

  const RigidPose& t = *cs.transform;
  diag.inlier_flags.resize(cs.matches.size());
  std::vector<Vec3> inlier_src;
  std::vector<Match> inliers;
  for (size_t m = 0; m < cs.matches.size(); ++m) {
    const Vec3& pi = frame_i.keypoints.at(cs.matches[m].index_i).point3;
    const Vec3& pj = frame_j.keypoints.at(cs.matches[m].index_j).point3;
    const double residual = (t.apply(pi) - pj).norm();
    diag.inlier_flags[m] = residual < cfg.max_residual_cm;
    if (diag.inlier_flags[m]) {
      inlier_src.push_back(pi);
      inliers.push_back(cs.matches[m]);
    }
  }
  diag.inlier_count = static_cast<int>(inliers.size());
  if (diag.inlier_count < cfg.min_matches) return diag;

  // Condition analysis on the inlier source-point covariance.
  Vec3 mean = Vec3::Zero();
  for (const auto& p : inlier_src) mean += p;
  mean /= diag.inlier_count;
  Mat3 cov = Mat3::Zero();
  for (const auto& p : inlier_src) cov += (p - mean) * (p - mean).transpose();
  cov /= diag.inlier_count;
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const double lmin = eig.eigenvalues()(0);
  const double lmax = eig.eigenvalues()(2);
  diag.condition_number =
      lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  if (!(diag.condition_number < cfg.cond_threshold)) return diag;

  diag.area_ok = surface_area_filter(inliers, frame_i, frame_j, cfg);
  if (!diag.area_ok) return diag;

  cs.matches = std::move(inliers);
  cs.valid = true;
  return diag;
}

CorrespondenceSet build_correspondences(const FrameBundle& frame_i, const FrameBundle& frame_j,
                                        const FilterConfig& cfg) {
  CorrespondenceSet cs;
  cs.frame_i = frame_i.id;
  cs.frame_j = frame_j.id;
  cs.matches = keypoint_correspondence_filter(match_descriptors(frame_i, frame_j, cfg),
                                              frame_i, frame_j, cfg);
  if (cs.matches.size() < 3) return cs;

  std::vector<Vec3> pi = matched_points(cs.matches, frame_i, true);
  std::vector<Vec3> pj = matched_points(cs.matches, frame_j, false);
  try {
    cs.transform = estimate_rigid(pi, pj);
  } catch (const std::invalid_argument&) {
    return cs;
  }

  // One refinement pass on the inliers of the first estimate.
  TransformDiagnostics diag;
  diag.inlier_flags.resize(cs.matches.size());
  std::vector<Vec3> ri, rj;
  for (size_t m = 0; m < cs.matches.size(); ++m) {
    const double residual = (cs.transform->apply(pi[m]) - pj[m]).norm();
    if (residual < cfg.max_residual_cm) {
      ri.push_back(pi[m]);
      rj.push_back(pj[m]);
    }
  }
  if (ri.size() >= 3 && ri.size() < cs.matches.size()) {
    try {
      cs.transform = estimate_rigid(ri, rj);
    } catch (const std::invalid_argument&) {
      // keep the first estimate
    }
  }

  validate_transform(cs, frame_i, frame_j, cfg);
  return cs;
}

}  // namespace lumen
