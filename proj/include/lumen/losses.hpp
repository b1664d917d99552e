#pragma once

#include <utility>
#include <vector>

#include "lumen/frame.hpp"
#include "lumen/geometry.hpp"

// Forward numeric loss kernels used for verification and for scoring
// candidate alignments. No learning loop lives here.

namespace lumen {

struct LossWeights {
  double lambda_ph_extra = 0.1;
  double lambda_dc = 0.1;
  double tau = 0.01;
  double alpha_ssim = 0.85;
  double outlier_percentile = 80.0;
  int ssim_window = 3;

  // Throws std::invalid_argument when outside the documented ranges.
  void validate() const;
};

// Dense double-precision per-pixel field (loss rasters).
struct ScalarField {
  int width = 0, height = 0;
  std::vector<double> values;

  ScalarField() = default;
  ScalarField(int w, int h, double fill = 0.0)
      : width(w), height(h), values(static_cast<size_t>(w) * h, fill) {}

  double at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
  double& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
};

// Percentile with linear interpolation on the sorted sample (pct in [0,100]).
// Used for outlier gates here and medians in the metrics.
double percentile(std::vector<double> values, double pct);

// Per-pixel SSIM over a box mean/variance window (reflection padding),
// averaged over channels. Standard stabilizers C1=0.01^2, C2=0.03^2.
ScalarField ssim(const ImageRaster& a, const ImageRaster& b, int window = 3);

// pe = alpha/2 * (1 - SSIM) + (1 - alpha) * |a - b|, channel-averaged.
ScalarField photometric_error(const ImageRaster& a, const ImageRaster& b,
                              const LossWeights& w);

// One warped candidate view plus the raw source it came from (the raw
// source feeds the auto-mask comparison).
struct WarpCandidate {
  ImageRaster warped;
  PixelMask valid;
  ImageRaster source;
};

struct MinPhotometricResult {
  double loss = 0.0;
  PixelMask mask;        // pixels that contributed (auto-mask ∧ validity ∧ mu)
  size_t pixel_count = 0;
};

// Per-pixel minimum photometric error over candidates, averaged over pixels
// passing the auto-mask, the candidate validity and `mu`. The auto-mask
// keeps pixels where the best warped error beats the best unwarped
// source-vs-target error (deterministic 1e-5 tie-break toward warped).
MinPhotometricResult min_photometric_loss(const ImageRaster& target,
                                          const std::vector<WarpCandidate>& candidates,
                                          const PixelMask& mu, const LossWeights& w);

// One (i, j) term of the pairwise photometric consistency sum.
struct PhotoPair {
  ImageRaster target;  // I_i
  ImageRaster warped;  // I_{j->i}
  PixelMask valid;     // warp validity ∧ V_mu
};

struct PairwiseLoss {
  double mean_over_pairs = 0.0;
  std::vector<double> per_pair;
  std::vector<bool> pair_empty;  // pairs with no valid pixels contribute 0
};

// Mean photometric error per pair with errors above the percentile gate
// removed, averaged over the pair set.
PairwiseLoss extra_photometric_loss(const std::vector<PhotoPair>& pairs,
                                    const LossWeights& w);

// |d_warped - d_interp| / (d_warped + d_interp) averaged over jointly valid
// pixels; result in [0, 1). Throws std::invalid_argument when no pixel is
// jointly valid.
double depth_consistency_loss(const DepthRaster& d_warped, const DepthRaster& d_interp);

struct TotalLossComponents {
  double l_ph = 0.0;
  double mean_ph_extra = 0.0;  // (1/|S|) sum of pairwise photometric terms
  double mean_dc = 0.0;        // (1/|S|) sum of pairwise depth-consistency terms
};

// l_ph + lambda_ph_extra * mean_ph_extra + lambda_dc * mean_dc
double total_loss(const TotalLossComponents& c, const LossWeights& w);

// Ordered (i, j) frame pairs of the spatio-temporal consistency set around
// a center frame t: i in {t-1, t+1}, j in {t-1, t, t+1}, i != j. Exactly
// {(t-1, t), (t-1, t+1), (t+1, t-1), (t+1, t)}.
std::vector<std::pair<int, int>> spatio_temporal_pairs(int t);

// Contrastive softmax loss over candidate matches: for each pair k,
// -log( exp(s_k/tau) / sum_m exp(s_m/tau) ) with s_m the cosine similarity
// of candidate pair m, averaged over pairs. Computed with max-subtraction.
// Throws on empty pairs or non-normalized descriptors.
double infonce_loss(const std::vector<Descriptor>& desc_i,
                    const std::vector<Descriptor>& desc_j,
                    const std::vector<std::pair<int, int>>& pairs, double tau);

// Per-match contrastive terms before averaging (same contract as
// infonce_loss). The k-th entry is the loss of match k against the full
// candidate set.
std::vector<double> infonce_per_match(const std::vector<Descriptor>& desc_i,
                                      const std::vector<Descriptor>& desc_j,
                                      const std::vector<std::pair<int, int>>& pairs,
                                      double tau);

// Marks saturated pixels to exclude: BT.601 luma >= 0.9, dilated by a
// 13x13 square structuring element.
PixelMask specular_mask(const ImageRaster& img, double y_threshold = 0.9,
                        int dilate_kernel = 13);

PixelMask mask_and(const PixelMask& a, const PixelMask& b);

}  // namespace lumen
