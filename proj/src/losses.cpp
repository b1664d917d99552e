#include "lumen/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lumen/kernels.hpp"

namespace lumen {

namespace {

constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;
constexpr double kAutoMaskTieBreak = 1e-5;

void check_same_dims(const ImageRaster& a, const ImageRaster& b, const char* what) {
  if (a.width != b.width || a.height != b.height) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch");
  }
}

// Reflect index into [0, n-1] (single reflection is enough for small windows).
inline int reflect(int i, int n) {
  if (i < 0) return -i - 1;
  if (i >= n) return 2 * n - i - 1;
  return i;
}

}  // namespace

void LossWeights::validate() const {
  if (lambda_ph_extra <= 0.0 || lambda_dc <= 0.0 || tau <= 0.0) {
    throw std::invalid_argument("LossWeights: weights and tau must be positive");
  }
  if (alpha_ssim < 0.0 || alpha_ssim > 1.0) {
    throw std::invalid_argument("LossWeights: alpha_ssim must be in [0,1]");
  }
  if (outlier_percentile <= 0.0 || outlier_percentile > 100.0) {
    throw std::invalid_argument("LossWeights: outlier_percentile must be in (0,100]");
  }
  if (ssim_window < 1 || ssim_window % 2 == 0) {
    throw std::invalid_argument("LossWeights: ssim_window must be odd and positive");
  }
}

double percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw std::invalid_argument("percentile: empty sample");
  std::sort(values.begin(), values.end());
  const double rank = pct / 100.0 * static_cast<double>(values.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(rank));
  const size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

ScalarField ssim(const ImageRaster& a, const ImageRaster& b, int window) {
  check_same_dims(a, b, "ssim");
  const int w = a.width, h = a.height;
  const int r = window / 2;
  ScalarField out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int c = 0; c < 3; ++c) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = -r; dy <= r; ++dy) {
          const int yy = reflect(y + dy, h);
          for (int dx = -r; dx <= r; ++dx) {
            const int xx = reflect(x + dx, w);
            const double va = a.at(xx, yy, c);
            const double vb = b.at(xx, yy, c);
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
          }
        }
        const double n = static_cast<double>(window) * window;
        const double mu_a = sa / n, mu_b = sb / n;
        const double var_a = saa / n - mu_a * mu_a;
        const double var_b = sbb / n - mu_b * mu_b;
        const double cov = sab / n - mu_a * mu_b;
        acc += (2.0 * mu_a * mu_b + kSsimC1) * (2.0 * cov + kSsimC2) /
               ((mu_a * mu_a + mu_b * mu_b + kSsimC1) * (var_a + var_b + kSsimC2));
      }
      out.at(x, y) = acc / 3.0;
    }
  }
  return out;
}

ScalarField photometric_error(const ImageRaster& a, const ImageRaster& b,
                              const LossWeights& w) {
  check_same_dims(a, b, "photometric_error");
  const size_t n3 = a.values.size();
  std::vector<double> da(n3), db(n3), diff(n3);
  for (size_t i = 0; i < n3; ++i) {
    da[i] = a.values[i];
    db[i] = b.values[i];
  }
  kernels::abs_diff(da.data(), db.data(), diff.data(), n3);

  ScalarField out(a.width, a.height);
  if (w.alpha_ssim > 0.0) {
    const ScalarField s = ssim(a, b, w.ssim_window);
    for (size_t p = 0; p < out.values.size(); ++p) {
      const double l1 = (diff[3 * p] + diff[3 * p + 1] + diff[3 * p + 2]) / 3.0;
      out.values[p] =
          w.alpha_ssim * 0.5 * (1.0 - s.values[p]) + (1.0 - w.alpha_ssim) * l1;
    }
  } else {
    for (size_t p = 0; p < out.values.size(); ++p) {
      out.values[p] = (diff[3 * p] + diff[3 * p + 1] + diff[3 * p + 2]) / 3.0;
    }
  }
  return out;
}

MinPhotometricResult min_photometric_loss(const ImageRaster& target,
                                          const std::vector<WarpCandidate>& candidates,
                                          const PixelMask& mu, const LossWeights& w) {
  if (candidates.empty()) {
    throw std::invalid_argument("min_photometric_loss: empty candidate list");
  }
  const int width = target.width, height = target.height;
  const size_t n = static_cast<size_t>(width) * height;
  if (mu.width != width || mu.height != height) {
    throw std::invalid_argument("min_photometric_loss: mask dimension mismatch");
  }

  constexpr double kInvalid = std::numeric_limits<double>::infinity();
  std::vector<double> best_warped(n, kInvalid);
  std::vector<double> best_identity(n, kInvalid);
  std::vector<double> merged(n);
  for (const auto& cand : candidates) {
    check_same_dims(cand.warped, target, "min_photometric_loss");
    const ScalarField pe_warp = photometric_error(target, cand.warped, w);
    std::vector<double> masked(n, kInvalid);
    for (size_t p = 0; p < n; ++p) {
      if (cand.valid.values[p]) masked[p] = pe_warp.values[p];
    }
    kernels::elementwise_min(best_warped.data(), masked.data(), merged.data(), n);
    best_warped.swap(merged);

    const ScalarField pe_id = photometric_error(target, cand.source, w);
    kernels::elementwise_min(best_identity.data(), pe_id.values.data(), merged.data(), n);
    best_identity.swap(merged);
  }

  MinPhotometricResult res;
  res.mask = PixelMask(width, height);
  std::vector<double> kept;
  kept.reserve(n);
  for (size_t p = 0; p < n; ++p) {
    if (!mu.values[p] || !std::isfinite(best_warped[p])) continue;
    // Auto-mask: warped error must beat the unwarped error (tie goes to warped).
    if (best_warped[p] < best_identity[p] + kAutoMaskTieBreak) {
      res.mask.values[p] = 1;
      kept.push_back(best_warped[p]);
    }
  }
  res.pixel_count = kept.size();
  res.loss = kept.empty() ? 0.0 : kernels::sum(kept.data(), kept.size()) /
                                      static_cast<double>(kept.size());
  return res;
}

PairwiseLoss extra_photometric_loss(const std::vector<PhotoPair>& pairs,
                                    const LossWeights& w) {
  if (pairs.empty()) throw std::invalid_argument("extra_photometric_loss: empty pair set");
  PairwiseLoss res;
  res.per_pair.reserve(pairs.size());
  for (const auto& pair : pairs) {
    check_same_dims(pair.target, pair.warped, "extra_photometric_loss");
    const ScalarField pe = photometric_error(pair.target, pair.warped, w);
    std::vector<double> errs;
    errs.reserve(pe.values.size());
    for (size_t p = 0; p < pe.values.size(); ++p) {
      if (pair.valid.values[p]) errs.push_back(pe.values[p]);
    }
    if (errs.empty()) {
      res.per_pair.push_back(0.0);
      res.pair_empty.push_back(true);
      continue;
    }
    const double gate = percentile(errs, w.outlier_percentile);
    std::vector<double> kept;
    kept.reserve(errs.size());
    for (double e : errs) {
      if (e <= gate) kept.push_back(e);
    }
    res.per_pair.push_back(kernels::sum(kept.data(), kept.size()) /
                           static_cast<double>(kept.size()));
    res.pair_empty.push_back(false);
  }
  res.mean_over_pairs = kernels::sum(res.per_pair.data(), res.per_pair.size()) /
                        static_cast<double>(res.per_pair.size());
  return res;
}

double depth_consistency_loss(const DepthRaster& d_warped, const DepthRaster& d_interp) {
  if (d_warped.width != d_interp.width || d_warped.height != d_interp.height) {
    throw std::invalid_argument("depth_consistency_loss: dimension mismatch");
  }
  double acc = 0.0;
  size_t count = 0;
  for (size_t p = 0; p < d_warped.values.size(); ++p) {
    const double a = d_warped.values[p];
    const double b = d_interp.values[p];
    if (a <= 0.0 || b <= 0.0 || !std::isfinite(a) || !std::isfinite(b)) continue;
    acc += std::abs(a - b) / (a + b);
    ++count;
  }
  if (count == 0) {
    throw std::invalid_argument("depth_consistency_loss: no jointly valid pixels");
  }
  return acc / static_cast<double>(count);
}

double total_loss(const TotalLossComponents& c, const LossWeights& w) {
  return c.l_ph + w.lambda_ph_extra * c.mean_ph_extra + w.lambda_dc * c.mean_dc;
}

std::vector<std::pair<int, int>> spatio_temporal_pairs(int t) {
  std::vector<std::pair<int, int>> s;
  for (int i : {t - 1, t + 1}) {
    for (int j : {t - 1, t, t + 1}) {
      if (i != j) s.emplace_back(i, j);
    }
  }
  return s;
}

std::vector<double> infonce_per_match(const std::vector<Descriptor>& desc_i,
                                      const std::vector<Descriptor>& desc_j,
                                      const std::vector<std::pair<int, int>>& pairs,
                                      double tau) {
  if (pairs.empty()) throw std::invalid_argument("infonce_loss: empty match set");
  if (tau <= 0.0) throw std::invalid_argument("infonce_loss: tau must be positive");

  std::vector<double> logits(pairs.size());
  for (size_t m = 0; m < pairs.size(); ++m) {
    const auto& [ia, ib] = pairs[m];
    const Descriptor& a = desc_i.at(ia);
    const Descriptor& b = desc_j.at(ib);
    if (!a.is_normalized() || !b.is_normalized()) {
      throw std::invalid_argument("infonce_loss: descriptor not L2-normalized");
    }
    logits[m] = cosine_similarity(a, b) / tau;
  }
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double l : logits) denom += std::exp(l - max_logit);
  const double lse = max_logit + std::log(denom);

  std::vector<double> out(pairs.size());
  for (size_t m = 0; m < pairs.size(); ++m) out[m] = lse - logits[m];
  return out;
}

double infonce_loss(const std::vector<Descriptor>& desc_i,
                    const std::vector<Descriptor>& desc_j,
                    const std::vector<std::pair<int, int>>& pairs, double tau) {
  const std::vector<double> terms = infonce_per_match(desc_i, desc_j, pairs, tau);
  return kernels::sum(terms.data(), terms.size()) / static_cast<double>(terms.size());
}

PixelMask specular_mask(const ImageRaster& img, double y_threshold, int dilate_kernel) {
  PixelMask seed(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double luma =
          0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
      if (luma >= y_threshold) seed.set(x, y, true);
    }
  }
  const int r = dilate_kernel / 2;
  PixelMask out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (!seed.at(x, y)) continue;
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= img.height) continue;
        for (int dx = -r; dx <= r; ++dx) {
          const int xx = x + dx;
          if (xx >= 0 && xx < img.width) out.set(xx, yy, true);
        }
      }
    }
  }
  return out;
}

PixelMask mask_and(const PixelMask& a, const PixelMask& b) {
  if (a.width != b.width || a.height != b.height) {
    throw std::invalid_argument("mask_and: dimension mismatch");
  }
  PixelMask out(a.width, a.height);
  for (size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = (a.values[i] && b.values[i]) ? 1 : 0;
  }
  return out;
}

}  // namespace lumen
