#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "lumen/losses.hpp"
#include "lumen/rng.hpp"

using namespace lumen;

namespace {

ImageRaster random_image(Rng& rng, int w, int h) {
  ImageRaster img(w, h);
  for (auto& v : img.values) v = static_cast<float>(rng.uniform());
  return img;
}

ImageRaster constant_image(int w, int h, float r, float g, float b) {
  ImageRaster img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(x, y, 0) = r;
      img.at(x, y, 1) = g;
      img.at(x, y, 2) = b;
    }
  }
  return img;
}

// Independent scalar oracle for per-pixel SSIM: direct formula, no shared
// code with the implementation.
double ssim_oracle_at(const ImageRaster& a, const ImageRaster& b, int x, int y,
                      int window) {
  const double c1 = 1e-4, c2 = 9e-4;
  const int r = window / 2;
  double total = 0.0;
  for (int ch = 0; ch < 3; ++ch) {
    std::vector<double> va, vb;
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        int xx = x + dx, yy = y + dy;
        if (xx < 0) xx = -xx - 1;
        if (yy < 0) yy = -yy - 1;
        if (xx >= a.width) xx = 2 * a.width - xx - 1;
        if (yy >= a.height) yy = 2 * a.height - yy - 1;
        va.push_back(a.at(xx, yy, ch));
        vb.push_back(b.at(xx, yy, ch));
      }
    }
    const double n = static_cast<double>(va.size());
    double ma = 0, mb = 0;
    for (size_t i = 0; i < va.size(); ++i) {
      ma += va[i];
      mb += vb[i];
    }
    ma /= n;
    mb /= n;
    double sa = 0, sb = 0, sab = 0;
    for (size_t i = 0; i < va.size(); ++i) {
      sa += va[i] * va[i];
      sb += vb[i] * vb[i];
      sab += va[i] * vb[i];
    }
    const double var_a = sa / n - ma * ma;
    const double var_b = sb / n - mb * mb;
    const double cov = sab / n - ma * mb;
    total += (2 * ma * mb + c1) * (2 * cov + c2) /
             ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
  }
  return total / 3.0;
}

}  // namespace

TEST_CASE("ssim of an image with itself is one everywhere") {
  Rng rng(3);
  const ImageRaster a = random_image(rng, 16, 12);
  const ScalarField s = ssim(a, a);
  for (double v : s.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim of constant 0 vs constant 1 is stabilizer-dominated") {
  const ImageRaster a = constant_image(9, 9, 0, 0, 0);
  const ImageRaster b = constant_image(9, 9, 1, 1, 1);
  const ScalarField s = ssim(a, b);
  // Closed form with zero variances: C1 / (1 + C1).
  const double want = 1e-4 / (1.0 + 1e-4);
  for (double v : s.values) CHECK(v == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("ssim matches the direct-formula oracle per pixel") {
  Rng rng(17);
  const ImageRaster a = random_image(rng, 13, 9);
  const ImageRaster b = random_image(rng, 13, 9);
  const ScalarField s = ssim(a, b);
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      CHECK(s.at(x, y) == doctest::Approx(ssim_oracle_at(a, b, x, y, 3)).epsilon(1e-9));
      CHECK(s.at(x, y) <= 1.0 + 1e-12);
      CHECK(s.at(x, y) >= -1.0 - 1e-12);
    }
  }
}

TEST_CASE("photometric error vanishes on identical images") {
  Rng rng(29);
  const ImageRaster a = random_image(rng, 10, 10);
  LossWeights w;
  const ScalarField pe = photometric_error(a, a, w);
  for (double v : pe.values) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("photometric error reduces to L1 when alpha is zero") {
  LossWeights w;
  w.alpha_ssim = 0.0;
  const ImageRaster a = constant_image(8, 8, 0.75f, 0.75f, 0.75f);
  const ImageRaster b = constant_image(8, 8, 0.25f, 0.25f, 0.25f);
  const ScalarField pe = photometric_error(a, b, w);
  for (double v : pe.values) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("photometric error matches the composed oracle") {
  Rng rng(31);
  const ImageRaster a = random_image(rng, 11, 7);
  const ImageRaster b = random_image(rng, 11, 7);
  LossWeights w;  // alpha 0.85
  const ScalarField pe = photometric_error(a, b, w);
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      double l1 = 0.0;
      for (int c = 0; c < 3; ++c) {
        l1 += std::abs(static_cast<double>(a.at(x, y, c)) - b.at(x, y, c));
      }
      l1 /= 3.0;
      const double want =
          0.85 * 0.5 * (1.0 - ssim_oracle_at(a, b, x, y, 3)) + 0.15 * l1;
      CHECK(pe.at(x, y) == doctest::Approx(want).epsilon(1e-9));
      CHECK(pe.at(x, y) >= 0.0);
    }
  }
}

TEST_CASE("min photometric loss selects the exact candidate") {
  Rng rng(37);
  const ImageRaster target = random_image(rng, 12, 12);
  const ImageRaster garbage = random_image(rng, 12, 12);
  const ImageRaster source = random_image(rng, 12, 12);
  const PixelMask all(12, 12, true);
  LossWeights w;

  SUBCASE("single exact warp gives zero") {
    WarpCandidate c{target, all, source};
    const auto res = min_photometric_loss(target, {c}, all, w);
    CHECK(res.loss == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(res.pixel_count == 144);
  }

  SUBCASE("the minimum ignores a garbage candidate") {
    WarpCandidate good{target, all, source};
    WarpCandidate bad{garbage, all, source};
    const auto res = min_photometric_loss(target, {good, bad}, all, w);
    CHECK(res.loss == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("empty candidate list throws") {
    CHECK_THROWS_AS(min_photometric_loss(target, {}, all, w), std::invalid_argument);
  }
}

TEST_CASE("min photometric loss equals a brute-force per-pixel oracle") {
  Rng rng(41);
  const int w_px = 9, h_px = 8;
  const ImageRaster target = random_image(rng, w_px, h_px);
  LossWeights w;

  std::vector<WarpCandidate> candidates;
  for (int c = 0; c < 3; ++c) {
    WarpCandidate cand;
    cand.warped = random_image(rng, w_px, h_px);
    cand.valid = PixelMask(w_px, h_px);
    for (size_t i = 0; i < cand.valid.values.size(); ++i) {
      cand.valid.values[i] = rng.uniform() < 0.8 ? 1 : 0;
    }
    cand.source = random_image(rng, w_px, h_px);
    candidates.push_back(cand);
  }
  PixelMask mu(w_px, h_px);
  for (size_t i = 0; i < mu.values.size(); ++i) mu.values[i] = rng.uniform() < 0.9;

  const auto res = min_photometric_loss(target, candidates, mu, w);

  // Brute force: per-pixel min over valid candidates, auto-mask rule inline.
  std::vector<ScalarField> pes, ids;
  for (const auto& c : candidates) {
    pes.push_back(photometric_error(target, c.warped, w));
    ids.push_back(photometric_error(target, c.source, w));
  }
  double acc = 0.0;
  size_t count = 0;
  for (int y = 0; y < h_px; ++y) {
    for (int x = 0; x < w_px; ++x) {
      if (!mu.at(x, y)) continue;
      double best = std::numeric_limits<double>::infinity();
      double best_id = std::numeric_limits<double>::infinity();
      for (size_t c = 0; c < candidates.size(); ++c) {
        if (candidates[c].valid.at(x, y)) best = std::min(best, pes[c].at(x, y));
        best_id = std::min(best_id, ids[c].at(x, y));
      }
      if (!std::isfinite(best)) continue;
      if (best < best_id + 1e-5) {
        acc += best;
        ++count;
      }
    }
  }
  REQUIRE(count == res.pixel_count);
  CHECK(res.loss == doctest::Approx(acc / count).epsilon(1e-12));
}

TEST_CASE("extra photometric loss on identical pairs is zero") {
  Rng rng(43);
  const ImageRaster img = random_image(rng, 10, 10);
  const PixelMask all(10, 10, true);
  LossWeights w;
  const auto res = extra_photometric_loss({{img, img, all}, {img, img, all}}, w);
  CHECK(res.mean_over_pairs == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(!res.pair_empty[0]);
}

TEST_CASE("percentile gate removes the planted outlier") {
  // 100 pixels, one with a huge error; the 80th-percentile gate drops it.
  const int w_px = 10, h_px = 10;
  ImageRaster target = constant_image(w_px, h_px, 0.5f, 0.5f, 0.5f);
  ImageRaster warped = target;
  Rng rng(47);
  LossWeights w;
  w.alpha_ssim = 0.0;  // pure L1 keeps the oracle trivial
  for (int i = 0; i < w_px * h_px; ++i) {
    const double delta = rng.uniform(0.0, 0.05);
    for (int c = 0; c < 3; ++c) warped.values[3 * i + c] = 0.5f + static_cast<float>(delta);
  }
  for (int c = 0; c < 3; ++c) warped.values[3 * 57 + c] = 0.95f;

  // Exact float-rounded per-pixel L1 for the oracle.
  std::vector<double> l1(w_px * h_px);
  for (int i = 0; i < w_px * h_px; ++i) {
    l1[i] = std::abs(static_cast<double>(warped.values[3 * i]) - 0.5);
  }

  const PixelMask all(w_px, h_px, true);
  const auto res = extra_photometric_loss({{target, warped, all}}, w);

  std::vector<double> sorted = l1;
  std::sort(sorted.begin(), sorted.end());
  const double rank = 0.8 * (sorted.size() - 1);
  const size_t lo = static_cast<size_t>(rank);
  const double gate = sorted[lo] + (rank - lo) * (sorted[lo + 1] - sorted[lo]);
  double acc = 0.0;
  size_t kept = 0;
  bool outlier_kept = false;
  for (int i = 0; i < w_px * h_px; ++i) {
    if (l1[i] <= gate) {
      acc += l1[i];
      ++kept;
      if (i == 57) outlier_kept = true;
    }
  }
  CHECK(!outlier_kept);
  CHECK(res.per_pair[0] == doctest::Approx(acc / kept).epsilon(1e-9));
}

TEST_CASE("raising the percentile never shrinks the retained set") {
  Rng rng(53);
  std::vector<double> errs(257);
  for (auto& e : errs) e = rng.uniform();
  size_t prev = 0;
  for (double pct : {10.0, 25.0, 50.0, 80.0, 95.0, 100.0}) {
    const double gate = percentile(errs, pct);
    size_t kept = 0;
    for (double e : errs) kept += e <= gate;
    CHECK(kept >= prev);
    prev = kept;
  }
  CHECK(prev == errs.size());  // pct=100 keeps everything
}

TEST_CASE("spatio-temporal pair set enumerates the four ordered pairs") {
  const auto pairs = spatio_temporal_pairs(10);
  const std::set<std::pair<int, int>> got(pairs.begin(), pairs.end());
  const std::set<std::pair<int, int>> want = {{9, 10}, {9, 11}, {11, 9}, {11, 10}};
  CHECK(got == want);
  CHECK(pairs.size() == 4);
}

TEST_CASE("depth consistency loss") {
  SUBCASE("identical rasters give zero") {
    DepthRaster d(6, 6, 3.f);
    CHECK(depth_consistency_loss(d, d) == doctest::Approx(0.0));
  }
  SUBCASE("constant 1 vs constant 3 gives one half") {
    DepthRaster a(4, 4, 1.f), b(4, 4, 3.f);
    CHECK(depth_consistency_loss(a, b) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("matches the scalar oracle on random rasters") {
    Rng rng(59);
    DepthRaster a(7, 5), b(7, 5);
    for (size_t i = 0; i < a.values.size(); ++i) {
      a.values[i] = static_cast<float>(rng.uniform(0.5, 9.0));
      b.values[i] = static_cast<float>(rng.uniform(0.5, 9.0));
    }
    a.values[3] = 0.f;  // knock out some pixels
    b.values[8] = 0.f;
    double acc = 0.0;
    int n = 0;
    for (size_t i = 0; i < a.values.size(); ++i) {
      if (a.values[i] > 0 && b.values[i] > 0) {
        acc += std::abs(static_cast<double>(a.values[i]) - b.values[i]) /
               (static_cast<double>(a.values[i]) + b.values[i]);
        ++n;
      }
    }
    const double got = depth_consistency_loss(a, b);
    CHECK(got == doctest::Approx(acc / n).epsilon(1e-12));
    CHECK(got >= 0.0);
    CHECK(got < 1.0);
  }
  SUBCASE("no joint validity throws") {
    DepthRaster a(3, 3, 0.f), b(3, 3, 2.f);
    CHECK_THROWS_AS(depth_consistency_loss(a, b), std::invalid_argument);
  }
}

TEST_CASE("total loss applies the component weights") {
  LossWeights w;  // lambda 0.1 / 0.1
  CHECK(total_loss({0, 0, 0}, w) == 0.0);
  CHECK(total_loss({1.0, 2.0, 3.0}, w) == doctest::Approx(1.5).epsilon(1e-15));

  Rng rng(61);
  for (int i = 0; i < 20; ++i) {
    TotalLossComponents c{rng.uniform(), rng.uniform(), rng.uniform()};
    LossWeights wr;
    wr.lambda_ph_extra = rng.uniform(0.01, 2.0);
    wr.lambda_dc = rng.uniform(0.01, 2.0);
    CHECK(total_loss(c, wr) ==
          doctest::Approx(c.l_ph + wr.lambda_ph_extra * c.mean_ph_extra +
                          wr.lambda_dc * c.mean_dc)
              .epsilon(1e-15));
  }
}

namespace {

Descriptor random_unit_descriptor(Rng& rng) {
  Descriptor d;
  for (auto& v : d.v) v = static_cast<float>(rng.normal());
  d.normalize();
  return d;
}

}  // namespace

TEST_CASE("infonce loss trivial and derived cases") {
  Rng rng(67);

  SUBCASE("a single pair scores zero") {
    std::vector<Descriptor> di{random_unit_descriptor(rng)};
    std::vector<Descriptor> dj{random_unit_descriptor(rng)};
    CHECK(infonce_loss(di, dj, {{0, 0}}, 0.01) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("uniform similarities score log M") {
    // Identical descriptor pairs make every similarity term equal.
    const Descriptor d = random_unit_descriptor(rng);
    const int m = 7;
    std::vector<Descriptor> di(m, d), dj(m, d);
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < m; ++i) pairs.emplace_back(i, i);
    CHECK(infonce_loss(di, dj, pairs, 0.01) ==
          doctest::Approx(std::log(static_cast<double>(m))).epsilon(1e-9));
  }

  SUBCASE("matches the naive exponential oracle") {
    const int m = 5;
    std::vector<Descriptor> di, dj;
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < m; ++i) {
      di.push_back(random_unit_descriptor(rng));
      dj.push_back(random_unit_descriptor(rng));
      pairs.emplace_back(i, i);
    }
    const double tau = 0.05;  // large enough for naive exponentials
    double denom = 0.0;
    std::vector<double> sims(m);
    for (int i = 0; i < m; ++i) {
      double s = 0.0;
      for (int c = 0; c < kDescriptorDim; ++c) {
        s += static_cast<double>(di[i].v[c]) * dj[i].v[c];
      }
      sims[i] = s;
      denom += std::exp(s / tau);
    }
    double want = 0.0;
    for (int i = 0; i < m; ++i) want += -std::log(std::exp(sims[i] / tau) / denom);
    want /= m;
    CHECK(infonce_loss(di, dj, pairs, tau) == doctest::Approx(want).epsilon(1e-9));
  }

  SUBCASE("invariant under permutation of candidate order") {
    const int m = 6;
    std::vector<Descriptor> di, dj;
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < m; ++i) {
      di.push_back(random_unit_descriptor(rng));
      dj.push_back(random_unit_descriptor(rng));
      pairs.emplace_back(i, i);
    }
    const double base = infonce_loss(di, dj, pairs, 0.01);
    std::reverse(pairs.begin(), pairs.end());
    CHECK(infonce_loss(di, dj, pairs, 0.01) == doctest::Approx(base).epsilon(1e-12));
  }

  SUBCASE("a match's own loss decreases as its similarity rises") {
    // Blend pair 0's descriptors together in five steps, others fixed. The
    // per-match term of pair 0 must fall monotonically (the mean over all
    // matches need not: the shared denominator grows too).
    const int m = 4;
    std::vector<Descriptor> di, dj;
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < m; ++i) {
      di.push_back(random_unit_descriptor(rng));
      dj.push_back(random_unit_descriptor(rng));
      pairs.emplace_back(i, i);
    }
    double prev = std::numeric_limits<double>::infinity();
    for (int step = 0; step < 5; ++step) {
      const double blend = step / 4.0;
      Descriptor blended = dj[0];
      for (int c = 0; c < kDescriptorDim; ++c) {
        blended.v[c] =
            static_cast<float>((1.0 - blend) * dj[0].v[c] + blend * di[0].v[c]);
      }
      blended.normalize();
      std::vector<Descriptor> dj_step = dj;
      dj_step[0] = blended;
      const double cur = infonce_per_match(di, dj_step, pairs, 0.1)[0];
      CHECK(cur < prev);
      prev = cur;
    }
  }

  SUBCASE("rejects unnormalized descriptors and empty pair lists") {
    std::vector<Descriptor> di{random_unit_descriptor(rng)};
    std::vector<Descriptor> dj{random_unit_descriptor(rng)};
    CHECK_THROWS_AS(infonce_loss(di, dj, {}, 0.01), std::invalid_argument);
    dj[0].v[0] += 1.f;
    CHECK_THROWS_AS(infonce_loss(di, dj, {{0, 0}}, 0.01), std::invalid_argument);
  }
}

TEST_CASE("specular mask") {
  SUBCASE("all-black image yields an empty mask") {
    const ImageRaster img = constant_image(20, 20, 0, 0, 0);
    CHECK(specular_mask(img).count() == 0);
  }

  SUBCASE("a single saturated pixel marks a 13x13 block") {
    ImageRaster img = constant_image(31, 31, 0, 0, 0);
    img.at(15, 15, 0) = 1.f;
    img.at(15, 15, 1) = 1.f;
    img.at(15, 15, 2) = 1.f;
    const PixelMask mask = specular_mask(img);
    CHECK(mask.count() == 169);
    for (int y = 0; y < 31; ++y) {
      for (int x = 0; x < 31; ++x) {
        const bool inside = std::abs(x - 15) <= 6 && std::abs(y - 15) <= 6;
        CHECK(mask.at(x, y) == inside);
      }
    }
  }

  SUBCASE("gradient image equals the thresholded oracle dilated by brute force") {
    ImageRaster img(40, 17);
    for (int y = 0; y < 17; ++y) {
      for (int x = 0; x < 40; ++x) {
        const float v = static_cast<float>(x) / 39.f;
        img.at(x, y, 0) = v;
        img.at(x, y, 1) = v * 0.9f;
        img.at(x, y, 2) = v * 0.8f;
      }
    }
    const PixelMask got = specular_mask(img);

    PixelMask seed(40, 17);
    for (int y = 0; y < 17; ++y) {
      for (int x = 0; x < 40; ++x) {
        const double luma =
            0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
        seed.set(x, y, luma >= 0.9);
      }
    }
    for (int y = 0; y < 17; ++y) {
      for (int x = 0; x < 40; ++x) {
        bool want = false;
        for (int dy = -6; dy <= 6 && !want; ++dy) {
          for (int dx = -6; dx <= 6 && !want; ++dx) {
            const int xx = x + dx, yy = y + dy;
            if (xx >= 0 && yy >= 0 && xx < 40 && yy < 17 && seed.at(xx, yy)) want = true;
          }
        }
        CHECK(got.at(x, y) == want);
      }
    }
  }
}

TEST_CASE("loss weights validate their documented ranges") {
  LossWeights w;
  CHECK_NOTHROW(w.validate());
  w.tau = 0.0;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
  w = LossWeights{};
  w.alpha_ssim = 1.5;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
  w = LossWeights{};
  w.outlier_percentile = 0.0;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}
