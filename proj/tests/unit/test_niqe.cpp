#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "fpsr/dataset.hpp"
#include "fpsr/metrics.hpp"

using namespace fpsr;
using namespace fpsr::metrics;

namespace {

std::vector<double> draws(std::uint64_t seed, int n, bool laplace) {
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) {
    if (laplace) {
      const double u = rng.uniform() - 0.5;
      x = (u < 0 ? 1.0 : -1.0) * std::log(1 - 2 * std::abs(u));
    } else {
      x = 0.7 * rng.normal();
    }
  }
  return v;
}

}  // namespace

TEST(NiqeFits, GaussianShapeRecovered) {
  const auto fit = fit_ggd(draws(1, 100000, false));
  EXPECT_NEAR(fit.alpha, 2.0, 0.15);
  EXPECT_GT(fit.beta, 0.0);
}

TEST(NiqeFits, LaplaceShapeRecovered) {
  EXPECT_NEAR(fit_ggd(draws(2, 100000, true)).alpha, 1.0, 0.15);
}

TEST(NiqeFits, SymmetricAggd) {
  const auto fit = fit_aggd(draws(3, 100000, false));
  EXPECT_NEAR(fit.alpha, 2.0, 0.15);
  EXPECT_NEAR(fit.beta_left / fit.beta_right, 1.0, 0.05);
  EXPECT_NEAR(fit.mean, 0.0, 0.02);
}

TEST(NiqeFits, SkewShowsInSideScales) {
  auto v = draws(4, 50000, false);
  for (auto& x : v)
    if (x > 0) x *= 2.0;
  const auto fit = fit_aggd(v);
  EXPECT_GT(fit.beta_right, 1.5 * fit.beta_left);
}

TEST(Mscn, ConstantPlaneIsZero) {
  Plane sigma;
  const Plane m = mscn(Plane(20, 20, 128.0), &sigma);
  for (double v : m.data) EXPECT_NEAR(v, 0.0, 1e-12);
  for (double v : sigma.data) EXPECT_NEAR(v, 0.0, 1e-6);
}

TEST(NiqeFeatures, DimensionAndPatchCount) {
  const auto img = synth_sr_dataset(5, 1, 200)[0];
  const Plane y = crop_plane(rgb_to_y601(img), kBorderCrop);
  std::vector<double> sharp;
  const auto feats = niqe_patch_features(y, 96, &sharp);
  EXPECT_EQ(feats.size(), 4u);
  EXPECT_EQ(sharp.size(), 4u);
  for (const auto& f : feats)
    for (double v : f) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(static_cast<int>(feats[0].size()), kNiqeFeatures);
}

TEST(Pristine, IdenticalImagesLeaveOnlyRegularizer) {
  const auto img = synth_sr_dataset(6, 1, 104)[0];
  const std::vector<ImageRGB> corpus(10, img);
  const auto model = fit_pristine(corpus, 96);
  ASSERT_EQ(model.mean.size(), static_cast<std::size_t>(kNiqeFeatures));
  for (int i = 0; i < kNiqeFeatures; ++i)
    for (int j = 0; j < kNiqeFeatures; ++j)
      EXPECT_NEAR(model.covariance[i * kNiqeFeatures + j], i == j ? 1e-6 : 0.0, 1e-12);
}

TEST(Pristine, DeterministicAndPersistent) {
  const auto corpus = synth_sr_dataset(7, 10, 104);
  const auto a = fit_pristine(corpus, 48);
  const auto b = fit_pristine(corpus, 48);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.covariance, b.covariance);
  const auto path = std::filesystem::temp_directory_path() / "fpsr_pristine_test.txt";
  a.save(path);
  const auto c = PristineModel::load(path);
  EXPECT_EQ(c.mean, a.mean);
  EXPECT_EQ(c.covariance, a.covariance);
  EXPECT_EQ(c.patch_size, 48);
  EXPECT_THROW(fit_pristine(synth_sr_dataset(7, 9, 104), 48), std::invalid_argument);
}

TEST(Pristine, FallbackWhenNoPatchPasses) {
  const auto model = fit_pristine(synth_sr_dataset(8, 10, 104), 48, 1.5);
  EXPECT_TRUE(model.used_fallback);
  EXPECT_FALSE(fit_pristine(synth_sr_dataset(8, 10, 104), 48, 0.5).used_fallback);
}

TEST(Niqe, MemberScoreIsFiniteAndNonNegative) {
  const auto corpus = synth_sr_dataset(9, 12, 104);
  const auto model = fit_pristine(corpus, 48);
  for (int i = 0; i < 3; ++i) {
    const double v = niqe(corpus[i], model);
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
  }
}

TEST(Niqe, NoiseRaisesTheScore) {
  const auto corpus = synth_sr_dataset(10, 20, 200);
  const auto model = fit_pristine(corpus, 96);
  Rng rng(11);
  int wins = 0;
  for (const auto& img : corpus) wins += niqe(img, model) < niqe(add_gaussian_noise(img, 0.1, rng), model);
  EXPECT_GE(wins, 18);
}

TEST(Niqe, FlipInvariantUnderSymmetricPristineModel) {
  // 200 px images leave two whole 96 px patches per row after the border crop,
  // and the mirrored corpus makes the model symmetric in the diagonal features.
  auto corpus = synth_sr_dataset(12, 10, 200);
  const std::size_t n = corpus.size();
  for (std::size_t i = 0; i < n; ++i) corpus.push_back(corpus[i].flip_horizontal());
  const auto model = fit_pristine(corpus, 96);
  for (const auto& img : synth_sr_dataset(13, 5, 200)) {
    const double a = niqe(img, model);
    const double b = niqe(img.flip_horizontal(), model);
    EXPECT_NEAR(a, b, 1e-6 * std::max(1.0, a));
  }
}

TEST(Niqe, TooSmallImageIsRejected) {
  const auto model = fit_pristine(synth_sr_dataset(14, 10, 104), 96);
  EXPECT_ANY_THROW(niqe(ImageRGB(40, 40), model));
}
