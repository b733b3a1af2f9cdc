#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "grpo_tta/numerics.hpp"

namespace grpo_tta {
namespace {

TEST(Vec64Test, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(Vec64(std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(Vec64({1.0, std::numeric_limits<double>::quiet_NaN()}), std::invalid_argument);
  EXPECT_THROW(Vec64({std::numeric_limits<double>::infinity()}), std::invalid_argument);
  EXPECT_THROW(Mat64(2, 2, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST(SoftmaxTest, Examples) {
  const Vec64 uniform = softmax(Vec64{3.0, 3.0, 3.0}, 1.0);
  for (double p : uniform) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);

  EXPECT_EQ(softmax(Vec64{5.0}, 0.01)[0], 1.0);

  const Vec64 p = softmax(Vec64{std::log(2.0), 0.0}, 1.0);
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(SoftmaxTest, Errors) {
  EXPECT_THROW(softmax(Vec64{1.0}, 0.0), std::invalid_argument);
  EXPECT_THROW(softmax(Vec64{1.0}, -1.0), std::invalid_argument);
}

TEST(SoftmaxTest, SmallTemperatureDoesNotOverflow) {
  const Vec64 p = softmax(Vec64{1.0, 0.99, -1.0}, 0.01);
  double total = 0.0;
  for (double x : p) {
    EXPECT_TRUE(std::isfinite(x));
    total += x;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_GT(p[0], p[1]);
}

TEST(SoftmaxTest, PropertySumsToOneAndArgmaxInvariant) {
  SeededRng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    Vec64 logits = gaussian_sample(rng, n, 5.0);
    const double temperature = 0.01 + 2.0 * rng.uniform();
    const Vec64 p = softmax(logits, temperature);
    double total = 0.0;
    for (double x : p) {
      EXPECT_GT(x, 0.0);
      EXPECT_LE(x, 1.0);
      total += x;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);

    Vec64 shifted = logits;
    const double c = 100.0 * rng.normal();
    for (std::size_t i = 0; i < n; ++i) shifted[i] += c;
    EXPECT_EQ(argmax(softmax(shifted, temperature).span()), argmax(p.span()));
    EXPECT_EQ(argmax(softmax(logits, 3.7).span()), argmax(p.span()));
  }
}

TEST(EntropyTest, Examples) {
  EXPECT_NEAR(shannon_entropy(Vec64{0.25, 0.25, 0.25, 0.25}), std::log(4.0), 1e-12);
  EXPECT_EQ(shannon_entropy(Vec64{1.0, 0.0, 0.0}), 0.0);
  EXPECT_NEAR(shannon_entropy(Vec64{0.5, 0.5}), 0.693147, 1e-6);
  EXPECT_THROW(shannon_entropy(Vec64{0.5, 0.6}), std::invalid_argument);
  EXPECT_THROW(shannon_entropy(Vec64{1.5, -0.5}), std::invalid_argument);
}

TEST(EntropyTest, BoundedByLogLengthWithEqualityOnlyAtUniform) {
  SeededRng rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.below(10);
    const Vec64 p = softmax(gaussian_sample(rng, n, 1.0), 1.0);
    const double h = shannon_entropy(p);
    EXPECT_GE(h, 0.0);
    EXPECT_LT(h, std::log(static_cast<double>(n)));
  }
  for (std::size_t n = 1; n < 9; ++n) {
    const Vec64 u(std::vector<double>(n, 1.0 / static_cast<double>(n)));
    EXPECT_NEAR(shannon_entropy(u), std::log(static_cast<double>(n)), 1e-9);
  }
}

TEST(CosineTest, Examples) {
  const Vec64 u = l2_normalize(Vec64{1.0, 2.0, -2.0});
  EXPECT_NEAR(cosine(u, u), 1.0, 1e-15);
  EXPECT_EQ(cosine(Vec64{1.0, 0.0}, Vec64{0.0, 3.0}), 0.0);
  EXPECT_NEAR(cosine(u, Vec64{-u[0], -u[1], -u[2]}), -1.0, 1e-15);
  EXPECT_THROW(cosine(Vec64{0.0, 0.0}, Vec64{1.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(cosine(Vec64{1.0}, Vec64{1.0, 0.0}), std::invalid_argument);
}

TEST(CosineTest, PositiveScaleInvariance) {
  SeededRng rng(13);
  for (int trial = 0; trial < 300; ++trial) {
    const Vec64 u = gaussian_sample(rng, 6, 1.0);
    const Vec64 v = gaussian_sample(rng, 6, 1.0);
    const double a = 0.01 + 10.0 * rng.uniform();
    const double b = 0.01 + 10.0 * rng.uniform();
    Vec64 au = u;
    Vec64 bv = v;
    for (std::size_t i = 0; i < 6; ++i) {
      au[i] *= a;
      bv[i] *= b;
    }
    const double c = cosine(u, v);
    EXPECT_GE(c, -1.0);
    EXPECT_LE(c, 1.0);
    EXPECT_NEAR(cosine(au, bv), c, 1e-12);
  }
}

TEST(NormalizeTest, Examples) {
  const Vec64 v = l2_normalize(Vec64{3.0, 4.0});
  EXPECT_NEAR(v[0], 0.6, 1e-15);
  EXPECT_NEAR(v[1], 0.8, 1e-15);
  const Vec64 e{0.0, 1.0, 0.0};
  EXPECT_EQ(l2_normalize(e), e);
  EXPECT_THROW(l2_normalize(Vec64{0.0, 0.0}), DegenerateInput);
  EXPECT_THROW(l2_normalize(Vec64{1e-14, 0.0}), DegenerateInput);
}

TEST(NormalizeTest, IdempotentAndUnitNorm) {
  SeededRng rng(14);
  for (int trial = 0; trial < 300; ++trial) {
    const Vec64 v = gaussian_sample(rng, 1 + rng.below(16), 3.0);
    const Vec64 once = l2_normalize(v);
    const Vec64 twice = l2_normalize(once);
    EXPECT_NEAR(norm(once.span()), 1.0, 1e-12);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(twice[i], once[i], 1e-15);
  }
}

TEST(GaussianTest, ZeroSigmaAndDeterminism) {
  SeededRng a(5);
  for (double x : gaussian_sample(a, 7, 0.0)) EXPECT_EQ(x, 0.0);

  SeededRng r1(99);
  SeededRng r2(99);
  EXPECT_EQ(gaussian_sample(r1, 16, 1.5), gaussian_sample(r2, 16, 1.5));
  EXPECT_THROW(gaussian_sample(r1, 0, 1.0), std::invalid_argument);
}

// Regression pin for the seed-42 stream; recorded from the first run.
TEST(GaussianTest, Seed42Pinned) {
  SeededRng rng(42);
  const Vec64 v = gaussian_sample(rng, 4, 1.0);
  const double expected[] = {0x1.f289e482406a7p+0, -0x1.853c39f8da654p-2, 0x1.0a9b63837412fp-9,
                            0x1.f7c8cfb121e2p-3};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(v[i], expected[i]) << i;
}

TEST(GaussianTest, MomentsAreRoughlyStandard) {
  SeededRng rng(3);
  const Vec64 v = gaussian_sample(rng, 200000, 2.0);
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(std::sqrt(var), 2.0, 0.02);
}

TEST(SeededRngTest, DerivedStreamsDiffer) {
  SeededRng a = SeededRng::derive(7, 0);
  SeededRng b = SeededRng::derive(7, 1);
  SeededRng c = SeededRng::derive(7, 0);
  const auto x = a.next_u64();
  EXPECT_NE(x, b.next_u64());
  EXPECT_EQ(x, c.next_u64());
}

}  // namespace
}  // namespace grpo_tta
