#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "grpo_tta/policy.hpp"

namespace grpo_tta {
namespace {

std::vector<Vec64> random_units(SeededRng& rng, std::size_t count, std::size_t dim) {
  std::vector<Vec64> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(l2_normalize(gaussian_sample(rng, dim, 1.0)));
  return out;
}

EmbeddingTable random_table(SeededRng& rng, std::size_t classes, std::size_t dim, double tau) {
  return EmbeddingTable::with_default_names(random_units(rng, classes, dim), tau);
}

TEST(EmbeddingTableTest, Invariants) {
  EXPECT_THROW(EmbeddingTable::with_default_names({Vec64{1.0, 0.0}}), std::invalid_argument);
  EXPECT_THROW(EmbeddingTable::with_default_names({Vec64{1.0, 0.0}, Vec64{0.5, 0.0}}),
               std::invalid_argument);
  EXPECT_THROW(EmbeddingTable::with_default_names({Vec64{1.0, 0.0}, Vec64{0.0, 1.0}}, 0.0),
               std::invalid_argument);
  EXPECT_THROW(EmbeddingTable::with_default_names({Vec64{1.0, 0.0}, Vec64{1.0}}),
               std::invalid_argument);
  const auto t = EmbeddingTable::with_default_names({Vec64{1.0, 0.0}, Vec64{0.0, 1.0}});
  EXPECT_EQ(t.class_names()[1], "class_1");
  EXPECT_EQ(t.temperature(), 0.01);
}

TEST(ProjectTest, IdentityAndScale) {
  const Vec64 z = l2_normalize(Vec64{0.3, -0.2, 0.9, 0.1});
  const Vec64 p = project(z, ProjectorParams::identity(4));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p[i], z[i], 1e-15);

  ProjectorParams twice = ProjectorParams::identity(4);
  for (std::size_t i = 0; i < 4; ++i) twice.W(i, i) = 2.0;
  const Vec64 q = project(z, twice);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(q[i], z[i], 1e-15);
}

TEST(ProjectTest, BasisVectorPicksNormalizedColumn) {
  SeededRng rng(21);
  ProjectorParams theta = ProjectorParams::identity(4);
  for (double& x : theta.W.span()) x = rng.normal();
  const Vec64 p = project(Vec64{1.0, 0.0, 0.0, 0.0}, theta);
  double n = 0.0;
  for (std::size_t r = 0; r < 4; ++r) n += theta.W(r, 0) * theta.W(r, 0);
  n = std::sqrt(n);
  for (std::size_t r = 0; r < 4; ++r) EXPECT_NEAR(p[r], theta.W(r, 0) / n, 1e-15);
}

TEST(ProjectTest, BiasAndDegenerate) {
  ProjectorParams theta = ProjectorParams::identity(2, true);
  theta.b = Vec64{1.0, 0.0};
  const Vec64 p = project(Vec64{0.0, 1.0}, theta);
  EXPECT_NEAR(p[0], 1.0 / std::sqrt(2.0), 1e-15);
  theta.b = Vec64{-1.0, 0.0};
  EXPECT_THROW(project(Vec64{1.0, 0.0}, theta), DegenerateInput);
  EXPECT_THROW(project(Vec64{1.0, 0.0, 0.0}, theta), std::invalid_argument);
}

TEST(ClassDistributionTest, Examples) {
  // equidistant: visual along e3, texts in the e1/e2 plane
  const auto sym = EmbeddingTable::with_default_names(
      {Vec64{1.0, 0.0, 0.0}, Vec64{0.0, 1.0, 0.0}, Vec64{-1.0, 0.0, 0.0}}, 0.01);
  for (double p : class_distribution(Vec64{0.0, 0.0, 1.0}, sym)) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);

  const auto sep = EmbeddingTable::with_default_names(
      {Vec64{1.0, 0.0, 0.0}, Vec64{0.0, 1.0, 0.0}, Vec64{0.0, 0.0, 1.0}}, 0.01);
  const Vec64 p = class_distribution(sep.text(1), sep);
  EXPECT_EQ(argmax(p.span()), 1u);
  EXPECT_GT(p[1], 0.99);

  // cosines (0.8, 0.6) at tau 1
  const auto two = EmbeddingTable::with_default_names({Vec64{1.0, 0.0}, Vec64{0.0, 1.0}}, 1.0);
  const Vec64 q = class_distribution(Vec64{0.8, 0.6}, two);
  EXPECT_NEAR(q[0], 0.549834, 1e-6);
  EXPECT_NEAR(q[1], 0.450166, 1e-6);
}

TEST(ClassDistributionTest, TextScaleIsAbsorbedByNormalization) {
  SeededRng rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vec64> raw;
    std::vector<Vec64> scaled;
    const double s = 0.1 + 5.0 * rng.uniform();
    for (int c = 0; c < 5; ++c) {
      Vec64 t = gaussian_sample(rng, 6, 1.0);
      raw.push_back(l2_normalize(t));
      for (std::size_t i = 0; i < t.size(); ++i) t[i] *= s;
      scaled.push_back(l2_normalize(t));
    }
    const auto a = EmbeddingTable::with_default_names(raw, 0.05);
    const auto b = EmbeddingTable::with_default_names(scaled, 0.05);
    const Vec64 v = l2_normalize(gaussian_sample(rng, 6, 1.0));
    const Vec64 pa = class_distribution(v, a);
    const Vec64 pb = class_distribution(v, b);
    for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(pa[c], pb[c], 1e-12);
  }
}

// Two classes along e1/e2; views whose angles set their entropies.
TEST(FilterViewsTest, SelectsLowestEntropy) {
  const auto table = EmbeddingTable::with_default_names({Vec64{1.0, 0.0}, Vec64{0.0, 1.0}}, 1.0);
  const auto theta = ProjectorParams::identity(2);
  SampleViews s{Vec64{1.0, 0.0}, {Vec64{1.0, 0.0}, Vec64{1.0, 1.0}, Vec64{1.0, 0.3}}};
  std::vector<double> h;
  for (const auto& v : s.views) h.push_back(shannon_entropy(class_distribution(project(v, theta), table)));
  ASSERT_LT(h[0], h[2]);
  ASSERT_LT(h[2], h[1]);

  EXPECT_EQ(filter_views(s, theta, table, 1.0), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(filter_views(s, theta, table, 2.0 / 3.0), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(filter_views(s, theta, table, 0.01), (std::vector<std::size_t>{0}));
  EXPECT_THROW(filter_views(s, theta, table, 0.0), std::invalid_argument);
  EXPECT_THROW(filter_views(SampleViews{Vec64{1.0, 0.0}, {}}, theta, table, 0.5),
               std::invalid_argument);
}

TEST(FilterViewsTest, TenViewsTenPercentKeepsOne) {
  SeededRng rng(23);
  const auto table = random_table(rng, 5, 6, 0.05);
  SampleViews s{gaussian_sample(rng, 6, 1.0), random_units(rng, 10, 6)};
  const auto theta = ProjectorParams::identity(6);
  const auto kept = filter_views(s, theta, table, 0.1);
  ASSERT_EQ(kept.size(), 1u);
  double best = 1e9;
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    const double h = shannon_entropy(class_distribution(project(s.views[i], theta), table));
    if (h < best) {
      best = h;
      best_i = i;
    }
  }
  EXPECT_EQ(kept[0], best_i);
}

TEST(FilterViewsTest, SizeMonotoneInKeepFraction) {
  SeededRng rng(24);
  const auto table = random_table(rng, 6, 5, 0.05);
  SampleViews s{gaussian_sample(rng, 5, 1.0), random_units(rng, 17, 5)};
  const auto theta = ProjectorParams::identity(5);
  std::size_t last = 0;
  for (int i = 1; i <= 20; ++i) {
    const auto kept = filter_views(s, theta, table, i / 20.0);
    EXPECT_GE(kept.size(), last);
    EXPECT_TRUE(std::is_sorted(kept.begin(), kept.end()));
    last = kept.size();
  }
  EXPECT_EQ(last, 17u);
}

TEST(AggregateTest, MeanOfPerViewDistributions) {
  SeededRng rng(25);
  const auto table = random_table(rng, 7, 6, 0.05);
  ProjectorParams theta = ProjectorParams::identity(6);
  for (double& x : theta.W.span()) x += 0.2 * rng.normal();
  const auto views = random_units(rng, 4, 6);

  const Vec64 one = aggregate_distribution(std::span(views).first(1), theta, table);
  EXPECT_EQ(one, class_distribution(project(views[0], theta), table));

  const Vec64 two = aggregate_distribution(std::span(views).first(2), theta, table);
  const Vec64 p = class_distribution(project(views[0], theta), table);
  const Vec64 q = class_distribution(project(views[1], theta), table);
  for (std::size_t c = 0; c < 7; ++c) EXPECT_NEAR(two[c], (p[c] + q[c]) / 2.0, 1e-15);

  // independent oracle: explicit exp/sum per view
  const Vec64 agg = aggregate_distribution(views, theta, table);
  double total = 0.0;
  for (std::size_t c = 0; c < 7; ++c) {
    double oracle = 0.0;
    for (const auto& v : views) {
      std::vector<double> y(6, 0.0);
      for (std::size_t r = 0; r < 6; ++r) {
        for (std::size_t k = 0; k < 6; ++k) y[r] += theta.W(r, k) * v[k];
      }
      const double ny = std::sqrt(std::inner_product(y.begin(), y.end(), y.begin(), 0.0));
      double denom = 0.0;
      double numer = 0.0;
      for (std::size_t k = 0; k < 7; ++k) {
        double dot = 0.0;
        for (std::size_t r = 0; r < 6; ++r) dot += y[r] / ny * table.text(k)[r];
        const double e = std::exp(dot / 0.05);
        denom += e;
        if (k == c) numer = e;
      }
      oracle += numer / denom / 4.0;
    }
    EXPECT_NEAR(agg[c], oracle, 1e-12);
    total += agg[c];
  }
  EXPECT_NEAR(total, 1.0, 1e-9);
  EXPECT_THROW(aggregate_distribution(std::span<const Vec64>(), theta, table), std::invalid_argument);
}

TEST(TopKTest, Examples) {
  EXPECT_EQ(topk_candidates(Vec64{0.1, 0.5, 0.4}, 3).class_ids, (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_EQ(topk_candidates(Vec64{0.1, 0.5, 0.4}, 2).class_ids, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(topk_candidates(Vec64{0.3, 0.3, 0.4}, 2).class_ids, (std::vector<std::size_t>{2, 0}));
  EXPECT_THROW(topk_candidates(Vec64{0.5, 0.5}, 3), std::invalid_argument);
  EXPECT_THROW(topk_candidates(Vec64{0.5, 0.5}, 0), std::invalid_argument);
}

TEST(TopKTest, InvariantUnderMonotoneTransform) {
  SeededRng rng(26);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t c = 2 + rng.below(10);
    const Vec64 p = softmax(gaussian_sample(rng, c, 1.0), 1.0);
    std::vector<double> t(c);
    for (std::size_t i = 0; i < c; ++i) t[i] = std::log(p[i]) * 3.0 + 7.0;
    const std::size_t k = 1 + rng.below(c);
    EXPECT_EQ(topk_candidates(p, k), topk_candidates(Vec64(t), k));
  }
}

TEST(CandidatePolicyTest, Examples) {
  SeededRng rng(27);
  const auto table = random_table(rng, 5, 4, 0.01);
  const auto theta = ProjectorParams::identity(4);
  const auto views = random_units(rng, 2, 4);
  const PolicySnapshot single = candidate_policy(views, theta, table, CandidateGroup{{3}});
  EXPECT_EQ(single.probs[0], 1.0);

  // view at equal angle to e1 and e2
  const auto sym = EmbeddingTable::with_default_names({Vec64{1.0, 0.0}, Vec64{0.0, 1.0}}, 0.01);
  const std::vector<Vec64> diag{Vec64{1.0, 1.0}};
  const PolicySnapshot half = candidate_policy(diag, ProjectorParams::identity(2), sym, CandidateGroup{{0, 1}});
  EXPECT_NEAR(half.probs[0], 0.5, 1e-15);
  EXPECT_NEAR(half.probs[1], 0.5, 1e-15);

  EXPECT_THROW(candidate_policy(views, theta, table, CandidateGroup{{1, 1}}), std::invalid_argument);
  EXPECT_THROW(candidate_policy(views, theta, table, CandidateGroup{{9}}), std::invalid_argument);
}

TEST(CandidatePolicyTest, MatchesCosineAverageThenSoftmaxOracle) {
  SeededRng rng(28);
  const auto table = random_table(rng, 6, 5, 0.1);
  ProjectorParams theta = ProjectorParams::identity(5, true);
  for (double& x : theta.W.span()) x += 0.3 * rng.normal();
  for (double& x : theta.b.span()) x = 0.1 * rng.normal();
  const auto views = random_units(rng, 2, 5);
  const CandidateGroup group{{4, 0, 2}};
  const PolicySnapshot snap = candidate_policy(views, theta, table, group);

  std::vector<double> logits(3, 0.0);
  for (const auto& v : views) {
    std::vector<double> y(5);
    for (std::size_t r = 0; r < 5; ++r) {
      y[r] = theta.b[r];
      for (std::size_t k = 0; k < 5; ++k) y[r] += theta.W(r, k) * v[k];
    }
    const double ny = std::sqrt(std::inner_product(y.begin(), y.end(), y.begin(), 0.0));
    for (std::size_t i = 0; i < 3; ++i) {
      double dot = 0.0;
      for (std::size_t r = 0; r < 5; ++r) dot += y[r] / ny * table.text(group.class_ids[i])[r];
      logits[i] += dot / 2.0 / 0.1;
    }
  }
  double denom = 0.0;
  for (double l : logits) denom += std::exp(l);
  double total = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(snap.logits[i], logits[i], 1e-12);
    EXPECT_NEAR(snap.probs[i], std::exp(logits[i]) / denom, 1e-12);
    EXPECT_GT(snap.probs[i], 0.0);
    total += snap.probs[i];
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_EQ(snap.source_params, theta);
}

}  // namespace
}  // namespace grpo_tta
