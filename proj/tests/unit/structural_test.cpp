#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "support/fixtures.hpp"

using namespace s3cl;

namespace {

NegativeBatch random_batch(std::size_t n, std::size_t m, std::size_t views, Rng& rng) {
  return sample_negative_batch(n, std::nullopt, m, views, rng);
}

std::vector<Matrix> random_views(std::size_t l, std::size_t n, std::size_t d, Rng& rng) {
  std::vector<Matrix> v;
  for (std::size_t i = 0; i < l; ++i) v.push_back(l2_normalize_rows(test::gaussian(n, d, rng)));
  return v;
}

std::vector<std::vector<oracle::Negative>> to_oracle(const NegativeBatch& b) {
  std::vector<std::vector<oracle::Negative>> out(b.anchors());
  for (std::size_t i = 0; i < b.anchors(); ++i) {
    for (const auto& s : b.of(i)) out[i].push_back({s.node, s.view});
  }
  return out;
}

std::vector<oracle::Dense> to_oracle(const std::vector<Matrix>& views) {
  std::vector<oracle::Dense> out;
  for (const Matrix& v : views) out.push_back(test::to_dense(v));
  return out;
}

}  // namespace

TEST(SampleNegatives, OnlyEligibleNodeIsChosen) {
  Rng rng(1);
  const std::vector<int> z = {0, 1};
  const NegativeDraw d = sample_negatives(0, 2, std::span<const int>(z), 3, 4, rng);
  ASSERT_EQ(d.samples.size(), 3u);
  EXPECT_FALSE(d.fell_back);
  for (const auto& s : d.samples) {
    EXPECT_EQ(s.node, 1u);
    EXPECT_LT(s.view, 4u);
  }
}

TEST(SampleNegatives, LabelFreeExcludesAnchor) {
  Rng rng(2);
  const NegativeDraw d = sample_negatives(2, 5, std::nullopt, 2000, 3, rng);
  std::set<NodeId> seen;
  std::set<std::uint32_t> views;
  for (const auto& s : d.samples) {
    seen.insert(s.node);
    views.insert(s.view);
  }
  EXPECT_EQ(seen, (std::set<NodeId>{0, 1, 3, 4}));
  EXPECT_EQ(views, (std::set<std::uint32_t>{0, 1, 2}));
  EXPECT_FALSE(d.fell_back);
}

TEST(SampleNegatives, SharedLabelFallsBack) {
  Rng rng(3);
  const std::vector<int> z = {0, 0, 0};
  const NegativeDraw d = sample_negatives(0, 3, std::span<const int>(z), 500, 1, rng);
  EXPECT_TRUE(d.fell_back);
  std::set<NodeId> seen;
  for (const auto& s : d.samples) seen.insert(s.node);
  EXPECT_EQ(seen, (std::set<NodeId>{1, 2}));
}

TEST(SampleNegatives, FilteredDrawsAreUniformOverOtherClusters) {
  Rng rng(4);
  const std::vector<int> z = {0, 1, 2, 1, 0, 2, 2};
  const NegativeDraw d = sample_negatives(1, z.size(), std::span<const int>(z), 70000, 1, rng);
  std::vector<double> counts(z.size(), 0.0);
  for (const auto& s : d.samples) counts[s.node] += 1.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z[i] == 1) {
      EXPECT_EQ(counts[i], 0.0);
    } else {
      EXPECT_NEAR(counts[i] / 70000.0, 0.2, 0.01) << "node " << i;
    }
  }
}

TEST(SampleNegatives, ZeroCountIsConfigError) {
  Rng rng(5);
  EXPECT_THROW(sample_negatives(0, 3, std::nullopt, 0, 1, rng), ConfigError);
}

TEST(SampleNegatives, SingleNodeGraphHasNoNegatives) {
  Rng rng(6);
  EXPECT_THROW(sample_negatives(0, 1, std::nullopt, 1, 1, rng), DataError);
}

TEST(SampleNegativeBatch, CountsFallbacks) {
  Rng rng(7);
  const std::vector<int> z = {0, 0, 0, 0};
  const NegativeBatch b = sample_negative_batch(4, std::span<const int>(z), 3, 2, rng);
  EXPECT_EQ(b.anchors(), 4u);
  EXPECT_EQ(b.fallback_count, 4u);
  const std::vector<int> mixed = {0, 1, 0, 1};
  Rng rng2(7);
  EXPECT_EQ(sample_negative_batch(4, std::span<const int>(mixed), 3, 2, rng2).fallback_count, 0u);
}

TEST(StructuralLoss, UniformSimilaritiesGiveLogCandidateCount) {
  const std::size_t n = 6, l = 4, m = 5;
  std::vector<Matrix> views(l, Matrix::Constant(n, 3, 1.0 / std::sqrt(3.0)));
  Rng rng(8);
  const NegativeBatch b = random_batch(n, m, l, rng);
  const StructuralLoss s = structural_loss(views, b, 0.5);
  EXPECT_NEAR(s.value, static_cast<double>(n * (l - 1)) * std::log(static_cast<double>(m + l - 1)), 1e-10);
}

TEST(StructuralLoss, DominantPositiveDrivesLossToZero) {
  // Node 0 sits at e1 and node 1 at -e1 in both views: the positive has
  // similarity 1 and every negative (the other node) has similarity -1.
  const Matrix x = (Matrix(2, 2) << 1, 0, -1, 0).finished();
  const std::vector<Matrix> views = {x, x};
  Rng rng(9);
  const NegativeBatch b = random_batch(2, 3, 2, rng);
  double prev = std::numeric_limits<double>::infinity();
  for (double tau : {1.0, 0.3, 0.1, 0.03, 0.01}) {
    const double value = structural_loss(views, b, tau).value;
    EXPECT_NEAR(value, 2.0 * std::log1p(3.0 * std::exp(-2.0 / tau)), 1e-12);
    // Non-increasing: once exp(-2/tau) is below the resolution of the
    // log-sum-exp the loss rounds to exactly zero.
    EXPECT_LE(value, prev);
    prev = value;
  }
  EXPECT_LE(prev, 1e-12);
}

TEST(StructuralLoss, MatchesBruteForceEnumeration) {
  // N = 3, L = 2, M = 2 with hand-set unit vectors.
  const double r = 1.0 / std::sqrt(2.0);
  const Matrix v1 = (Matrix(3, 2) << 1, 0, 0, 1, r, r).finished();
  const Matrix v2 = (Matrix(3, 2) << r, r, -r, r, 0, -1).finished();
  NegativeBatch b;
  b.per_anchor = 2;
  b.samples = {{1, 0}, {2, 1}, {0, 1}, {2, 0}, {1, 1}, {0, 0}};
  const std::vector<Matrix> views = {v1, v2};
  for (double tau : {1.0, 0.5}) {
    const double got = structural_loss(views, b, tau).value;
    EXPECT_NEAR(got, oracle::structural_loss(to_oracle(views), to_oracle(b), tau), 1e-12);
  }
}

TEST(StructuralLoss, MatchesOracleOnRandomInstances) {
  Rng rng(10);
  for (int rep = 0; rep < 25; ++rep) {
    const std::size_t n = 2 + rng.index(8), l = 1 + rng.index(5), m = 1 + rng.index(6);
    const auto views = random_views(l, n, 3, rng);
    const NegativeBatch b = random_batch(n, m, l, rng);
    const double tau = rng.uniform(0.2, 2.0);
    const double got = structural_loss(views, b, tau).value;
    const double want = oracle::structural_loss(to_oracle(views), to_oracle(b), tau);
    EXPECT_NEAR(got, want, 1e-10 * std::max(1.0, std::abs(want)));
  }
}

TEST(StructuralLoss, TermsAreNonnegative) {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const auto views = random_views(3, 5, 4, rng);
    const NegativeBatch b = random_batch(5, 4, 3, rng);
    EXPECT_GE(structural_loss(views, b, rng.uniform(0.1, 1.0)).value, 0.0);
  }
}

TEST(StructuralLoss, InvariantUnderCommonRotation) {
  Rng rng(12);
  const auto views = random_views(4, 7, 5, rng);
  const NegativeBatch b = random_batch(7, 6, 4, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Eigen::MatrixXd(test::gaussian(5, 5, rng)));
  const Matrix q = qr.householderQ();
  std::vector<Matrix> rotated;
  for (const Matrix& v : views) rotated.push_back(v * q);
  EXPECT_NEAR(structural_loss(views, b, 0.7).value, structural_loss(rotated, b, 0.7).value, 1e-11);
}

TEST(StructuralLoss, RowGradientOnlySeesAnchorsThatUseTheRow) {
  // Row (node 4, view 2) is a candidate only for anchor 4 (as a positive).
  // Rewiring the negatives of every other anchor must leave its gradient
  // bit-identical, and a row never referenced as a negative by anchor i gets
  // nothing from anchor i.
  Rng rng(13);
  const std::size_t n = 6, l = 3;
  const auto views = random_views(l, n, 4, rng);
  NegativeBatch a;
  a.per_anchor = 2;
  NegativeBatch b;
  b.per_anchor = 2;
  for (std::size_t i = 0; i < n; ++i) {
    a.samples.push_back({static_cast<NodeId>((i + 1) % 4), 1});
    a.samples.push_back({static_cast<NodeId>((i + 2) % 4), 0});
    b.samples.push_back({static_cast<NodeId>((i + 3) % 4), 2});
    b.samples.push_back({static_cast<NodeId>(i == 4 ? 1 : (i + 1) % 4), i == 4 ? 1u : 0u});
  }
  // Anchor 4 keeps the same negatives in both batches.
  b.samples[8] = a.samples[8];
  b.samples[9] = a.samples[9];
  const StructuralLoss ga = structural_loss(views, a, 0.5);
  const StructuralLoss gb = structural_loss(views, b, 0.5);
  EXPECT_EQ(ga.grads[2].row(4), gb.grads[2].row(4));
  EXPECT_EQ(ga.grads[1].row(4), gb.grads[1].row(4));
  EXPECT_NE(ga.grads[2].row(0), gb.grads[2].row(0));
}

TEST(StructuralLoss, UnreferencedRowsGetExactlyZeroGradient) {
  // With a single view there are no positives, so no row is in any candidate
  // set and the gradient must be exactly zero (and the loss too).
  Rng rng(14);
  const auto views = random_views(1, 5, 3, rng);
  const NegativeBatch b = random_batch(5, 3, 1, rng);
  const StructuralLoss s = structural_loss(views, b, 0.5);
  EXPECT_EQ(s.value, 0.0);
  EXPECT_EQ(s.grads[0], Matrix::Zero(5, 3));
}

TEST(StructuralLoss, NoOverflowAtSharpTemperature) {
  Rng rng(15);
  const auto views = random_views(3, 6, 4, rng);
  const NegativeBatch b = random_batch(6, 5, 3, rng);
  const StructuralLoss s = structural_loss(views, b, 1e-3);
  EXPECT_TRUE(std::isfinite(s.value));
  for (const Matrix& g : s.grads) EXPECT_TRUE(g.allFinite());
  // Identical rows: every logit is 1e3, the uniform answer must survive.
  std::vector<Matrix> same(3, Matrix::Constant(6, 4, 0.5));
  EXPECT_NEAR(structural_loss(same, b, 1e-3).value, 6.0 * 2.0 * std::log(7.0), 1e-9);
}

TEST(StructuralLoss, GradientMatchesCentralDifferencesOnViews) {
  Rng rng(16);
  const auto views = random_views(3, 5, 3, rng);
  const NegativeBatch b = random_batch(5, 4, 3, rng);
  const StructuralLoss s = structural_loss(views, b, 0.6);
  const double h = 1e-6;
  for (std::size_t v = 0; v < views.size(); ++v) {
    for (Eigen::Index k = 0; k < views[v].size(); ++k) {
      auto up = views;
      auto down = views;
      up[v].data()[k] += h;
      down[v].data()[k] -= h;
      const double num = (structural_loss(up, b, 0.6).value - structural_loss(down, b, 0.6).value) / (2 * h);
      EXPECT_NEAR(s.grads[v].data()[k], num, 1e-6 * std::max(1.0, std::abs(num)));
    }
  }
}

TEST(StructuralLoss, ErrorsAreTyped) {
  Rng rng(17);
  const auto views = random_views(2, 4, 3, rng);
  const NegativeBatch b = random_batch(4, 2, 2, rng);
  EXPECT_THROW(structural_loss(views, b, 0.0), ConfigError);
  EXPECT_THROW(structural_loss(views, b, -1.0), ConfigError);
  auto bad = views;
  bad[1](0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(structural_loss(bad, b, 1.0), NumericalError);
  NegativeBatch out_of_range = b;
  out_of_range.samples[0].view = 7;
  EXPECT_THROW(structural_loss(views, out_of_range, 1.0), RangeError);
  const NegativeBatch wrong = random_batch(3, 2, 2, rng);
  EXPECT_THROW(structural_loss(views, wrong, 1.0), RangeError);
}
