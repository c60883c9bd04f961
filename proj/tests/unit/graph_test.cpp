#include <gtest/gtest.h>

#include <cmath>

#include "support/fixtures.hpp"

using namespace s3cl;
using s3cl::test::TempDir;
using s3cl::test::write_text;

TEST(LoadGraph, MinimalEdgeFileWithIdentityFeatures) {
  TempDir dir("graph");
  write_text(dir / "e.tsv", "0\t1\n");
  write_text(dir / "x.tsv", "2\t2\n1\t0\n0\t1\n");
  const AttributedGraph g = load_graph(dir / "e.tsv", dir / "x.tsv");
  EXPECT_EQ(g.num_nodes, 2u);
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_EQ(g.edges[0], Edge(0, 1));
  EXPECT_FALSE(g.labels.has_value());
}

TEST(LoadGraph, EdgeBeyondNodeCountIsRangeError) {
  TempDir dir("graph");
  write_text(dir / "e.tsv", "0\t5\n");
  write_text(dir / "x.tsv", "3\t1\n1\n2\n3\n");
  EXPECT_THROW(load_graph(dir / "e.tsv", dir / "x.tsv"), RangeError);
}

TEST(LoadGraph, MalformedLineReportsLineNumber) {
  TempDir dir("graph");
  write_text(dir / "e.tsv", "0\t1\n1\tx\n");
  write_text(dir / "x.tsv", "2\t1\n1\n2\n");
  try {
    load_graph(dir / "e.tsv", dir / "x.tsv");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
}

TEST(LoadGraph, NanFeatureIsDataError) {
  TempDir dir("graph");
  write_text(dir / "e.tsv", "0\t1\n");
  write_text(dir / "x.tsv", "2\t1\n1\nnan\n");
  EXPECT_THROW(load_graph(dir / "e.tsv", dir / "x.tsv"), DataError);
}

TEST(LoadGraph, LabelsAndDuplicateEdgesAreCanonicalized) {
  TempDir dir("graph");
  write_text(dir / "e.tsv", "# comment\n1\t0\n0\t1\n2\t2\n1\t2\n");
  write_text(dir / "x.tsv", "3\t1\n1\n2\n3\n");
  write_text(dir / "y.tsv", "0\n1\n1\n");
  const AttributedGraph g = load_graph(dir / "e.tsv", dir / "x.tsv", dir / "y.tsv");
  EXPECT_EQ(g.edges, (std::vector<Edge>{{0, 1}, {1, 2}}));
  ASSERT_TRUE(g.labels.has_value());
  EXPECT_EQ(*g.labels, (std::vector<int>{0, 1, 1}));
}

TEST(LoadGraph, LabelCountMismatchIsRejected) {
  TempDir dir("graph");
  write_text(dir / "e.tsv", "0\t1\n");
  write_text(dir / "x.tsv", "2\t1\n1\n2\n");
  write_text(dir / "y.tsv", "0\n");
  EXPECT_THROW(load_graph(dir / "e.tsv", dir / "x.tsv", dir / "y.tsv"), Error);
}

TEST(NormalizedAdjacency, IsolatedNodeIsIdentity) {
  const auto g = make_graph(1, {}, Matrix::Ones(1, 1));
  const Matrix t = normalized_adjacency(g).to_dense();
  ASSERT_EQ(t.rows(), 1);
  EXPECT_DOUBLE_EQ(t(0, 0), 1.0);
}

TEST(NormalizedAdjacency, SingleEdgeIsUniformHalf) {
  const auto g = make_graph(2, {{0, 1}}, Matrix::Ones(2, 1));
  const Matrix t = normalized_adjacency(g).to_dense();
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(t(i, j), 0.5, 1e-15);
  }
}

TEST(NormalizedAdjacency, PathGraphEntries) {
  const auto g = make_graph(3, {{0, 1}, {1, 2}}, Matrix::Ones(3, 1));
  const Matrix t = normalized_adjacency(g).to_dense();
  EXPECT_NEAR(t(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(t(0, 1), 1.0 / std::sqrt(6.0), 1e-15);
  EXPECT_NEAR(t(1, 1), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(t(0, 2), 0.0, 0.0);
}

TEST(NormalizedAdjacency, SymmetricWithUnitSpectralBound) {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    auto rg = test::random_graph(3 + rng.index(20), 2, 0.3, rng);
    const Matrix t = normalized_adjacency(rg.graph).to_dense();
    EXPECT_LT((t - t.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    EXPECT_LE(es.eigenvalues().cwiseAbs().maxCoeff(), 1.0 + 1e-12);
    EXPECT_TRUE((t.array() >= 0.0).all());
  }
}

TEST(NormalizedAdjacency, MatchesDenseOracle) {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    auto rg = test::random_graph(2 + rng.index(25), 1, 0.4, rng);
    const Matrix t = normalized_adjacency(rg.graph).to_dense();
    EXPECT_LT(test::max_abs_diff(t, oracle::transition(rg.graph.num_nodes, rg.raw)), 1e-15);
  }
}

TEST(Propagate, SingleStepIsOneProduct) {
  const auto g = make_graph(3, {{0, 1}, {1, 2}}, (Matrix(3, 2) << 1, 2, 3, 4, 5, 6).finished());
  const auto t = normalized_adjacency(g);
  const PropagatedViews v = propagate(t, g.features, 1);
  ASSERT_EQ(v.count(), 1u);
  const Matrix expected = t.to_dense() * g.features;
  EXPECT_LT((v.views[0] - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(v.mixed, v.views[0]);
}

TEST(Propagate, RegularGraphPreservesOnes) {
  // Every node of a 5-cycle has degree 2, so T is doubly stochastic.
  const auto g = make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 0}}, Matrix::Ones(5, 1));
  const PropagatedViews v = propagate(normalized_adjacency(g), g.features, 6);
  for (const Matrix& m : v.views) EXPECT_LT((m.array() - 1.0).abs().maxCoeff(), 1e-14);
  const auto two = make_graph(2, {{0, 1}}, Matrix::Ones(2, 1));
  const PropagatedViews w = propagate(normalized_adjacency(two), two.features, 3);
  for (const Matrix& m : w.views) EXPECT_LT((m.array() - 1.0).abs().maxCoeff(), 1e-15);
}

TEST(Propagate, MatchesDenseMatrixPowers) {
  Rng rng(3);
  auto rg = test::random_graph(10, 4, 0.35, rng);
  const auto t = normalized_adjacency(rg.graph);
  const PropagatedViews v = propagate(t, rg.graph.features, 10);
  const auto dt = oracle::transition(10, rg.raw);
  const auto dx = test::to_dense(rg.graph.features);
  oracle::Dense mixed = oracle::zeros(10, 4);
  for (std::size_t l = 1; l <= 10; ++l) {
    const auto ref = oracle::power_apply(dt, dx, l);
    EXPECT_LT(test::max_abs_diff(v.views[l - 1], ref), 1e-10) << "l=" << l;
    for (std::size_t i = 0; i < 10; ++i) {
      for (std::size_t j = 0; j < 4; ++j) mixed[i][j] += ref[i][j] / 10.0;
    }
  }
  EXPECT_LT(test::max_abs_diff(v.mixed, mixed), 1e-10);
}

TEST(Propagate, ContractsRowNorms) {
  Rng rng(5);
  auto rg = test::random_graph(15, 3, 0.3, rng);
  const PropagatedViews v = propagate(normalized_adjacency(rg.graph), rg.graph.features, 8);
  // ||T||_2 <= 1, so the Frobenius norm never grows from one view to the next.
  double prev = rg.graph.features.norm();
  for (const Matrix& m : v.views) {
    EXPECT_LE(m.norm(), prev + 1e-12);
    prev = m.norm();
  }
}

TEST(Propagate, ZeroStepsIsConfigError) {
  const auto g = make_graph(2, {{0, 1}}, Matrix::Ones(2, 1));
  EXPECT_THROW(propagate(normalized_adjacency(g), g.features, 0), ConfigError);
}

TEST(Propagate, ShapeMismatchIsRejected) {
  const auto g = make_graph(2, {{0, 1}}, Matrix::Ones(2, 1));
  EXPECT_THROW(propagate(normalized_adjacency(g), Matrix::Ones(3, 1), 2), RangeError);
}
