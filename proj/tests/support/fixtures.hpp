#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "oracles.hpp"
#include "s3cl/s3cl.hpp"

namespace s3cl::test {

inline oracle::Dense to_dense(const Matrix& m) {
  oracle::Dense d(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  }
  return d;
}

inline Matrix from_dense(const oracle::Dense& d) {
  Matrix m(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(d.empty() ? 0 : d[0].size()));
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < d[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d[i][j];
  }
  return m;
}

inline double max_abs_diff(const Matrix& a, const oracle::Dense& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      worst = std::max(worst, std::abs(a(i, j) - b[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]));
    }
  }
  return worst;
}

inline Matrix gaussian(std::size_t rows, std::size_t cols, Rng& rng, double sd = 1.0) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal(0.0, sd);
  }
  return m;
}

/// Erdos-Renyi graph with Gaussian features. Self-loops and duplicates are
/// left in the raw edge list on purpose.
struct RandomGraph {
  AttributedGraph graph;
  std::vector<std::pair<std::size_t, std::size_t>> raw;
};

inline RandomGraph random_graph(std::size_t n, std::size_t d, double p, Rng& rng) {
  RandomGraph r;
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && rng.bernoulli(p / 2.0)) {
        edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
        r.raw.emplace_back(i, j);
      }
    }
    if (rng.bernoulli(0.1)) {
      edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(i));
      r.raw.emplace_back(i, i);
    }
  }
  r.graph = make_graph(n, edges, gaussian(n, d, rng));
  return r;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("s3cl-" + tag + "-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

}  // namespace s3cl::test
