#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "s3cl/error.hpp"
#include "s3cl/matrix.hpp"

namespace s3cl {

using NodeId = std::uint32_t;
using Edge = std::pair<NodeId, NodeId>;

/// Undirected attributed graph. Edges are stored canonically (first < second),
/// sorted and unique; self-loops are dropped on ingestion because the
/// normalized transition adds the identity anyway.
struct AttributedGraph {
  std::size_t num_nodes = 0;
  std::vector<Edge> edges;
  Matrix features;
  std::optional<std::vector<int>> labels;

  std::size_t feature_dim() const { return static_cast<std::size_t>(features.cols()); }
};

/// Builds a validated graph from raw (possibly duplicated, reversed or
/// self-looped) edges.
inline AttributedGraph make_graph(std::size_t num_nodes, const std::vector<Edge>& raw_edges,
                                  Matrix features,
                                  std::optional<std::vector<int>> labels = std::nullopt) {
  if (static_cast<std::size_t>(features.rows()) != num_nodes) {
    throw DataError("feature matrix has " + std::to_string(features.rows()) + " rows, expected " +
                    std::to_string(num_nodes));
  }
  if (!features.allFinite()) throw DataError("feature matrix contains non-finite values");
  if (labels) {
    if (labels->size() != num_nodes) {
      throw DataError("label vector has " + std::to_string(labels->size()) + " entries, expected " +
                      std::to_string(num_nodes));
    }
    for (int y : *labels) {
      if (y < 0) throw DataError("negative class id in labels");
    }
  }
  AttributedGraph g;
  g.num_nodes = num_nodes;
  g.edges.reserve(raw_edges.size());
  for (auto [a, b] : raw_edges) {
    if (a >= num_nodes || b >= num_nodes) {
      throw RangeError("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                       ") references a node outside [0, " + std::to_string(num_nodes) + ")");
    }
    if (a == b) continue;
    g.edges.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  g.features = std::move(features);
  g.labels = std::move(labels);
  return g;
}

namespace detail {

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

inline bool blank_or_comment(std::string_view line) {
  auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string_view::npos || line[pos] == '#';
}

// Splits on tabs or spaces; empty fields are skipped.
inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == '\t' || line[i] == ' ' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != '\t' && line[j] != ' ' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename Int>
bool parse_uint(std::string_view s, Int& out) {
  if (s.empty() || s.size() > 19) return false;
  std::uint64_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
    v = v * 10 + static_cast<std::uint64_t>(c - '0');
    if (v > std::numeric_limits<Int>::max()) return false;
  }
  out = static_cast<Int>(v);
  return true;
}

inline bool parse_real(std::string_view s, double& out) {
  std::string tmp(s);
  char* end = nullptr;
  out = std::strtod(tmp.c_str(), &end);
  return end != tmp.c_str() && *end == '\0';
}

}  // namespace detail

/// Reads a dense matrix in the `N<TAB>D` header + N rows format shared by
/// feature and embedding files.
inline Matrix read_dense_matrix(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  const std::string file = path.string();
  std::string line;
  std::size_t lineno = 0;
  std::size_t rows = 0, cols = 0;
  bool have_header = false;
  Matrix m;
  std::size_t r = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank_or_comment(line)) continue;
    auto fields = detail::split_fields(line);
    if (!have_header) {
      if (fields.size() != 2 || !detail::parse_uint(fields[0], rows) ||
          !detail::parse_uint(fields[1], cols)) {
        throw ParseError(file, lineno, "expected header 'N<TAB>D'");
      }
      m.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      have_header = true;
      continue;
    }
    if (r >= rows) throw ParseError(file, lineno, "more rows than declared in header");
    if (fields.size() != cols) {
      throw ParseError(file, lineno,
                       "expected " + std::to_string(cols) + " values, got " +
                           std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      double v = 0.0;
      if (!detail::parse_real(fields[c], v)) {
        throw ParseError(file, lineno, "malformed real '" + std::string(fields[c]) + "'");
      }
      if (!std::isfinite(v)) {
        throw DataError(file + ":" + std::to_string(lineno) + ": non-finite value");
      }
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
    ++r;
  }
  if (!have_header) throw ParseError(file, lineno, "missing header");
  if (r != rows) {
    throw ParseError(file, lineno,
                     "expected " + std::to_string(rows) + " rows, got " + std::to_string(r));
  }
  return m;
}

inline std::vector<Edge> read_edges(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  const std::string file = path.string();
  std::string line;
  std::size_t lineno = 0;
  std::vector<Edge> edges;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank_or_comment(line)) continue;
    auto fields = detail::split_fields(line);
    NodeId a = 0, b = 0;
    if (fields.size() != 2 || !detail::parse_uint(fields[0], a) ||
        !detail::parse_uint(fields[1], b)) {
      throw ParseError(file, lineno, "expected 'src<TAB>dst' with non-negative integers");
    }
    edges.emplace_back(a, b);
  }
  return edges;
}

inline std::vector<int> read_labels(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  const std::string file = path.string();
  std::string line;
  std::size_t lineno = 0;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank_or_comment(line)) continue;
    auto fields = detail::split_fields(line);
    int y = 0;
    if (fields.size() != 1 || !detail::parse_uint(fields[0], y)) {
      throw ParseError(file, lineno, "expected one non-negative class id");
    }
    labels.push_back(y);
  }
  return labels;
}

/// Loads an attributed graph from the edge / feature / label text formats.
inline AttributedGraph load_graph(const std::filesystem::path& edge_path,
                                  const std::filesystem::path& feature_path,
                                  const std::optional<std::filesystem::path>& label_path = {}) {
  Matrix features = read_dense_matrix(feature_path);
  auto edges = read_edges(edge_path);
  std::optional<std::vector<int>> labels;
  if (label_path) labels = read_labels(*label_path);
  const auto n = static_cast<std::size_t>(features.rows());
  return make_graph(n, edges, std::move(features), std::move(labels));
}

/// Symmetric normalized transition D^-1/2 (A + I) D^-1/2 in CSR layout.
/// Columns are ascending within each row.
struct SparseTransition {
  std::size_t dim = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<NodeId> col;
  std::vector<double> val;

  std::size_t nnz() const { return val.size(); }

  double row_sum(std::size_t i) const {
    double s = 0.0;
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k];
    return s;
  }

  /// Y = T X. Rows are accumulated in column order, so the result is
  /// bitwise reproducible.
  Matrix multiply(const Matrix& x) const {
    require_shape(static_cast<std::size_t>(x.rows()) == dim,
                  "transition is " + std::to_string(dim) + "x" + std::to_string(dim) +
                      ", operand has " + std::to_string(x.rows()) + " rows");
    Matrix y = Matrix::Zero(x.rows(), x.cols());
    for (std::size_t i = 0; i < dim; ++i) {
      auto out = y.row(static_cast<Eigen::Index>(i));
      for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
        out.noalias() += val[k] * x.row(col[k]);
      }
    }
    return y;
  }

  Matrix to_dense() const {
    Matrix d = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
        d(static_cast<Eigen::Index>(i), col[k]) = val[k];
      }
    }
    return d;
  }
};

inline SparseTransition normalized_adjacency(const AttributedGraph& g) {
  const std::size_t n = g.num_nodes;
  std::vector<std::size_t> degree(n, 1);  // self-loop
  for (auto [a, b] : g.edges) {
    ++degree[a];
    ++degree[b];
  }
  SparseTransition t;
  t.dim = n;
  t.row_ptr.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) t.row_ptr[i + 1] = t.row_ptr[i] + degree[i];
  t.col.resize(t.row_ptr[n]);
  t.val.resize(t.row_ptr[n]);

  std::vector<std::vector<NodeId>> adj(n);
  for (std::size_t i = 0; i < n; ++i) adj[i].push_back(static_cast<NodeId>(i));
  for (auto [a, b] : g.edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(adj[i].begin(), adj[i].end());
    std::size_t k = t.row_ptr[i];
    for (NodeId j : adj[i]) {
      t.col[k] = j;
      // Same floating-point expression for (i,j) and (j,i): di*dj commutes exactly.
      t.val[k] = 1.0 / std::sqrt(static_cast<double>(degree[i]) * static_cast<double>(degree[j]));
      ++k;
    }
  }
  return t;
}

/// The L propagated feature matrices T^l X (l = 1..L) and their mean.
struct PropagatedViews {
  std::vector<Matrix> views;
  Matrix mixed;

  std::size_t count() const { return views.size(); }
};

inline PropagatedViews propagate(const SparseTransition& t, const Matrix& x, std::size_t steps) {
  if (steps < 1) throw ConfigError("propagation steps must be >= 1");
  require_shape(static_cast<std::size_t>(x.rows()) == t.dim, "features vs transition");
  PropagatedViews out;
  out.views.reserve(steps);
  Matrix current = x;
  Matrix sum = Matrix::Zero(x.rows(), x.cols());
  for (std::size_t l = 0; l < steps; ++l) {
    current = t.multiply(current);
    sum += current;
    out.views.push_back(current);
  }
  out.mixed = sum / static_cast<double>(steps);
  return out;
}

}  // namespace s3cl
