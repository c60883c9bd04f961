#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "s3cl/error.hpp"
#include "s3cl/graph.hpp"
#include "s3cl/rng.hpp"

namespace s3cl {

/// Planted-partition graph with Gaussian block features.
struct SbmSpec {
  std::size_t blocks = 3;
  std::size_t nodes_per_block = 100;
  double p_in = 0.1;
  double p_out = 0.01;
  std::size_t feature_dim = 16;
  double separation = 4.0;  // distance between block means, in units of `noise`
  double noise = 1.0;       // per-coordinate standard deviation
  std::uint64_t seed = 0;

  void validate() const {
    if (blocks < 1 || nodes_per_block < 1) throw ConfigError("SBM needs at least one node per block");
    if (!(0.0 <= p_out && p_out <= p_in && p_in <= 1.0)) {
      throw ConfigError("SBM requires 0 <= p_out <= p_in <= 1");
    }
    if (feature_dim < blocks) throw ConfigError("SBM feature_dim must be >= blocks");
    if (!(noise >= 0.0) || !(separation >= 0.0)) throw ConfigError("SBM noise/separation must be >= 0");
  }
};

/// Nodes are numbered block by block. Block k's mean sits on axis k at
/// separation * noise / sqrt(2), so any two means are separation * noise apart.
inline AttributedGraph generate_sbm(const SbmSpec& spec) {
  spec.validate();
  const std::size_t n = spec.blocks * spec.nodes_per_block;
  Rng root(spec.seed);
  Rng edge_rng = root.split(1);
  Rng feat_rng = root.split(2);

  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i / spec.nodes_per_block);

  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = labels[i] == labels[j] ? spec.p_in : spec.p_out;
      if (edge_rng.bernoulli(p)) edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
    }
  }

  const double offset = spec.separation * spec.noise / std::sqrt(2.0);
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.feature_dim));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < spec.feature_dim; ++d) {
      const double mean = static_cast<std::size_t>(labels[i]) == d ? offset : 0.0;
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = feat_rng.normal(mean, spec.noise);
    }
  }
  return make_graph(n, edges, std::move(x), std::move(labels));
}

}  // namespace s3cl
