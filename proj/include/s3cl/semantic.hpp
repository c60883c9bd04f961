#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "s3cl/error.hpp"
#include "s3cl/graph.hpp"
#include "s3cl/matrix.hpp"

namespace s3cl {

/// Cluster prototypes with the pseudo-labels that produced them. Row k of
/// `centroids` is the mean of the representations labelled k; every label in
/// [0, count()) has at least one member.
struct PrototypeState {
  Matrix centroids;
  std::vector<int> labels;

  std::size_t count() const { return static_cast<std::size_t>(centroids.rows()); }
};

struct PrototypeInferenceConfig {
  /// Squared distance above which a node opens a new prototype. +inf disables
  /// spawning entirely.
  double xi = 0.45;
  std::size_t max_iters = 100;
  /// Converged once the fraction of changed labels in a sweep is <= tolerance.
  double tolerance = 0.0;
};

struct LabelPropagationConfig {
  std::size_t steps = 10;
  double teleport = 0.15;
};

/// Per-iteration trace of prototype inference.
struct InferenceReport {
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t spawned = 0;
  std::vector<double> sse;          // sum_i |h_i - c_{z_i}|^2 after each mean update
  std::vector<std::size_t> counts;  // K after each iteration
  std::vector<double> changed;      // fraction of labels changed per sweep

  /// DP-means objective sse + xi * K at iteration `it`.
  double objective(std::size_t it, double xi) const {
    return sse[it] + xi * static_cast<double>(counts[it]);
  }
};

inline double squared_distance(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index k) {
  return (a.row(i) - b.row(k)).squaredNorm();
}

/// Sum of squared distances of each row to its assigned prototype.
inline double assignment_cost(const Matrix& h, const PrototypeState& s) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    acc += squared_distance(h, i, s.centroids, s.labels[static_cast<std::size_t>(i)]);
  }
  return acc;
}

/// Cluster means for `labels`, dropping clusters with no members. Surviving
/// clusters keep their relative order and labels are compacted to match.
inline PrototypeState recompute_prototypes(const Matrix& h, std::vector<int> labels,
                                           std::size_t count) {
  require_shape(labels.size() == static_cast<std::size_t>(h.rows()), "labels vs representations");
  std::vector<std::size_t> members(count, 0);
  for (int z : labels) {
    if (z < 0 || static_cast<std::size_t>(z) >= count) {
      throw RangeError("pseudo-label " + std::to_string(z) + " outside [0, " +
                       std::to_string(count) + ")");
    }
    ++members[static_cast<std::size_t>(z)];
  }
  std::vector<int> remap(count, -1);
  int next = 0;
  for (std::size_t k = 0; k < count; ++k) {
    if (members[k] > 0) remap[k] = next++;
  }
  PrototypeState s;
  s.centroids = Matrix::Zero(next, h.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = remap[static_cast<std::size_t>(labels[i])];
    s.centroids.row(labels[i]) += h.row(static_cast<Eigen::Index>(i));
  }
  for (std::size_t k = 0; k < count; ++k) {
    if (remap[k] >= 0) s.centroids.row(remap[k]) /= static_cast<double>(members[k]);
  }
  s.labels = std::move(labels);
  return s;
}

/// One assignment sweep in ascending node order. Each node moves to its
/// nearest prototype (lowest index on ties) unless that distance exceeds xi,
/// in which case a new prototype is opened at the node itself. Prototypes
/// opened during the sweep are visible to later nodes. Returns the number of
/// labels that changed.
inline std::size_t assignment_sweep(const Matrix& h, Matrix& centroids, std::vector<int>& labels,
                                    double xi, std::size_t* spawned = nullptr) {
  std::size_t changed = 0;
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
      const double d = squared_distance(h, i, centroids, k);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    int z = static_cast<int>(best);
    if (best_d > xi) {
      centroids.conservativeResize(centroids.rows() + 1, Eigen::NoChange);
      centroids.row(centroids.rows() - 1) = h.row(i);
      z = static_cast<int>(centroids.rows() - 1);
      if (spawned) ++*spawned;
    }
    auto& slot = labels[static_cast<std::size_t>(i)];
    if (slot != z) {
      ++changed;
      slot = z;
    }
  }
  return changed;
}

struct InferenceResult {
  PrototypeState state;
  InferenceReport report;
};

/// Small-variance DPMM (DP-means) prototype inference. Starts from a single
/// prototype at the global mean and alternates assignment sweeps with mean
/// updates until no more than `tolerance` of the labels move.
inline InferenceResult infer_prototypes(const Matrix& h, const PrototypeInferenceConfig& cfg) {
  if (h.rows() < 1) throw DataError("prototype inference needs at least one node");
  if (!(cfg.xi > 0.0)) throw ConfigError("xi must be positive");
  if (!h.allFinite()) throw NumericalError("non-finite representation in prototype inference");
  const auto n = static_cast<std::size_t>(h.rows());

  InferenceResult r;
  r.state.centroids = h.colwise().mean();
  r.state.labels.assign(n, 0);

  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    Matrix centroids = r.state.centroids;
    std::vector<int> labels = r.state.labels;
    const std::size_t changed = assignment_sweep(h, centroids, labels, cfg.xi, &r.report.spawned);
    r.state = recompute_prototypes(h, std::move(labels), static_cast<std::size_t>(centroids.rows()));
    const double frac = static_cast<double>(changed) / static_cast<double>(n);
    r.report.iterations = it + 1;
    r.report.changed.push_back(frac);
    r.report.sse.push_back(assignment_cost(h, r.state));
    r.report.counts.push_back(r.state.count());
    if (frac <= cfg.tolerance) {
      r.report.converged = true;
      break;
    }
  }
  return r;
}

namespace detail {

// Lowest index whose value is within a relative 1e-12 of the row maximum.
template <typename Row>
int tolerant_argmax(const Row& row) {
  const double mx = row.maxCoeff();
  const double slack = 1e-12 * std::max(1.0, std::abs(mx));
  for (Eigen::Index k = 0; k < row.size(); ++k) {
    if (row(k) >= mx - slack) return static_cast<int>(k);
  }
  return 0;
}

}  // namespace detail

/// Personalized-PageRank smoothing of hard pseudo-labels:
/// Z <- (1 - beta) T Z + beta Z0, repeated `steps` times, then a row argmax
/// (values within 1e-12 relative of the maximum count as ties, which go to
/// the lowest label).
inline std::vector<int> refine_labels(std::span<const int> labels, std::size_t count,
                                      const SparseTransition& t, const LabelPropagationConfig& cfg) {
  if (count < 1) throw ConfigError("label refinement needs at least one prototype");
  if (!(cfg.teleport > 0.0 && cfg.teleport <= 1.0)) {
    throw ConfigError("teleport probability must lie in (0, 1]");
  }
  require_shape(labels.size() == t.dim, "labels vs transition");
  const auto n = static_cast<Eigen::Index>(labels.size());
  Matrix z0 = Matrix::Zero(n, static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int z = labels[static_cast<std::size_t>(i)];
    if (z < 0 || static_cast<std::size_t>(z) >= count) throw RangeError("pseudo-label out of range");
    z0(i, z) = 1.0;
  }
  if (cfg.steps == 0 || cfg.teleport == 1.0) return {labels.begin(), labels.end()};
  Matrix z = z0;
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    z = (1.0 - cfg.teleport) * t.multiply(z) + cfg.teleport * z0;
  }
  std::vector<int> out(labels.size());
  for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = detail::tolerant_argmax(z.row(i));
  return out;
}

struct SemanticLoss {
  double value = 0.0;
  Matrix grad;  // dL/dH
};

/// Prototype InfoNCE: -sum_i log softmax_k(h_i . c_k / tau2)[z_i] on
/// l2-normalized rows. Prototypes are constants; only H receives gradient.
inline SemanticLoss semantic_loss(const Matrix& h, const Matrix& centroids,
                                  std::span<const int> labels, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("tau2 must be positive");
  if (centroids.rows() < 1) throw RangeError("semantic loss needs at least one prototype");
  require_shape(h.cols() == centroids.cols(), "representations vs prototypes");
  require_shape(labels.size() == static_cast<std::size_t>(h.rows()), "labels vs representations");

  Vector norms;
  const Matrix hn = l2_normalize_rows(h, &norms);
  const Matrix cn = l2_normalize_rows(centroids);
  const double inv_t = 1.0 / temperature;
  Matrix logits;
  logits.noalias() = (hn * cn.transpose()) * inv_t;
  if (!logits.allFinite()) throw NumericalError("non-finite similarity in semantic loss");

  SemanticLoss out;
  Matrix grad_logits(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int z = labels[static_cast<std::size_t>(i)];
    if (z < 0 || z >= centroids.rows()) throw RangeError("pseudo-label out of range");
    const double mx = logits.row(i).maxCoeff();
    auto e = (logits.row(i).array() - mx).exp();
    const double sum = e.sum();
    out.value += mx + std::log(sum) - logits(i, z);
    grad_logits.row(i) = e / sum;
    grad_logits(i, z) -= 1.0;
  }
  Matrix grad_hn;
  grad_hn.noalias() = (grad_logits * cn) * inv_t;
  out.grad = l2_normalize_rows_backward(grad_hn, hn, norms);
  return out;
}

}  // namespace s3cl
