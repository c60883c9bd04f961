#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "s3cl/error.hpp"
#include "s3cl/graph.hpp"
#include "s3cl/matrix.hpp"
#include "s3cl/rng.hpp"

namespace s3cl {

/// A negative example: node `node` observed through propagated view `view`
/// (zero-based, so view 0 is T X).
struct NegativeSample {
  NodeId node = 0;
  std::uint32_t view = 0;

  friend bool operator==(const NegativeSample&, const NegativeSample&) = default;
};

/// Negatives for every anchor, stored anchor-major: anchor i owns
/// samples[i * per_anchor, (i + 1) * per_anchor).
struct NegativeBatch {
  std::size_t per_anchor = 0;
  std::vector<NegativeSample> samples;
  std::size_t fallback_count = 0;  // anchors that had to ignore pseudo-labels

  std::size_t anchors() const { return per_anchor == 0 ? 0 : samples.size() / per_anchor; }

  std::span<const NegativeSample> of(std::size_t anchor) const {
    return {samples.data() + anchor * per_anchor, per_anchor};
  }
};

/// Draws negatives uniformly with replacement. With pseudo-labels, only nodes
/// whose label differs from the anchor's are eligible; if no such node exists
/// the sampler falls back to every node except the anchor.
class NegativeSampler {
 public:
  NegativeSampler(std::size_t num_nodes, std::optional<std::span<const int>> pseudo_labels)
      : num_nodes_(num_nodes) {
    if (!pseudo_labels) return;
    if (pseudo_labels->size() != num_nodes) {
      throw RangeError("dimension mismatch: pseudo-labels vs node count");
    }
    labels_.assign(pseudo_labels->begin(), pseudo_labels->end());
    int max_label = -1;
    for (int z : labels_) {
      if (z < 0) throw RangeError("negative pseudo-label");
      max_label = std::max(max_label, z);
    }
    const auto k = static_cast<std::size_t>(max_label + 1);
    start_.assign(k + 1, 0);
    for (int z : labels_) ++start_[static_cast<std::size_t>(z) + 1];
    for (std::size_t c = 0; c < k; ++c) start_[c + 1] += start_[c];
    order_.resize(num_nodes);
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < num_nodes; ++i) {
      order_[fill[static_cast<std::size_t>(labels_[i])]++] = static_cast<NodeId>(i);
    }
  }

  bool filtering() const { return !labels_.empty(); }

  /// Appends `count` negatives for `anchor` to `out`. Returns false when the
  /// label filter had to be dropped for this anchor.
  bool sample(std::size_t anchor, std::size_t count, std::size_t views, Rng& rng,
              std::vector<NegativeSample>& out) const {
    if (anchor >= num_nodes_) throw RangeError("anchor index out of range");
    if (views == 0) throw ConfigError("view count must be >= 1");
    bool filtered = false;
    std::size_t z = 0, pool = 0;
    if (filtering()) {
      z = static_cast<std::size_t>(labels_[anchor]);
      pool = num_nodes_ - (start_[z + 1] - start_[z]);
      filtered = pool > 0;
    }
    if (!filtered && num_nodes_ < 2) throw DataError("no eligible negative: graph has one node");
    for (std::size_t m = 0; m < count; ++m) {
      NodeId node = 0;
      if (filtered) {
        std::size_t r = rng.index(pool);
        if (r >= start_[z]) r += start_[z + 1] - start_[z];
        node = order_[r];
      } else {
        std::size_t r = rng.index(num_nodes_ - 1);
        if (r >= anchor) ++r;
        node = static_cast<NodeId>(r);
      }
      const auto view = static_cast<std::uint32_t>(rng.index(views));
      out.push_back({node, view});
    }
    return filtered || !filtering();
  }

 private:
  std::size_t num_nodes_;
  std::vector<int> labels_;
  std::vector<std::size_t> start_;
  std::vector<NodeId> order_;
};

struct NegativeDraw {
  std::vector<NegativeSample> samples;
  bool fell_back = false;
};

/// Negatives for a single anchor. `pseudo_labels`, when present, must have
/// `num_nodes` entries.
inline NegativeDraw sample_negatives(std::size_t anchor, std::size_t num_nodes,
                                     std::optional<std::span<const int>> pseudo_labels,
                                     std::size_t count, std::size_t views, Rng& rng) {
  if (count < 1) throw ConfigError("negative count must be >= 1");
  NegativeSampler sampler(num_nodes, pseudo_labels);
  NegativeDraw d;
  d.fell_back = !sampler.sample(anchor, count, views, rng, d.samples);
  return d;
}

/// Negatives for every node, drawn in ascending anchor order from `rng`.
inline NegativeBatch sample_negative_batch(std::size_t num_nodes,
                                           std::optional<std::span<const int>> pseudo_labels,
                                           std::size_t per_anchor, std::size_t views, Rng& rng) {
  NegativeSampler sampler(num_nodes, pseudo_labels);
  NegativeBatch b;
  b.per_anchor = per_anchor;
  b.samples.reserve(num_nodes * per_anchor);
  if (per_anchor == 0) return b;
  for (std::size_t i = 0; i < num_nodes; ++i) {
    if (!sampler.sample(i, per_anchor, views, rng, b.samples)) ++b.fallback_count;
  }
  return b;
}

struct StructuralLoss {
  double value = 0.0;
  std::vector<Matrix> grads;  // dL/dU for each view, same shapes as the inputs
};

/// InfoNCE between each node's first view and its higher-order views.
///
/// For anchor i and view l >= 2 the softmax runs over the candidate set
/// {u_i^(2..L)} plus the anchor's M negatives, i.e. M + L - 1 logits. The
/// candidate set does not depend on l, so each anchor contributes
/// (L - 1) * lse_i - sum_l s_il.
inline StructuralLoss structural_loss(const std::vector<Matrix>& views, const NegativeBatch& negatives,
                                      double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("tau1 must be positive");
  if (views.empty()) throw RangeError("structural_loss needs at least one view");
  const Eigen::Index n = views[0].rows();
  const Eigen::Index dim = views[0].cols();
  for (const Matrix& v : views) {
    require_shape(v.rows() == n && v.cols() == dim, "structural views differ in shape");
  }
  if (negatives.per_anchor > 0 && negatives.anchors() != static_cast<std::size_t>(n)) {
    throw RangeError("dimension mismatch: negative batch covers " +
                     std::to_string(negatives.anchors()) + " anchors, views have " +
                     std::to_string(n) + " rows");
  }
  StructuralLoss out;
  out.grads.reserve(views.size());
  for (const Matrix& v : views) out.grads.push_back(Matrix::Zero(v.rows(), v.cols()));
  const std::size_t num_views = views.size();
  const std::size_t positives = num_views - 1;
  if (positives == 0) return out;

  const double inv_t = 1.0 / temperature;
  const std::size_t candidates = positives + negatives.per_anchor;
  std::vector<double> logits(candidates);
  std::vector<double> weights(candidates);
  const double lcount = static_cast<double>(positives);

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto anchor = views[0].row(i);
    auto negs = negatives.per_anchor > 0 ? negatives.of(static_cast<std::size_t>(i))
                                         : std::span<const NegativeSample>{};
    for (std::size_t l = 0; l < positives; ++l) {
      logits[l] = anchor.dot(views[l + 1].row(i)) * inv_t;
    }
    for (std::size_t m = 0; m < negs.size(); ++m) {
      if (negs[m].view >= num_views || static_cast<Eigen::Index>(negs[m].node) >= n) {
        throw RangeError("negative sample outside the view stack");
      }
      logits[positives + m] = anchor.dot(views[negs[m].view].row(negs[m].node)) * inv_t;
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (double s : logits) {
      if (!std::isfinite(s)) throw NumericalError("non-finite similarity in structural loss");
      mx = std::max(mx, s);
    }
    double z = 0.0;
    for (std::size_t c = 0; c < candidates; ++c) {
      weights[c] = std::exp(logits[c] - mx);
      z += weights[c];
    }
    const double lse = mx + std::log(z);
    double term = lcount * lse;
    for (std::size_t l = 0; l < positives; ++l) term -= logits[l];
    out.value += term;

    // dTerm/ds_c = (L-1) p_c - [c is a positive]
    auto grad_anchor = out.grads[0].row(i);
    for (std::size_t c = 0; c < candidates; ++c) {
      double g = lcount * weights[c] / z;
      if (c < positives) g -= 1.0;
      g *= inv_t;
      if (c < positives) {
        grad_anchor.noalias() += g * views[c + 1].row(i);
        out.grads[c + 1].row(i).noalias() += g * anchor;
      } else {
        const NegativeSample& s = negs[c - positives];
        grad_anchor.noalias() += g * views[s.view].row(s.node);
        out.grads[s.view].row(s.node).noalias() += g * anchor;
      }
    }
  }
  return out;
}

}  // namespace s3cl
