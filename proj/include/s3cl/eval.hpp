#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "s3cl/error.hpp"
#include "s3cl/matrix.hpp"
#include "s3cl/rng.hpp"

namespace s3cl {

// ---------------------------------------------------------------------------
// Assignment
// ---------------------------------------------------------------------------

/// Minimum-cost perfect matching on a square cost matrix (Kuhn-Munkres with
/// potentials, O(n^3)). Returns row -> column.
inline std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

// ---------------------------------------------------------------------------
// Clustering metrics
// ---------------------------------------------------------------------------

struct ClusterMetrics {
  double acc = 0.0;  // [0, 1]
  double nmi = 0.0;  // [0, 1]
  double ari = 0.0;  // [-1, 1]
};

namespace detail {

// Maps arbitrary ids to 0..k-1 in order of first appearance.
inline std::vector<int> compact_ids(std::span<const int> ids, std::size_t& k) {
  std::map<int, int> remap;
  std::vector<int> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto [it, inserted] = remap.try_emplace(ids[i], static_cast<int>(remap.size()));
    out[i] = it->second;
  }
  k = remap.size();
  return out;
}

inline double comb2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace detail

/// Contingency table: rows index predicted clusters, columns true classes.
inline std::vector<std::vector<double>> contingency(std::span<const int> pred,
                                                    std::span<const int> truth, std::size_t& kp,
                                                    std::size_t& kt) {
  const auto p = detail::compact_ids(pred, kp);
  const auto t = detail::compact_ids(truth, kt);
  std::vector<std::vector<double>> table(kp, std::vector<double>(kt, 0.0));
  for (std::size_t i = 0; i < p.size(); ++i) table[p[i]][t[i]] += 1.0;
  return table;
}

/// Accuracy under the best one-to-one matching of predicted to true labels.
inline double clustering_accuracy(std::span<const int> pred, std::span<const int> truth) {
  std::size_t kp = 0, kt = 0;
  const auto table = contingency(pred, truth, kp, kt);
  const std::size_t n = std::max(kp, kt);
  double mx = 0.0;
  for (const auto& row : table) {
    for (double c : row) mx = std::max(mx, c);
  }
  std::vector<std::vector<double>> cost(n, std::vector<double>(n, mx));
  for (std::size_t a = 0; a < kp; ++a) {
    for (std::size_t b = 0; b < kt; ++b) cost[a][b] = mx - table[a][b];
  }
  const auto match = hungarian(cost);
  double hits = 0.0;
  for (std::size_t a = 0; a < kp; ++a) {
    const auto b = static_cast<std::size_t>(match[a]);
    if (b < kt) hits += table[a][b];
  }
  return hits / static_cast<double>(pred.size());
}

/// NMI normalized by the arithmetic mean of the two entropies.
inline double normalized_mutual_information(std::span<const int> pred, std::span<const int> truth) {
  std::size_t kp = 0, kt = 0;
  const auto table = contingency(pred, truth, kp, kt);
  const double n = static_cast<double>(pred.size());
  std::vector<double> rows(kp, 0.0), cols(kt, 0.0);
  for (std::size_t a = 0; a < kp; ++a) {
    for (std::size_t b = 0; b < kt; ++b) {
      rows[a] += table[a][b];
      cols[b] += table[a][b];
    }
  }
  auto entropy = [n](const std::vector<double>& counts) {
    double h = 0.0;
    for (double c : counts) {
      if (c > 0) h -= (c / n) * std::log(c / n);
    }
    return h;
  };
  double mi = 0.0;
  for (std::size_t a = 0; a < kp; ++a) {
    for (std::size_t b = 0; b < kt; ++b) {
      const double c = table[a][b];
      if (c > 0) mi += (c / n) * std::log(c * n / (rows[a] * cols[b]));
    }
  }
  const double hp = entropy(rows);
  const double ht = entropy(cols);
  const double denom = 0.5 * (hp + ht);
  if (denom <= 0.0) return 1.0;  // both partitions are a single block
  return std::clamp(mi / denom, 0.0, 1.0);
}

inline double adjusted_rand_index(std::span<const int> pred, std::span<const int> truth) {
  std::size_t kp = 0, kt = 0;
  const auto table = contingency(pred, truth, kp, kt);
  std::vector<double> rows(kp, 0.0), cols(kt, 0.0);
  double index = 0.0;
  for (std::size_t a = 0; a < kp; ++a) {
    for (std::size_t b = 0; b < kt; ++b) {
      rows[a] += table[a][b];
      cols[b] += table[a][b];
      index += detail::comb2(table[a][b]);
    }
  }
  double sum_rows = 0.0, sum_cols = 0.0;
  for (double r : rows) sum_rows += detail::comb2(r);
  for (double c : cols) sum_cols += detail::comb2(c);
  const double total = detail::comb2(static_cast<double>(pred.size()));
  const double expected = total > 0 ? sum_rows * sum_cols / total : 0.0;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

inline ClusterMetrics clustering_metrics(std::span<const int> pred, std::span<const int> truth) {
  if (pred.empty()) throw DataError("clustering metrics need at least one node");
  if (pred.size() != truth.size()) throw RangeError("dimension mismatch: prediction vs truth");
  return {clustering_accuracy(pred, truth), normalized_mutual_information(pred, truth),
          adjusted_rand_index(pred, truth)};
}

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

struct KMeansResult {
  std::vector<int> labels;
  Matrix centers;
  double wcss = 0.0;
  std::vector<double> trace;  // WCSS after every Lloyd iteration of the winning restart
};

namespace detail {

inline double nearest(const Matrix& x, Eigen::Index i, const Matrix& centers, Eigen::Index count,
                      int& label) {
  double best = std::numeric_limits<double>::infinity();
  label = 0;
  for (Eigen::Index k = 0; k < count; ++k) {
    const double d = (x.row(i) - centers.row(k)).squaredNorm();
    if (d < best) {
      best = d;
      label = static_cast<int>(k);
    }
  }
  return best;
}

inline Matrix kmeans_pp_seed(const Matrix& x, std::size_t k, Rng& rng) {
  const Eigen::Index n = x.rows();
  Matrix centers(static_cast<Eigen::Index>(k), x.cols());
  centers.row(0) = x.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n))));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = (x.row(i) - centers.row(0)).squaredNorm();
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double r = rng.uniform(0.0, total);
      pick = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        pick = i;  // last positive-weight point absorbs rounding at the tail
        r -= d2[i];
        if (r < 0.0) break;
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
    }
    centers.row(static_cast<Eigen::Index>(c)) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (x.row(i) - centers.row(static_cast<Eigen::Index>(c))).squaredNorm());
    }
  }
  return centers;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding; best of `restarts` by WCSS.
/// A cluster that empties is reseeded at the point farthest from its center.
inline KMeansResult kmeans(const Matrix& x, std::size_t k, std::size_t restarts, std::uint64_t seed,
                           std::size_t max_iters = 300) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (k < 1 || k > n) throw ConfigError("k-means needs 1 <= K <= N");
  if (restarts < 1) throw ConfigError("k-means needs at least one restart");
  KMeansResult best;
  best.wcss = std::numeric_limits<double>::infinity();
  const Rng root(seed);
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng = root.split(r);
    KMeansResult cur;
    cur.centers = detail::kmeans_pp_seed(x, k, rng);
    cur.labels.assign(n, -1);
    std::vector<double> dist(n);
    for (std::size_t it = 0; it < max_iters; ++it) {
      bool changed = false;
      for (std::size_t i = 0; i < n; ++i) {
        int z = 0;
        dist[i] = detail::nearest(x, static_cast<Eigen::Index>(i), cur.centers,
                                  static_cast<Eigen::Index>(k), z);
        if (z != cur.labels[i]) {
          changed = true;
          cur.labels[i] = z;
        }
      }
      if (!changed && it > 0) break;
      std::vector<std::size_t> members(k, 0);
      for (int z : cur.labels) ++members[static_cast<std::size_t>(z)];
      for (std::size_t c = 0; c < k; ++c) {
        if (members[c] > 0) continue;
        // Steal the point currently worst served by its own center.
        std::size_t far = n;
        for (std::size_t i = 0; i < n; ++i) {
          if (members[static_cast<std::size_t>(cur.labels[i])] < 2) continue;
          if (far == n || dist[i] > dist[far]) far = i;
        }
        --members[static_cast<std::size_t>(cur.labels[far])];
        cur.labels[far] = static_cast<int>(c);
        members[c] = 1;
        dist[far] = 0.0;
      }
      cur.centers.setZero();
      for (std::size_t i = 0; i < n; ++i) {
        cur.centers.row(cur.labels[i]) += x.row(static_cast<Eigen::Index>(i));
      }
      for (std::size_t c = 0; c < k; ++c) {
        cur.centers.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(members[c]);
      }
      double wcss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        wcss += (x.row(static_cast<Eigen::Index>(i)) - cur.centers.row(cur.labels[i])).squaredNorm();
      }
      cur.wcss = wcss;
      cur.trace.push_back(wcss);
    }
    if (cur.wcss < best.wcss) best = std::move(cur);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Linear probe
// ---------------------------------------------------------------------------

struct SplitSpec {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;

  void validate(std::size_t num_nodes) const {
    std::set<std::size_t> seen;
    for (const auto* part : {&train, &validation, &test}) {
      for (std::size_t i : *part) {
        if (i >= num_nodes) throw RangeError("split index " + std::to_string(i) + " out of range");
        if (!seen.insert(i).second) {
          throw DataError("split index " + std::to_string(i) + " appears twice");
        }
      }
    }
    if (train.empty()) throw DataError("empty training split");
    if (test.empty()) throw DataError("empty test split");
  }
};

struct SplitOptions {
  std::size_t train_per_class = 20;
  std::size_t validation = 500;
  std::size_t test = 1000;
  /// When > 0, overrides train_per_class: each class keeps
  /// max(1, round(label_rate * class size)) training nodes.
  double label_rate = 0.0;
};

/// Random stratified split: per-class training nodes first, then validation
/// and test drawn from the remaining nodes (sizes clamped to what is left).
inline SplitSpec random_split(std::span<const int> labels, const SplitOptions& opt, Rng& rng) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  SplitSpec s;
  std::vector<char> used(labels.size(), 0);
  for (auto& [cls, nodes] : by_class) {
    std::shuffle(nodes.begin(), nodes.end(), rng.engine());
    std::size_t take = opt.train_per_class;
    if (opt.label_rate > 0.0) {
      take = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::lround(opt.label_rate * static_cast<double>(nodes.size()))));
    }
    take = std::min(take, nodes.size());
    for (std::size_t k = 0; k < take; ++k) {
      s.train.push_back(nodes[k]);
      used[nodes[k]] = 1;
    }
  }
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!used[i]) rest.push_back(i);
  }
  std::shuffle(rest.begin(), rest.end(), rng.engine());
  const std::size_t nv = std::min(opt.validation, rest.size());
  const std::size_t nt = std::min(opt.test, rest.size() - nv);
  s.validation.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(nv));
  s.test.assign(rest.begin() + static_cast<std::ptrdiff_t>(nv),
                rest.begin() + static_cast<std::ptrdiff_t>(nv + nt));
  std::sort(s.train.begin(), s.train.end());
  return s;
}

struct ProbeOptions {
  double lambda = 0.0;
  std::size_t epochs = 300;
  double lr = 1e-2;
};

struct ProbeResult {
  double test_accuracy = 0.0;
  double validation_accuracy = 0.0;
  std::vector<double> loss_trace;  // training objective before each update
  std::vector<int> unseen_test_classes;
  Matrix weights;  // (D + 1) x C, last row is the bias
};

/// Mean softmax cross-entropy plus (lambda / 2) |W|^2 over `rows`, and its
/// gradient. `w` is (D + 1) x C with the bias in the last row (not penalized).
inline double softmax_regression_loss(const Matrix& x, std::span<const int> labels,
                                      std::span<const std::size_t> rows, const Matrix& w,
                                      double lambda, Matrix* grad) {
  const Eigen::Index d = x.cols();
  const Eigen::Index c = w.cols();
  if (grad) *grad = Matrix::Zero(w.rows(), w.cols());
  double loss = 0.0;
  RowVector logits(c);
  for (std::size_t i : rows) {
    const auto xi = x.row(static_cast<Eigen::Index>(i));
    logits.noalias() = xi * w.topRows(d);
    logits += w.row(d);
    const double mx = logits.maxCoeff();
    RowVector p = (logits.array() - mx).exp();
    const double z = p.sum();
    p /= z;
    const int y = labels[i];
    loss += mx + std::log(z) - logits(y);
    if (grad) {
      p(y) -= 1.0;
      grad->topRows(d).noalias() += xi.transpose() * p;
      grad->row(d) += p;
    }
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  loss *= inv;
  loss += 0.5 * lambda * w.topRows(d).squaredNorm();
  if (grad) {
    *grad *= inv;
    grad->topRows(d) += lambda * w.topRows(d);
  }
  return loss;
}

inline double probe_accuracy(const Matrix& x, std::span<const int> labels,
                             std::span<const std::size_t> rows, const Matrix& w) {
  if (rows.empty()) return 0.0;
  const Eigen::Index d = x.cols();
  std::size_t hits = 0;
  for (std::size_t i : rows) {
    RowVector logits = x.row(static_cast<Eigen::Index>(i)) * w.topRows(d) + w.row(d);
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    hits += static_cast<int>(best) == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

/// Multinomial logistic regression on frozen features, trained full-batch by
/// Adam from a zero initialization. Test classes that never occur in the
/// training split are reported; their nodes can never be predicted correctly.
inline ProbeResult linear_probe(const Matrix& x, std::span<const int> labels, const SplitSpec& split,
                                const ProbeOptions& opt = {}) {
  if (labels.size() != static_cast<std::size_t>(x.rows())) {
    throw RangeError("dimension mismatch: labels vs representations");
  }
  split.validate(labels.size());
  if (!(opt.lambda >= 0.0)) throw ConfigError("probe lambda must be >= 0");
  if (!(opt.lr > 0.0)) throw ConfigError("probe lr must be positive");
  int max_label = 0;
  for (int y : labels) {
    if (y < 0) throw DataError("negative class id");
    max_label = std::max(max_label, y);
  }
  const Eigen::Index c = max_label + 1;

  ProbeResult r;
  std::set<int> train_classes;
  for (std::size_t i : split.train) train_classes.insert(labels[i]);
  std::set<int> unseen;
  for (std::size_t i : split.test) {
    if (!train_classes.count(labels[i])) unseen.insert(labels[i]);
  }
  r.unseen_test_classes.assign(unseen.begin(), unseen.end());

  Matrix w = Matrix::Zero(x.cols() + 1, c);
  Matrix m = Matrix::Zero(w.rows(), w.cols());
  Matrix v = Matrix::Zero(w.rows(), w.cols());
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Matrix grad;
  for (std::size_t t = 1; t <= opt.epochs; ++t) {
    r.loss_trace.push_back(softmax_regression_loss(x, labels, split.train, w, opt.lambda, &grad));
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    w.array() -= opt.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
  r.weights = w;
  r.test_accuracy = probe_accuracy(x, labels, split.test, w);
  r.validation_accuracy = probe_accuracy(x, labels, split.validation, w);
  return r;
}

/// Mean and (population) standard deviation.
struct Summary {
  double mean = 0.0;
  double stddev = 0.0;
};

inline Summary summarize(std::span<const double> xs) {
  Summary s;
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double acc = 0.0;
  for (double x : xs) acc += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(acc / static_cast<double>(xs.size()));
  return s;
}

}  // namespace s3cl
