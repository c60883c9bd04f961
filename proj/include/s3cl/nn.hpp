#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "s3cl/error.hpp"
#include "s3cl/matrix.hpp"
#include "s3cl/rng.hpp"

namespace s3cl {

/// Trainable tensors: one-layer encoder Θ (D x D') and the two-layer
/// projection head (W1: D' x Dh, b1: 1 x Dh, W2: Dh x Dp, b2: 1 x Dp).
struct Weights {
  Matrix encoder;
  Matrix w1;
  Matrix b1;
  Matrix w2;
  Matrix b2;

  static constexpr std::size_t kTensorCount = 5;
  static constexpr std::array<const char*, kTensorCount> kNames = {"encoder", "w1", "b1", "w2",
                                                                  "b2"};

  std::array<Matrix*, kTensorCount> tensors() { return {&encoder, &w1, &b1, &w2, &b2}; }
  std::array<const Matrix*, kTensorCount> tensors() const {
    return {&encoder, &w1, &b1, &w2, &b2};
  }

  Weights zeros_like() const {
    Weights z;
    auto dst = z.tensors();
    auto src = tensors();
    for (std::size_t k = 0; k < kTensorCount; ++k) {
      *dst[k] = Matrix::Zero(src[k]->rows(), src[k]->cols());
    }
    return z;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const Matrix* t : tensors()) n += static_cast<std::size_t>(t->size());
    return n;
  }

  bool same_shape(const Weights& o) const {
    auto a = tensors();
    auto b = o.tensors();
    for (std::size_t k = 0; k < kTensorCount; ++k) {
      if (a[k]->rows() != b[k]->rows() || a[k]->cols() != b[k]->cols()) return false;
    }
    return true;
  }

  bool all_finite() const {
    for (const Matrix* t : tensors()) {
      if (!t->allFinite()) return false;
    }
    return true;
  }
};

/// Live weights plus their momentum (EMA) copy. The momentum projector tensors
/// are left empty unless the projector is also tracked.
struct ModelParams {
  Weights live;
  Weights momentum;
  bool momentum_projector = false;
};

struct LayerSizes {
  std::size_t input = 0;
  std::size_t encoder = 512;
  std::size_t hidden = 2048;
  std::size_t projection = 512;
};

/// Glorot-uniform matrix drawn from `rng`.
inline Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(fan_out));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-limit, limit);
  }
  return m;
}

inline ModelParams init_params(const LayerSizes& sizes, Rng& rng, bool momentum_projector = false) {
  if (sizes.input == 0 || sizes.encoder == 0 || sizes.hidden == 0 || sizes.projection == 0) {
    throw ConfigError("layer sizes must be positive");
  }
  ModelParams p;
  p.live.encoder = glorot_uniform(sizes.input, sizes.encoder, rng);
  p.live.w1 = glorot_uniform(sizes.encoder, sizes.hidden, rng);
  p.live.b1 = Matrix::Zero(1, static_cast<Eigen::Index>(sizes.hidden));
  p.live.w2 = glorot_uniform(sizes.hidden, sizes.projection, rng);
  p.live.b2 = Matrix::Zero(1, static_cast<Eigen::Index>(sizes.projection));
  p.momentum_projector = momentum_projector;
  p.momentum.encoder = p.live.encoder;
  if (momentum_projector) {
    p.momentum.w1 = p.live.w1;
    p.momentum.b1 = p.live.b1;
    p.momentum.w2 = p.live.w2;
    p.momentum.b2 = p.live.b2;
  }
  return p;
}

struct EncoderOutput {
  Matrix pre;  // X Θ, kept for the ReLU mask
  Matrix out;  // ReLU(X Θ)
};

inline EncoderOutput encoder_forward(const Matrix& theta, const Matrix& x) {
  require_shape(x.cols() == theta.rows(), "encoder input has " + std::to_string(x.cols()) +
                                              " columns, weight expects " +
                                              std::to_string(theta.rows()));
  EncoderOutput o;
  o.pre.noalias() = x * theta;
  o.out = relu(o.pre);
  return o;
}

/// Intermediate values of one projector pass, kept for backprop.
struct ProjectorCache {
  Matrix hidden_pre;  // H W1 + b1
  Matrix hidden;      // ReLU(hidden_pre)
  Matrix raw;         // hidden W2 + b2
  Matrix out;         // raw, optionally l2-normalized per row
  Vector norms;
  bool normalized = true;
};

inline ProjectorCache projector_forward(const Weights& w, const Matrix& h, bool normalize = true) {
  require_shape(h.cols() == w.w1.rows(), "projector input has " + std::to_string(h.cols()) +
                                             " columns, W1 expects " +
                                             std::to_string(w.w1.rows()));
  ProjectorCache c;
  c.hidden_pre.noalias() = h * w.w1;
  c.hidden_pre.rowwise() += w.b1.row(0);
  c.hidden = relu(c.hidden_pre);
  c.raw.noalias() = c.hidden * w.w2;
  c.raw.rowwise() += w.b2.row(0);
  c.normalized = normalize;
  if (normalize) {
    c.out = l2_normalize_rows(c.raw, &c.norms);
  } else {
    c.out = c.raw;
  }
  return c;
}

/// Accumulates projector parameter gradients into `grads` and returns dL/dH.
inline Matrix projector_backward(const Weights& w, const Matrix& h, const ProjectorCache& c,
                                 const Matrix& grad_out, Weights& grads) {
  Matrix grad_raw = c.normalized ? l2_normalize_rows_backward(grad_out, c.out, c.norms) : grad_out;
  grads.w2.noalias() += c.hidden.transpose() * grad_raw;
  grads.b2 += grad_raw.colwise().sum();
  Matrix grad_hidden;
  grad_hidden.noalias() = grad_raw * w.w2.transpose();
  Matrix grad_hidden_pre = relu_backward(grad_hidden, c.hidden_pre);
  grads.w1.noalias() += h.transpose() * grad_hidden_pre;
  grads.b1 += grad_hidden_pre.colwise().sum();
  Matrix grad_h;
  grad_h.noalias() = grad_hidden_pre * w.w1.transpose();
  return grad_h;
}

/// Bias-corrected Adam.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  Weights first;
  Weights second;

  static AdamState for_params(const Weights& w, double lr) {
    AdamState s;
    s.lr = lr;
    s.first = w.zeros_like();
    s.second = w.zeros_like();
    return s;
  }
};

inline void adam_step(AdamState& state, Weights& params, const Weights& grads) {
  if (!params.same_shape(grads) || !params.same_shape(state.first) ||
      !params.same_shape(state.second)) {
    throw RangeError("dimension mismatch: adam state, parameters and gradients disagree");
  }
  if (!grads.all_finite()) throw NumericalError("non-finite gradient passed to adam_step");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  auto p = params.tensors();
  auto g = grads.tensors();
  auto m = state.first.tensors();
  auto v = state.second.tensors();
  for (std::size_t k = 0; k < Weights::kTensorCount; ++k) {
    m[k]->array() = state.beta1 * m[k]->array() + (1.0 - state.beta1) * g[k]->array();
    v[k]->array() = state.beta2 * v[k]->array() + (1.0 - state.beta2) * g[k]->array().square();
    p[k]->array() -= state.lr * (m[k]->array() / c1) / ((v[k]->array() / c2).sqrt() + state.eps);
  }
}

/// target <- m * target + (1 - m) * source.
inline void ema_update(Matrix& target, const Matrix& source, double momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  require_shape(target.rows() == source.rows() && target.cols() == source.cols(),
                "momentum copy vs live tensor");
  target = momentum * target + (1.0 - momentum) * source;
}

inline void ema_update(ModelParams& p, double momentum) {
  ema_update(p.momentum.encoder, p.live.encoder, momentum);
  if (p.momentum_projector) {
    ema_update(p.momentum.w1, p.live.w1, momentum);
    ema_update(p.momentum.b1, p.live.b1, momentum);
    ema_update(p.momentum.w2, p.live.w2, momentum);
    ema_update(p.momentum.b2, p.live.b2, momentum);
  }
}

/// Resets the momentum copy to the live weights.
inline void sync_momentum(ModelParams& p) {
  p.momentum.encoder = p.live.encoder;
  if (p.momentum_projector) {
    p.momentum.w1 = p.live.w1;
    p.momentum.b1 = p.live.b1;
    p.momentum.w2 = p.live.w2;
    p.momentum.b2 = p.live.b2;
  }
}

}  // namespace s3cl
