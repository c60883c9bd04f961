#pragma once

#include <vector>

#include "s3cl/error.hpp"
#include "s3cl/graph.hpp"
#include "s3cl/matrix.hpp"
#include "s3cl/nn.hpp"
#include "s3cl/semantic.hpp"
#include "s3cl/structural.hpp"

namespace s3cl {

struct ObjectiveSettings {
  double gamma = 0.5;
  double tau1 = 1.0;
  double tau2 = 1.0;
  bool normalize_projection = true;
};

struct LossBreakdown {
  double structural = 0.0;
  double semantic = 0.0;
  double total = 0.0;
};

struct ObjectiveResult {
  LossBreakdown loss;
  Weights grads;
};

/// gamma * L_str + (1 - gamma) * L_sem and its gradient w.r.t. every live
/// weight. Each propagated view goes through encoder and projector for the
/// structural term; the semantic term uses the encoder output on the
/// mixed-order features. L_sem is skipped (reported as 0) when `prototypes`
/// is null or gamma == 1.
inline ObjectiveResult joint_objective(const Weights& w, const PropagatedViews& views,
                                       const NegativeBatch& negatives,
                                       const PrototypeState* prototypes,
                                       const ObjectiveSettings& s) {
  if (!(s.gamma >= 0.0 && s.gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  const std::size_t num_views = views.count();
  if (num_views == 0) throw RangeError("no propagated views");

  ObjectiveResult r;
  r.grads = w.zeros_like();

  std::vector<EncoderOutput> enc;
  std::vector<ProjectorCache> proj;
  std::vector<Matrix> projected;
  enc.reserve(num_views);
  proj.reserve(num_views);
  projected.reserve(num_views);
  for (const Matrix& x : views.views) {
    enc.push_back(encoder_forward(w.encoder, x));
    proj.push_back(projector_forward(w, enc.back().out, s.normalize_projection));
    projected.push_back(proj.back().out);
  }
  StructuralLoss str = structural_loss(projected, negatives, s.tau1);
  projected.clear();
  r.loss.structural = str.value;

  if (s.gamma > 0.0) {
    for (std::size_t l = 0; l < num_views; ++l) {
      Matrix grad_u = s.gamma * str.grads[l];
      Matrix grad_h = projector_backward(w, enc[l].out, proj[l], grad_u, r.grads);
      Matrix grad_pre = relu_backward(grad_h, enc[l].pre);
      r.grads.encoder.noalias() += views.views[l].transpose() * grad_pre;
    }
  }

  const bool with_semantic = prototypes != nullptr && s.gamma < 1.0;
  if (with_semantic) {
    EncoderOutput mixed = encoder_forward(w.encoder, views.mixed);
    SemanticLoss sem = semantic_loss(mixed.out, prototypes->centroids, prototypes->labels, s.tau2);
    r.loss.semantic = sem.value;
    Matrix grad_pre = relu_backward((1.0 - s.gamma) * sem.grad, mixed.pre);
    r.grads.encoder.noalias() += views.mixed.transpose() * grad_pre;
  }
  r.loss.total = s.gamma * r.loss.structural + (1.0 - s.gamma) * r.loss.semantic;
  return r;
}

/// ReLU(X Θ') on the mixed-order features using the momentum encoder.
inline Matrix momentum_representations(const ModelParams& p, const PropagatedViews& views) {
  return encoder_forward(p.momentum.encoder, views.mixed).out;
}

}  // namespace s3cl
