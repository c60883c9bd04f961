#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "s3cl/config.hpp"
#include "s3cl/error.hpp"
#include "s3cl/graph.hpp"
#include "s3cl/nn.hpp"
#include "s3cl/objective.hpp"
#include "s3cl/rng.hpp"
#include "s3cl/semantic.hpp"
#include "s3cl/structural.hpp"

namespace s3cl {

struct EpochRecord {
  std::size_t epoch = 0;
  LossBreakdown loss;
  bool warmup = false;
  bool e_step = false;
  std::size_t prototypes = 0;    // K in effect for this epoch (0 before the first E-step)
  double label_change = 0.0;     // fraction of raw pseudo-label ids that moved in this E-step
  std::size_t fallback_anchors = 0;
  bool inference_converged = true;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t inference_calls = 0;
  std::size_t inference_max_iter_hits = 0;
  bool early_stopped = false;
};

/// Everything needed to continue training bit-exactly.
struct TrainState {
  ModelParams params;
  AdamState adam;
  std::optional<PrototypeState> prototypes;
  std::size_t epoch = 0;  // completed epochs
};

inline TrainState initial_state(const AttributedGraph& g, const TrainConfig& cfg) {
  cfg.validate();
  Rng rng = Rng(cfg.seed).split(0x1417);
  TrainState s;
  s.params = init_params(cfg.layer_sizes(g.feature_dim()), rng, cfg.momentum_projector);
  s.adam = AdamState::for_params(s.params.live, cfg.lr);
  s.adam.beta1 = cfg.adam_beta1;
  s.adam.beta2 = cfg.adam_beta2;
  s.adam.eps = cfg.adam_eps;
  return s;
}

/// Negatives per anchor actually drawn: M, clamped to the number of distinct
/// (node, view) pairs other than the anchor itself.
inline std::size_t effective_negatives(std::size_t num_nodes, const TrainConfig& cfg) {
  if (num_nodes < 2) return 0;
  return std::min(cfg.negatives, (num_nodes - 1) * cfg.prop_steps);
}

/// Stream used for the negatives of `epoch`; depends only on (seed, epoch).
inline Rng epoch_rng(const TrainConfig& cfg, std::size_t epoch) {
  return Rng(cfg.seed).split(0x9E6A7100ULL + epoch);
}

struct TrainHooks {
  std::function<void(const EpochRecord&, const TrainState&)> on_epoch;
};

/// E-step: prototypes from l2-normalized momentum-encoder representations,
/// smoothed over the graph and recomputed from the refined labels.
inline InferenceReport expectation_step(TrainState& state, const PropagatedViews& views,
                                        const SparseTransition& t, const TrainConfig& cfg,
                                        double* label_change = nullptr) {
  const Matrix reps = l2_normalize_rows(momentum_representations(state.params, views));
  InferenceResult inferred = infer_prototypes(reps, cfg.inference());
  std::vector<int> refined =
      refine_labels(inferred.state.labels, inferred.state.count(), t, cfg.label_propagation());
  PrototypeState next = recompute_prototypes(reps, std::move(refined), inferred.state.count());
  if (label_change) {
    *label_change = 1.0;
    if (state.prototypes && state.prototypes->labels.size() == next.labels.size()) {
      std::size_t moved = 0;
      for (std::size_t i = 0; i < next.labels.size(); ++i) {
        moved += state.prototypes->labels[i] != next.labels[i];
      }
      *label_change = static_cast<double>(moved) / static_cast<double>(next.labels.size());
    }
  }
  state.prototypes = std::move(next);
  return inferred.report;
}

/// Runs epochs [state.epoch, cfg.epochs). The first warmup_epochs optimize the
/// structural loss alone with label-free negatives; afterwards each epoch is
/// an E-step (every e_step_period epochs) followed by one Adam step on the
/// joint loss and a momentum update. `state` is only advanced after an epoch
/// succeeds, so on a thrown error it still holds the last good epoch.
inline TrainReport train(const AttributedGraph& g, const TrainConfig& cfg, TrainState& state,
                         const TrainHooks& hooks = {}) {
  cfg.validate();
  if (!state.params.live.encoder.size() ||
      static_cast<std::size_t>(state.params.live.encoder.rows()) != g.feature_dim() ||
      static_cast<std::size_t>(state.params.live.encoder.cols()) != cfg.encoder_dim) {
    throw ConfigError("parameter shapes do not match graph and config");
  }
  TrainReport report;
  if (state.epoch >= cfg.epochs) return report;

  const SparseTransition t = normalized_adjacency(g);
  const PropagatedViews views = propagate(t, g.features, cfg.prop_steps);
  const std::size_t per_anchor = effective_negatives(g.num_nodes, cfg);

  for (std::size_t e = state.epoch; e < cfg.epochs; ++e) {
    const auto start = std::chrono::steady_clock::now();
    const bool warm = e < cfg.warmup_epochs;
    TrainState next = state;
    EpochRecord rec;
    rec.epoch = e;
    rec.warmup = warm;

    if (!warm && (!next.prototypes || (e - cfg.warmup_epochs) % cfg.e_step_period == 0)) {
      InferenceReport inf = expectation_step(next, views, t, cfg, &rec.label_change);
      ++report.inference_calls;
      if (!inf.converged) ++report.inference_max_iter_hits;
      rec.e_step = true;
      rec.inference_converged = inf.converged;
    }
    const PrototypeState* protos = warm || !next.prototypes ? nullptr : &*next.prototypes;
    rec.prototypes = protos ? protos->count() : 0;

    Rng rng = epoch_rng(cfg, e);
    std::optional<std::span<const int>> filter;
    if (protos) filter = std::span<const int>(protos->labels);
    const NegativeBatch negatives =
        sample_negative_batch(g.num_nodes, filter, per_anchor, cfg.prop_steps, rng);
    rec.fallback_anchors = negatives.fallback_count;

    ObjectiveResult obj = joint_objective(next.params.live, views, negatives, protos, cfg.objective(warm));
    rec.loss = obj.loss;
    if (!std::isfinite(obj.loss.total) || !obj.grads.all_finite()) {
      throw NumericalError("non-finite loss at epoch " + std::to_string(e) + " (structural " +
                           std::to_string(obj.loss.structural) + ", semantic " +
                           std::to_string(obj.loss.semantic) +
                           "); last good state is epoch " + std::to_string(state.epoch));
    }
    adam_step(next.adam, next.params.live, obj.grads);
    if (e + 1 == cfg.warmup_epochs) {
      sync_momentum(next.params);
    } else {
      ema_update(next.params, cfg.momentum);
    }
    next.epoch = e + 1;
    state = std::move(next);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec, state);

    if (cfg.early_stop && !warm && report.epochs.size() > 20) {
      const double now = rec.loss.total;
      const double then = report.epochs[report.epochs.size() - 21].loss.total;
      if (std::abs(now - then) <= 1e-5 * std::max(std::abs(then), 1e-300)) {
        report.early_stopped = true;
        break;
      }
    }
  }
  return report;
}

struct PretrainResult {
  TrainState state;
  TrainReport report;
};

/// Fresh initialization followed by train().
inline PretrainResult pretrain(const AttributedGraph& g, const TrainConfig& cfg,
                               const TrainHooks& hooks = {}) {
  PretrainResult r;
  r.state = initial_state(g, cfg);
  r.report = train(g, cfg, r.state, hooks);
  return r;
}

/// Final representations H = ReLU(X_mixed Θ) from the live encoder.
inline Matrix embed(const ModelParams& params, const AttributedGraph& g, const TrainConfig& cfg) {
  if (static_cast<std::size_t>(params.live.encoder.rows()) != g.feature_dim() ||
      static_cast<std::size_t>(params.live.encoder.cols()) != cfg.encoder_dim) {
    throw ConfigError("encoder shape " + std::to_string(params.live.encoder.rows()) + "x" +
                      std::to_string(params.live.encoder.cols()) + " does not match graph/config");
  }
  const PropagatedViews views = propagate(normalized_adjacency(g), g.features, cfg.prop_steps);
  return encoder_forward(params.live.encoder, views.mixed).out;
}

/// Report as JSON. Wall-clock timings are only included on request so that
/// the default document is reproducible byte for byte.
inline nlohmann::json report_to_json(const TrainReport& r, bool include_timing = false) {
  nlohmann::json j;
  j["inference_calls"] = r.inference_calls;
  j["inference_max_iter_hits"] = r.inference_max_iter_hits;
  j["early_stopped"] = r.early_stopped;
  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochRecord& e : r.epochs) {
    nlohmann::json x;
    x["epoch"] = e.epoch;
    x["loss_structural"] = e.loss.structural;
    x["loss_semantic"] = e.loss.semantic;
    x["loss_total"] = e.loss.total;
    x["warmup"] = e.warmup;
    x["e_step"] = e.e_step;
    x["prototypes"] = e.prototypes;
    x["label_change"] = e.label_change;
    x["fallback_anchors"] = e.fallback_anchors;
    x["inference_converged"] = e.inference_converged;
    if (include_timing) x["seconds"] = e.seconds;
    epochs.push_back(std::move(x));
  }
  j["epochs"] = std::move(epochs);
  return j;
}

}  // namespace s3cl
