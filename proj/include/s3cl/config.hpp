#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include <json.hpp>

#include "s3cl/error.hpp"
#include "s3cl/nn.hpp"
#include "s3cl/objective.hpp"
#include "s3cl/semantic.hpp"

namespace s3cl {

/// Every training hyperparameter. JSON keys are the field names verbatim.
struct TrainConfig {
  std::size_t prop_steps = 10;      // L
  std::size_t encoder_dim = 512;    // D'
  std::size_t hidden_dim = 2048;    // projector hidden width
  std::size_t projection_dim = 512;
  std::size_t negatives = 512;      // M
  double tau1 = 1.0;
  double tau2 = 1.0;
  double gamma = 0.5;
  double xi = 0.45;
  std::size_t lp_steps = 10;
  double lp_teleport = 0.15;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 200;
  std::size_t warmup_epochs = 50;
  double momentum = 0.99;
  bool momentum_projector = false;
  std::uint64_t seed = 0;
  bool normalize_projection = true;
  std::size_t e_step_period = 1;
  std::size_t proto_max_iters = 100;
  double proto_tolerance = 0.0;
  bool early_stop = false;

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (prop_steps < 1) fail("prop_steps must be >= 1");
    if (encoder_dim < 1 || hidden_dim < 1 || projection_dim < 1) fail("layer sizes must be >= 1");
    if (!(tau1 > 0.0) || !std::isfinite(tau1)) fail("tau1 must be positive");
    if (!(tau2 > 0.0) || !std::isfinite(tau2)) fail("tau2 must be positive");
    if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must lie in [0, 1]");
    if (!(xi > 0.0)) fail("xi must be positive");
    if (!(lp_teleport > 0.0 && lp_teleport <= 1.0)) fail("lp_teleport must lie in (0, 1]");
    if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1 must lie in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2 must lie in [0, 1)");
    if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
    if (warmup_epochs > epochs) fail("warmup_epochs must not exceed epochs");
    if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
    if (e_step_period < 1) fail("e_step_period must be >= 1");
    if (proto_max_iters < 1) fail("proto_max_iters must be >= 1");
    if (!(proto_tolerance >= 0.0 && proto_tolerance <= 1.0)) fail("proto_tolerance must lie in [0, 1]");
  }

  LayerSizes layer_sizes(std::size_t input_dim) const {
    return {input_dim, encoder_dim, hidden_dim, projection_dim};
  }

  ObjectiveSettings objective(bool warm) const {
    return {warm ? 1.0 : gamma, tau1, tau2, normalize_projection};
  }

  PrototypeInferenceConfig inference() const { return {xi, proto_max_iters, proto_tolerance}; }
  LabelPropagationConfig label_propagation() const { return {lp_steps, lp_teleport}; }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

namespace detail {

inline nlohmann::json real_to_json(double v) {
  if (std::isinf(v) && v > 0) return "inf";
  return v;
}

inline double real_from_json(const nlohmann::json& j, const std::string& key) {
  if (j.is_string() && j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
  if (!j.is_number()) throw ConfigError("config field '" + key + "' must be a number");
  return j.get<double>();
}

template <typename T>
T count_from_json(const nlohmann::json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0) {
    throw ConfigError("config field '" + key + "' must be a non-negative integer");
  }
  return j.get<T>();
}

inline bool bool_from_json(const nlohmann::json& j, const std::string& key) {
  if (!j.is_boolean()) throw ConfigError("config field '" + key + "' must be a boolean");
  return j.get<bool>();
}

}  // namespace detail

// Field table shared by serialization and parsing.
#define S3CL_CONFIG_COUNTS(X) \
  X(prop_steps) X(encoder_dim) X(hidden_dim) X(projection_dim) X(negatives) X(lp_steps) \
  X(epochs) X(warmup_epochs) X(e_step_period) X(proto_max_iters)
#define S3CL_CONFIG_REALS(X) \
  X(tau1) X(tau2) X(gamma) X(xi) X(lp_teleport) X(lr) X(adam_beta1) X(adam_beta2) X(adam_eps) \
  X(momentum) X(proto_tolerance)
#define S3CL_CONFIG_BOOLS(X) X(momentum_projector) X(normalize_projection) X(early_stop)

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j;
#define S3CL_PUT(f) j[#f] = c.f;
#define S3CL_PUT_REAL(f) j[#f] = detail::real_to_json(c.f);
  S3CL_CONFIG_COUNTS(S3CL_PUT)
  S3CL_CONFIG_REALS(S3CL_PUT_REAL)
  S3CL_CONFIG_BOOLS(S3CL_PUT)
#undef S3CL_PUT
#undef S3CL_PUT_REAL
  j["seed"] = c.seed;
  return j;
}

/// Overlays the keys present in `j` onto `base`. Unknown keys are rejected.
inline TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  if (!j.is_object()) throw ConfigError("config document must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const nlohmann::json& v = it.value();
#define S3CL_GET_COUNT(f) \
  if (key == #f) { base.f = detail::count_from_json<std::size_t>(v, key); continue; }
#define S3CL_GET_REAL(f) \
  if (key == #f) { base.f = detail::real_from_json(v, key); continue; }
#define S3CL_GET_BOOL(f) \
  if (key == #f) { base.f = detail::bool_from_json(v, key); continue; }
    S3CL_CONFIG_COUNTS(S3CL_GET_COUNT)
    S3CL_CONFIG_REALS(S3CL_GET_REAL)
    S3CL_CONFIG_BOOLS(S3CL_GET_BOOL)
#undef S3CL_GET_COUNT
#undef S3CL_GET_REAL
#undef S3CL_GET_BOOL
    if (key == "seed") {
      base.seed = detail::count_from_json<std::uint64_t>(v, key);
      continue;
    }
    throw ConfigError("unknown config field '" + key + "'");
  }
  return base;
}

inline TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, base);
}

}  // namespace s3cl
