#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "s3cl/error.hpp"
#include "s3cl/nn.hpp"
#include "s3cl/rng.hpp"

namespace s3cl {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  // Worst coordinate: tensor index into Weights::tensors() and flat offset.
  std::size_t worst_tensor = 0;
  std::size_t worst_offset = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates to probe; 0 means every coordinate.
  std::size_t samples = 0;
  /// Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
};

/// Compares `analytic` against central differences of `loss` around `params`.
/// `params` is perturbed in place and restored before returning.
inline GradCheckResult finite_diff_check(const std::function<double(const Weights&)>& loss,
                                         Weights& params, const Weights& analytic,
                                         const GradCheckOptions& opt, Rng& rng) {
  if (!(opt.step > 0.0)) throw ConfigError("finite-difference step must be positive");
  if (!params.same_shape(analytic)) {
    throw RangeError("dimension mismatch: analytic gradient vs parameters");
  }
  const double base = loss(params);
  const double again = loss(params);
  if (!(base == again) && !(std::isnan(base) && std::isnan(again))) {
    throw ContractError("loss is not deterministic: two evaluations at the same point differ");
  }

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  auto p = params.tensors();
  auto g = analytic.tensors();
  for (std::size_t k = 0; k < Weights::kTensorCount; ++k) {
    for (std::size_t off = 0; off < static_cast<std::size_t>(p[k]->size()); ++off) {
      coords.emplace_back(k, off);
    }
  }
  if (opt.samples > 0 && opt.samples < coords.size()) {
    // Partial Fisher-Yates: the first `samples` entries become a uniform subset.
    for (std::size_t i = 0; i < opt.samples; ++i) {
      std::swap(coords[i], coords[i + rng.index(coords.size() - i)]);
    }
    coords.resize(opt.samples);
  }

  GradCheckResult res;
  for (auto [k, off] : coords) {
    double& x = p[k]->data()[off];
    const double saved = x;
    x = saved + opt.step;
    const double up = loss(params);
    x = saved - opt.step;
    const double down = loss(params);
    x = saved;
    const double numeric = (up - down) / (2.0 * opt.step);
    const double a = g[k]->data()[off];
    const double err =
        std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opt.floor});
    ++res.checked;
    if (!(err <= res.max_relative_error)) {
      res.max_relative_error = err;
      res.worst_tensor = k;
      res.worst_offset = off;
      res.worst_analytic = a;
      res.worst_numeric = numeric;
    }
  }
  return res;
}

}  // namespace s3cl
