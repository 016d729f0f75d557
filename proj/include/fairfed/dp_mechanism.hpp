/*
 * Copyright 2026 The FairFed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef FAIRFED_DP_MECHANISM_HPP_
#define FAIRFED_DP_MECHANISM_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>

#include "fairfed/common.hpp"
#include "fairfed/fair_trainer.hpp"
#include "fairfed/mlp_model.hpp"

namespace fairfed {

// sqrt(2 ln(1.25 / delta)), the Gaussian-mechanism constant.
inline double gaussian_tail_factor(double delta) {
  return std::sqrt(2.0 * std::log(1.25 / delta));
}

// Noise standard deviation that makes the Gaussian mechanism (epsilon,
// delta)-DP for L2 sensitivity `sensitivity`:
//   sigma = sensitivity * sqrt(2 ln(1.25/delta)) / epsilon.
inline double calibrate_sigma(double epsilon, double delta,
                              double sensitivity) {
  if (!(epsilon > 0.0)) throw Error("calibrate_sigma: epsilon must be > 0");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw Error("calibrate_sigma: delta must lie in (0, 1)");
  }
  if (!(sensitivity >= 0.0)) {
    throw Error("calibrate_sigma: sensitivity must be >= 0");
  }
  return sensitivity * gaussian_tail_factor(delta) / epsilon;
}

// Smallest epsilon certified by noise std-dev `sigma` at `delta`.
inline double implied_epsilon(double sigma, double delta, double sensitivity) {
  if (!(sigma > 0.0)) throw Error("implied_epsilon: sigma must be > 0");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw Error("implied_epsilon: delta must lie in (0, 1)");
  }
  return gaussian_tail_factor(delta) / (sigma / sensitivity);
}

// How the per-step noise is fixed: from a target epsilon, or from an explicit
// noise multiplier (epsilon is then the one it certifies).
enum class NoiseCalibration { kFromEpsilon, kFromSigma };

struct PrivacyConfig {
  bool enabled = false;
  double epsilon = 1.0;  // per private step
  double delta = 1e-5;
  double clip = 1.0;     // per-example L2 bound C
  // Noise multiplier sigma; per-coordinate noise std-dev is sigma * C.
  double noise_multiplier = 0.0;
  NoiseCalibration calibration = NoiseCalibration::kFromEpsilon;

  // Per-example clipping bounds one example's contribution by C.
  double sensitivity() const { return clip; }

  void validate() const {
    if (!(delta > 0.0 && delta < 1.0)) {
      throw Error("PrivacyConfig.delta must lie in (0, 1)");
    }
    if (!(clip > 0.0)) throw Error("PrivacyConfig.clip must be > 0");
    if (calibration == NoiseCalibration::kFromEpsilon && !(epsilon > 0.0)) {
      throw Error("PrivacyConfig.epsilon must be > 0");
    }
    if (calibration == NoiseCalibration::kFromSigma &&
        !(noise_multiplier > 0.0)) {
      throw Error("PrivacyConfig.noise_multiplier must be > 0");
    }
  }

  // Copy with the derived quantity filled in so that epsilon and
  // noise_multiplier satisfy the calibration equation.
  PrivacyConfig resolved() const {
    validate();
    PrivacyConfig out = *this;
    if (calibration == NoiseCalibration::kFromEpsilon) {
      out.noise_multiplier = calibrate_sigma(epsilon, delta, sensitivity()) / clip;
    } else {
      out.epsilon = implied_epsilon(noise_multiplier * clip, delta,
                                    sensitivity());
    }
    return out;
  }

  friend bool operator==(const PrivacyConfig&, const PrivacyConfig&) = default;
};

// g / max(1, ||g|| / C). Inputs already inside the ball come back unchanged.
inline Gradient clip_gradient(const Gradient& g, double clip) {
  if (!(clip > 0.0)) throw Error("clip_gradient: bound must be > 0");
  const double factor = std::max(1.0, grad_l2_norm(g) / clip);
  if (factor == 1.0) return g;
  Gradient out = g;
  out.for_each([factor](double& v) { v /= factor; });
  return out;
}

// (clipped_sum + z) / B with z ~ N(0, sigma^2 C^2 I) drawn from `rng`.
inline Gradient gaussian_perturb(const Gradient& clipped_sum, double sigma,
                                 double clip, std::size_t batch_size,
                                 Rng& rng) {
  if (!(sigma >= 0.0)) throw Error("gaussian_perturb: sigma must be >= 0");
  if (batch_size == 0) throw Error("gaussian_perturb: batch size must be >= 1");
  const double b = static_cast<double>(batch_size);
  Gradient out = clipped_sum;
  if (sigma == 0.0) {
    out.for_each([b](double& v) { v /= b; });
    return out;
  }
  std::normal_distribution<double> normal(0.0, sigma * clip);
  out.for_each([&](double& v) { v = (v + normal(rng)) / b; });
  return out;
}

// Basic (linear) composition over private steps.
struct PrivacyLedger {
  std::size_t steps = 0;
  double epsilon_step = 0.0;
  double delta_step = 0.0;
  double epsilon_total = 0.0;
  double delta_total = 0.0;

  static PrivacyLedger for_config(const PrivacyConfig& cfg) {
    PrivacyLedger l;
    if (cfg.enabled) {
      const PrivacyConfig r = cfg.resolved();
      l.epsilon_step = r.epsilon;
      l.delta_step = r.delta;
    }
    return l;
  }

  friend bool operator==(const PrivacyLedger&, const PrivacyLedger&) = default;
};

inline PrivacyLedger ledger_advance(PrivacyLedger l, std::size_t steps) {
  l.steps += steps;
  l.epsilon_total = static_cast<double>(l.steps) * l.epsilon_step;
  l.delta_total = static_cast<double>(l.steps) * l.delta_step;
  return l;
}

struct PrivateStepRecord {
  double lagrangian = 0.0;
  std::size_t clipped = 0;  // examples whose gradient was scaled down
};

// One clipped, noised descent step on the Lagrangian with frozen multipliers.
// Each example's gradient is its row's share of the batch gradient scaled by
// B, so the unclipped per-example gradients average to the batch gradient.
inline PrivateStepRecord private_sgd_step(ModelParams& theta, const Batch& b,
                                          const LagrangeMultipliers& lambda,
                                          const FairnessConfig& fair,
                                          const PrivacyConfig& privacy,
                                          double lr, Rng& noise_rng) {
  if (b.size() == 0) throw Error("private_sgd_step: empty batch");
  const ForwardCache cache = forward_cached(theta, b.x);
  const LagrangianEval eval = evaluate_lagrangian(
      cache.logits, cache.probs, b.y, b.a, b.group_count, lambda, fair);
  const double n = static_cast<double>(b.size());
  Gradient sum = Gradient::zeros_like(theta);
  Gradient example = Gradient::zeros_like(theta);
  PrivateStepRecord rec;
  rec.lagrangian = eval.value;
  for (std::size_t i = 0; i < b.size(); ++i) {
    example.set_zero();
    accumulate_row_gradient(theta, cache, i, n * eval.dlogits[i], example);
    const double norm = grad_l2_norm(example);
    if (!std::isfinite(norm)) {
      throw Error(str_cat("private_sgd_step: non-finite gradient at row ", i));
    }
    if (norm > privacy.clip) ++rec.clipped;
    sum.add_scaled(clip_gradient(example, privacy.clip), 1.0);
  }
  const Gradient noisy = gaussian_perturb(sum, privacy.noise_multiplier,
                                          privacy.clip, b.size(), noise_rng);
  apply_update_in_place(theta, noisy, lr);
  return rec;
}

}  // namespace fairfed

#endif  // FAIRFED_DP_MECHANISM_HPP_
