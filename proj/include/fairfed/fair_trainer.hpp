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
#ifndef FAIRFED_FAIR_TRAINER_HPP_
#define FAIRFED_FAIR_TRAINER_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "fairfed/common.hpp"
#include "fairfed/fairness_metrics.hpp"
#include "fairfed/matrix.hpp"
#include "fairfed/mlp_model.hpp"
#include "fairfed/tabular_data.hpp"

namespace fairfed {

// Fairness constraints of the local objective, in a fixed order used to index
// every per-constraint array below.
enum class Constraint : std::size_t { kDemP = 0, kEO = 1, kDI = 2 };
inline constexpr std::size_t kConstraintCount = 3;
inline constexpr std::array<std::string_view, kConstraintCount>
    kConstraintNames = {"demp", "eo", "di"};

inline std::size_t index(Constraint c) { return static_cast<std::size_t>(c); }

// kPerConstraint keeps one multiplier per constraint acting on the aggregated
// loss; kPerCell keeps one per group (DemP) or (group, label) cell (EO).
enum class MultiplierMode { kPerConstraint, kPerCell };

struct FairnessConfig {
  std::array<bool, kConstraintCount> enabled{false, false, false};
  // Slack mu_k: a constraint only contributes once its violation exceeds it.
  std::array<double, kConstraintCount> threshold{0.0, 0.0, 0.0};
  double lambda_max = 10.0;
  double dual_lr = 0.05;
  AggregationMode aggregation = AggregationMode::kMaxAbs;
  MultiplierMode multipliers = MultiplierMode::kPerConstraint;
  double di_guard = kDefaultDivisionGuard;

  bool is_enabled(Constraint c) const { return enabled[index(c)]; }
  bool any_enabled() const {
    return std::find(enabled.begin(), enabled.end(), true) != enabled.end();
  }

  void validate() const {
    for (std::size_t k = 0; k < kConstraintCount; ++k) {
      if (!(threshold[k] >= 0.0)) {
        throw Error(str_cat("FairnessConfig.threshold.", kConstraintNames[k],
                            " must be >= 0"));
      }
    }
    if (!(lambda_max > 0.0)) {
      throw Error("FairnessConfig.lambda_max must be > 0");
    }
    if (!(dual_lr >= 0.0)) throw Error("FairnessConfig.dual_lr must be >= 0");
    if (!(di_guard > 0.0)) throw Error("FairnessConfig.di_guard must be > 0");
  }

  friend bool operator==(const FairnessConfig&,
                         const FairnessConfig&) = default;
};

inline std::size_t multiplier_slots(const FairnessConfig& cfg, Constraint c,
                                    std::size_t group_count) {
  if (!cfg.is_enabled(c)) return 0;
  if (cfg.multipliers == MultiplierMode::kPerConstraint) return 1;
  switch (c) {
    case Constraint::kDemP: return group_count;
    case Constraint::kEO: return 2 * group_count;
    case Constraint::kDI: return 1;
  }
  return 0;
}

struct LagrangeMultipliers {
  std::array<std::vector<double>, kConstraintCount> values;

  static LagrangeMultipliers filled(const FairnessConfig& cfg,
                                    std::size_t group_count, double value) {
    LagrangeMultipliers m;
    for (std::size_t k = 0; k < kConstraintCount; ++k) {
      m.values[k].assign(
          multiplier_slots(cfg, static_cast<Constraint>(k), group_count),
          value);
    }
    return m;
  }

  // Largest multiplier of constraint k, 0 when it has none.
  double max_of(Constraint c) const {
    const auto& v = values[index(c)];
    return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
  }

  bool within(double lambda_max) const {
    for (const auto& v : values) {
      for (double x : v) {
        if (!(x >= 0.0 && x <= lambda_max)) return false;
      }
    }
    return true;
  }

  friend bool operator==(const LagrangeMultipliers&,
                         const LagrangeMultipliers&) = default;
};

// Clamps every multiplier into [0, lambda_max].
inline LagrangeMultipliers project_lambda(LagrangeMultipliers lambda,
                                          double lambda_max) {
  for (auto& v : lambda.values) {
    for (double& x : v) x = std::clamp(x, 0.0, lambda_max);
  }
  return lambda;
}

// Penalties of one batch together with their derivatives with respect to each
// prediction p_i.
struct PenaltyTerms {
  // penalty[k][s] = max(0, violation - mu_k) for multiplier slot s.
  std::array<std::vector<double>, kConstraintCount> penalty;
  // dpenalty[k][s][i] = d penalty[k][s] / d p_i.
  std::array<std::vector<std::vector<double>>, kConstraintCount> dpenalty;

  double total(Constraint c) const {
    double t = 0.0;
    for (double v : penalty[index(c)]) t += v;
    return t;
  }
};

namespace detail {

struct CellSurrogate {
  CellLosses losses;
  std::vector<std::vector<double>> grad;  // grad[c][i] = d l_c / d p_i
};

inline CellSurrogate demp_surrogate(const GroupStats& s,
                                    std::span<const int> a) {
  CellSurrogate out;
  out.losses = demp_loss(s);
  const double inv_n = 1.0 / static_cast<double>(s.total);
  out.grad.assign(s.group_count, std::vector<double>(a.size(), 0.0));
  for (std::size_t g = 0; g < s.group_count; ++g) {
    if (!out.losses.present[g]) continue;
    const double inv_ng = 1.0 / static_cast<double>(s.count[g]);
    for (std::size_t i = 0; i < a.size(); ++i) {
      out.grad[g][i] =
          (static_cast<std::size_t>(a[i]) == g ? inv_ng : 0.0) - inv_n;
    }
  }
  return out;
}

inline CellSurrogate eo_surrogate(const GroupStats& s, std::span<const int> a,
                                  std::span<const int> y) {
  const std::size_t G = s.group_count;
  CellSurrogate out;
  out.losses = eo_loss(s);
  out.grad.assign(2 * G, std::vector<double>(a.size(), 0.0));
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t g = 0; g < G; ++g) {
      const std::size_t c = l * G + g;
      if (!out.losses.present[c]) continue;
      const double inv_cell = 1.0 / static_cast<double>(s.cell_count[l][g]);
      const double inv_label = 1.0 / static_cast<double>(s.label_count[l]);
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (static_cast<std::size_t>(y[i]) != l) continue;
        out.grad[c][i] =
            (static_cast<std::size_t>(a[i]) == g ? inv_cell : 0.0) - inv_label;
      }
    }
  }
  return out;
}

inline double sign(double v) { return (v > 0.0) - (v < 0.0); }

// Violation values (>= 0) and their gradients for every multiplier slot.
inline void aggregate_slots(const CellSurrogate& cells,
                            const FairnessConfig& cfg, std::size_t n,
                            std::vector<double>& violation,
                            std::vector<std::vector<double>>& dviolation) {
  const auto& L = cells.losses;
  if (cfg.multipliers == MultiplierMode::kPerCell) {
    violation.assign(L.value.size(), 0.0);
    dviolation.assign(L.value.size(), std::vector<double>(n, 0.0));
    for (std::size_t c = 0; c < L.value.size(); ++c) {
      if (!L.present[c]) continue;
      violation[c] = std::abs(L.value[c]);
      const double sg = sign(L.value[c]);
      for (std::size_t i = 0; i < n; ++i) dviolation[c][i] = sg * cells.grad[c][i];
    }
    return;
  }
  violation.assign(1, 0.0);
  dviolation.assign(1, std::vector<double>(n, 0.0));
  if (cfg.aggregation == AggregationMode::kMaxAbs) {
    std::size_t best = L.value.size();
    for (std::size_t c = 0; c < L.value.size(); ++c) {
      if (!L.present[c]) continue;
      if (best == L.value.size() ||
          std::abs(L.value[c]) > std::abs(L.value[best])) {
        best = c;
      }
    }
    if (best == L.value.size()) return;
    violation[0] = std::abs(L.value[best]);
    const double sg = sign(L.value[best]);
    for (std::size_t i = 0; i < n; ++i) dviolation[0][i] = sg * cells.grad[best][i];
    return;
  }
  const std::size_t k = L.present_count();
  if (k == 0) return;
  const double inv_k = 1.0 / static_cast<double>(k);
  for (std::size_t c = 0; c < L.value.size(); ++c) {
    if (!L.present[c]) continue;
    violation[0] += std::abs(L.value[c]) * inv_k;
    const double sg = sign(L.value[c]) * inv_k;
    for (std::size_t i = 0; i < n; ++i) dviolation[0][i] += sg * cells.grad[c][i];
  }
}

// 1 - min guarded rate ratio, with the soft rate r(a) = mean prediction of a.
// A batch missing a group contributes no DI violation for that step.
inline void di_slot(const GroupStats& s, std::span<const int> a, double guard,
                    std::vector<double>& violation,
                    std::vector<std::vector<double>>& dviolation) {
  const std::size_t n = a.size();
  violation.assign(1, 0.0);
  dviolation.assign(1, std::vector<double>(n, 0.0));
  if (s.group_count < 2) return;
  for (std::size_t g = 0; g < s.group_count; ++g) {
    if (s.group_empty(g)) {
      log::debug("di surrogate: group ", g, " absent from batch; skipped");
      return;
    }
  }
  const DisparateImpact di = di_loss(s, guard);
  if (!(di.penalty > 0.0)) return;
  // Locate the minimising pair (first one on ties).
  std::size_t num = 0, den = 0;
  for (const auto& [pn, pd] : di_pairs(s.group_count)) {
    if (guarded_ratio(s.mean[pn], s.mean[pd], guard) == di.min_ratio) {
      num = pn;
      den = pd;
      break;
    }
  }
  violation[0] = di.penalty;
  const double top = std::max(s.mean[num], guard);
  const double bottom = std::max(s.mean[den], guard);
  const double dtop = s.mean[num] > guard ? 1.0 / bottom : 0.0;
  const double dbottom = s.mean[den] > guard ? -top / (bottom * bottom) : 0.0;
  const double inv_num = 1.0 / static_cast<double>(s.count[num]);
  const double inv_den = 1.0 / static_cast<double>(s.count[den]);
  for (std::size_t i = 0; i < n; ++i) {
    const auto g = static_cast<std::size_t>(a[i]);
    double dratio = 0.0;
    if (g == num) dratio += dtop * inv_num;
    if (g == den) dratio += dbottom * inv_den;
    dviolation[0][i] = -dratio;
  }
}

}  // namespace detail

// Soft-surrogate penalties for every enabled constraint on one batch of
// predictions.
inline PenaltyTerms fairness_penalties(std::span<const double> p,
                                       std::span<const int> y,
                                       std::span<const int> a,
                                       std::size_t group_count,
                                       const FairnessConfig& cfg) {
  PenaltyTerms t;
  if (!cfg.any_enabled()) return t;
  const GroupStats s = group_stats(p, a, y, group_count);
  const std::size_t n = p.size();
  for (std::size_t k = 0; k < kConstraintCount; ++k) {
    const auto c = static_cast<Constraint>(k);
    if (!cfg.is_enabled(c)) continue;
    std::vector<double> v;
    std::vector<std::vector<double>> dv;
    switch (c) {
      case Constraint::kDemP:
        detail::aggregate_slots(detail::demp_surrogate(s, a), cfg, n, v, dv);
        break;
      case Constraint::kEO:
        detail::aggregate_slots(detail::eo_surrogate(s, a, y), cfg, n, v, dv);
        break;
      case Constraint::kDI:
        detail::di_slot(s, a, cfg.di_guard, v, dv);
        break;
    }
    const double mu = cfg.threshold[k];
    t.penalty[k].assign(v.size(), 0.0);
    t.dpenalty[k].assign(v.size(), std::vector<double>(n, 0.0));
    for (std::size_t slot = 0; slot < v.size(); ++slot) {
      if (v[slot] > mu) {
        t.penalty[k][slot] = v[slot] - mu;
        t.dpenalty[k][slot] = std::move(dv[slot]);
      }
    }
    if (!std::all_of(t.penalty[k].begin(), t.penalty[k].end(),
                     [](double x) { return std::isfinite(x); })) {
      throw Error(str_cat("non-finite ", kConstraintNames[k], " penalty"));
    }
  }
  return t;
}

struct LagrangianEval {
  double base = 0.0;
  double value = 0.0;
  PenaltyTerms penalties;
  std::vector<double> dlogits;
};

inline void check_multipliers(const LagrangeMultipliers& lambda,
                              const FairnessConfig& cfg,
                              std::size_t group_count) {
  for (std::size_t k = 0; k < kConstraintCount; ++k) {
    const auto need =
        multiplier_slots(cfg, static_cast<Constraint>(k), group_count);
    if (lambda.values[k].size() != need) {
      throw Error(str_cat("multipliers for ", kConstraintNames[k], " have ",
                          lambda.values[k].size(), " slots, expected ", need));
    }
  }
  if (!lambda.within(cfg.lambda_max)) {
    throw Error("multipliers outside [0, lambda_max]");
  }
}

// Mean cross-entropy plus sum_k lambda_k * penalty_k, with its derivative in
// each logit.
inline LagrangianEval evaluate_lagrangian(std::span<const double> logits,
                                          std::span<const double> probs,
                                          std::span<const int> y,
                                          std::span<const int> a,
                                          std::size_t group_count,
                                          const LagrangeMultipliers& lambda,
                                          const FairnessConfig& cfg) {
  check_multipliers(lambda, cfg, group_count);
  LossTerms ce = CrossEntropyLoss{y}(logits, probs);
  LagrangianEval e;
  e.base = ce.value;
  e.value = ce.value;
  e.dlogits = std::move(ce.dlogits);
  if (!cfg.any_enabled()) return e;
  e.penalties = fairness_penalties(probs, y, a, group_count, cfg);
  std::vector<double> dp(probs.size(), 0.0);
  for (std::size_t k = 0; k < kConstraintCount; ++k) {
    for (std::size_t s = 0; s < e.penalties.penalty[k].size(); ++s) {
      const double lam = lambda.values[k][s];
      e.value += lam * e.penalties.penalty[k][s];
      for (std::size_t i = 0; i < dp.size(); ++i) {
        dp[i] += lam * e.penalties.dpenalty[k][s][i];
      }
    }
  }
  for (std::size_t i = 0; i < dp.size(); ++i) {
    e.dlogits[i] += dp[i] * probs[i] * (1.0 - probs[i]);
  }
  return e;
}

// Lagrangian value from predictions alone.
inline double lagrangian_loss(std::span<const double> p,
                              std::span<const int> y, std::span<const int> a,
                              std::size_t group_count,
                              const LagrangeMultipliers& lambda,
                              const FairnessConfig& cfg) {
  check_multipliers(lambda, cfg, group_count);
  if (p.size() != y.size()) throw Error("lagrangian_loss: length mismatch");
  double base = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    base -= y[i] == 1 ? std::log(p[i]) : std::log1p(-p[i]);
  }
  double value = base / static_cast<double>(p.size());
  const PenaltyTerms t = fairness_penalties(p, y, a, group_count, cfg);
  for (std::size_t k = 0; k < kConstraintCount; ++k) {
    for (std::size_t s = 0; s < t.penalty[k].size(); ++s) {
      value += lambda.values[k][s] * t.penalty[k][s];
    }
  }
  if (!std::isfinite(value)) throw Error("lagrangian_loss: non-finite value");
  return value;
}

// Adapter so the Lagrangian can be handed to backward().
struct LagrangianLoss {
  std::span<const int> labels;
  std::span<const int> groups;
  std::size_t group_count;
  const LagrangeMultipliers* lambda;
  const FairnessConfig* cfg;

  LossTerms operator()(std::span<const double> logits,
                       std::span<const double> probs) const {
    LagrangianEval e = evaluate_lagrangian(logits, probs, labels, groups,
                                           group_count, *lambda, *cfg);
    return {e.value, std::move(e.dlogits)};
  }
};

struct Batch {
  Matrix x;
  std::vector<int> y;
  std::vector<int> a;
  std::size_t group_count = 2;

  std::size_t size() const { return y.size(); }
};

inline Batch make_batch(const ClientDataset& d,
                        std::span<const std::size_t> rows) {
  return Batch{d.features.select_rows(rows), select(d.labels, rows),
               select(d.groups, rows), d.group_count};
}

inline Batch full_batch(const ClientDataset& d) {
  return Batch{d.features, d.labels, d.groups, d.group_count};
}

struct FairTrainState {
  ModelParams theta;
  LagrangeMultipliers lambda;
  std::size_t step = 0;
};

struct StepRecord {
  std::size_t step = 0;
  double base_loss = 0.0;
  double lagrangian = 0.0;
  std::array<double, kConstraintCount> penalty{};
  std::array<double, kConstraintCount> lambda{};  // after the step
};

struct PrimalDualGradients {
  LagrangianEval eval;
  Gradient theta_grad;
};

inline PrimalDualGradients lagrangian_gradients(const ModelParams& theta,
                                                const LagrangeMultipliers& lambda,
                                                const Batch& b,
                                                const FairnessConfig& cfg) {
  const ForwardCache cache = forward_cached(theta, b.x);
  PrimalDualGradients out;
  out.eval = evaluate_lagrangian(cache.logits, cache.probs, b.y, b.a,
                                 b.group_count, lambda, cfg);
  out.theta_grad = Gradient::zeros_like(theta);
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (out.eval.dlogits[i] != 0.0) {
      accumulate_row_gradient(theta, cache, i, out.eval.dlogits[i],
                              out.theta_grad);
    }
  }
  return out;
}

// One simultaneous primal-descent / dual-ascent step. Both gradients are taken
// at the pre-step (theta, lambda); the state is left untouched on error.
inline StepRecord fair_sgd_step(FairTrainState& s, const Batch& b,
                                const FairnessConfig& cfg, double lr) {
  if (b.size() == 0) throw Error("fair_sgd_step: empty batch");
  PrimalDualGradients g = lagrangian_gradients(s.theta, s.lambda, b, cfg);
  if (!std::isfinite(g.eval.value) || !g.theta_grad.all_finite()) {
    throw Error(str_cat("fair_sgd_step: non-finite gradient at step ", s.step));
  }
  apply_update_in_place(s.theta, g.theta_grad, lr);
  for (std::size_t k = 0; k < kConstraintCount; ++k) {
    auto& lam = s.lambda.values[k];
    for (std::size_t slot = 0; slot < lam.size(); ++slot) {
      lam[slot] += cfg.dual_lr * g.eval.penalties.penalty[k][slot];
    }
  }
  s.lambda = project_lambda(std::move(s.lambda), cfg.lambda_max);
  ++s.step;

  StepRecord r;
  r.step = s.step;
  r.base_loss = g.eval.base;
  r.lagrangian = g.eval.value;
  for (std::size_t k = 0; k < kConstraintCount; ++k) {
    r.penalty[k] = g.eval.penalties.total(static_cast<Constraint>(k));
    r.lambda[k] = s.lambda.max_of(static_cast<Constraint>(k));
  }
  return r;
}

struct TrainOptions {
  double lr = 0.01;
  std::size_t batch_size = 64;
  std::size_t steps = 1;
};

struct FairTrainResult {
  FairTrainState state;
  std::vector<StepRecord> trace;
};

// Runs `opts.steps` primal-dual steps over seeded mini-batches of `d`.
inline FairTrainResult train_fair(const ClientDataset& d, FairTrainState init,
                                  const FairnessConfig& cfg,
                                  const TrainOptions& opts,
                                  std::uint64_t batch_seed) {
  cfg.validate();
  if (opts.steps == 0) throw Error("train_fair: steps must be >= 1");
  check_multipliers(init.lambda, cfg, d.group_count);
  BatchSampler sampler(d.size(), std::min(opts.batch_size, d.size()),
                       batch_seed);
  FairTrainResult out;
  out.state = std::move(init);
  out.trace.reserve(opts.steps);
  for (std::size_t t = 0; t < opts.steps; ++t) {
    const Batch b = make_batch(d, sampler.next_batch());
    out.trace.push_back(fair_sgd_step(out.state, b, cfg, opts.lr));
  }
  return out;
}

// Starts from theta0 with every multiplier at lambda_max.
inline FairTrainResult train_fair(const ClientDataset& d, ModelParams theta0,
                                  const FairnessConfig& cfg,
                                  const TrainOptions& opts,
                                  std::uint64_t batch_seed) {
  FairTrainState init{std::move(theta0),
                      LagrangeMultipliers::filled(cfg, d.group_count,
                                                  cfg.lambda_max),
                      0};
  return train_fair(d, std::move(init), cfg, opts, batch_seed);
}

// Reference mini-batch SGD on cross-entropy alone.
inline double plain_sgd_step(ModelParams& theta, const Batch& b, double lr) {
  BackwardResult r = backward(theta, b.x, CrossEntropyLoss{b.y});
  apply_update_in_place(theta, r.gradient, lr);
  return r.loss;
}

inline ModelParams train_plain(const ClientDataset& d, ModelParams theta,
                               const TrainOptions& opts,
                               std::uint64_t batch_seed) {
  BatchSampler sampler(d.size(), std::min(opts.batch_size, d.size()),
                       batch_seed);
  for (std::size_t t = 0; t < opts.steps; ++t) {
    plain_sgd_step(theta, make_batch(d, sampler.next_batch()), opts.lr);
  }
  return theta;
}

// Probe budget of the duality-gap diagnostic. Zero everywhere means "evaluate
// at the given point only".
struct DualityProbe {
  std::size_t lambda_points = 0;  // levels t*lambda_max, t in [0,1]
  std::size_t theta_probes = 0;   // local starts around theta_hat
  double perturbation = 0.01;     // std-dev of the start perturbation
  std::size_t sgd_steps = 0;      // full-batch descent steps per start
  double lr = 0.01;
  std::uint64_t seed = 0;
};

struct DualityGap {
  double nu = 0.0;
  double at_point = 0.0;  // L(theta_hat, lambda_hat)
  double best_dual = 0.0;    // max over probed lambda of L(theta_hat, lambda)
  double best_primal = 0.0;  // min over probed theta of L(theta, lambda_hat)
};

// Numerical estimate of how far (theta_hat, lambda_hat) is from a saddle point
// of the full-data Lagrangian. Diagnostic only: the probe sets are finite.
inline DualityGap estimate_duality_gap(const ModelParams& theta_hat,
                                       const LagrangeMultipliers& lambda_hat,
                                       const ClientDataset& d,
                                       const FairnessConfig& cfg,
                                       const DualityProbe& probe) {
  const Batch all = full_batch(d);
  auto value_at = [&](const ModelParams& th, const LagrangeMultipliers& lam) {
    const ForwardCache c = forward_cached(th, all.x);
    return evaluate_lagrangian(c.logits, c.probs, all.y, all.a,
                               all.group_count, lam, cfg)
        .value;
  };
  DualityGap gap;
  gap.at_point = value_at(theta_hat, lambda_hat);
  gap.best_dual = gap.at_point;
  gap.best_primal = gap.at_point;

  for (std::size_t k = 0; k < probe.lambda_points; ++k) {
    const double t = probe.lambda_points == 1
                         ? 1.0
                         : static_cast<double>(k) /
                               static_cast<double>(probe.lambda_points - 1);
    const auto lam =
        LagrangeMultipliers::filled(cfg, d.group_count, t * cfg.lambda_max);
    gap.best_dual = std::max(gap.best_dual, value_at(theta_hat, lam));
  }

  Rng rng = make_rng(probe.seed, Stream::kProbe);
  std::normal_distribution<double> normal(0.0, probe.perturbation);
  for (std::size_t p = 0; p < probe.theta_probes; ++p) {
    ModelParams th = theta_hat;
    if (p > 0) th.for_each([&](double& v) { v += normal(rng); });
    gap.best_primal = std::min(gap.best_primal, value_at(th, lambda_hat));
    for (std::size_t s = 0; s < probe.sgd_steps; ++s) {
      PrimalDualGradients g = lagrangian_gradients(th, lambda_hat, all, cfg);
      apply_update_in_place(th, g.theta_grad, probe.lr);
      gap.best_primal = std::min(gap.best_primal, value_at(th, lambda_hat));
    }
  }
  gap.nu = gap.best_dual - gap.best_primal;
  return gap;
}

}  // namespace fairfed

#endif  // FAIRFED_FAIR_TRAINER_HPP_
