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
#ifndef FAIRFED_FED_PROTOCOL_HPP_
#define FAIRFED_FED_PROTOCOL_HPP_

#include <algorithm>
#include <cstdint>
#include <future>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairfed/common.hpp"
#include "fairfed/dp_mechanism.hpp"
#include "fairfed/fair_trainer.hpp"
#include "fairfed/fairness_metrics.hpp"
#include "fairfed/mlp_model.hpp"
#include "fairfed/tabular_data.hpp"

namespace fairfed {

// kAverageDeltas: global += mean(local - global).
// kAverageParams: global = mean(local).
enum class AggregationKind { kAverageDeltas, kAverageParams };

struct FederationConfig {
  std::size_t clients = 5;
  std::size_t clients_per_round = 5;
  std::size_t rounds = 20;
  std::size_t fair_epochs = 1;     // local epochs of the fairness stage
  std::size_t private_epochs = 1;  // local epochs of the private stage
  AggregationKind aggregation = AggregationKind::kAverageDeltas;
  bool weighted = false;  // weight contributions by training-shard size
  double test_fraction = 0.2;
  bool parallel = false;

  void validate() const {
    if (clients == 0) throw Error("FederationConfig.clients must be >= 1");
    if (clients_per_round == 0 || clients_per_round > clients) {
      throw Error("FederationConfig.clients_per_round must lie in [1, clients]");
    }
    if (rounds == 0) throw Error("FederationConfig.rounds must be >= 1");
    if (fair_epochs == 0) {
      throw Error("FederationConfig.fair_epochs must be >= 1");
    }
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
      throw Error("FederationConfig.test_fraction must lie in [0, 1)");
    }
  }

  friend bool operator==(const FederationConfig&,
                         const FederationConfig&) = default;
};

struct ModelConfig {
  std::vector<std::size_t> hidden{100, 100, 100};

  void validate() const {
    if (hidden.empty()) throw Error("ModelConfig.hidden must not be empty");
    for (std::size_t h : hidden) {
      if (h == 0) throw Error("ModelConfig.hidden has a zero-width layer");
    }
  }

  std::vector<std::size_t> dims(std::size_t input_dim) const {
    std::vector<std::size_t> d{input_dim};
    d.insert(d.end(), hidden.begin(), hidden.end());
    d.push_back(1);
    return d;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct OptimConfig {
  double lr = 0.01;
  std::size_t batch_size = 64;

  void validate() const {
    if (!(lr >= 0.0)) throw Error("OptimConfig.lr must be >= 0");
    if (batch_size == 0) throw Error("OptimConfig.batch_size must be >= 1");
  }

  friend bool operator==(const OptimConfig&, const OptimConfig&) = default;
};

struct TrainingBundle {
  FederationConfig federation;
  FairnessConfig fairness;
  PrivacyConfig privacy;
  ModelConfig model;
  OptimConfig optim;

  void validate() const {
    federation.validate();
    fairness.validate();
    if (privacy.enabled) privacy.validate();
    model.validate();
    optim.validate();
  }

  friend bool operator==(const TrainingBundle&,
                         const TrainingBundle&) = default;
};

// A participant's data: the training part and the held-out evaluation part.
struct FederatedClient {
  std::size_t id = 0;
  ClientDataset train;
  ClientDataset test;
};

// Per-client state that survives between rounds.
struct ClientState {
  ModelParams local;
  LagrangeMultipliers lambda;
  bool started = false;
  PrivacyLedger ledger;
  std::size_t steps_done = 0;
};

struct RoundMetrics {
  std::size_t round = 0;  // 1-based
  std::size_t client = 0;
  double acc_overall = 0.0;
  std::vector<double> acc_group;
  double demp_error = 0.0;
  double eo_error = 0.0;
  double di_error = 0.0;
  double train_loss = 0.0;
  double epsilon_spent = 0.0;
  double delta_spent = 0.0;
  std::size_t train_size = 0;
};

struct ClientUpdate {
  ModelParams contribution;
  RoundMetrics metrics;
  std::size_t private_steps = 0;
  std::vector<StepRecord> trace;
};

inline std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size) {
  const std::size_t b = std::min(batch_size, n);
  return (n + b - 1) / b;
}

// Sorted ids of the clients taking part in `round`.
inline std::vector<std::size_t> select_clients(std::size_t n, std::size_t m,
                                               std::size_t round,
                                               std::uint64_t seed) {
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  if (m >= n) return ids;
  Rng rng = make_rng(seed, Stream::kSelection, round);
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(m);
  std::sort(ids.begin(), ids.end());
  return ids;
}

// Copies the global model into every selected client's local slot.
inline void broadcast(const ModelParams& global, std::span<ClientState> states,
                      std::span<const std::size_t> selected) {
  for (std::size_t id : selected) {
    if (id >= states.size()) throw Error(str_cat("broadcast: no client ", id));
    auto& local = states[id].local;
    if (!local.layers.empty() && !local.congruent(global)) {
      throw Error(str_cat("broadcast: client ", id,
                          " architecture differs from the global model"));
    }
    local = global;
  }
}

inline RoundMetrics evaluate_client(const ModelParams& model,
                                    const ClientDataset& eval,
                                    std::size_t round, std::size_t client) {
  RoundMetrics m;
  m.round = round;
  m.client = client;
  const auto p = forward(model, eval.features);
  const auto acc = accuracy_report(p, eval.groups, eval.labels, eval.group_count);
  const auto fair = fairness_report(p, eval.groups, eval.labels, eval.group_count);
  m.acc_overall = acc.overall;
  m.acc_group = acc.per_group;
  m.demp_error = fair.demp_error;
  m.eo_error = fair.eo_error;
  m.di_error = fair.di_error;
  return m;
}

// Fairness stage (primal-dual steps) followed, when privacy is enabled, by
// clipped and noised descent with the multipliers frozen. Starts from the
// broadcast model already held in state.local.
inline ClientUpdate client_round(const FederatedClient& client,
                                 ClientState& state, const ModelParams& global,
                                 std::size_t round,
                                 const TrainingBundle& bundle,
                                 std::uint64_t seed) {
  const auto& fed = bundle.federation;
  const ClientDataset& train = client.train;
  if (train.size() == 0) {
    throw Error(str_cat("client ", client.id, " has no training data"));
  }
  if (!state.started) {
    state.lambda = LagrangeMultipliers::filled(bundle.fairness,
                                               train.group_count,
                                               bundle.fairness.lambda_max);
    state.ledger = PrivacyLedger::for_config(bundle.privacy);
    state.started = true;
  }

  ClientUpdate up;
  const std::size_t per_epoch =
      batches_per_epoch(train.size(), bundle.optim.batch_size);
  TrainOptions opts{bundle.optim.lr, bundle.optim.batch_size,
                    fed.fair_epochs * per_epoch};
  FairTrainResult fr =
      train_fair(train, FairTrainState{state.local, state.lambda, 0},
                 bundle.fairness, opts,
                 derive_seed(seed, Stream::kFairBatches, client.id, round));
  state.local = std::move(fr.state.theta);
  state.lambda = std::move(fr.state.lambda);
  double loss_sum = 0.0;
  for (auto& rec : fr.trace) {
    rec.step += state.steps_done;
    loss_sum += rec.lagrangian;
  }
  state.steps_done += fr.trace.size();
  std::size_t loss_terms = fr.trace.size();
  up.trace = std::move(fr.trace);

  if (bundle.privacy.enabled && fed.private_epochs > 0) {
    const PrivacyConfig priv = bundle.privacy.resolved();
    BatchSampler sampler(
        train.size(), std::min(bundle.optim.batch_size, train.size()),
        derive_seed(seed, Stream::kPrivateBatches, client.id, round));
    Rng noise = make_rng(seed, Stream::kNoise, client.id, round);
    for (std::size_t e = 0; e < fed.private_epochs; ++e) {
      for (const auto& rows : sampler.next_epoch()) {
        const auto rec =
            private_sgd_step(state.local, make_batch(train, rows), state.lambda,
                             bundle.fairness, priv, bundle.optim.lr, noise);
        loss_sum += rec.lagrangian;
        ++loss_terms;
        ++up.private_steps;
      }
    }
    state.ledger = ledger_advance(state.ledger, up.private_steps);
  }

  const ClientDataset& eval = client.test.size() > 0 ? client.test : train;
  up.metrics = evaluate_client(state.local, eval, round, client.id);
  up.metrics.train_loss = loss_sum / static_cast<double>(loss_terms);
  up.metrics.epsilon_spent = state.ledger.epsilon_total;
  up.metrics.delta_spent = state.ledger.delta_total;
  up.metrics.train_size = train.size();

  up.contribution = state.local;
  if (fed.aggregation == AggregationKind::kAverageDeltas) {
    up.contribution.add_scaled(global, -1.0);
  }
  return up;
}

// Arithmetic mean (weighted when `weights` is non-empty), accumulated as a
// running mean m += (w_i / W_i)(x_i - m) so identical inputs come back
// bit-exactly and opposite inputs cancel exactly.
inline ModelParams mean_params(std::span<const ModelParams> items,
                               std::span<const double> weights = {}) {
  if (items.empty()) throw Error("aggregate: no contributions");
  if (!weights.empty() && weights.size() != items.size()) {
    throw Error("aggregate: weight count does not match contributions");
  }
  ModelParams mean = ModelParams::zeros_like(items.front());
  ModelParams step = mean;
  double total = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    items.front().check_congruent(items[i], "aggregate");
    const double w = weights.empty() ? 1.0 : weights[i];
    if (!(w >= 0.0)) throw Error("aggregate: negative weight");
    if (w == 0.0) continue;
    total += w;
    if (total == w) {
      mean = items[i];
      continue;
    }
    step = items[i];
    step.add_scaled(mean, -1.0);
    mean.add_scaled(step, w / total);
  }
  if (!(total > 0.0)) throw Error("aggregate: weights sum to zero");
  return mean;
}

inline ModelParams aggregate(const ModelParams& global,
                             std::span<const ModelParams> contributions,
                             AggregationKind mode,
                             std::span<const double> weights = {}) {
  ModelParams mean = mean_params(contributions, weights);
  if (mode == AggregationKind::kAverageParams) return mean;
  global.check_congruent(mean, "aggregate");
  ModelParams out = global;
  out.add_scaled(mean, 1.0);
  return out;
}

struct RoundSummary {
  std::size_t round = 0;
  std::vector<std::size_t> participants;
  std::vector<std::size_t> dropped;
  double epsilon_total = 0.0;  // largest per-client total after the round
  double delta_total = 0.0;
};

struct RunResult {
  bool ok = true;
  std::size_t failed_round = 0;
  std::string error;
  ModelParams global;
  std::vector<RoundMetrics> metrics;
  std::vector<RoundSummary> rounds;
  std::vector<PrivacyLedger> ledgers;             // per client
  std::vector<std::vector<StepRecord>> traces;    // per client, all rounds
  std::vector<ModelParams> history;               // global after each round
};

struct RunOptions {
  bool keep_history = false;
};

inline std::size_t input_dim_of(const std::vector<FederatedClient>& clients) {
  if (clients.empty()) throw Error("run_training: no clients");
  return clients.front().train.features.cols();
}

inline RunResult run_training(const std::vector<FederatedClient>& clients,
                              const TrainingBundle& bundle, std::uint64_t seed,
                              const RunOptions& options = {}) {
  bundle.validate();
  if (clients.size() != bundle.federation.clients) {
    throw Error(str_cat("run_training: ", clients.size(),
                        " clients supplied, configuration says ",
                        bundle.federation.clients));
  }
  RunResult result;
  const auto dims = bundle.model.dims(input_dim_of(clients));
  result.global = init_model(dims, seed);
  std::vector<ClientState> states(clients.size());
  result.traces.resize(clients.size());

  const auto& fed = bundle.federation;
  for (std::size_t round = 1; round <= fed.rounds; ++round) {
    RoundSummary summary;
    summary.round = round;
    const auto selected =
        select_clients(fed.clients, fed.clients_per_round, round, seed);
    broadcast(result.global, states, selected);

    std::vector<std::optional<ClientUpdate>> updates(selected.size());
    auto work = [&](std::size_t k) -> std::optional<ClientUpdate> {
      const std::size_t id = selected[k];
      try {
        return client_round(clients[id], states[id], result.global, round,
                            bundle, seed);
      } catch (const std::exception& e) {
        log::warn("round ", round, ": client ", id,
                  " dropped from aggregate: ", e.what());
        return std::nullopt;
      }
    };
    if (fed.parallel && selected.size() > 1) {
      std::vector<std::future<std::optional<ClientUpdate>>> futures;
      for (std::size_t k = 0; k < selected.size(); ++k) {
        futures.push_back(std::async(std::launch::async, work, k));
      }
      for (std::size_t k = 0; k < selected.size(); ++k) updates[k] = futures[k].get();
    } else {
      for (std::size_t k = 0; k < selected.size(); ++k) updates[k] = work(k);
    }

    // Barrier: everything below runs on the owning thread.
    std::vector<ModelParams> contributions;
    std::vector<double> weights;
    for (std::size_t k = 0; k < selected.size(); ++k) {
      const std::size_t id = selected[k];
      if (!updates[k]) {
        summary.dropped.push_back(id);
        continue;
      }
      summary.participants.push_back(id);
      auto& up = *updates[k];
      contributions.push_back(std::move(up.contribution));
      weights.push_back(static_cast<double>(clients[id].train.size()));
      result.metrics.push_back(std::move(up.metrics));
      auto& trace = result.traces[id];
      trace.insert(trace.end(), up.trace.begin(), up.trace.end());
    }
    if (contributions.empty()) {
      result.ok = false;
      result.failed_round = round;
      result.error = str_cat("round ", round, ": every client failed");
      break;
    }
    try {
      result.global =
          aggregate(result.global, contributions, fed.aggregation,
                    fed.weighted ? std::span<const double>(weights)
                                 : std::span<const double>());
    } catch (const std::exception& e) {
      result.ok = false;
      result.failed_round = round;
      result.error = e.what();
      break;
    }
    for (const auto& s : states) {
      summary.epsilon_total = std::max(summary.epsilon_total, s.ledger.epsilon_total);
      summary.delta_total = std::max(summary.delta_total, s.ledger.delta_total);
    }
    result.rounds.push_back(std::move(summary));
    if (options.keep_history) result.history.push_back(result.global);
  }
  for (const auto& s : states) result.ledgers.push_back(s.ledger);
  return result;
}

// Plain FedAvg: every client runs `local_epochs` of cross-entropy SGD from the
// global model and the server replaces the global model with the mean of the
// local models. Returns the global model after each round.
inline std::vector<ModelParams> run_fedavg_reference(
    const std::vector<FederatedClient>& clients, const ModelParams& initial,
    std::size_t rounds, const OptimConfig& optim, std::size_t local_epochs,
    std::uint64_t seed) {
  std::vector<ModelParams> history;
  ModelParams global = initial;
  for (std::size_t round = 1; round <= rounds; ++round) {
    std::vector<ModelParams> locals;
    for (const auto& c : clients) {
      const TrainOptions opts{
          optim.lr, optim.batch_size,
          local_epochs * batches_per_epoch(c.train.size(), optim.batch_size)};
      locals.push_back(train_plain(c.train, global, opts,
                                   derive_seed(seed, Stream::kFairBatches,
                                               c.id, round)));
    }
    global = mean_params(locals);
    history.push_back(global);
  }
  return history;
}

}  // namespace fairfed

#endif  // FAIRFED_FED_PROTOCOL_HPP_
