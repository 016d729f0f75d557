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
#include <gtest/gtest.h>

// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criterion 8 needs the Adult census files (adult.data and
// adult.test) in $FAIRFED_ADULT_DIR and is skipped otherwise.

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <string>

#include "fairfed/fairfed.hpp"
#include "test_util.hpp"

namespace fairfed {
namespace {

enum class Verdict { kPass, kFail, kSkip };

struct Outcome {
  Verdict verdict = Verdict::kFail;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) {
  return {ok ? Verdict::kPass : Verdict::kFail, std::move(detail)};
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1. Gaussian-mechanism calibration.
Outcome calibration() {
  namespace mp = boost::multiprecision;
  using Big = mp::cpp_bin_float_50;
  const double sigma = calibrate_sigma(1.0, 1e-5, 1.0);
  const Big ref = mp::sqrt(Big(2) * mp::log(Big("1.25") / Big("1e-5")));
  const double rel =
      mp::abs((Big(sigma) - ref) / ref).convert_to<double>();
  const double eps_back = std::sqrt(2 * std::log(1.25 / 1e-5)) / (sigma / 1.0);
  const double rel_back = std::abs(eps_back - 1.0);
  return verdict(rel <= 1e-12 && rel_back <= 1e-12,
                 str_cat("sigma=", fmt("%.15g", sigma), " rel.err vs 50-digit=",
                         fmt("%.2e", rel), " substituted eps rel.err=",
                         fmt("%.2e", rel_back)));
}

// 2. Clipping bound/identity and noise variance.
Outcome clipping_and_noise() {
  std::mt19937_64 gen(2);
  std::lognormal_distribution<double> scale(0.0, 2.0);
  std::uniform_real_distribution<double> clip_dist(0.01, 10.0);
  const int cases = 20000;
  int bound_fail = 0, identity_fail = 0, below = 0;
  for (int t = 0; t < cases; ++t) {
    const auto m = test::random_model({1 + gen() % 6, 1 + gen() % 5, 1}, gen,
                                      scale(gen));
    Gradient g = Gradient::zeros_like(m);
    g.assign_flat(m.flatten());
    const double C = clip_dist(gen);
    const Gradient c = clip_gradient(g, C);
    if (!(grad_l2_norm(c) <= C + 1e-12)) ++bound_fail;
    if (grad_l2_norm(g) <= C) {
      ++below;
      if (!(c == g)) ++identity_fail;
    }
  }
  const double sigma = 1.0, C = 1.5;
  const std::size_t B = 64;
  Gradient sum({DenseLayer(1, 1)});
  sum.assign_flat(std::vector<double>{0.7, -0.2});
  Rng rng = make_rng(3, Stream::kNoise);
  const int draws = 100000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double v = gaussian_perturb(sum, sigma, C, B, rng).flat(0);
    s += v;
    s2 += v * v;
  }
  const double mean = s / draws;
  const double var = s2 / draws - mean * mean;
  const double want = sigma * sigma * C * C / static_cast<double>(B * B);
  const double rel = std::abs(var - want) / want;
  return verdict(bound_fail == 0 && identity_fail == 0 && below > 0 && rel <= 0.05,
                 str_cat(cases, " gradients (", below, " inside the ball): ",
                         bound_fail, " bound and ", identity_fail,
                         " identity violations; variance rel.err over ", draws,
                         " draws=", fmt("%.4f", rel)));
}

ClientDataset random_client(std::size_t n, std::size_t d, std::size_t G,
                            std::mt19937_64& gen) {
  ClientDataset c;
  c.features = test::random_matrix(n, d, gen);
  c.group_count = G;
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t i = 0; i < n; ++i) {
    c.groups.push_back(static_cast<int>(i % G));
    c.labels.push_back(u(gen) < (c.groups.back() == 0 ? 0.7 : 0.3) ? 1 : 0);
  }
  return c;
}

// 3. Finite differences on the full Lagrangian.
Outcome lagrangian_gradient() {
  std::mt19937_64 gen(3);
  int checked = 0, failed = 0;
  double worst = 0.0;
  for (int t = 0; t < 2000 && checked < 60; ++t) {
    FairnessConfig cfg;
    cfg.enabled = {true, true, true};
    cfg.lambda_max = 3.0;
    cfg.multipliers =
        t % 2 ? MultiplierMode::kPerCell : MultiplierMode::kPerConstraint;
    cfg.aggregation = t % 3 ? AggregationMode::kMaxAbs : AggregationMode::kMeanAbs;
    const std::size_t G = 2 + t % 2;
    const ClientDataset d = random_client(10 + t % 7, 3, G, gen);
    const Batch b = full_batch(d);
    const auto m = test::random_model({3, 5, 4, 1}, gen);
    if (!test::far_from_kinks(m, b, cfg, 1e-3)) continue;
    auto lam = LagrangeMultipliers::filled(cfg, G, 0.0);
    for (auto& v : lam.values) {
      for (double& x : v) x = std::uniform_real_distribution<double>(0.5, 3)(gen);
    }
    const auto g = lagrangian_gradients(m, lam, b, cfg);
    bool active = true;
    for (std::size_t k = 0; k < kConstraintCount; ++k) {
      active = active && g.eval.penalties.total(static_cast<Constraint>(k)) > 0;
    }
    if (!active) continue;
    const auto fd = test::numeric_gradient(m, [&](const ModelParams& p) {
      return lagrangian_loss(forward(p, b.x), b.y, b.a, G, lam, cfg);
    });
    const double err = test::max_relative_error(g.theta_grad.flatten(), fd);
    worst = std::max(worst, err);
    failed += err >= 1e-4;
    ++checked;
  }
  return verdict(checked >= 30 && failed == 0,
                 str_cat(checked, " nets with all three penalties active, ",
                         failed, " failures, worst rel.err=", fmt("%.2e", worst)));
}

// 4. Hard-decision report against the filter-then-average oracle.
Outcome metric_oracle() {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0, 1);
  int mismatches = 0, with_empty = 0;
  double worst = 0.0;
  const int instances = 1000;
  for (int t = 0; t < instances; ++t) {
    const std::size_t G = 1 + gen() % 4;
    const std::size_t n = 1 + gen() % 32;
    std::vector<double> p;
    std::vector<int> a, y;
    const bool one_label = t % 10 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      p.push_back(gen() % 8 == 0 ? 0.5 : u(gen));
      a.push_back(static_cast<int>(gen() % G));
      y.push_back(one_label ? 1 : static_cast<int>(gen() % 2));
    }
    const auto r = fairness_report(p, a, y, G);
    const auto o = test::oracle_report(p, a, y, G);
    bool empty = false;
    for (std::size_t g = 0; g < G; ++g) {
      for (int l = 0; l < 2; ++l) empty = empty || r.stats.cell_empty(g, l);
    }
    with_empty += empty;
    const double d1 = std::abs(r.demp_error - o.demp_error);
    const double d2 = std::abs(r.eo_error - o.eo_error);
    double d3 = 0.0;
    if (std::isnan(r.di_error) != std::isnan(o.di_error)) {
      d3 = 1.0;
    } else if (!std::isnan(o.di_error)) {
      d3 = std::abs(r.di_error - o.di_error);
    }
    worst = std::max({worst, d1, d2, d3});
    mismatches += std::max({d1, d2, d3}) > 1e-12;
  }
  return verdict(mismatches == 0,
                 str_cat(instances, " instances (", with_empty,
                         " with empty cells), ", mismatches,
                         " mismatches, worst abs.err=", fmt("%.2e", worst)));
}

std::vector<FederatedClient> federated_clients(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<FederatedClient> out;
  for (std::size_t c = 0; c < n; ++c) {
    FederatedClient fc;
    fc.id = c;
    fc.train = random_client(40 + 7 * c, 4, 2, gen);
    fc.test = random_client(15, 4, 2, gen);
    fc.train.client = fc.test.client = c;
    out.push_back(std::move(fc));
  }
  return out;
}

// 5. Degenerate configurations.
Outcome degenerate() {
  int sgd_mismatch = 0;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    std::mt19937_64 gen(s);
    const auto d = random_client(120, 5, 2, gen);
    const auto theta0 = init_model({5, 16, 16, 1}, s);
    const TrainOptions opts{.lr = 0.05 * static_cast<double>(s),
                            .batch_size = 8 * s,
                            .steps = 50};
    const auto fair = train_fair(d, theta0, FairnessConfig{}, opts, s + 10);
    sgd_mismatch += !(fair.state.theta == train_plain(d, theta0, opts, s + 10));
  }
  double worst = 0.0;
  int rounds = 0;
  for (auto mode : {AggregationKind::kAverageDeltas, AggregationKind::kAverageParams}) {
    const auto clients = federated_clients(5, 7);
    TrainingBundle b;
    b.federation.rounds = 8;
    b.federation.fair_epochs = 2;
    b.federation.aggregation = mode;
    b.model.hidden = {12, 12};
    b.optim = {.lr = 0.1, .batch_size = 16};
    const auto r = run_training(clients, b, 5, {.keep_history = true});
    const auto ref = run_fedavg_reference(clients, init_model(b.model.dims(4), 5),
                                          8, b.optim, 2, 5);
    for (std::size_t t = 0; t < ref.size(); ++t) {
      for (std::size_t k = 0; k < ref[t].size(); ++k) {
        worst = std::max(worst, std::abs(r.history[t].flat(k) - ref[t].flat(k)));
      }
      ++rounds;
    }
  }
  return verdict(sgd_mismatch == 0 && worst <= 1e-12,
                 str_cat("(a) ", 5 - sgd_mismatch,
                         "/5 constraint-free runs bit-identical to plain SGD; (b) ",
                         rounds, " rounds vs FedAvg reference, worst abs.diff=",
                         fmt("%.2e", worst)));
}

// Criteria 6 and 7 share their runs: the synthetic biased dataset written to
// disk and trained through the experiment pipeline.
struct PairResult {
  double demp_round1 = 0, eo_round1 = 0;
  double demp_off = 0, eo_off = 0, acc_off = 0;
  double demp_on = 0, eo_on = 0, acc_on = 0;
  // Clients on whose test rows the final no-noise global model predicts a
  // single class. Reported, not gated: it shows whether small errors come
  // from a degenerate classifier.
  int constant_clients_off = 0;
};

int constant_clients(const fs::path& run_dir,
                     const std::vector<FederatedClient>& clients) {
  const ModelParams global = load_checkpoint(run_dir / kCheckpointName);
  int n = 0;
  for (const auto& c : clients) {
    std::size_t pos = 0;
    const auto p = forward(global, c.test.features);
    for (double v : p) pos += v > 0.5;
    n += pos == 0 || pos == p.size();
  }
  return n;
}

ExperimentConfig synthetic_config(const fs::path& data, std::uint64_t seed) {
  ExperimentConfig c;
  c.seed = seed;
  c.dataset.train = data;
  auto& t = c.training;
  t.federation.clients = t.federation.clients_per_round = 5;
  t.federation.rounds = 30;
  t.federation.fair_epochs = 2;
  t.federation.private_epochs = 1;
  t.model.hidden = {100};
  t.optim = {.lr = 0.3, .batch_size = 64};
  t.fairness.enabled = {true, true, true};
  t.fairness.threshold = {0.0, 0.0, 0.0};
  t.fairness.lambda_max = 1.0;
  t.privacy.clip = 1.0;
  t.privacy.calibration = NoiseCalibration::kFromSigma;
  t.privacy.noise_multiplier = 1.0;
  return c;
}

PairResult paired_run(std::uint64_t seed) {
  const auto dir = test::temp_dir(str_cat("acceptance_seed_", seed));
  {
    std::ofstream os(dir / "synthetic.csv");
    generate_synthetic(os, {.rows = 2500, .bias = 1.0, .seed = seed});
  }
  const auto cfg = synthetic_config(dir / "synthetic.csv", seed);
  const auto p = run_paired(cfg, dir / "out", true);
  if (p.exit_status != 0) throw Error(str_cat("paired run failed for seed ", seed));
  const auto off = load_run(dir / "out" / "nonprivate");
  const auto on = load_run(dir / "out" / "private");
  const auto first = summarize_round(off, 1);
  const auto last_off = summarize_round(off, cfg.training.federation.rounds);
  const auto last_on = summarize_round(on, cfg.training.federation.rounds);
  return {first.demp_error, first.eo_error,
          last_off.demp_error, last_off.eo_error, last_off.acc_unweighted,
          last_on.demp_error, last_on.eo_error, last_on.acc_unweighted,
          constant_clients(dir / "out" / "nonprivate", prepare_clients(cfg).clients)};
}

std::map<std::uint64_t, PairResult>& pair_cache() {
  static std::map<std::uint64_t, PairResult> cache;
  return cache;
}

const PairResult& pair_for(std::uint64_t seed) {
  auto& c = pair_cache();
  auto it = c.find(seed);
  if (it == c.end()) it = c.emplace(seed, paired_run(seed)).first;
  return it->second;
}

// 6. The no-noise fair run drives hard DemP and EO errors below 0.05.
Outcome no_noise_convergence() {
  const auto start = std::chrono::steady_clock::now();
  const PairResult& r = pair_for(1);
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start).count();
  const bool ok = r.demp_off < 0.05 && r.eo_off < 0.05 &&
                  r.demp_off < r.demp_round1 && r.eo_off < r.eo_round1;
  return verdict(ok, str_cat("client-mean DemP ", fmt("%.4f", r.demp_round1),
                             " -> ", fmt("%.4f", r.demp_off), ", EO ",
                             fmt("%.4f", r.eo_round1), " -> ", fmt("%.4f", r.eo_off),
                             ", final accuracy ", fmt("%.3f", r.acc_off),
                             ", single-class predictions on ",
                             r.constant_clients_off, "/5 clients",
                             " (paired run ", fmt("%.0f", secs), " s)"));
}

// 7. Noise degrades fairness in at least 4 of 5 paired seeds.
Outcome noise_hurts_fairness() {
  int demp_wins = 0, eo_wins = 0;
  std::string per_seed;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const PairResult& r = pair_for(s);
    demp_wins += r.demp_on > r.demp_off;
    eo_wins += r.eo_on > r.eo_off;
    per_seed += str_cat(" [seed ", s, ": DemP ", fmt("%.3f", r.demp_off), "/",
                        fmt("%.3f", r.demp_on), " EO ", fmt("%.3f", r.eo_off), "/",
                        fmt("%.3f", r.eo_on), " acc ", fmt("%.3f", r.acc_off), "/",
                        fmt("%.3f", r.acc_on), " single-class ",
                        r.constant_clients_off, "/5]");
  }
  return verdict(demp_wins >= 4 && eo_wins >= 4,
                 str_cat("noisy > no-noise in ", demp_wins, "/5 seeds (DemP), ",
                         eo_wins, "/5 (EO); off/on:", per_seed));
}

// 8. Adult census: per-client per-group accuracy pattern.
Outcome adult_reproduction() {
  const char* env = std::getenv("FAIRFED_ADULT_DIR");
  if (env == nullptr || *env == '\0') {
    return {Verdict::kSkip, "FAIRFED_ADULT_DIR not set"};
  }
  const fs::path dir(env);
  ExperimentConfig cfg;
  cfg.dataset.train = dir / "adult.data";
  cfg.dataset.test = dir / "adult.test";
  cfg.dataset.preset = SchemaPreset::kAdult;
  cfg.dataset.schema = adult_schema();
  auto& t = cfg.training;
  t.federation.rounds = 30;
  t.federation.fair_epochs = 2;
  t.model.hidden = {100};
  t.optim = {.lr = 0.3, .batch_size = 64};
  t.fairness.lambda_max = 1.0;
  t.privacy.enabled = false;
  const auto out = test::temp_dir("acceptance_adult");
  const auto o = run_experiment(cfg, out / "run", "nonprivate", true);
  if (o.exit_status != 0) return verdict(false, "Adult run failed");
  const auto run = load_run(out / "run");
  const std::size_t T = run.rounds();
  // Groups follow the schema order: 0 = White, 1 = Black.
  int rows = 0, converged = 0, within = 0;
  std::string table;
  for (const auto& m : run.metrics) {
    if (m.round != T) continue;
    ++rows;
    const double white = 100 * m.acc_group[0], black = 100 * m.acc_group[1];
    table += str_cat(" [client ", m.client, ": Black ", fmt("%.1f", black),
                     " White ", fmt("%.1f", white), "]");
    if (m.acc_overall < 0.6) continue;
    ++converged;
    within += std::abs(black - 69.42) <= 5 && std::abs(white - 88.39) <= 5;
  }
  return verdict(rows == 5 && run.group_count == 2 && converged > 0 &&
                     within == converged,
                 str_cat(converged, "/", rows, " clients converged, ", within,
                         " within 5 points of 69.4/88.4:", table));
}

// 9. Basic-composition totals after a private run.
Outcome ledger_totals() {
  const auto clients = federated_clients(3, 9);
  TrainingBundle b;
  b.federation.clients = b.federation.clients_per_round = 3;
  b.federation.rounds = 4;
  b.federation.private_epochs = 3;
  b.model.hidden = {6};
  b.optim = {.lr = 0.05, .batch_size = 16};
  b.privacy.enabled = true;
  b.privacy.epsilon = 0.3;
  b.privacy.delta = 1e-6;
  const auto r = run_training(clients, b, 2);
  if (!r.ok) return verdict(false, "private run failed: " + r.error);
  int exact = 0;
  std::string detail;
  for (std::size_t c = 0; c < clients.size(); ++c) {
    const auto& l = r.ledgers[c];
    const std::size_t steps = 4 * 3 * batches_per_epoch(clients[c].train.size(), 16);
    const double n = static_cast<double>(steps);
    exact += l.steps == steps && l.epsilon_total == n * 0.3 &&
             l.delta_total == n * 1e-6;
    detail += str_cat(" [client ", c, ": ", l.steps, " steps, eps ",
                      fmt("%.12g", l.epsilon_total), ", delta ",
                      fmt("%.12g", l.delta_total), "]");
  }
  return verdict(exact == 3, str_cat(exact, "/3 ledgers exact:", detail));
}

}  // namespace
}  // namespace fairfed

int main() {
  using namespace fairfed;
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"mechanism calibration", calibration},
      {"clipping and noise properties", clipping_and_noise},
      {"Lagrangian gradient correctness", lagrangian_gradient},
      {"fairness metric oracle equivalence", metric_oracle},
      {"degenerate equivalences", degenerate},
      {"no-noise fair run reaches DemP/EO < 0.05", no_noise_convergence},
      {"noise degrades fairness in >= 4/5 seeds", noise_hurts_fairness},
      {"Adult per-group accuracy pattern", adult_reproduction},
      {"privacy ledger totals", ledger_totals},
  };
  int failures = 0, n = 0;
  for (const auto& [name, fn] : criteria) {
    ++n;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {Verdict::kFail, str_cat("exception: ", e.what())};
    }
    const char* tag = o.verdict == Verdict::kPass   ? "PASS"
                      : o.verdict == Verdict::kSkip ? "SKIP"
                                                    : "FAIL";
    failures += o.verdict == Verdict::kFail;
    std::printf("%s criterion %d (%s): %s\n", tag, n, name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
