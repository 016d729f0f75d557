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

// Trains five clients on a biased synthetic dataset with and without the
// fairness constraints and prints the last round's client averages.

#include <cstdio>
#include <sstream>

#include "fairfed/fairfed.hpp"

namespace {

struct Averages {
  double acc = 0, demp = 0, eo = 0;
};

Averages last_round(const fairfed::RunResult& r, std::size_t rounds) {
  Averages a;
  std::size_t n = 0;
  for (const auto& m : r.metrics) {
    if (m.round != rounds) continue;
    a.acc += m.acc_overall;
    a.demp += m.demp_error;
    a.eo += m.eo_error;
    ++n;
  }
  a.acc /= n;
  a.demp /= n;
  a.eo /= n;
  return a;
}

}  // namespace

int main() {
  std::stringstream csv;
  fairfed::generate_synthetic(csv, {.rows = 2500, .bias = 1.0, .seed = 3});
  const auto schema = fairfed::synthetic_schema();
  const auto raw = fairfed::parse_csv_dataset(csv, schema, "synthetic");
  const auto data = fairfed::encode_features(raw, schema);

  std::vector<fairfed::FederatedClient> clients;
  for (auto& shard : fairfed::partition_clients(data, 5, 3)) {
    auto [train, test] = fairfed::train_test_split(shard, 0.2, 3);
    clients.push_back({shard.client, std::move(train), std::move(test)});
  }

  fairfed::TrainingBundle bundle;
  bundle.federation.rounds = 30;
  bundle.federation.fair_epochs = 2;
  bundle.model.hidden = {100};
  bundle.optim = {.lr = 0.3, .batch_size = 64};
  bundle.fairness.threshold = {0.0, 0.0, 0.0};
  bundle.fairness.lambda_max = 1.0;

  for (bool fair : {false, true}) {
    bundle.fairness.enabled = {fair, fair, fair};
    const auto run = fairfed::run_training(clients, bundle, 3);
    const Averages a = last_round(run, bundle.federation.rounds);
    std::printf("%-14s accuracy %.3f  DemP error %.3f  EO error %.3f\n",
                fair ? "constrained" : "unconstrained", a.acc, a.demp, a.eo);
  }
}
