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
#ifndef FAIRFED_EXPERIMENT_HPP_
#define FAIRFED_EXPERIMENT_HPP_

// Experiment configuration (JSON), execution and report emission.
//
// Output directory of one run:
//   manifest.json          config echo, data summary, privacy totals, timing
//   metrics.csv            one row per (round, client)
//   trace_client_<i>.csv   per-step primal-dual trace of client i
//   model.ckpt             final global model (see checkpoint.hpp)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairfed/checkpoint.hpp"
#include "fairfed/common.hpp"
#include "fairfed/datasets.hpp"
#include "fairfed/dp_mechanism.hpp"
#include "fairfed/fair_trainer.hpp"
#include "fairfed/fed_protocol.hpp"
#include "fairfed/tabular_data.hpp"

namespace fairfed {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

enum class SchemaPreset { kSynthetic, kAdult, kCustom };

struct DatasetConfig {
  fs::path train;
  fs::path test;  // empty: each client holds out test_fraction of its shard
  SchemaPreset preset = SchemaPreset::kSynthetic;
  DataSchema schema = synthetic_schema();

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  fs::path output_dir = "out";
  DatasetConfig dataset;
  TrainingBundle training;

  ExperimentConfig() {
    training.fairness.enabled = {true, true, true};
  }

  void validate() const {
    if (dataset.train.empty()) throw Error("dataset.train must be set");
    if (!fs::is_regular_file(dataset.train)) {
      throw Error(str_cat("dataset.train: no such file '",
                          dataset.train.string(), "'"));
    }
    if (!dataset.test.empty() && !fs::is_regular_file(dataset.test)) {
      throw Error(str_cat("dataset.test: no such file '", dataset.test.string(),
                          "'"));
    }
    dataset.schema.validate();
    training.validate();
    training.privacy.validate();
  }

  friend bool operator==(const ExperimentConfig&,
                         const ExperimentConfig&) = default;
};

// ---------------------------------------------------------------------------
// Enum spellings

namespace detail {

template <typename E>
struct EnumName {
  E value;
  const char* name;
};

inline constexpr EnumName<SchemaPreset> kPresetNames[] = {
    {SchemaPreset::kSynthetic, "synthetic"},
    {SchemaPreset::kAdult, "adult"},
    {SchemaPreset::kCustom, "custom"}};
inline constexpr EnumName<AggregationKind> kAggregationKindNames[] = {
    {AggregationKind::kAverageDeltas, "average-deltas"},
    {AggregationKind::kAverageParams, "average-params"}};
inline constexpr EnumName<AggregationMode> kAggregationModeNames[] = {
    {AggregationMode::kMaxAbs, "max-abs"},
    {AggregationMode::kMeanAbs, "mean-abs"}};
inline constexpr EnumName<MultiplierMode> kMultiplierModeNames[] = {
    {MultiplierMode::kPerConstraint, "per-constraint"},
    {MultiplierMode::kPerCell, "per-cell"}};
inline constexpr EnumName<NoiseCalibration> kCalibrationNames[] = {
    {NoiseCalibration::kFromEpsilon, "epsilon"},
    {NoiseCalibration::kFromSigma, "sigma"}};
inline constexpr EnumName<OtherGroupPolicy> kOtherGroupNames[] = {
    {OtherGroupPolicy::kDrop, "drop"},
    {OtherGroupPolicy::kMapToExtraGroup, "extra-group"}};

template <typename E, std::size_t N>
std::string enum_to_string(const EnumName<E> (&table)[N], E value) {
  for (const auto& e : table) {
    if (e.value == value) return e.name;
  }
  throw Error("unnamed enum value");
}

template <typename E, std::size_t N>
E enum_from_string(const EnumName<E> (&table)[N], const std::string& text,
                   const std::string& field) {
  std::string allowed;
  for (const auto& e : table) {
    if (text == e.name) return e.value;
    allowed += allowed.empty() ? "" : ", ";
    allowed += e.name;
  }
  throw Error(str_cat(field, ": unknown value '", text, "' (expected one of ",
                      allowed, ")"));
}

// Reads the members of one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(str_cat(path_, ": expected an object"));
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    known_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw Error(str_cat(field(key), ": wrong type (", it->type_name(), ")"));
    }
  }

  const Json* child(const std::string& key) {
    known_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string field(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!known_.count(key)) {
        throw Error(str_cat("unknown key '", field(key), "'"));
      }
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> known_;
};

template <typename E, std::size_t N>
void get_enum(ObjectReader& r, const std::string& key,
              const EnumName<E> (&table)[N], E& out) {
  std::string text = enum_to_string(table, out);
  r.get(key, text);
  out = enum_from_string(table, text, r.field(key));
}

inline fs::path resolve_path(const std::string& text, const fs::path& base) {
  if (text.empty()) return {};
  fs::path p(text);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Serialization

inline Json schema_to_json(const DataSchema& s) {
  Json cols = Json::array();
  for (const auto& c : s.columns) {
    Json col{{"name", c.name}, {"kind", std::string(to_string(c.kind))}};
    if (!c.values.empty()) col["values"] = c.values;
    cols.push_back(std::move(col));
  }
  return Json{
      {"columns", std::move(cols)},
      {"positive_labels", s.positive_labels},
      {"sensitive_values", s.sensitive_values},
      {"other_groups",
       detail::enum_to_string(detail::kOtherGroupNames, s.other_groups)},
      {"drop_missing", s.drop_missing},
      {"missing_token", s.missing_token},
      {"has_header", s.has_header},
      {"skip_lines", s.skip_lines},
      {"comment_prefix", s.comment_prefix},
      {"sensitive_as_feature", s.sensitive_as_feature},
  };
}

inline DataSchema schema_from_json(const Json& j, const std::string& path) {
  detail::ObjectReader r(j, path);
  DataSchema s;
  const Json* cols = r.child("columns");
  if (cols == nullptr || !cols->is_array()) {
    throw Error(str_cat(r.field("columns"), ": expected an array"));
  }
  for (std::size_t i = 0; i < cols->size(); ++i) {
    detail::ObjectReader c((*cols)[i], str_cat(r.field("columns"), "[", i, "]"));
    ColumnSpec spec;
    std::string kind = "continuous";
    c.get("name", spec.name);
    c.get("kind", kind);
    c.get("values", spec.values);
    c.finish();
    spec.kind = parse_column_kind(kind);
    s.columns.push_back(std::move(spec));
  }
  r.get("positive_labels", s.positive_labels);
  r.get("sensitive_values", s.sensitive_values);
  detail::get_enum(r, "other_groups", detail::kOtherGroupNames, s.other_groups);
  r.get("drop_missing", s.drop_missing);
  r.get("missing_token", s.missing_token);
  r.get("has_header", s.has_header);
  r.get("skip_lines", s.skip_lines);
  r.get("comment_prefix", s.comment_prefix);
  r.get("sensitive_as_feature", s.sensitive_as_feature);
  r.finish();
  return s;
}

inline Json to_json(const ExperimentConfig& c) {
  const auto& fed = c.training.federation;
  const auto& fair = c.training.fairness;
  const auto& priv = c.training.privacy;
  Json dataset{
      {"train", c.dataset.train.generic_string()},
      {"test", c.dataset.test.generic_string()},
      {"preset", detail::enum_to_string(detail::kPresetNames, c.dataset.preset)},
  };
  if (c.dataset.preset == SchemaPreset::kCustom) {
    dataset["schema"] = schema_to_json(c.dataset.schema);
  }
  Json constraints = Json::array();
  Json thresholds = Json::object();
  for (std::size_t k = 0; k < kConstraintCount; ++k) {
    const std::string name(kConstraintNames[k]);
    if (fair.enabled[k]) constraints.push_back(name);
    thresholds[name] = fair.threshold[k];
  }
  return Json{
      {"seed", c.seed},
      {"output_dir", c.output_dir.generic_string()},
      {"dataset", std::move(dataset)},
      {"federation",
       {{"clients", fed.clients},
        {"clients_per_round", fed.clients_per_round},
        {"rounds", fed.rounds},
        {"fair_epochs", fed.fair_epochs},
        {"private_epochs", fed.private_epochs},
        {"aggregation", detail::enum_to_string(detail::kAggregationKindNames,
                                               fed.aggregation)},
        {"weighted", fed.weighted},
        {"test_fraction", fed.test_fraction},
        {"parallel", fed.parallel}}},
      {"fairness",
       {{"constraints", std::move(constraints)},
        {"thresholds", std::move(thresholds)},
        {"lambda_max", fair.lambda_max},
        {"dual_lr", fair.dual_lr},
        {"aggregation", detail::enum_to_string(detail::kAggregationModeNames,
                                               fair.aggregation)},
        {"multipliers", detail::enum_to_string(detail::kMultiplierModeNames,
                                               fair.multipliers)},
        {"di_guard", fair.di_guard}}},
      {"privacy",
       {{"enabled", priv.enabled},
        {"epsilon", priv.epsilon},
        {"delta", priv.delta},
        {"clip", priv.clip},
        {"noise_multiplier", priv.noise_multiplier},
        {"calibration",
         detail::enum_to_string(detail::kCalibrationNames, priv.calibration)}}},
      {"model", {{"hidden", c.training.model.hidden}}},
      {"optim",
       {{"lr", c.training.optim.lr},
        {"batch_size", c.training.optim.batch_size}}},
  };
}

// Relative dataset paths are taken relative to `base_dir`. Missing keys keep
// their defaults; unknown keys are errors. The result is validated.
inline ExperimentConfig config_from_json(const Json& j,
                                         const fs::path& base_dir = {}) {
  ExperimentConfig c;
  detail::ObjectReader top(j, "config");
  top.get("seed", c.seed);
  std::string out = c.output_dir.generic_string();
  top.get("output_dir", out);
  c.output_dir = out;

  if (const Json* d = top.child("dataset")) {
    detail::ObjectReader r(*d, "dataset");
    std::string train, test;
    r.get("train", train);
    r.get("test", test);
    c.dataset.train = detail::resolve_path(train, base_dir);
    c.dataset.test = detail::resolve_path(test, base_dir);
    detail::get_enum(r, "preset", detail::kPresetNames, c.dataset.preset);
    const Json* schema = r.child("schema");
    switch (c.dataset.preset) {
      case SchemaPreset::kSynthetic: c.dataset.schema = synthetic_schema(); break;
      case SchemaPreset::kAdult: c.dataset.schema = adult_schema(); break;
      case SchemaPreset::kCustom:
        if (schema == nullptr) {
          throw Error("dataset.schema is required when preset is 'custom'");
        }
        c.dataset.schema = schema_from_json(*schema, "dataset.schema");
        break;
    }
    if (schema != nullptr && c.dataset.preset != SchemaPreset::kCustom) {
      throw Error("dataset.schema is only allowed with preset 'custom'");
    }
    r.finish();
  }

  if (const Json* f = top.child("federation")) {
    auto& fed = c.training.federation;
    detail::ObjectReader r(*f, "FederationConfig");
    r.get("clients", fed.clients);
    r.get("clients_per_round", fed.clients_per_round);
    r.get("rounds", fed.rounds);
    r.get("fair_epochs", fed.fair_epochs);
    r.get("private_epochs", fed.private_epochs);
    detail::get_enum(r, "aggregation", detail::kAggregationKindNames,
                     fed.aggregation);
    r.get("weighted", fed.weighted);
    r.get("test_fraction", fed.test_fraction);
    r.get("parallel", fed.parallel);
    // Selecting everyone is the default; follow `clients` unless told.
    if (!r.has("clients_per_round")) fed.clients_per_round = fed.clients;
    r.finish();
  }

  if (const Json* f = top.child("fairness")) {
    auto& fair = c.training.fairness;
    detail::ObjectReader r(*f, "FairnessConfig");
    if (const Json* list = r.child("constraints")) {
      if (!list->is_array()) {
        throw Error("FairnessConfig.constraints: expected an array");
      }
      fair.enabled = {false, false, false};
      for (const auto& item : *list) {
        const std::string name = item.is_string() ? item.get<std::string>() : "";
        auto it = std::find(kConstraintNames.begin(), kConstraintNames.end(),
                            name);
        if (it == kConstraintNames.end()) {
          throw Error(str_cat("FairnessConfig.constraints: unknown constraint ",
                              item.dump()));
        }
        fair.enabled[static_cast<std::size_t>(it - kConstraintNames.begin())] =
            true;
      }
    }
    if (const Json* t = r.child("thresholds")) {
      detail::ObjectReader tr(*t, "FairnessConfig.thresholds");
      for (std::size_t k = 0; k < kConstraintCount; ++k) {
        tr.get(std::string(kConstraintNames[k]), fair.threshold[k]);
      }
      tr.finish();
    }
    r.get("lambda_max", fair.lambda_max);
    r.get("dual_lr", fair.dual_lr);
    detail::get_enum(r, "aggregation", detail::kAggregationModeNames,
                     fair.aggregation);
    detail::get_enum(r, "multipliers", detail::kMultiplierModeNames,
                     fair.multipliers);
    r.get("di_guard", fair.di_guard);
    r.finish();
  }

  if (const Json* p = top.child("privacy")) {
    auto& priv = c.training.privacy;
    detail::ObjectReader r(*p, "PrivacyConfig");
    r.get("enabled", priv.enabled);
    r.get("epsilon", priv.epsilon);
    r.get("delta", priv.delta);
    r.get("clip", priv.clip);
    r.get("noise_multiplier", priv.noise_multiplier);
    detail::get_enum(r, "calibration", detail::kCalibrationNames,
                     priv.calibration);
    r.finish();
  }

  if (const Json* m = top.child("model")) {
    detail::ObjectReader r(*m, "ModelConfig");
    r.get("hidden", c.training.model.hidden);
    r.finish();
  }

  if (const Json* o = top.child("optim")) {
    detail::ObjectReader r(*o, "OptimConfig");
    r.get("lr", c.training.optim.lr);
    r.get("batch_size", c.training.optim.batch_size);
    r.finish();
  }
  top.finish();
  c.validate();
  return c;
}

inline ExperimentConfig parse_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(str_cat("cannot read config '", path.string(), "'"));
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(str_cat("config '", path.string(), "': ", e.what()));
  }
  return config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Data preparation

struct ClientDataSummary {
  std::size_t id = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  double train_positive_rate = 0.0;
  double test_positive_rate = 0.0;
  std::vector<std::size_t> train_group_sizes;
};

struct PreparedData {
  std::vector<FederatedClient> clients;
  std::vector<ClientDataSummary> summaries;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;  // rows of the separate test file, if any
  std::size_t dropped_missing = 0;
  std::size_t dropped_other_group = 0;
  std::vector<std::string> feature_names;
  std::vector<std::string> encoder_warnings;
};

namespace detail {

inline ClientDataset rows_of(const EncodedDataset& data,
                             std::span<const std::size_t> rows,
                             std::size_t client) {
  ClientDataset d;
  d.client = client;
  d.features = data.features.select_rows(rows);
  d.labels = select(data.labels, rows);
  d.groups = select(data.groups, rows);
  d.group_count = data.group_count;
  d.validate();
  return d;
}

}  // namespace detail

// Loads, partitions (IID, seeded) and encodes the data. Scaling statistics are
// fitted on the training rows of all clients together.
inline PreparedData prepare_clients(const ExperimentConfig& cfg) {
  const auto& fed = cfg.training.federation;
  const DataSchema& schema = cfg.dataset.schema;
  PreparedData out;

  RawDataset train_raw = load_csv_dataset(cfg.dataset.train, schema);
  out.train_rows = train_raw.size();
  out.dropped_missing = train_raw.dropped_missing;
  out.dropped_other_group = train_raw.dropped_other_group;
  const auto shards = partition_indices(train_raw.size(), fed.clients, cfg.seed);

  std::vector<std::vector<std::size_t>> train_rows(fed.clients);
  std::vector<std::vector<std::size_t>> test_rows(fed.clients);
  std::optional<RawDataset> test_raw;
  if (!cfg.dataset.test.empty()) {
    test_raw = load_csv_dataset(cfg.dataset.test, schema);
    out.test_rows = test_raw->size();
    out.dropped_missing += test_raw->dropped_missing;
    out.dropped_other_group += test_raw->dropped_other_group;
    train_rows = shards;
    test_rows = partition_indices(test_raw->size(), fed.clients,
                                  derive_seed(cfg.seed, Stream::kPartition, 1));
  } else {
    for (std::size_t c = 0; c < fed.clients; ++c) {
      IndexSplit s = split_indices(shards[c], fed.test_fraction, cfg.seed, c);
      train_rows[c] = std::move(s.train);
      test_rows[c] = std::move(s.test);
    }
  }

  std::vector<std::size_t> fit_rows;
  for (const auto& r : train_rows) fit_rows.insert(fit_rows.end(), r.begin(), r.end());
  std::sort(fit_rows.begin(), fit_rows.end());
  const FeatureEncoder enc = FeatureEncoder::fit(train_raw, schema, fit_rows);
  out.feature_names = enc.feature_names();
  out.encoder_warnings = enc.warnings();
  const EncodedDataset train_enc = enc.encode(train_raw);
  const EncodedDataset test_enc = test_raw ? enc.encode(*test_raw) : train_enc;

  for (std::size_t c = 0; c < fed.clients; ++c) {
    FederatedClient client;
    client.id = c;
    client.train = detail::rows_of(train_enc, train_rows[c], c);
    client.test = detail::rows_of(test_enc, test_rows[c], c);
    ClientDataSummary s;
    s.id = c;
    s.train_size = client.train.size();
    s.test_size = client.test.size();
    s.train_positive_rate = client.train.positive_rate();
    s.test_positive_rate = client.test.positive_rate();
    s.train_group_sizes.assign(client.train.group_count, 0);
    for (int g : client.train.groups) ++s.train_group_sizes[static_cast<std::size_t>(g)];
    out.summaries.push_back(std::move(s));
    out.clients.push_back(std::move(client));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Artifact writers

// Shortest text that is stable across runs: %.12g, "nan" for NaN.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline std::string metrics_csv_header(std::size_t group_count) {
  std::string h = "round,client,acc_overall";
  for (std::size_t g = 0; g < group_count; ++g) h += str_cat(",acc_group_", g);
  return h + ",demp_error,eo_error,di_error";
}

inline void write_metrics_csv(std::ostream& os,
                              const std::vector<RoundMetrics>& rows,
                              std::size_t group_count) {
  os << metrics_csv_header(group_count) << '\n';
  for (const auto& m : rows) {
    os << m.round << ',' << m.client << ',' << format_number(m.acc_overall);
    for (std::size_t g = 0; g < group_count; ++g) {
      os << ',' << format_number(g < m.acc_group.size() ? m.acc_group[g] : NAN);
    }
    os << ',' << format_number(m.demp_error) << ',' << format_number(m.eo_error)
       << ',' << format_number(m.di_error) << '\n';
  }
}

inline void write_trace_csv(std::ostream& os,
                            const std::vector<StepRecord>& trace) {
  os << "step,base_loss,penalty_demp,penalty_eo,penalty_di,lambda_demp,"
        "lambda_eo,lambda_di\n";
  for (const auto& r : trace) {
    os << r.step << ',' << format_number(r.base_loss);
    for (double v : r.penalty) os << ',' << format_number(v);
    for (double v : r.lambda) os << ',' << format_number(v);
    os << '\n';
  }
}

namespace detail {

template <typename Fn>
void write_file(const fs::path& path, Fn&& fn) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(str_cat("cannot write '", path.string(), "'"));
  fn(os);
  if (!os) throw Error(str_cat("write failed for '", path.string(), "'"));
}

inline Json json_number(double v) {
  return std::isfinite(v) ? Json(v) : Json(nullptr);
}

}  // namespace detail

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kMetricsName = "metrics.csv";
inline constexpr const char* kCheckpointName = "model.ckpt";

struct ExperimentOutcome {
  int exit_status = 0;
  fs::path dir;
  RunResult result;
};

inline Json build_manifest(const ExperimentConfig& cfg,
                           const std::string& variant,
                           const PreparedData& data, const RunResult& run,
                           double wall_seconds) {
  const auto& priv = cfg.training.privacy;
  Json privacy{{"enabled", priv.enabled}};
  if (priv.enabled) {
    const PrivacyConfig r = priv.resolved();
    privacy["epsilon_step"] = r.epsilon;
    privacy["delta_step"] = r.delta;
    privacy["clip"] = r.clip;
    privacy["sensitivity"] = r.sensitivity();
    privacy["noise_multiplier"] = r.noise_multiplier;
    privacy["noise_std"] = r.noise_multiplier * r.clip;
  }
  Json per_round = Json::array();
  for (const auto& s : run.rounds) {
    per_round.push_back({{"round", s.round},
                         {"participants", s.participants},
                         {"dropped", s.dropped},
                         {"epsilon_total", s.epsilon_total},
                         {"delta_total", s.delta_total}});
  }
  privacy["rounds"] = std::move(per_round);
  Json ledgers = Json::array();
  for (std::size_t i = 0; i < run.ledgers.size(); ++i) {
    const auto& l = run.ledgers[i];
    ledgers.push_back({{"client", i},
                       {"steps", l.steps},
                       {"epsilon_step", l.epsilon_step},
                       {"delta_step", l.delta_step},
                       {"epsilon_total", l.epsilon_total},
                       {"delta_total", l.delta_total}});
  }
  privacy["ledgers"] = std::move(ledgers);

  Json clients = Json::array();
  for (const auto& s : data.summaries) {
    clients.push_back({{"client", s.id},
                       {"train_size", s.train_size},
                       {"test_size", s.test_size},
                       {"train_positive_rate", s.train_positive_rate},
                       {"test_positive_rate", s.test_positive_rate},
                       {"train_group_sizes", s.train_group_sizes}});
  }
  return Json{
      {"format", "fairfed-run/1"},
      {"variant", variant},
      {"status", run.ok ? "ok" : "failed"},
      {"failed_round", run.ok ? Json(nullptr) : Json(run.failed_round)},
      {"error", run.error},
      {"seed", cfg.seed},
      {"config", to_json(cfg)},
      {"schema", schema_to_json(cfg.dataset.schema)},
      {"data",
       {{"train_rows", data.train_rows},
        {"test_rows", data.test_rows},
        {"dropped_missing", data.dropped_missing},
        {"dropped_other_group", data.dropped_other_group},
        {"feature_count", data.feature_names.size()},
        {"feature_names", data.feature_names},
        {"encoder_warnings", data.encoder_warnings},
        {"clients", std::move(clients)}}},
      {"model_dims", run.global.layers.empty() ? Json::array()
                                               : Json(layer_dims(run.global))},
      {"privacy", std::move(privacy)},
      {"rounds_completed", run.rounds.size()},
      {"wall_clock_seconds", wall_seconds},
  };
}

// Runs one configuration into `dir`. Refuses to reuse a directory that holds
// a manifest unless `overwrite` is set. Returns exit status 1 when training
// aborted; the manifest then names the failed round.
inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg,
                                        const fs::path& dir,
                                        const std::string& variant,
                                        bool overwrite) {
  cfg.validate();
  if (fs::exists(dir / kManifestName) && !overwrite) {
    throw Error(str_cat("'", (dir / kManifestName).string(),
                        "' already exists; pass --overwrite to replace it"));
  }
  fs::create_directories(dir);
  const auto start = std::chrono::steady_clock::now();
  const PreparedData data = prepare_clients(cfg);
  log::info("run '", variant, "': ", data.clients.size(), " clients, ",
            data.feature_names.size(), " features");

  ExperimentOutcome out;
  out.dir = dir;
  out.result = run_training(data.clients, cfg.training, cfg.seed);
  const RunResult& run = out.result;
  const std::size_t groups = cfg.dataset.schema.group_count();

  detail::write_file(dir / kMetricsName, [&](std::ostream& os) {
    write_metrics_csv(os, run.metrics, groups);
  });
  for (std::size_t i = 0; i < run.traces.size(); ++i) {
    detail::write_file(dir / str_cat("trace_client_", i, ".csv"),
                       [&](std::ostream& os) { write_trace_csv(os, run.traces[i]); });
  }
  if (run.ok) {
    save_checkpoint(dir / kCheckpointName, run.global);
  } else {
    fs::remove(dir / kCheckpointName);
    log::warn("run '", variant, "' failed in round ", run.failed_round, ": ",
              run.error);
    out.exit_status = 1;
  }
  const double seconds = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start)
                             .count();
  const Json manifest = build_manifest(cfg, variant, data, run, seconds);
  detail::write_file(dir / kManifestName,
                     [&](std::ostream& os) { os << manifest.dump(2) << '\n'; });
  return out;
}

// ---------------------------------------------------------------------------
// Reports

struct RunRecord {
  fs::path dir;
  std::string variant;
  std::size_t group_count = 0;
  std::vector<std::string> group_names;
  std::map<std::size_t, std::size_t> test_sizes;  // client -> rows
  std::vector<RoundMetrics> metrics;

  std::size_t rounds() const {
    std::size_t t = 0;
    for (const auto& m : metrics) t = std::max(t, m.round);
    return t;
  }
};

namespace detail {

inline double parse_cell(const std::string& text, const fs::path& file,
                         std::size_t line) {
  if (text == "nan") return NAN;
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(str_cat(file.string(), ":", line, ": bad number '", text, "'"));
}

}  // namespace detail

inline RunRecord load_run(const fs::path& dir) {
  RunRecord rec;
  rec.dir = dir;
  std::ifstream mf(dir / kManifestName);
  if (!mf) throw Error(str_cat("no manifest in '", dir.string(), "'"));
  Json manifest;
  try {
    manifest = Json::parse(mf);
    rec.variant = manifest.at("variant").get<std::string>();
    rec.group_names =
        manifest.at("schema").at("sensitive_values").get<std::vector<std::string>>();
    if (manifest.at("schema").at("other_groups") == "extra-group") {
      rec.group_names.push_back("other");
    }
    for (const auto& c : manifest.at("data").at("clients")) {
      rec.test_sizes[c.at("client").get<std::size_t>()] =
          c.at("test_size").get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(str_cat("manifest in '", dir.string(), "': ", e.what()));
  }
  rec.group_count = rec.group_names.size();
  if (rec.variant.empty()) rec.variant = dir.filename().string();

  const fs::path csv = dir / kMetricsName;
  std::ifstream in(csv);
  if (!in) throw Error(str_cat("cannot read '", csv.string(), "'"));
  std::string line;
  std::getline(in, line);
  if (line != metrics_csv_header(rec.group_count)) {
    throw Error(str_cat(csv.string(), ": unexpected header '", line, "'"));
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 6 + rec.group_count) {
      throw Error(str_cat(csv.string(), ":", line_no, ": expected ",
                          6 + rec.group_count, " fields"));
    }
    RoundMetrics m;
    m.round = static_cast<std::size_t>(detail::parse_cell(cells[0], csv, line_no));
    m.client = static_cast<std::size_t>(detail::parse_cell(cells[1], csv, line_no));
    m.acc_overall = detail::parse_cell(cells[2], csv, line_no);
    for (std::size_t g = 0; g < rec.group_count; ++g) {
      m.acc_group.push_back(detail::parse_cell(cells[3 + g], csv, line_no));
    }
    m.demp_error = detail::parse_cell(cells[3 + rec.group_count], csv, line_no);
    m.eo_error = detail::parse_cell(cells[4 + rec.group_count], csv, line_no);
    m.di_error = detail::parse_cell(cells[5 + rec.group_count], csv, line_no);
    rec.metrics.push_back(std::move(m));
  }
  return rec;
}

struct VariantSummary {
  std::string variant;
  std::size_t round = 0;
  double acc_unweighted = 0.0;
  double acc_weighted = 0.0;
  std::vector<double> acc_group;  // unweighted client means
  double demp_error = 0.0;
  double eo_error = 0.0;
  double di_error = 0.0;
};

namespace detail {

// Mean over values that are not NaN; NaN when none are.
inline double mean_finite(const std::vector<double>& v,
                          const std::vector<double>& w = {}) {
  double sum = 0.0, total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::isnan(v[i])) continue;
    const double wi = w.empty() ? 1.0 : w[i];
    sum += wi * v[i];
    total += wi;
  }
  return total > 0.0 ? sum / total : NAN;
}

}  // namespace detail

// Client averages of the rows of `round`.
inline VariantSummary summarize_round(const RunRecord& run, std::size_t round) {
  VariantSummary s;
  s.variant = run.variant;
  s.round = round;
  std::vector<double> acc, weights, demp, eo, di;
  std::vector<std::vector<double>> groups(run.group_count);
  for (const auto& m : run.metrics) {
    if (m.round != round) continue;
    acc.push_back(m.acc_overall);
    auto it = run.test_sizes.find(m.client);
    weights.push_back(it == run.test_sizes.end() ? 1.0
                                                 : static_cast<double>(it->second));
    for (std::size_t g = 0; g < run.group_count; ++g) {
      groups[g].push_back(m.acc_group[g]);
    }
    demp.push_back(m.demp_error);
    eo.push_back(m.eo_error);
    di.push_back(m.di_error);
  }
  s.acc_unweighted = detail::mean_finite(acc);
  s.acc_weighted = detail::mean_finite(acc, weights);
  for (const auto& g : groups) s.acc_group.push_back(detail::mean_finite(g));
  s.demp_error = detail::mean_finite(demp);
  s.eo_error = detail::mean_finite(eo);
  s.di_error = detail::mean_finite(di);
  return s;
}

inline constexpr const char* kPlotDataName = "plot_data.csv";
inline constexpr const char* kFinalAccuracyName = "final_accuracy.csv";
inline constexpr const char* kComparisonName = "comparison.csv";

struct ReportResult {
  std::size_t common_rounds = 0;
  std::vector<std::string> warnings;
  std::vector<VariantSummary> summaries;
};

// Writes plot_data.csv (long format), final_accuracy.csv (per client and
// group at the last common round) and comparison.csv (client averages per
// variant) into `out_dir`. Runs of different lengths are cut to the shortest.
inline ReportResult emit_report(const std::vector<fs::path>& run_dirs,
                                const fs::path& out_dir) {
  if (run_dirs.empty()) throw Error("report: no runs given");
  std::vector<RunRecord> runs;
  for (const auto& d : run_dirs) runs.push_back(load_run(d));
  ReportResult rep;
  rep.common_rounds = runs.front().rounds();
  for (const auto& r : runs) rep.common_rounds = std::min(rep.common_rounds, r.rounds());
  for (const auto& r : runs) {
    if (r.rounds() != rep.common_rounds) {
      rep.warnings.push_back(str_cat("run '", r.dir.string(), "' has ",
                                     r.rounds(), " rounds; aligned on the first ",
                                     rep.common_rounds));
      log::warn(rep.warnings.back());
    }
    if (r.group_count != runs.front().group_count) {
      throw Error(str_cat("report: run '", r.dir.string(),
                          "' has a different number of groups"));
    }
  }
  if (rep.common_rounds == 0) throw Error("report: a run has no metrics rows");
  const std::size_t groups = runs.front().group_count;
  fs::create_directories(out_dir);

  detail::write_file(out_dir / kPlotDataName, [&](std::ostream& os) {
    os << "round,client,metric,value,variant\n";
    for (const auto& r : runs) {
      for (const auto& m : r.metrics) {
        if (m.round > rep.common_rounds) continue;
        auto row = [&](const std::string& metric, double v) {
          os << m.round << ',' << m.client << ',' << metric << ','
             << format_number(v) << ',' << r.variant << '\n';
        };
        row("acc_overall", m.acc_overall);
        for (std::size_t g = 0; g < groups; ++g) {
          row(str_cat("acc_group_", g), m.acc_group[g]);
        }
        row("demp_error", m.demp_error);
        row("eo_error", m.eo_error);
        row("di_error", m.di_error);
      }
    }
  });

  detail::write_file(out_dir / kFinalAccuracyName, [&](std::ostream& os) {
    os << "variant,client,acc_overall";
    for (std::size_t g = 0; g < groups; ++g) {
      os << ",acc_" << runs.front().group_names[g];
    }
    os << '\n';
    for (const auto& r : runs) {
      for (const auto& m : r.metrics) {
        if (m.round != rep.common_rounds) continue;
        os << r.variant << ',' << m.client << ',' << format_number(m.acc_overall);
        for (double a : m.acc_group) os << ',' << format_number(a);
        os << '\n';
      }
    }
  });

  for (const auto& r : runs) {
    rep.summaries.push_back(summarize_round(r, rep.common_rounds));
  }
  detail::write_file(out_dir / kComparisonName, [&](std::ostream& os) {
    os << "variant,round,acc_mean_unweighted,acc_mean_weighted";
    for (std::size_t g = 0; g < groups; ++g) {
      os << ",acc_" << runs.front().group_names[g] << "_mean";
    }
    os << ",demp_error_mean,eo_error_mean,di_error_mean\n";
    for (const auto& s : rep.summaries) {
      os << s.variant << ',' << s.round << ',' << format_number(s.acc_unweighted)
         << ',' << format_number(s.acc_weighted);
      for (double a : s.acc_group) os << ',' << format_number(a);
      os << ',' << format_number(s.demp_error) << ','
         << format_number(s.eo_error) << ',' << format_number(s.di_error) << '\n';
    }
  });
  return rep;
}

// The same configuration and seed with privacy on (out/private) and off
// (out/nonprivate), followed by a report in `out`.
struct PairedOutcome {
  ExperimentOutcome private_run;
  ExperimentOutcome nonprivate_run;
  ReportResult report;
  int exit_status = 0;
};

inline PairedOutcome run_paired(const ExperimentConfig& cfg, const fs::path& out,
                                bool overwrite) {
  ExperimentConfig on = cfg;
  on.training.privacy.enabled = true;
  ExperimentConfig off = cfg;
  off.training.privacy.enabled = false;
  PairedOutcome p;
  p.private_run = run_experiment(on, out / "private", "private", overwrite);
  p.nonprivate_run =
      run_experiment(off, out / "nonprivate", "nonprivate", overwrite);
  p.report = emit_report({out / "private", out / "nonprivate"}, out);
  p.exit_status = std::max(p.private_run.exit_status, p.nonprivate_run.exit_status);
  return p;
}

}  // namespace fairfed

#endif  // FAIRFED_EXPERIMENT_HPP_
