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
#ifndef FAIRFED_TABULAR_DATA_HPP_
#define FAIRFED_TABULAR_DATA_HPP_

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairfed/common.hpp"
#include "fairfed/matrix.hpp"

namespace fairfed {

enum class ColumnKind { kCategorical, kContinuous, kLabel, kSensitive, kIgnore };

inline std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::kCategorical: return "categorical";
    case ColumnKind::kContinuous: return "continuous";
    case ColumnKind::kLabel: return "label";
    case ColumnKind::kSensitive: return "sensitive";
    case ColumnKind::kIgnore: return "ignore";
  }
  return "?";
}

inline ColumnKind parse_column_kind(std::string_view text) {
  if (text == "categorical") return ColumnKind::kCategorical;
  if (text == "continuous") return ColumnKind::kContinuous;
  if (text == "label") return ColumnKind::kLabel;
  if (text == "sensitive") return ColumnKind::kSensitive;
  if (text == "ignore") return ColumnKind::kIgnore;
  throw Error(str_cat("unknown column kind '", text, "'"));
}

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::kContinuous;
  // Admissible values. Required for categorical columns; optional for the
  // label and sensitive columns (empty means "accept anything").
  std::vector<std::string> values;

  friend bool operator==(const ColumnSpec&, const ColumnSpec&) = default;
};

// What happens to rows whose sensitive value is not listed in
// DataSchema::sensitive_values.
enum class OtherGroupPolicy { kDrop, kMapToExtraGroup };

struct DataSchema {
  std::vector<ColumnSpec> columns;
  std::vector<std::string> positive_labels;
  // Group id of a row is the position of its sensitive value in this list.
  std::vector<std::string> sensitive_values;
  OtherGroupPolicy other_groups = OtherGroupPolicy::kDrop;
  bool drop_missing = true;
  std::string missing_token = "?";
  bool has_header = true;
  std::size_t skip_lines = 0;
  // Data lines starting with this prefix are skipped (empty: none).
  std::string comment_prefix;
  bool sensitive_as_feature = false;

  std::size_t index_of(ColumnKind kind) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i].kind == kind) return i;
    }
    throw Error(str_cat("schema has no ", to_string(kind), " column"));
  }
  std::size_t label_index() const { return index_of(ColumnKind::kLabel); }
  std::size_t sensitive_index() const {
    return index_of(ColumnKind::kSensitive);
  }

  std::size_t group_count() const {
    return sensitive_values.size() +
           (other_groups == OtherGroupPolicy::kMapToExtraGroup ? 1 : 0);
  }

  void validate() const {
    std::size_t labels = 0;
    std::size_t sensitive = 0;
    for (const auto& c : columns) {
      if (c.name.empty()) throw Error("schema: column with empty name");
      if (c.kind == ColumnKind::kLabel) ++labels;
      if (c.kind == ColumnKind::kSensitive) ++sensitive;
      if (c.kind == ColumnKind::kCategorical && c.values.empty()) {
        throw Error(str_cat("schema: categorical column '", c.name,
                            "' lists no admissible values"));
      }
    }
    if (labels != 1) {
      throw Error(str_cat("schema: expected exactly one label column, found ",
                          labels));
    }
    if (sensitive != 1) {
      throw Error(str_cat(
          "schema: expected exactly one sensitive column, found ", sensitive));
    }
    if (positive_labels.empty()) {
      throw Error("schema: positive_labels is empty");
    }
    if (sensitive_values.empty()) {
      throw Error("schema: sensitive_values is empty");
    }
    const auto& label_col = columns[label_index()];
    if (!label_col.values.empty()) {
      for (const auto& v : positive_labels) {
        if (std::find(label_col.values.begin(), label_col.values.end(), v) ==
            label_col.values.end()) {
          throw Error(str_cat("schema: positive label '", v,
                              "' is not an admissible label value"));
        }
      }
    }
  }

  friend bool operator==(const DataSchema&, const DataSchema&) = default;
};

struct RawDataset {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::size_t dropped_missing = 0;
  std::size_t dropped_other_group = 0;

  std::size_t size() const { return rows.size(); }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// Splits one CSV record. Double-quoted fields may contain commas; "" inside
// quotes is a literal quote.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

inline bool contains(const std::vector<std::string>& values,
                     const std::string& v) {
  return std::find(values.begin(), values.end(), v) != values.end();
}

}  // namespace detail

// Reads a CSV stream against `schema`. Blank lines are ignored. Line numbers in
// error messages are 1-based physical lines of the input.
inline RawDataset parse_csv_dataset(std::istream& in, const DataSchema& schema,
                                    std::string_view source = "<stream>") {
  schema.validate();
  RawDataset raw;
  for (const auto& c : schema.columns) raw.columns.push_back(c.name);

  std::string line;
  std::size_t line_no = 0;
  for (std::size_t i = 0; i < schema.skip_lines; ++i) {
    if (!std::getline(in, line)) break;
    ++line_no;
  }
  if (schema.has_header) {
    bool found = false;
    while (std::getline(in, line)) {
      ++line_no;
      if (detail::trim(line).empty()) continue;
      found = true;
      break;
    }
    if (!found) throw Error(str_cat(source, ": missing header row"));
    const auto header = detail::split_csv_line(line);
    if (header != raw.columns) {
      throw Error(str_cat(source, ": header does not match schema columns"));
    }
  }

  const std::size_t sens = schema.sensitive_index();
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    if (!schema.comment_prefix.empty() &&
        line.rfind(schema.comment_prefix, 0) == 0) {
      continue;
    }
    auto cells = detail::split_csv_line(line);
    if (cells.size() != schema.columns.size()) {
      throw Error(str_cat(source, ":", line_no, ": expected ",
                          schema.columns.size(), " cells, found ",
                          cells.size()));
    }
    bool missing = false;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto& spec = schema.columns[c];
      if (cells[c].empty() || cells[c] == schema.missing_token) {
        missing = true;
        continue;
      }
      if (spec.kind == ColumnKind::kIgnore ||
          spec.kind == ColumnKind::kContinuous) {
        continue;
      }
      if (!spec.values.empty() && !detail::contains(spec.values, cells[c])) {
        throw Error(str_cat(source, ":", line_no, ": unknown value '",
                            cells[c], "' in column '", spec.name, "'"));
      }
    }
    if (missing && schema.drop_missing) {
      ++raw.dropped_missing;
      continue;
    }
    if (cells[schema.label_index()] == schema.missing_token ||
        cells[schema.label_index()].empty()) {
      throw Error(str_cat(source, ":", line_no, ": missing label"));
    }
    if (!detail::contains(schema.sensitive_values, cells[sens])) {
      if (schema.other_groups == OtherGroupPolicy::kDrop) {
        ++raw.dropped_other_group;
        continue;
      }
    }
    raw.rows.push_back(std::move(cells));
  }
  if (raw.dropped_missing > 0 || raw.dropped_other_group > 0) {
    log::info(source, ": dropped ", raw.dropped_missing,
              " rows with missing values and ", raw.dropped_other_group,
              " rows outside the listed sensitive groups");
  }
  return raw;
}

inline RawDataset load_csv_dataset(const std::filesystem::path& path,
                                   const DataSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(str_cat("cannot open dataset '", path.string(), "'"));
  return parse_csv_dataset(in, schema, path.string());
}

// Features, labels and group ids of a dataset before it is split by client.
struct EncodedDataset {
  Matrix features;
  std::vector<int> labels;
  std::vector<int> groups;
  std::size_t group_count = 0;

  std::size_t size() const { return labels.size(); }
};

// Min-max statistics and one-hot layout learned from training rows.
class FeatureEncoder {
 public:
  struct ContinuousStats {
    double min = 0.0;
    double max = 0.0;
    bool constant() const { return !(max > min); }
  };

  static FeatureEncoder fit(const RawDataset& raw, const DataSchema& schema,
                            std::span<const std::size_t> training_rows) {
    schema.validate();
    FeatureEncoder enc;
    enc.schema_ = schema;
    enc.stats_.resize(schema.columns.size());
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const auto& spec = schema.columns[c];
      if (spec.kind != ColumnKind::kContinuous) continue;
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (std::size_t r : training_rows) {
        const auto& cell = raw.rows.at(r)[c];
        if (cell.empty() || cell == schema.missing_token) continue;
        const double v = parse_number(cell, spec.name, r);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (!(hi >= lo)) lo = hi = 0.0;
      enc.stats_[c] = ContinuousStats{lo, hi};
      if (enc.stats_[c].constant()) {
        enc.warnings_.push_back(str_cat("continuous column '", spec.name,
                                        "' is constant on training rows; "
                                        "encoded as 0.0"));
        log::warn(enc.warnings_.back());
      }
    }
    return enc;
  }

  static FeatureEncoder fit(const RawDataset& raw, const DataSchema& schema) {
    std::vector<std::size_t> all(raw.size());
    std::iota(all.begin(), all.end(), 0);
    return fit(raw, schema, all);
  }

  std::size_t width() const {
    std::size_t w = 0;
    for (std::size_t c = 0; c < schema_.columns.size(); ++c) {
      w += column_width(c);
    }
    return w;
  }

  std::vector<std::string> feature_names() const {
    std::vector<std::string> names;
    for (std::size_t c = 0; c < schema_.columns.size(); ++c) {
      const auto& spec = schema_.columns[c];
      if (column_width(c) == 0) continue;
      if (spec.kind == ColumnKind::kContinuous) {
        names.push_back(spec.name);
      } else {
        for (const auto& v : one_hot_values(c)) {
          names.push_back(spec.name + "=" + v);
        }
      }
    }
    return names;
  }

  const std::vector<std::string>& warnings() const { return warnings_; }
  const std::vector<ContinuousStats>& stats() const { return stats_; }

  EncodedDataset encode(const RawDataset& raw) const {
    EncodedDataset out;
    out.group_count = schema_.group_count();
    const std::size_t w = width();
    out.features = Matrix(raw.size(), w);
    out.labels.reserve(raw.size());
    out.groups.reserve(raw.size());
    const std::size_t label_col = schema_.label_index();
    const std::size_t sens_col = schema_.sensitive_index();
    for (std::size_t r = 0; r < raw.size(); ++r) {
      const auto& cells = raw.rows[r];
      if (cells.size() != schema_.columns.size()) {
        throw Error(str_cat("row ", r, " has arity ", cells.size()));
      }
      auto dst = out.features.row(r);
      std::size_t k = 0;
      for (std::size_t c = 0; c < schema_.columns.size(); ++c) {
        const auto& spec = schema_.columns[c];
        const std::size_t cw = column_width(c);
        if (cw == 0) continue;
        const auto& cell = cells[c];
        const bool missing = cell.empty() || cell == schema_.missing_token;
        if (spec.kind == ColumnKind::kContinuous) {
          const auto& st = stats_[c];
          dst[k] = (missing || st.constant())
                       ? 0.0
                       : (parse_number(cell, spec.name, r) - st.min) /
                             (st.max - st.min);
        } else if (!missing) {
          const auto values = one_hot_values(c);
          const auto it = std::find(values.begin(), values.end(), cell);
          if (it != values.end()) {
            dst[k + static_cast<std::size_t>(it - values.begin())] = 1.0;
          } else if (spec.kind == ColumnKind::kCategorical) {
            throw Error(str_cat("row ", r, ": unknown value '", cell,
                                "' in column '", spec.name, "'"));
          }
        }
        k += cw;
      }
      out.labels.push_back(
          detail::contains(schema_.positive_labels, cells[label_col]) ? 1 : 0);
      out.groups.push_back(group_of(cells[sens_col], r));
    }
    return out;
  }

 private:
  static double parse_number(const std::string& cell, const std::string& col,
                             std::size_t row) {
    try {
      std::size_t used = 0;
      const double v = std::stod(cell, &used);
      if (used != cell.size()) throw std::invalid_argument(cell);
      return v;
    } catch (const std::exception&) {
      throw Error(str_cat("row ", row, ": non-numeric value '", cell,
                          "' in continuous column '", col, "'"));
    }
  }

  std::vector<std::string> one_hot_values(std::size_t c) const {
    const auto& spec = schema_.columns[c];
    if (spec.kind == ColumnKind::kSensitive) return schema_.sensitive_values;
    return spec.values;
  }

  std::size_t column_width(std::size_t c) const {
    const auto& spec = schema_.columns[c];
    switch (spec.kind) {
      case ColumnKind::kContinuous: return 1;
      case ColumnKind::kCategorical: return spec.values.size();
      case ColumnKind::kSensitive:
        return schema_.sensitive_as_feature ? schema_.sensitive_values.size()
                                            : 0;
      default: return 0;
    }
  }

  int group_of(const std::string& value, std::size_t row) const {
    const auto& sv = schema_.sensitive_values;
    const auto it = std::find(sv.begin(), sv.end(), value);
    if (it != sv.end()) return static_cast<int>(it - sv.begin());
    if (schema_.other_groups == OtherGroupPolicy::kMapToExtraGroup) {
      return static_cast<int>(sv.size());
    }
    throw Error(str_cat("row ", row, ": sensitive value '", value,
                        "' is not a listed group"));
  }

  DataSchema schema_;
  std::vector<ContinuousStats> stats_;
  std::vector<std::string> warnings_;
};

// Encodes with statistics fitted on every row of `raw`.
inline EncodedDataset encode_features(const RawDataset& raw,
                                      const DataSchema& schema) {
  return FeatureEncoder::fit(raw, schema).encode(raw);
}

// One client's shard.
struct ClientDataset {
  std::size_t client = 0;
  Matrix features;
  std::vector<int> labels;
  std::vector<int> groups;
  std::size_t group_count = 2;

  std::size_t size() const { return labels.size(); }

  void validate() const {
    if (features.rows() != labels.size() || groups.size() != labels.size()) {
      throw Error(str_cat("client ", client, ": ", features.rows(),
                          " feature rows, ", labels.size(), " labels, ",
                          groups.size(), " group ids"));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != 0 && labels[i] != 1) {
        throw Error(str_cat("client ", client, ": label ", labels[i],
                            " at row ", i, " is not binary"));
      }
      if (groups[i] < 0 || static_cast<std::size_t>(groups[i]) >= group_count) {
        throw Error(str_cat("client ", client, ": group id ", groups[i],
                            " at row ", i, " outside [0,", group_count, ")"));
      }
    }
  }

  ClientDataset subset(std::span<const std::size_t> rows) const {
    ClientDataset out;
    out.client = client;
    out.features = features.select_rows(rows);
    out.labels = select(labels, rows);
    out.groups = select(groups, rows);
    out.group_count = group_count;
    return out;
  }

  double positive_rate() const {
    if (labels.empty()) return 0.0;
    return static_cast<double>(std::count(labels.begin(), labels.end(), 1)) /
           static_cast<double>(labels.size());
  }
};

// Seeded IID split of row indices into `n_clients` disjoint shards whose sizes
// differ by at most one. Each shard lists its rows in ascending order.
inline std::vector<std::vector<std::size_t>> partition_indices(
    std::size_t n_rows, std::size_t n_clients, std::uint64_t seed) {
  if (n_clients == 0) throw Error("partition: n_clients must be >= 1");
  if (n_clients > n_rows) {
    throw Error(str_cat("partition: ", n_clients, " clients but only ", n_rows,
                        " rows"));
  }
  std::vector<std::size_t> order(n_rows);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, Stream::kPartition);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> shards(n_clients);
  const std::size_t base = n_rows / n_clients;
  const std::size_t extra = n_rows % n_clients;
  std::size_t pos = 0;
  for (std::size_t c = 0; c < n_clients; ++c) {
    const std::size_t len = base + (c < extra ? 1 : 0);
    shards[c].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                     order.begin() + static_cast<std::ptrdiff_t>(pos + len));
    std::sort(shards[c].begin(), shards[c].end());
    pos += len;
  }
  return shards;
}

inline std::vector<ClientDataset> partition_clients(const Matrix& features,
                                                    const std::vector<int>& labels,
                                                    const std::vector<int>& groups,
                                                    std::size_t group_count,
                                                    std::size_t n_clients,
                                                    std::uint64_t seed) {
  if (features.rows() != labels.size() || labels.size() != groups.size()) {
    throw Error("partition: features, labels and groups differ in length");
  }
  const auto shards = partition_indices(labels.size(), n_clients, seed);
  std::vector<ClientDataset> clients;
  clients.reserve(n_clients);
  for (std::size_t c = 0; c < n_clients; ++c) {
    ClientDataset d;
    d.client = c;
    d.features = features.select_rows(shards[c]);
    d.labels = select(labels, shards[c]);
    d.groups = select(groups, shards[c]);
    d.group_count = group_count;
    d.validate();
    clients.push_back(std::move(d));
  }
  return clients;
}

inline std::vector<ClientDataset> partition_clients(const EncodedDataset& data,
                                                    std::size_t n_clients,
                                                    std::uint64_t seed) {
  return partition_clients(data.features, data.labels, data.groups,
                           data.group_count, n_clients, seed);
}

struct IndexSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Seeded split of `rows`; the test part gets round(test_fraction * n) rows.
// Both parts keep ascending order. `stream_key` separates the streams of
// different shards.
inline IndexSplit split_indices(std::span<const std::size_t> rows,
                                double test_fraction, std::uint64_t seed,
                                std::uint64_t stream_key = 0) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw Error(str_cat("test_fraction ", test_fraction, " outside [0,1)"));
  }
  std::vector<std::size_t> order(rows.begin(), rows.end());
  Rng rng = make_rng(seed, Stream::kSplit, stream_key);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(order.size())));
  IndexSplit out;
  out.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  out.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(out.test.begin(), out.test.end());
  std::sort(out.train.begin(), out.train.end());
  return out;
}

inline std::pair<ClientDataset, ClientDataset> train_test_split(
    const ClientDataset& d, double test_fraction, std::uint64_t seed) {
  std::vector<std::size_t> all(d.size());
  std::iota(all.begin(), all.end(), 0);
  const IndexSplit s = split_indices(all, test_fraction, seed, d.client);
  return {d.subset(s.train), d.subset(s.test)};
}

// Epoch-based mini-batch sampler. Every epoch is a fresh seeded permutation
// cut into ceil(n / B) batches; the final batch holds the remainder.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
      : n_(n), batch_size_(batch_size), rng_(seed) {
    if (batch_size == 0) throw Error("batch size must be >= 1");
    if (batch_size > n) {
      throw Error(str_cat("batch size ", batch_size, " exceeds dataset size ",
                          n));
    }
  }

  std::size_t batches_per_epoch() const {
    return (n_ + batch_size_ - 1) / batch_size_;
  }

  std::vector<std::vector<std::size_t>> next_epoch() {
    std::vector<std::size_t> order(n_);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);
    std::vector<std::vector<std::size_t>> batches;
    batches.reserve(batches_per_epoch());
    for (std::size_t pos = 0; pos < n_; pos += batch_size_) {
      const std::size_t end = std::min(n_, pos + batch_size_);
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos),
                           order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
  }

  // Continues through epochs, reshuffling when one is exhausted.
  const std::vector<std::size_t>& next_batch() {
    if (cursor_ >= pending_.size()) {
      pending_ = next_epoch();
      cursor_ = 0;
    }
    return pending_[cursor_++];
  }

 private:
  std::size_t n_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::vector<std::size_t>> pending_;
  std::size_t cursor_ = 0;
};

inline BatchSampler batch_iter(const ClientDataset& d, std::size_t batch_size,
                               std::uint64_t seed) {
  return BatchSampler(d.size(), batch_size, seed);
}

}  // namespace fairfed

#endif  // FAIRFED_TABULAR_DATA_HPP_
