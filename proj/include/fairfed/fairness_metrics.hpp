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
#ifndef FAIRFED_FAIRNESS_METRICS_HPP_
#define FAIRFED_FAIRNESS_METRICS_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "fairfed/common.hpp"

namespace fairfed {

// Conditional means of predictions by sensitive group and label.
//
// Means are computed in two passes (sum, then a residual correction), so they
// match a naive filter-then-average evaluation to rounding.
struct GroupStats {
  std::size_t group_count = 0;
  std::size_t total = 0;
  double overall_mean = 0.0;
  std::vector<std::size_t> count;  // per group
  std::vector<double> mean;        // per group; 0 when the group is empty
  std::array<std::size_t, 2> label_count{};
  std::array<double, 2> label_mean{};
  // Indexed [y][a].
  std::array<std::vector<std::size_t>, 2> cell_count;
  std::array<std::vector<double>, 2> cell_mean;
  // Fraction of each group with prediction strictly above 0.5.
  std::vector<double> positive_rate;

  bool group_empty(std::size_t a) const { return count[a] == 0; }
  bool cell_empty(std::size_t a, int y) const {
    return cell_count[static_cast<std::size_t>(y)][a] == 0;
  }
};

namespace detail {

inline void check_inputs(std::span<const double> p, std::span<const int> a,
                         std::span<const int> y, std::size_t group_count) {
  if (p.empty()) throw Error("group statistics of an empty batch");
  if (p.size() != a.size() || p.size() != y.size()) {
    throw Error(str_cat("group statistics: lengths differ (", p.size(), ", ",
                        a.size(), ", ", y.size(), ")"));
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (a[i] < 0 || static_cast<std::size_t>(a[i]) >= group_count) {
      throw Error(str_cat("group id ", a[i], " at row ", i, " out of range"));
    }
    if (y[i] != 0 && y[i] != 1) {
      throw Error(str_cat("label ", y[i], " at row ", i, " is not binary"));
    }
  }
}

}  // namespace detail

inline GroupStats group_stats(std::span<const double> p,
                              std::span<const int> a, std::span<const int> y,
                              std::size_t group_count) {
  detail::check_inputs(p, a, y, group_count);
  const std::size_t G = group_count;
  GroupStats s;
  s.group_count = G;
  s.total = p.size();
  s.count.assign(G, 0);
  s.mean.assign(G, 0.0);
  s.positive_rate.assign(G, 0.0);
  for (auto& v : s.cell_count) v.assign(G, 0);
  for (auto& v : s.cell_mean) v.assign(G, 0.0);

  std::vector<std::size_t> positives(G, 0);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto g = static_cast<std::size_t>(a[i]);
    const auto l = static_cast<std::size_t>(y[i]);
    sum += p[i];
    ++s.count[g];
    ++s.label_count[l];
    ++s.cell_count[l][g];
    s.mean[g] += p[i];
    s.label_mean[l] += p[i];
    s.cell_mean[l][g] += p[i];
    if (p[i] > 0.5) ++positives[g];
  }
  auto finish = [](double& m, std::size_t n) {
    if (n > 0) m /= static_cast<double>(n);
  };
  s.overall_mean = sum / static_cast<double>(p.size());
  for (std::size_t g = 0; g < G; ++g) {
    finish(s.mean[g], s.count[g]);
    if (s.count[g] > 0) {
      s.positive_rate[g] = static_cast<double>(positives[g]) /
                           static_cast<double>(s.count[g]);
    }
  }
  for (std::size_t l = 0; l < 2; ++l) {
    finish(s.label_mean[l], s.label_count[l]);
    for (std::size_t g = 0; g < G; ++g) finish(s.cell_mean[l][g], s.cell_count[l][g]);
  }

  // Second pass: mean += mean(x - mean) removes the first-pass rounding.
  double r_all = 0.0;
  std::vector<double> r_group(G, 0.0);
  std::array<double, 2> r_label{};
  std::array<std::vector<double>, 2> r_cell{std::vector<double>(G, 0.0),
                                            std::vector<double>(G, 0.0)};
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto g = static_cast<std::size_t>(a[i]);
    const auto l = static_cast<std::size_t>(y[i]);
    r_all += p[i] - s.overall_mean;
    r_group[g] += p[i] - s.mean[g];
    r_label[l] += p[i] - s.label_mean[l];
    r_cell[l][g] += p[i] - s.cell_mean[l][g];
  }
  s.overall_mean += r_all / static_cast<double>(p.size());
  for (std::size_t g = 0; g < G; ++g) {
    if (s.count[g] > 0) s.mean[g] += r_group[g] / static_cast<double>(s.count[g]);
  }
  for (std::size_t l = 0; l < 2; ++l) {
    if (s.label_count[l] > 0) {
      s.label_mean[l] += r_label[l] / static_cast<double>(s.label_count[l]);
    }
    for (std::size_t g = 0; g < G; ++g) {
      if (s.cell_count[l][g] > 0) {
        s.cell_mean[l][g] +=
            r_cell[l][g] / static_cast<double>(s.cell_count[l][g]);
      }
    }
  }
  return s;
}

// Loss values for a family of cells (groups, or (group, label) pairs). Cells
// without samples are marked absent and carry value 0.
struct CellLosses {
  std::vector<double> value;
  std::vector<bool> present;

  std::size_t present_count() const {
    return static_cast<std::size_t>(
        std::count(present.begin(), present.end(), true));
  }
};

enum class AggregationMode { kMaxAbs, kMeanAbs };

inline double aggregate_abs(const CellLosses& cells, AggregationMode mode) {
  double out = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < cells.value.size(); ++c) {
    if (!cells.present[c]) continue;
    const double v = std::abs(cells.value[c]);
    out = mode == AggregationMode::kMaxAbs ? std::max(out, v) : out + v;
    ++n;
  }
  if (mode == AggregationMode::kMeanAbs && n > 0) out /= static_cast<double>(n);
  return out;
}

// l_DemP(a) = E[f | A=a] - E[f], one value per group.
inline CellLosses demp_loss(const GroupStats& s) {
  CellLosses out;
  out.value.assign(s.group_count, 0.0);
  out.present.assign(s.group_count, false);
  for (std::size_t g = 0; g < s.group_count; ++g) {
    if (s.group_empty(g)) continue;
    out.present[g] = true;
    out.value[g] = s.mean[g] - s.overall_mean;
  }
  return out;
}

// l_EO(a, y) = E[f | A=a, Y=y] - E[f | Y=y], stored at index y * G + a.
inline CellLosses eo_loss(const GroupStats& s) {
  const std::size_t G = s.group_count;
  CellLosses out;
  out.value.assign(2 * G, 0.0);
  out.present.assign(2 * G, false);
  for (int y = 0; y < 2; ++y) {
    const auto l = static_cast<std::size_t>(y);
    if (s.label_count[l] == 0) {
      log::debug("eo_loss: no samples with label ", y, "; skipped");
      continue;
    }
    for (std::size_t g = 0; g < G; ++g) {
      if (s.cell_empty(g, y)) continue;
      out.present[l * G + g] = true;
      out.value[l * G + g] = s.cell_mean[l][g] - s.label_mean[l];
    }
  }
  return out;
}

inline constexpr double kDefaultDivisionGuard = 1e-6;

// Group pairs (numerator, denominator) compared by the disparate-impact ratio:
// every adjacent pair (i+1, i) plus the wrap-around pair (0, G-1). For two
// groups this is {r1/r0, r0/r1}.
inline std::vector<std::pair<std::size_t, std::size_t>> di_pairs(
    std::size_t group_count) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i + 1 < group_count; ++i) pairs.emplace_back(i + 1, i);
  pairs.emplace_back(0, group_count - 1);
  return pairs;
}

// Guarded rate ratio. Both sides are floored at `guard`, so two empty rates
// compare as parity instead of 0/guard.
inline double guarded_ratio(double num, double den, double guard) {
  return std::max(num, guard) / std::max(den, guard);
}

struct DisparateImpact {
  double min_ratio = 1.0;
  double loss = 0.0;     // min_ratio - 1 (<= 0 for the pair family above)
  double penalty = 0.0;  // max(0, -loss)
};

// Disparate impact of group rates; the rate of a group is its mean
// prediction, which is the positive-decision rate when predictions are hard
// 0/1 decisions.
inline DisparateImpact di_loss(const GroupStats& s,
                               double guard = kDefaultDivisionGuard) {
  if (s.group_count < 2) throw Error("disparate impact needs >= 2 groups");
  for (std::size_t g = 0; g < s.group_count; ++g) {
    if (s.group_empty(g)) {
      throw Error(str_cat("disparate impact: group ", g, " has no samples"));
    }
  }
  DisparateImpact di;
  di.min_ratio = std::numeric_limits<double>::infinity();
  for (const auto& [num, den] : di_pairs(s.group_count)) {
    di.min_ratio =
        std::min(di.min_ratio, guarded_ratio(s.mean[num], s.mean[den], guard));
  }
  di.loss = di.min_ratio - 1.0;
  di.penalty = std::max(0.0, -di.loss);
  return di;
}

// Hard-decision fairness errors: predictions are replaced by 1[p > threshold]
// and each error is the largest absolute cell loss. di_error is NaN when a
// group has no samples.
struct FairnessReport {
  double demp_error = 0.0;
  double eo_error = 0.0;
  double di_error = 0.0;
  GroupStats stats;
};

inline std::vector<double> hard_decisions(std::span<const double> p,
                                          double threshold = 0.5) {
  std::vector<double> d(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) d[i] = p[i] > threshold ? 1.0 : 0.0;
  return d;
}

inline FairnessReport fairness_report(std::span<const double> p,
                                      std::span<const int> a,
                                      std::span<const int> y,
                                      std::size_t group_count,
                                      double threshold = 0.5,
                                      double guard = kDefaultDivisionGuard) {
  const auto decisions = hard_decisions(p, threshold);
  FairnessReport r;
  r.stats = group_stats(decisions, a, y, group_count);
  r.demp_error = aggregate_abs(demp_loss(r.stats), AggregationMode::kMaxAbs);
  r.eo_error = aggregate_abs(eo_loss(r.stats), AggregationMode::kMaxAbs);
  bool all_groups = true;
  for (std::size_t g = 0; g < group_count; ++g) {
    all_groups = all_groups && !r.stats.group_empty(g);
  }
  r.di_error = (all_groups && group_count >= 2)
                   ? di_loss(r.stats, guard).penalty
                   : std::numeric_limits<double>::quiet_NaN();
  return r;
}

struct AccuracyReport {
  double overall = 0.0;
  std::vector<double> per_group;  // NaN for groups without samples
};

inline AccuracyReport accuracy_report(std::span<const double> p,
                                      std::span<const int> a,
                                      std::span<const int> y,
                                      std::size_t group_count,
                                      double threshold = 0.5) {
  detail::check_inputs(p, a, y, group_count);
  AccuracyReport r;
  std::vector<std::size_t> hits(group_count, 0), n(group_count, 0);
  std::size_t total_hits = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const int decision = p[i] > threshold ? 1 : 0;
    const auto g = static_cast<std::size_t>(a[i]);
    ++n[g];
    if (decision == y[i]) {
      ++hits[g];
      ++total_hits;
    }
  }
  r.overall = static_cast<double>(total_hits) / static_cast<double>(p.size());
  r.per_group.resize(group_count);
  for (std::size_t g = 0; g < group_count; ++g) {
    r.per_group[g] = n[g] == 0 ? std::numeric_limits<double>::quiet_NaN()
                               : static_cast<double>(hits[g]) /
                                     static_cast<double>(n[g]);
  }
  return r;
}

}  // namespace fairfed

#endif  // FAIRFED_FAIRNESS_METRICS_HPP_
