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
#ifndef FAIRFED_TESTS_TEST_UTIL_HPP_
#define FAIRFED_TESTS_TEST_UTIL_HPP_

// Helpers used only by the tests. The oracles are deliberately naive
// (filter-then-average, scalar loops, central differences) and share no code
// with the library beyond plain data types.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fairfed/fair_trainer.hpp"
#include "fairfed/matrix.hpp"
#include "fairfed/mlp_model.hpp"

namespace fairfed::test {

inline bool is_disjoint_cover(const std::vector<std::vector<std::size_t>>& parts,
                              std::size_t n) {
  std::vector<int> seen(n, 0);
  for (const auto& p : parts) {
    for (std::size_t i : p) {
      if (i >= n || seen[i]++) return false;
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; });
}

// Mean of the values selected by `keep`, or nullopt when none are.
inline std::optional<double> filtered_mean(
    const std::vector<double>& v, const std::function<bool(std::size_t)>& keep) {
  std::vector<double> picked;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (keep(i)) picked.push_back(v[i]);
  }
  if (picked.empty()) return std::nullopt;
  double s = 0.0;
  for (double x : picked) s += x;
  return s / static_cast<double>(picked.size());
}

// Brute-force hard-decision report: threshold, then filter-and-average for
// every group and (group, label) cell, then max |deviation|.
struct OracleReport {
  double demp_error = 0.0;
  double eo_error = 0.0;
  double di_error = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::optional<double>> group_rate;
};

inline OracleReport oracle_report(const std::vector<double>& p,
                                  const std::vector<int>& a,
                                  const std::vector<int>& y, std::size_t G,
                                  double guard = 1e-6) {
  std::vector<double> d(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) d[i] = p[i] > 0.5 ? 1.0 : 0.0;
  OracleReport r;
  const double overall = *filtered_mean(d, [](std::size_t) { return true; });
  bool all_present = true;
  for (std::size_t g = 0; g < G; ++g) {
    auto m = filtered_mean(
        d, [&](std::size_t i) { return a[i] == static_cast<int>(g); });
    r.group_rate.push_back(m);
    if (m) {
      r.demp_error = std::max(r.demp_error, std::abs(*m - overall));
    } else {
      all_present = false;
    }
  }
  for (int label = 0; label < 2; ++label) {
    auto ym = filtered_mean(d, [&](std::size_t i) { return y[i] == label; });
    if (!ym) continue;
    for (std::size_t g = 0; g < G; ++g) {
      auto cm = filtered_mean(d, [&](std::size_t i) {
        return y[i] == label && a[i] == static_cast<int>(g);
      });
      if (cm) r.eo_error = std::max(r.eo_error, std::abs(*cm - *ym));
    }
  }
  if (all_present && G >= 2) {
    // Ratios over the cyclic neighbour pairs (i+1)/i and 0/(G-1).
    double min_ratio = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < G; ++i) {
      const std::size_t num = (i + 1 == G) ? 0 : i + 1;
      const std::size_t den = (i + 1 == G) ? G - 1 : i;
      const double ratio = std::max(*r.group_rate[num], guard) /
                           std::max(*r.group_rate[den], guard);
      min_ratio = std::min(min_ratio, ratio);
    }
    r.di_error = std::max(0.0, 1.0 - min_ratio);
  }
  return r;
}

// Random model with every weight and bias uniform in [-scale, scale].
inline ModelParams random_model(const std::vector<std::size_t>& dims,
                                std::mt19937_64& gen, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  ModelParams m;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    m.layers.emplace_back(dims[i], dims[i + 1]);
  }
  m.for_each([&](double& v) { v = u(gen); });
  return m;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols,
                            std::mt19937_64& gen, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix x(rows, cols);
  for (double& v : x.data()) v = u(gen);
  return x;
}

// Scalar forward pass written independently of the library: returns the
// pre-activations of every hidden unit (for kink detection) and the logits.
struct NaiveForward {
  std::vector<double> hidden_preacts;
  std::vector<double> logits;
};

inline NaiveForward naive_forward(const ModelParams& m, const Matrix& x) {
  NaiveForward out;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::vector<double> act(x.row(r).begin(), x.row(r).end());
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      const auto& L = m.layers[l];
      std::vector<double> next(L.outputs);
      for (std::size_t o = 0; o < L.outputs; ++o) {
        double z = L.bias[o];
        for (std::size_t j = 0; j < L.inputs; ++j) {
          z += L.weights[o * L.inputs + j] * act[j];
        }
        if (l + 1 < m.layers.size()) {
          out.hidden_preacts.push_back(z);
          next[o] = z > 0 ? z : 0.0;
        } else {
          next[o] = z;
        }
      }
      act = std::move(next);
    }
    out.logits.push_back(act[0]);
  }
  return out;
}

inline double naive_sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Smallest |pre-activation| of any hidden unit; central differences across a
// rectifier kink are meaningless, so checks skip instances where this is tiny.
inline double min_abs_preact(const ModelParams& m, const Matrix& x) {
  double lo = std::numeric_limits<double>::infinity();
  for (double z : naive_forward(m, x).hidden_preacts) lo = std::min(lo, std::abs(z));
  return lo;
}

// Central-difference gradient of `f` with respect to every parameter.
inline std::vector<double> numeric_gradient(
    const ModelParams& m, const std::function<double(const ModelParams&)>& f,
    double h = 1e-5) {
  std::vector<double> g(m.size());
  ModelParams probe = m;
  for (std::size_t k = 0; k < m.size(); ++k) {
    const double orig = probe.flat(k);
    probe.flat(k) = orig + h;
    const double up = f(probe);
    probe.flat(k) = orig - h;
    const double down = f(probe);
    probe.flat(k) = orig;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

// max_k |a_k - b_k| / max(|a_k|, |b_k|, floor)
inline double max_relative_error(const std::vector<double>& a,
                                 const std::vector<double>& b,
                                 double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double scale = std::max({std::abs(a[k]), std::abs(b[k]), floor});
    worst = std::max(worst, std::abs(a[k] - b[k]) / scale);
  }
  return worst;
}

// True when the batch is at least `margin` away from every non-smooth point of
// the Lagrangian: rectifier kinks, |.| at zero, ties in the max-abs choice and
// in the disparate-impact minimum, and the hinge at the threshold.
inline bool far_from_kinks(const ModelParams& m, const Batch& b,
                           const FairnessConfig& cfg, double margin) {
  if (test::min_abs_preact(m, b.x) < margin) return false;
  const auto probs = forward(m, b.x);
  const auto s = group_stats(probs, b.a, b.y, b.group_count);
  auto separated = [&](const CellLosses& c) {
    std::vector<double> mags;
    for (std::size_t i = 0; i < c.value.size(); ++i) {
      if (!c.present[i]) continue;
      if (std::abs(c.value[i]) < margin) return false;
      mags.push_back(std::abs(c.value[i]));
    }
    std::sort(mags.rbegin(), mags.rend());
    return mags.size() < 2 || mags[0] - mags[1] > margin ||
           cfg.multipliers == MultiplierMode::kPerCell;
  };
  if (!separated(demp_loss(s)) || !separated(eo_loss(s))) return false;
  std::vector<double> ratios;
  for (const auto& [num, den] : di_pairs(b.group_count)) {
    ratios.push_back(s.mean[num] / s.mean[den]);
  }
  std::sort(ratios.begin(), ratios.end());
  return 1.0 - ratios[0] > margin && ratios[1] - ratios[0] > margin;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fairfed_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fairfed::test

#endif  // FAIRFED_TESTS_TEST_UTIL_HPP_
