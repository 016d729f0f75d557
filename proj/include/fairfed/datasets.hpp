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
#ifndef FAIRFED_DATASETS_HPP_
#define FAIRFED_DATASETS_HPP_

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "fairfed/common.hpp"
#include "fairfed/tabular_data.hpp"

namespace fairfed {

// UCI Adult census income files (adult.data / adult.test). The files have no
// header; adult.test opens with a "|1x3 Cross validator" line and suffixes
// its labels with '.'. Race is the sensitive attribute, restricted to White
// (group 0) and Black (group 1).
inline DataSchema adult_schema() {
  using K = ColumnKind;
  DataSchema s;
  s.columns = {
      {"age", K::kContinuous, {}},
      {"workclass", K::kCategorical,
       {"Private", "Self-emp-not-inc", "Self-emp-inc", "Federal-gov",
        "Local-gov", "State-gov", "Without-pay", "Never-worked"}},
      {"fnlwgt", K::kContinuous, {}},
      {"education", K::kCategorical,
       {"Bachelors", "Some-college", "11th", "HS-grad", "Prof-school",
        "Assoc-acdm", "Assoc-voc", "9th", "7th-8th", "12th", "Masters",
        "1st-4th", "10th", "Doctorate", "5th-6th", "Preschool"}},
      {"education-num", K::kContinuous, {}},
      {"marital-status", K::kCategorical,
       {"Married-civ-spouse", "Divorced", "Never-married", "Separated",
        "Widowed", "Married-spouse-absent", "Married-AF-spouse"}},
      {"occupation", K::kCategorical,
       {"Tech-support", "Craft-repair", "Other-service", "Sales",
        "Exec-managerial", "Prof-specialty", "Handlers-cleaners",
        "Machine-op-inspct", "Adm-clerical", "Farming-fishing",
        "Transport-moving", "Priv-house-serv", "Protective-serv",
        "Armed-Forces"}},
      {"relationship", K::kCategorical,
       {"Wife", "Own-child", "Husband", "Not-in-family", "Other-relative",
        "Unmarried"}},
      {"race", K::kSensitive,
       {"White", "Asian-Pac-Islander", "Amer-Indian-Eskimo", "Other",
        "Black"}},
      {"sex", K::kCategorical, {"Female", "Male"}},
      {"capital-gain", K::kContinuous, {}},
      {"capital-loss", K::kContinuous, {}},
      {"hours-per-week", K::kContinuous, {}},
      {"native-country", K::kCategorical,
       {"United-States", "Cambodia", "England", "Puerto-Rico", "Canada",
        "Germany", "Outlying-US(Guam-USVI-etc)", "India", "Japan", "Greece",
        "South", "China", "Cuba", "Iran", "Honduras", "Philippines", "Italy",
        "Poland", "Jamaica", "Vietnam", "Mexico", "Portugal", "Ireland",
        "France", "Dominican-Republic", "Laos", "Ecuador", "Taiwan", "Haiti",
        "Columbia", "Hungary", "Guatemala", "Nicaragua", "Scotland",
        "Thailand", "Yugoslavia", "El-Salvador", "Trinadad&Tobago", "Peru",
        "Hong", "Holand-Netherlands"}},
      {"income", K::kLabel, {"<=50K", ">50K", "<=50K.", ">50K."}},
  };
  s.positive_labels = {">50K", ">50K."};
  s.sensitive_values = {"White", "Black"};
  s.other_groups = OtherGroupPolicy::kDrop;
  s.drop_missing = true;
  s.missing_token = "?";
  s.has_header = false;
  s.comment_prefix = "|";
  return s;
}

// Layout written by generate_synthetic().
inline DataSchema synthetic_schema() {
  using K = ColumnKind;
  DataSchema s;
  s.columns = {
      {"x1", K::kContinuous, {}},
      {"x2", K::kContinuous, {}},
      {"x3", K::kContinuous, {}},
      {"region", K::kCategorical, {"A", "B", "C"}},
      {"group", K::kSensitive, {"majority", "minority"}},
      {"label", K::kLabel, {"0", "1"}},
  };
  s.positive_labels = {"1"};
  s.sensitive_values = {"majority", "minority"};
  return s;
}

struct SyntheticSpec {
  std::size_t rows = 2500;
  // 0: groups identically distributed; 1: strongly lower base rate and
  // shifted proxy features for the minority group.
  double bias = 0.6;
  double minority_fraction = 0.3;
  std::uint64_t seed = 1;
};

// Two-group tabular data with a group-dependent label threshold and
// group-correlated proxy features:
//   s ~ N(0,1) latent merit, y = 1[s + N(0, 0.5^2) > t_g],
//   t_majority = 0, t_minority = bias,
//   x1 = s + N(0, 0.5^2), x2 = 0.5 s + N(0,1),
//   x3 = +/- 1.5 bias + N(0,1) (proxy), region skewed by group and bias.
// Continuous cells are printed with six decimals so files are
// byte-reproducible.
inline void generate_synthetic(std::ostream& os, const SyntheticSpec& spec) {
  if (spec.rows == 0) throw Error("gen-synth: rows must be >= 1");
  if (!(spec.bias >= 0.0 && spec.bias <= 1.0)) {
    throw Error("gen-synth: bias must lie in [0, 1]");
  }
  Rng rng = make_rng(spec.seed, Stream::kSynthetic);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  os << "x1,x2,x3,region,group,label\n";
  char buf[160];
  for (std::size_t i = 0; i < spec.rows; ++i) {
    const bool minority = unif(rng) < spec.minority_fraction;
    const double merit = normal(rng);
    const double threshold = minority ? spec.bias : 0.0;
    const int y = merit + 0.5 * normal(rng) > threshold ? 1 : 0;
    const double x1 = merit + 0.5 * normal(rng);
    const double x2 = 0.5 * merit + normal(rng);
    const double x3 = (minority ? -1.5 : 1.5) * spec.bias + normal(rng);
    // P(region = A) falls for the minority group as bias grows.
    const double pa = minority ? 0.5 - 0.4 * spec.bias : 0.5;
    const double u = unif(rng);
    const char* region = u < pa ? "A" : (u < pa + 0.3 ? "B" : "C");
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%s,%s,%d\n", x1, x2, x3,
                  region, minority ? "minority" : "majority", y);
    os << buf;
  }
}

}  // namespace fairfed

#endif  // FAIRFED_DATASETS_HPP_
