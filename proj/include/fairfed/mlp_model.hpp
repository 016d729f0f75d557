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
#ifndef FAIRFED_MLP_MODEL_HPP_
#define FAIRFED_MLP_MODEL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "fairfed/common.hpp"
#include "fairfed/matrix.hpp"

namespace fairfed {

// One fully connected layer: y = W x + b with W stored row-major as
// (outputs x inputs).
struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out)
      : inputs(in), outputs(out), weights(in * out, 0.0), bias(out, 0.0) {}

  std::size_t size() const { return weights.size() + bias.size(); }
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct ParamsTag {};
struct GradientTag {};

// An ordered stack of dense layers. The tag separates model parameters from
// gradients at the type level while sharing the flat-access machinery.
// Flat order: layer by layer, weights (row-major) then bias.
template <typename Tag>
class LayerStack {
 public:
  std::vector<DenseLayer> layers;

  LayerStack() = default;
  explicit LayerStack(std::vector<DenseLayer> l) : layers(std::move(l)) {}

  // Zero-filled stack with the same shape as `other`.
  template <typename OtherTag>
  static LayerStack zeros_like(const LayerStack<OtherTag>& other) {
    LayerStack out;
    out.layers.reserve(other.layers.size());
    for (const auto& l : other.layers) {
      out.layers.emplace_back(l.inputs, l.outputs);
    }
    return out;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.size();
    return n;
  }

  std::size_t input_dim() const {
    return layers.empty() ? 0 : layers.front().inputs;
  }

  template <typename OtherTag>
  bool congruent(const LayerStack<OtherTag>& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].inputs != other.layers[i].inputs ||
          layers[i].outputs != other.layers[i].outputs) {
        return false;
      }
    }
    return true;
  }

  // Applies fn(double&) to every entry in flat order.
  template <typename Fn>
  void for_each(Fn&& fn) {
    for (auto& l : layers) {
      for (double& w : l.weights) fn(w);
      for (double& b : l.bias) fn(b);
    }
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& l : layers) {
      for (double w : l.weights) fn(w);
      for (double b : l.bias) fn(b);
    }
  }

  std::vector<double> flatten() const {
    std::vector<double> flat;
    flat.reserve(size());
    for_each([&](double v) { flat.push_back(v); });
    return flat;
  }

  void assign_flat(std::span<const double> flat) {
    if (flat.size() != size()) {
      throw Error(str_cat("assign_flat: ", flat.size(), " values for ",
                          size(), " parameters"));
    }
    std::size_t i = 0;
    for_each([&](double& v) { v = flat[i++]; });
  }

  double& flat(std::size_t index) {
    for (auto& l : layers) {
      if (index < l.weights.size()) return l.weights[index];
      index -= l.weights.size();
      if (index < l.bias.size()) return l.bias[index];
      index -= l.bias.size();
    }
    throw Error("flat index out of range");
  }
  double flat(std::size_t index) const {
    return const_cast<LayerStack*>(this)->flat(index);
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](double v) { ok = ok && std::isfinite(v); });
    return ok;
  }

  // this += scale * other
  template <typename OtherTag>
  void add_scaled(const LayerStack<OtherTag>& other, double scale) {
    check_congruent(other, "add_scaled");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      auto& dst = layers[i];
      const auto& src = other.layers[i];
      for (std::size_t k = 0; k < dst.weights.size(); ++k) {
        dst.weights[k] += scale * src.weights[k];
      }
      for (std::size_t k = 0; k < dst.bias.size(); ++k) {
        dst.bias[k] += scale * src.bias[k];
      }
    }
  }

  void scale(double s) {
    for_each([s](double& v) { v *= s; });
  }

  void set_zero() {
    for_each([](double& v) { v = 0.0; });
  }

  template <typename OtherTag>
  void check_congruent(const LayerStack<OtherTag>& other,
                       std::string_view where) const {
    if (!congruent(other)) {
      throw Error(str_cat(where, ": parameter shapes do not match"));
    }
  }

  friend bool operator==(const LayerStack&, const LayerStack&) = default;
};

using ModelParams = LayerStack<ParamsTag>;
using Gradient = LayerStack<GradientTag>;

// Dimensions of a model, e.g. {d, 100, 100, 100, 1}.
inline std::vector<std::size_t> layer_dims(const ModelParams& m) {
  std::vector<std::size_t> dims;
  if (m.layers.empty()) return dims;
  dims.push_back(m.layers.front().inputs);
  for (const auto& l : m.layers) dims.push_back(l.outputs);
  return dims;
}

// Checks chaining and a single output unit. A single layer (logistic
// regression) is accepted here; init_model additionally requires a hidden
// layer.
inline void validate_model(const ModelParams& m) {
  if (m.layers.empty()) throw Error("model has no layers");
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const auto& l = m.layers[i];
    if (l.inputs == 0 || l.outputs == 0) {
      throw Error(str_cat("layer ", i, " has zero width"));
    }
    if (l.weights.size() != l.inputs * l.outputs ||
        l.bias.size() != l.outputs) {
      throw Error(str_cat("layer ", i, " storage does not match its shape"));
    }
    if (i > 0 && m.layers[i - 1].outputs != l.inputs) {
      throw Error(str_cat("layer ", i, " input width ", l.inputs,
                          " does not chain with previous output width ",
                          m.layers[i - 1].outputs));
    }
  }
  if (m.layers.back().outputs != 1) {
    throw Error("model output dimension must be 1");
  }
}

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
inline ModelParams init_model(std::span<const std::size_t> dims,
                              std::uint64_t seed) {
  if (dims.size() < 3) {
    throw Error("init_model: need input, at least one hidden layer, output");
  }
  if (dims.back() != 1) throw Error("init_model: output dimension must be 1");
  for (std::size_t d : dims) {
    if (d == 0) throw Error("init_model: zero-width layer");
  }
  Rng rng = make_rng(seed, Stream::kInit);
  ModelParams m;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseLayer layer(dims[i], dims[i + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& w : layer.weights) w = u(rng);
    m.layers.push_back(std::move(layer));
  }
  return m;
}

inline ModelParams init_model(std::initializer_list<std::size_t> dims,
                              std::uint64_t seed) {
  return init_model(std::span<const std::size_t>(dims.begin(), dims.size()),
                    seed);
}

// Logistic function, clamped to the open interval (0, 1): in double precision
// it would otherwise round to exactly 1 for z above about 37.
inline double sigmoid(double z) {
  constexpr double kLo = std::numeric_limits<double>::denorm_min();
  constexpr double kHi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  double p;
  if (z >= 0) {
    p = 1.0 / (1.0 + std::exp(-z));
  } else {
    const double e = std::exp(z);
    p = e / (1.0 + e);
  }
  return std::clamp(p, kLo, kHi);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// Layer inputs recorded during a forward pass: inputs[l] is the input of layer
// l for every row (inputs[0] is the feature matrix itself).
struct ForwardCache {
  std::vector<Matrix> inputs;
  std::vector<double> logits;
  std::vector<double> probs;
};

inline ForwardCache forward_cached(const ModelParams& m, const Matrix& x) {
  validate_model(m);
  if (x.cols() != m.input_dim()) {
    throw Error(str_cat("forward: input has ", x.cols(),
                        " columns, model expects ", m.input_dim()));
  }
  ForwardCache cache;
  cache.inputs.reserve(m.layers.size());
  cache.inputs.push_back(x);
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const auto& layer = m.layers[li];
    const Matrix& in = cache.inputs.back();
    Matrix out(in.rows(), layer.outputs);
    const bool hidden = li + 1 < m.layers.size();
    for (std::size_t r = 0; r < in.rows(); ++r) {
      const auto a = in.row(r);
      auto z = out.row(r);
      for (std::size_t o = 0; o < layer.outputs; ++o) {
        const double* w = layer.weights.data() + o * layer.inputs;
        double acc = layer.bias[o];
        for (std::size_t j = 0; j < layer.inputs; ++j) acc += w[j] * a[j];
        z[o] = hidden ? (acc > 0.0 ? acc : 0.0) : acc;
      }
    }
    if (hidden) {
      cache.inputs.push_back(std::move(out));
    } else {
      cache.logits = std::move(out.data());
    }
  }
  cache.probs.resize(cache.logits.size());
  for (std::size_t r = 0; r < cache.logits.size(); ++r) {
    if (!std::isfinite(cache.logits[r])) {
      throw Error(str_cat("forward: non-finite logit at row ", r));
    }
    cache.probs[r] = sigmoid(cache.logits[r]);
  }
  return cache;
}

inline std::vector<double> forward(const ModelParams& m, const Matrix& x) {
  return forward_cached(m, x).probs;
}

// Adds scale * d(logit_row)/d(theta) into `grad`, backpropagating through the
// rectifier masks recorded in `cache`.
inline void accumulate_row_gradient(const ModelParams& m,
                                    const ForwardCache& cache, std::size_t row,
                                    double scale, Gradient& grad) {
  std::vector<double> delta{scale};
  std::vector<double> prev;
  for (std::size_t li = m.layers.size(); li-- > 0;) {
    const auto& layer = m.layers[li];
    auto& g = grad.layers[li];
    const auto a = cache.inputs[li].row(row);
    for (std::size_t o = 0; o < layer.outputs; ++o) {
      const double d = delta[o];
      g.bias[o] += d;
      if (d == 0.0) continue;
      double* gw = g.weights.data() + o * layer.inputs;
      for (std::size_t j = 0; j < layer.inputs; ++j) gw[j] += d * a[j];
    }
    if (li == 0) break;
    prev.assign(layer.inputs, 0.0);
    for (std::size_t o = 0; o < layer.outputs; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* w = layer.weights.data() + o * layer.inputs;
      for (std::size_t j = 0; j < layer.inputs; ++j) prev[j] += w[j] * d;
    }
    for (std::size_t j = 0; j < layer.inputs; ++j) {
      if (!(a[j] > 0.0)) prev[j] = 0.0;
    }
    delta.swap(prev);
  }
}

// Loss value and its derivative with respect to each row's logit.
struct LossTerms {
  double value = 0.0;
  std::vector<double> dlogits;
};

// Mean binary cross-entropy on logistic outputs.
struct CrossEntropyLoss {
  std::span<const int> labels;

  LossTerms operator()(std::span<const double> logits,
                       std::span<const double> probs) const {
    if (labels.size() != logits.size()) {
      throw Error("cross-entropy: label count does not match batch");
    }
    LossTerms t;
    const double n = static_cast<double>(logits.size());
    t.dlogits.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double y = labels[i];
      t.value += softplus(logits[i]) - y * logits[i];
      t.dlogits[i] = (probs[i] - y) / n;
    }
    t.value /= n;
    return t;
  }
};

template <typename L>
concept BatchLoss = requires(const L& loss, std::span<const double> z,
                             std::span<const double> p) {
  { loss(z, p) } -> std::convertible_to<LossTerms>;
};

struct BackwardResult {
  double loss = 0.0;
  Gradient gradient;
  ForwardCache cache;
  std::vector<double> dlogits;
};

// Gradient of a batch loss with respect to all parameters.
template <BatchLoss Loss>
BackwardResult backward(const ModelParams& m, const Matrix& x, const Loss& loss,
                        std::int64_t batch_id = -1) {
  BackwardResult r;
  r.cache = forward_cached(m, x);
  LossTerms terms = loss(r.cache.logits, r.cache.probs);
  if (!std::isfinite(terms.value)) {
    throw Error(str_cat("backward: non-finite loss on batch ", batch_id));
  }
  r.loss = terms.value;
  r.gradient = Gradient::zeros_like(m);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (terms.dlogits[i] != 0.0) {
      accumulate_row_gradient(m, r.cache, i, terms.dlogits[i], r.gradient);
    }
  }
  if (!r.gradient.all_finite()) {
    throw Error(str_cat("backward: non-finite gradient on batch ", batch_id));
  }
  r.dlogits = std::move(terms.dlogits);
  return r;
}

// theta' = theta - lr * g
inline ModelParams apply_update(const ModelParams& m, const Gradient& g,
                                double lr) {
  m.check_congruent(g, "apply_update");
  ModelParams out = m;
  out.add_scaled(g, -lr);
  return out;
}

inline void apply_update_in_place(ModelParams& m, const Gradient& g,
                                  double lr) {
  m.check_congruent(g, "apply_update");
  m.add_scaled(g, -lr);
}

template <typename Tag>
double l2_norm(const LayerStack<Tag>& s) {
  double sum = 0.0;
  s.for_each([&](double v) { sum += v * v; });
  return std::sqrt(sum);
}

inline double grad_l2_norm(const Gradient& g) { return l2_norm(g); }

}  // namespace fairfed

#endif  // FAIRFED_MLP_MODEL_HPP_
