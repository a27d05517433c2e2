// ekd/nn.hpp

// Copyright 2026  The ekd Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ekd/common.hpp"

namespace ekd {

enum class Activation { kIdentity, kRelu, kTanh };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
  }
  return "identity";
}

inline Activation activation_from_string(const std::string &s) {
  if (s == "identity") return Activation::kIdentity;
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw ParameterError("unknown activation '" + s + "'");
}

struct LayerSpec {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  Activation activation = Activation::kIdentity;
  bool operator==(const LayerSpec &) const = default;
};

struct ContextWindow {
  std::size_t left = 0;
  std::size_t right = 0;
  std::size_t width() const { return left + right + 1; }
  bool operator==(const ContextWindow &) const = default;
};

/// Topology of a layered feedforward frame classifier. The input of the first
/// layer is a spliced window of feature_dim * context.width() values.
struct NetworkSpec {
  std::size_t feature_dim = 0;
  ContextWindow context;
  std::vector<LayerSpec> layers;
  std::size_t num_classes = 0;

  std::size_t input_dim() const { return feature_dim * context.width(); }

  void validate() const {
    require_shape(!layers.empty(), "network has no layers");
    require_shape(num_classes > 0, "network has zero classes");
    require_shape(feature_dim > 0, "network has zero feature_dim");
    require_shape(layers.front().input_dim == input_dim(),
                  "first layer input_dim " + std::to_string(layers.front().input_dim) +
                      " != feature_dim * context width " + std::to_string(input_dim()));
    for (std::size_t i = 0; i < layers.size(); ++i) {
      require_shape(layers[i].input_dim > 0 && layers[i].output_dim > 0,
                    "layer " + std::to_string(i) + " has a zero dimension");
      if (i + 1 < layers.size())
        require_shape(layers[i].output_dim == layers[i + 1].input_dim,
                      "layer " + std::to_string(i) + " output_dim does not match layer " +
                          std::to_string(i + 1) + " input_dim");
    }
    require_shape(layers.back().output_dim == num_classes,
                  "final layer output_dim != num_classes");
  }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto &l : layers) n += l.input_dim * l.output_dim + l.output_dim;
    return n;
  }

  bool operator==(const NetworkSpec &) const = default;
};

/// Builds hidden layers of the given widths with one activation, followed by
/// an identity output layer producing logits.
inline NetworkSpec make_network_spec(std::size_t feature_dim, ContextWindow context,
                                     const std::vector<std::size_t> &hidden,
                                     Activation activation, std::size_t num_classes) {
  NetworkSpec spec;
  spec.feature_dim = feature_dim;
  spec.context = context;
  spec.num_classes = num_classes;
  std::size_t in = spec.input_dim();
  for (auto h : hidden) {
    spec.layers.push_back({in, h, activation});
    in = h;
  }
  spec.layers.push_back({in, num_classes, Activation::kIdentity});
  spec.validate();
  return spec;
}

/// Weights are stored input-major (input_dim x output_dim) so a batch with one
/// frame per row maps to logits as X * W + b.
struct LayerParams {
  Matrix weights;
  RowVector bias;
  bool operator==(const LayerParams &o) const {
    return weights.rows() == o.weights.rows() && weights.cols() == o.weights.cols() &&
           bias.size() == o.bias.size() && weights == o.weights && bias == o.bias;
  }
};

struct ParameterSet {
  std::vector<LayerParams> layers;
  bool operator==(const ParameterSet &) const = default;
};

/// A network topology together with its parameters.
struct Model {
  NetworkSpec spec;
  ParameterSet params;
  bool operator==(const Model &) const = default;
};

struct GradientSet {
  std::vector<LayerParams> layers;
};

struct ForwardCache {
  // activations[0] is the input batch; activations[l + 1] = act(pre_activations[l]).
  std::vector<Matrix> pre_activations;
  std::vector<Matrix> activations;
  Eigen::Index batch_rows() const { return activations.empty() ? 0 : activations.front().rows(); }
};

struct ForwardResult {
  Matrix logits;
  ForwardCache cache;
};

namespace detail {

inline void check_params(const NetworkSpec &spec, const ParameterSet &params) {
  require_shape(params.layers.size() == spec.layers.size(),
                "parameter set has " + std::to_string(params.layers.size()) +
                    " layers, network has " + std::to_string(spec.layers.size()));
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto &p = params.layers[i];
    const auto &s = spec.layers[i];
    require_shape(static_cast<std::size_t>(p.weights.rows()) == s.input_dim &&
                      static_cast<std::size_t>(p.weights.cols()) == s.output_dim &&
                      static_cast<std::size_t>(p.bias.size()) == s.output_dim,
                  "layer " + std::to_string(i) + " parameter shape does not match spec");
  }
}

inline void apply_activation(Activation a, const Matrix &pre, Matrix &out) {
  switch (a) {
    case Activation::kIdentity: out = pre; break;
    case Activation::kRelu: out = pre.cwiseMax(0.0); break;
    case Activation::kTanh: out = pre.array().tanh().matrix(); break;
  }
}

// delta <- delta .* act'(pre), using the cached output where cheaper.
inline void scale_by_derivative(Activation a, const Matrix &pre, const Matrix &out, Matrix &delta) {
  switch (a) {
    case Activation::kIdentity: break;
    case Activation::kRelu:
      delta.array() *= (pre.array() > 0.0).cast<double>();
      break;
    case Activation::kTanh:
      delta.array() *= (1.0 - out.array().square());
      break;
  }
}

}  // namespace detail

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
inline ParameterSet init_params(const NetworkSpec &spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  ParameterSet params;
  for (const auto &l : spec.layers) {
    LayerParams p;
    const double limit = std::sqrt(6.0 / static_cast<double>(l.input_dim + l.output_dim));
    p.weights.resize(static_cast<Eigen::Index>(l.input_dim), static_cast<Eigen::Index>(l.output_dim));
    for (Eigen::Index r = 0; r < p.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < p.weights.cols(); ++c) p.weights(r, c) = rng.uniform(-limit, limit);
    p.bias = RowVector::Zero(static_cast<Eigen::Index>(l.output_dim));
    params.layers.push_back(std::move(p));
  }
  return params;
}

inline ForwardResult forward(const NetworkSpec &spec, const ParameterSet &params, const Matrix &batch) {
  detail::check_params(spec, params);
  require_shape(static_cast<std::size_t>(batch.cols()) == spec.layers.front().input_dim,
                "batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                    std::to_string(spec.layers.front().input_dim));
  for (std::size_t i = 0; i < params.layers.size(); ++i)
    if (!all_finite(params.layers[i].weights) || !all_finite(params.layers[i].bias))
      throw NumericError("non-finite parameter in layer " + std::to_string(i));

  ForwardResult result;
  auto &cache = result.cache;
  cache.activations.reserve(spec.layers.size() + 1);
  cache.pre_activations.reserve(spec.layers.size());
  cache.activations.push_back(batch);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto &p = params.layers[i];
    Matrix pre = cache.activations.back() * p.weights;
    pre.rowwise() += p.bias;
    Matrix out;
    detail::apply_activation(spec.layers[i].activation, pre, out);
    cache.pre_activations.push_back(std::move(pre));
    cache.activations.push_back(std::move(out));
  }
  result.logits = cache.activations.back();
  if (!all_finite(result.logits)) throw NumericError("non-finite logits");
  return result;
}

/// Logits only; skips retaining the cache.
inline Matrix predict_logits(const NetworkSpec &spec, const ParameterSet &params, const Matrix &batch) {
  return forward(spec, params, batch).logits;
}

inline GradientSet backward(const NetworkSpec &spec, const ParameterSet &params,
                            const ForwardCache &cache, const Matrix &dloss_dlogits) {
  detail::check_params(spec, params);
  const std::size_t n_layers = spec.layers.size();
  require_shape(cache.pre_activations.size() == n_layers && cache.activations.size() == n_layers + 1,
                "forward cache does not match network depth");
  require_shape(dloss_dlogits.rows() == cache.batch_rows() &&
                    static_cast<std::size_t>(dloss_dlogits.cols()) == spec.num_classes,
                "upstream gradient shape does not match cached batch");
  for (std::size_t i = 0; i < n_layers; ++i)
    require_shape(cache.pre_activations[i].rows() == cache.batch_rows() &&
                      static_cast<std::size_t>(cache.pre_activations[i].cols()) ==
                          spec.layers[i].output_dim &&
                      static_cast<std::size_t>(cache.activations[i].cols()) == spec.layers[i].input_dim,
                  "stale forward cache at layer " + std::to_string(i));

  GradientSet grads;
  grads.layers.resize(n_layers);
  Matrix delta = dloss_dlogits;
  for (std::size_t li = n_layers; li-- > 0;) {
    detail::scale_by_derivative(spec.layers[li].activation, cache.pre_activations[li],
                                cache.activations[li + 1], delta);
    grads.layers[li].weights.noalias() = cache.activations[li].transpose() * delta;
    grads.layers[li].bias = delta.colwise().sum();
    if (li > 0) {
      Matrix next = delta * params.layers[li].weights.transpose();
      delta = std::move(next);
    }
  }
  return grads;
}

/// Row-wise softmax of logits / temperature, max-subtracted.
inline Matrix softmax(const Matrix &logits, double temperature = 1.0) {
  require_param(temperature > 0.0 && std::isfinite(temperature), "temperature must be positive");
  if (!all_finite(logits)) throw NumericError("softmax of non-finite logits");
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      const double e = std::exp((logits(r, c) - mx) / temperature);
      out(r, c) = e;
      sum += e;
    }
    out.row(r) /= sum;
  }
  return out;
}

inline std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0) {
  Matrix m(1, static_cast<Eigen::Index>(logits.size()));
  std::copy(logits.begin(), logits.end(), m.data());
  Matrix s = softmax(m, temperature);
  return {s.data(), s.data() + s.size()};
}

inline void check_grads(const ParameterSet &params, const GradientSet &grads) {
  require_shape(params.layers.size() == grads.layers.size(), "gradient layer count mismatch");
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto &p = params.layers[i];
    const auto &g = grads.layers[i];
    require_shape(p.weights.rows() == g.weights.rows() && p.weights.cols() == g.weights.cols() &&
                      p.bias.size() == g.bias.size(),
                  "gradient shape mismatch in layer " + std::to_string(i));
  }
}

/// In-place params -= lr * grads.
inline void apply_sgd(ParameterSet &params, const GradientSet &grads, double lr) {
  require_param(lr >= 0.0 && std::isfinite(lr), "learning rate must be finite and non-negative");
  check_grads(params, grads);
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    params.layers[i].weights.noalias() -= lr * grads.layers[i].weights;
    params.layers[i].bias.noalias() -= lr * grads.layers[i].bias;
  }
}

inline ParameterSet sgd_step(ParameterSet params, const GradientSet &grads, double lr) {
  apply_sgd(params, grads, lr);
  return params;
}

/// Geometric interpolation from lr_initial at step 0 to lr_final at total_steps.
inline double lr_at(std::size_t step, std::size_t total_steps, double lr_initial, double lr_final) {
  require_param(lr_final > 0.0, "lr_final must be positive");
  require_param(lr_initial >= lr_final, "lr_final must not exceed lr_initial");
  require_param(step <= total_steps, "step beyond schedule length");
  if (step == 0 || total_steps == 0) return lr_initial;
  if (step == total_steps) return lr_final;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_initial * std::pow(lr_final / lr_initial, frac);
}

inline std::vector<std::size_t> argmax_rows(const Matrix &m) {
  std::vector<std::size_t> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Eigen::Index idx = 0;
    m.row(r).maxCoeff(&idx);
    out[static_cast<std::size_t>(r)] = static_cast<std::size_t>(idx);
  }
  return out;
}

}  // namespace ekd
