//
// Copyright 2026 The quantmis Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Small fully-connected models on flat parameter storage: forward pass,
// per-sample losses, full-batch gradients, Adam, and trajectory training.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "quantmis/common.hpp"
#include "quantmis/data_synth.hpp"

namespace quantmis {

enum class Activation { kNone, kRelu };

NLOHMANN_JSON_SERIALIZE_ENUM(Activation, {
                                             {Activation::kNone, "none"},
                                             {Activation::kRelu, "relu"},
                                         })

struct DenseLayer {
  int in = 0;
  int out = 0;
  std::vector<double> weights;  // row-major [out x in]
  std::vector<double> bias;     // empty when the layer has no bias

  bool has_bias() const { return !bias.empty(); }
  bool operator==(const DenseLayer&) const = default;
};

struct LayerShape {
  int in = 0;
  int out = 0;
  bool has_bias = true;
  bool operator==(const LayerShape&) const = default;
};

struct ModelShape {
  std::vector<LayerShape> layers;
  Activation activation = Activation::kRelu;

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) {
      n += static_cast<std::size_t>(l.in) * l.out + (l.has_bias ? l.out : 0);
    }
    return n;
  }
  int input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  bool operator==(const ModelShape&) const = default;
};

struct ModelParams {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::kRelu;  // applied between layers

  int input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  int out_dim() const { return layers.empty() ? 0 : layers.back().out; }

  ModelShape shape() const {
    ModelShape s;
    s.activation = activation;
    for (const auto& l : layers) s.layers.push_back({l.in, l.out, l.has_bias()});
    return s;
  }
  bool operator==(const ModelParams&) const = default;
};

inline void validate(const ModelShape& shape) {
  require(!shape.layers.empty(), ErrorKind::kShape, "model has no layers");
  for (std::size_t k = 0; k < shape.layers.size(); ++k) {
    require(shape.layers[k].in >= 1 && shape.layers[k].out >= 1,
            ErrorKind::kShape, "layer dimensions must be positive");
    if (k > 0) {
      require(shape.layers[k - 1].out == shape.layers[k].in, ErrorKind::kShape,
              "adjacent layer shapes do not compose");
    }
  }
  require(shape.layers.back().out == 1, ErrorKind::kShape,
          "models have a single scalar output");
}

// Layout: for each layer, weights (row-major) then bias.
inline std::vector<double> flatten(const ModelParams& params) {
  std::vector<double> flat;
  flat.reserve(params.shape().param_count());
  for (const auto& l : params.layers) {
    flat.insert(flat.end(), l.weights.begin(), l.weights.end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

inline ModelParams unflatten(std::span<const double> flat,
                             const ModelShape& shape) {
  require(flat.size() == shape.param_count(), ErrorKind::kShape,
          "flat vector length does not match shape");
  ModelParams params;
  params.activation = shape.activation;
  std::size_t pos = 0;
  for (const auto& ls : shape.layers) {
    DenseLayer l;
    l.in = ls.in;
    l.out = ls.out;
    const std::size_t nw = static_cast<std::size_t>(ls.in) * ls.out;
    l.weights.assign(flat.begin() + pos, flat.begin() + pos + nw);
    pos += nw;
    if (ls.has_bias) {
      l.bias.assign(flat.begin() + pos, flat.begin() + pos + ls.out);
      pos += ls.out;
    }
    params.layers.push_back(std::move(l));
  }
  return params;
}

struct ModelArch {
  int input_dim = 0;
  int hidden_units = 0;  // 0: single affine layer
  bool use_bias = true;
  Activation activation = Activation::kRelu;

  ModelShape shape() const {
    ModelShape s;
    s.activation = activation;
    if (hidden_units > 0) {
      s.layers.push_back({input_dim, hidden_units, use_bias});
      s.layers.push_back({hidden_units, 1, use_bias});
    } else {
      s.layers.push_back({input_dim, 1, use_bias});
    }
    return s;
  }
};

// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline ModelParams init_params(const ModelShape& shape, std::uint64_t seed) {
  validate(shape);
  std::mt19937_64 rng(seed);
  std::vector<double> flat;
  flat.reserve(shape.param_count());
  for (const auto& ls : shape.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(ls.in));
    std::uniform_real_distribution<double> u(-bound, bound);
    const std::size_t n =
        static_cast<std::size_t>(ls.in) * ls.out + (ls.has_bias ? ls.out : 0);
    for (std::size_t i = 0; i < n; ++i) flat.push_back(u(rng));
  }
  return unflatten(flat, shape);
}

inline ModelParams init_params(const ModelArch& arch, std::uint64_t seed) {
  return init_params(arch.shape(), seed);
}

namespace detail {

inline void dense_apply(const DenseLayer& l, std::span<const double> in,
                        std::vector<double>& out) {
  out.assign(l.out, 0.0);
  for (int o = 0; o < l.out; ++o) {
    const double* w = l.weights.data() + static_cast<std::size_t>(o) * l.in;
    double acc = l.has_bias() ? l.bias[o] : 0.0;
    for (int i = 0; i < l.in; ++i) acc += w[i] * in[i];
    out[o] = acc;
  }
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

inline constexpr double kProbClamp = 1e-12;

inline double forward(const ModelParams& params, std::span<const double> x) {
  require(!params.layers.empty(), ErrorKind::kShape, "model has no layers");
  require(x.size() == static_cast<std::size_t>(params.input_dim()),
          ErrorKind::kShape,
          "input length " + std::to_string(x.size()) + " != model input " +
              std::to_string(params.input_dim()));
  std::vector<double> a(x.begin(), x.end()), z;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    detail::dense_apply(params.layers[k], a, z);
    if (k + 1 < params.layers.size() &&
        params.activation == Activation::kRelu) {
      for (double& v : z) v = std::max(v, 0.0);
    }
    a.swap(z);
  }
  return a.front();
}

// Binary cross-entropy on sigmoid(logit), probability clamped to
// [1e-12, 1 - 1e-12].
inline double bce_from_logit(double logit, double y) {
  const double p =
      std::clamp(detail::sigmoid(logit), kProbClamp, 1.0 - kProbClamp);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

inline double loss_from_output(double output, double y, TaskKind kind) {
  if (kind == TaskKind::kClassification) {
    require(y == 0.0 || y == 1.0, ErrorKind::kInvalidArgument,
            "classification target must be 0 or 1");
    return bce_from_logit(output, y);
  }
  const double r = output - y;
  return r * r;
}

inline double per_sample_loss(const ModelParams& params,
                              std::span<const double> x, double y,
                              TaskKind kind) {
  return loss_from_output(forward(params, x), y, kind);
}

inline double prediction_accuracy(const ModelParams& params,
                                  const Dataset& data) {
  require(!data.empty(), ErrorKind::kInvalidArgument, "empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double pred = forward(params, data.xs[i]) >= 0.0 ? 1.0 : 0.0;
    correct += pred == data.ys[i];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// Lexicographic order on (x, y); summing in this order makes full-batch
// gradients independent of how the dataset is permuted.
inline std::vector<std::size_t> canonical_order(const Dataset& data) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     if (data.xs[a] != data.xs[b]) return data.xs[a] < data.xs[b];
                     return data.ys[a] < data.ys[b];
                   });
  return order;
}

// Accumulates d loss(x, y) / d params into `grad` (flat layout).
// For classification the derivative w.r.t. the logit is sigmoid(z) - y,
// i.e. the probability clamp is ignored in the backward pass.
inline void accumulate_sample_gradient(const ModelParams& params,
                                       std::span<const double> x, double y,
                                       TaskKind kind, std::span<double> grad) {
  const std::size_t n_layers = params.layers.size();
  std::vector<std::vector<double>> acts(n_layers + 1);
  std::vector<std::vector<double>> pre(n_layers);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t k = 0; k < n_layers; ++k) {
    detail::dense_apply(params.layers[k], acts[k], pre[k]);
    acts[k + 1] = pre[k];
    if (k + 1 < n_layers && params.activation == Activation::kRelu) {
      for (double& v : acts[k + 1]) v = std::max(v, 0.0);
    }
  }
  const double out = acts[n_layers].front();
  std::vector<double> delta(1);
  if (kind == TaskKind::kClassification) {
    delta[0] = detail::sigmoid(out) - y;
  } else {
    delta[0] = 2.0 * (out - y);
  }

  // Offsets of each layer in the flat layout.
  std::vector<std::size_t> offset(n_layers);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < n_layers; ++k) {
    offset[k] = pos;
    const auto& l = params.layers[k];
    pos += static_cast<std::size_t>(l.in) * l.out + l.bias.size();
  }

  for (std::size_t kk = n_layers; kk-- > 0;) {
    const auto& l = params.layers[kk];
    const auto& a = acts[kk];
    double* gw = grad.data() + offset[kk];
    for (int o = 0; o < l.out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      double* row = gw + static_cast<std::size_t>(o) * l.in;
      for (int i = 0; i < l.in; ++i) row[i] += d * a[i];
    }
    if (l.has_bias()) {
      double* gb = gw + static_cast<std::size_t>(l.in) * l.out;
      for (int o = 0; o < l.out; ++o) gb[o] += delta[o];
    }
    if (kk == 0) break;
    std::vector<double> prev(l.in, 0.0);
    for (int o = 0; o < l.out; ++o) {
      const double* w = l.weights.data() + static_cast<std::size_t>(o) * l.in;
      for (int i = 0; i < l.in; ++i) prev[i] += w[i] * delta[o];
    }
    if (params.activation == Activation::kRelu) {
      for (int i = 0; i < l.in; ++i) {
        if (pre[kk - 1][i] <= 0.0) prev[i] = 0.0;
      }
    }
    delta.swap(prev);
  }
}

inline std::vector<double> gradient(const ModelParams& params,
                                    const Dataset& data, TaskKind kind,
                                    std::span<const std::size_t> order) {
  require(!data.empty(), ErrorKind::kInvalidArgument,
          "gradient of an empty dataset");
  std::vector<double> grad(params.shape().param_count(), 0.0);
  for (std::size_t idx : order) {
    accumulate_sample_gradient(params, data.xs[idx], data.ys[idx], kind, grad);
  }
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (double& g : grad) g *= inv_n;
  return grad;
}

// Full-batch mean gradient.
inline std::vector<double> gradient(const ModelParams& params,
                                    const Dataset& data, TaskKind kind) {
  require(!data.empty(), ErrorKind::kInvalidArgument,
          "gradient of an empty dataset");
  const auto order = canonical_order(data);
  return gradient(params, data, kind, order);
}

enum class BatchMode { kFullBatch };

NLOHMANN_JSON_SERIALIZE_ENUM(BatchMode, {{BatchMode::kFullBatch, "full_batch"}})

struct TrainConfig {
  int epochs = 3000;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  TaskKind task_kind = TaskKind::kClassification;
  BatchMode batch_mode = BatchMode::kFullBatch;
  int hidden_units = 0;
  bool use_bias = true;

  ModelArch arch(int input_dim) const {
    return ModelArch{input_dim, hidden_units, use_bias, Activation::kRelu};
  }
};

inline void validate(const TrainConfig& c) {
  require(c.epochs >= 1, ErrorKind::kInvalidArgument, "epochs must be >= 1");
  require(c.learning_rate > 0.0, ErrorKind::kInvalidArgument,
          "learning_rate must be positive");
  require(c.adam_beta1 > 0.0 && c.adam_beta1 < 1.0 && c.adam_beta2 > 0.0 &&
              c.adam_beta2 < 1.0,
          ErrorKind::kInvalidArgument, "Adam betas must lie in (0,1)");
  require(c.adam_eps > 0.0, ErrorKind::kInvalidArgument,
          "adam_eps must be positive");
  require(c.hidden_units >= 0, ErrorKind::kInvalidArgument,
          "hidden_units must be >= 0");
}

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  bool operator==(const AdamState&) const = default;
};

// In-place Adam update with bias correction.
inline void adam_update(std::span<double> params, std::span<const double> grads,
                        AdamState& state, double lr, double beta1, double beta2,
                        double eps) {
  require(params.size() == grads.size(), ErrorKind::kShape,
          "gradient length differs from parameter length");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  require(state.m.size() == params.size(), ErrorKind::kShape,
          "optimizer state length differs from parameter length");
  ++state.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

struct AdamResult {
  std::vector<double> params;
  AdamState state;
};

inline AdamResult adam_step(std::span<const double> params,
                            std::span<const double> grads, AdamState state,
                            const TrainConfig& config) {
  AdamResult out{std::vector<double>(params.begin(), params.end()),
                 std::move(state)};
  adam_update(out.params, grads, out.state, config.learning_rate,
              config.adam_beta1, config.adam_beta2, config.adam_eps);
  return out;
}

struct Trajectory {
  std::vector<ModelParams> checkpoints;  // one per epoch
  ModelParams final_params;
};

using EpochObserver = std::function<void(int epoch, const ModelParams&)>;

inline std::uint64_t init_seed_for(const TrainConfig& config,
                                   std::uint64_t init_seed) {
  return derive_seed(config.seed, init_seed);
}

// Full-batch Adam; calls `observer` after every epoch (epochs are 1-based).
inline ModelParams train_observed(const Dataset& train_set,
                                  const TrainConfig& config,
                                  std::uint64_t init_seed,
                                  const EpochObserver& observer) {
  require(!train_set.empty(), ErrorKind::kInvalidArgument,
          "empty training set");
  validate(config);
  validate(train_set);
  require(train_set.task_kind == config.task_kind, ErrorKind::kInvalidArgument,
          "dataset task kind differs from config");
  const ModelShape shape =
      config.arch(static_cast<int>(train_set.dim())).shape();
  ModelParams params = init_params(shape, init_seed_for(config, init_seed));
  std::vector<double> flat = flatten(params);
  const auto order = canonical_order(train_set);
  AdamState state;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto grad = gradient(params, train_set, config.task_kind, order);
    adam_update(flat, grad, state, config.learning_rate, config.adam_beta1,
                config.adam_beta2, config.adam_eps);
    params = unflatten(flat, shape);
    if (observer) observer(epoch, params);
  }
  return params;
}

inline Trajectory train(const Dataset& train_set, const TrainConfig& config,
                        std::uint64_t init_seed) {
  Trajectory traj;
  traj.checkpoints.reserve(config.epochs > 0 ? config.epochs : 0);
  traj.final_params = train_observed(
      train_set, config, init_seed,
      [&](int, const ModelParams& p) { traj.checkpoints.push_back(p); });
  return traj;
}

// JSON

inline void to_json(nlohmann::json& j, const ModelShape& s) {
  j = nlohmann::json::object();
  j["activation"] = s.activation;
  auto& layers = j["layers"] = nlohmann::json::array();
  for (const auto& l : s.layers) {
    layers.push_back({{"in", l.in}, {"out", l.out}, {"bias", l.has_bias}});
  }
}

inline void from_json(const nlohmann::json& j, ModelShape& s) {
  s.activation = j.value("activation", Activation::kRelu);
  s.layers.clear();
  for (const auto& l : j.at("layers")) {
    s.layers.push_back({l.at("in").get<int>(), l.at("out").get<int>(),
                        l.value("bias", true)});
  }
  validate(s);
}

// Checkpoint document: {"shape": ..., "values": [...]}.
inline nlohmann::json checkpoint_to_json(const ModelParams& p) {
  return {{"shape", p.shape()}, {"values", flatten(p)}};
}

inline ModelParams checkpoint_from_json(const nlohmann::json& j) {
  const auto shape = j.at("shape").get<ModelShape>();
  return unflatten(j.at("values").get<std::vector<double>>(), shape);
}

inline nlohmann::json trajectory_to_json(const Trajectory& t) {
  nlohmann::json j;
  j["shape"] = t.final_params.shape();
  auto& cps = j["checkpoints"] = nlohmann::json::array();
  for (const auto& p : t.checkpoints) cps.push_back(flatten(p));
  j["final"] = flatten(t.final_params);
  return j;
}

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  const auto shape = j.at("shape").get<ModelShape>();
  Trajectory t;
  for (const auto& cp : j.at("checkpoints")) {
    t.checkpoints.push_back(unflatten(cp.get<std::vector<double>>(), shape));
  }
  t.final_params = unflatten(j.at("final").get<std::vector<double>>(), shape);
  return t;
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"learning_rate", c.learning_rate},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"adam_eps", c.adam_eps},
                     {"seed", c.seed},
                     {"task_kind", c.task_kind},
                     {"batch_mode", c.batch_mode},
                     {"hidden_units", c.hidden_units},
                     {"use_bias", c.use_bias}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.adam_beta1 = j.value("adam_beta1", d.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", d.adam_beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  c.seed = j.value("seed", d.seed);
  c.task_kind = j.value("task_kind", d.task_kind);
  c.batch_mode = j.value("batch_mode", d.batch_mode);
  c.hidden_units = j.value("hidden_units", d.hidden_units);
  c.use_bias = j.value("use_bias", d.use_bias);
  validate(c);
}

}  // namespace quantmis
