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

// Discriminator baseline for membership-inference security: a feed-forward
// classifier sees (x, flattened model parameters, per-sample loss) and tries
// to tell training members from fresh samples. Its held-out accuracy gives
// the estimate MIS = 2 (1 - max(acc, 1/2)).

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "quantmis/common.hpp"
#include "quantmis/data_synth.hpp"
#include "quantmis/nn_core.hpp"
#include "quantmis/quantizers.hpp"

namespace quantmis {

struct PoolEntry {
  ModelParams model;  // quantized final parameters
  Dataset train_set;
  Dataset neg_set;
  std::uint64_t train_seed = 0;
  std::uint64_t neg_seed = 0;
};

struct ModelPool {
  std::vector<PoolEntry> entries;
  QuantizerSpec quantizer;
};

// Number of exactly repeated inputs across every dataset of the pool.
inline std::size_t count_collisions(const ModelPool& pool) {
  std::unordered_set<std::uint64_t> seen;
  std::size_t collisions = 0;
  for (const auto& e : pool.entries) {
    for (const Dataset* d : {&e.train_set, &e.neg_set}) {
      for (const auto& x : d->xs) collisions += !seen.insert(hash_values(x)).second;
    }
  }
  return collisions;
}

inline std::uint64_t pool_train_seed(std::uint64_t master_seed, int i) {
  return derive_seed(master_seed, 2 * static_cast<std::uint64_t>(i), 11);
}
inline std::uint64_t pool_neg_seed(std::uint64_t master_seed, int i) {
  return derive_seed(master_seed, 2 * static_cast<std::uint64_t>(i) + 1, 11);
}
inline std::uint64_t pool_init_seed(std::uint64_t master_seed, int i) {
  return derive_seed(master_seed, static_cast<std::uint64_t>(i), 13);
}

// Trains n_models single-layer models on independent datasets; each entry also
// gets its own independent negative set of the same size. Models are left
// unquantized (see quantize_pool). Entries train in parallel on `threads`.
inline ModelPool build_trained_pool(const MixtureSpec& spec, int n_models,
                                    int n_per_set, const TrainConfig& config,
                                    std::uint64_t master_seed,
                                    bool augment = true, int threads = 1) {
  require(n_models >= 2, ErrorKind::kInvalidArgument,
          "pool needs at least two models");
  require(n_per_set >= 1, ErrorKind::kInvalidArgument,
          "pool datasets need at least one sample");
  require(config.hidden_units == 0, ErrorKind::kInvalidArgument,
          "the discriminator baseline supports single-layer models only");
  ModelPool pool;
  pool.quantizer = QuantizerSpec::identity();
  pool.entries.resize(static_cast<std::size_t>(n_models));
  auto build = [&](int i) {
    PoolEntry& e = pool.entries[static_cast<std::size_t>(i)];
    e.train_seed = pool_train_seed(master_seed, i);
    e.neg_seed = pool_neg_seed(master_seed, i);
    e.train_set = sample_dataset(spec, n_per_set, e.train_seed);
    e.neg_set = sample_dataset(spec, n_per_set, e.neg_seed);
    if (augment) {
      e.train_set = augment_dataset(e.train_set);
      e.neg_set = augment_dataset(e.neg_set);
    }
    e.model = train_observed(e.train_set, config, pool_init_seed(master_seed, i),
                             nullptr);
  };
  threads = std::clamp(threads, 1, n_models);
  if (threads == 1) {
    for (int i = 0; i < n_models; ++i) build(i);
    return pool;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex mu;
  {
    std::vector<std::jthread> workers;
    for (int w = 0; w < threads; ++w) {
      workers.emplace_back([&] {
        for (int i = next++; i < n_models; i = next++) {
          try {
            build(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
  return pool;
}

inline ModelPool quantize_pool(const ModelPool& trained,
                               const QuantizerSpec& quantizer) {
  ModelPool out = trained;
  out.quantizer = quantizer;
  for (auto& e : out.entries) {
    const auto q = quantize(flatten(e.model), quantizer);
    e.model = unflatten(q.values, e.model.shape());
  }
  return out;
}

inline ModelPool build_pool(const MixtureSpec& spec, int n_models, int n_per_set,
                            const TrainConfig& config,
                            const QuantizerSpec& quantizer,
                            std::uint64_t master_seed, bool augment = true) {
  return quantize_pool(
      build_trained_pool(spec, n_models, n_per_set, config, master_seed, augment),
      quantizer);
}

struct DiscExample {
  std::vector<double> features;  // x, flattened parameters, loss
  int label = 0;                 // 1 member, 0 non-member
  int entry = 0;                 // pool entry the example came from
};

inline std::vector<double> disc_features(const ModelParams& model,
                                         std::span<const double> flat_params,
                                         std::span<const double> x, double y,
                                         TaskKind kind) {
  std::vector<double> f(x.begin(), x.end());
  f.insert(f.end(), flat_params.begin(), flat_params.end());
  f.push_back(per_sample_loss(model, x, y, kind));
  return f;
}

inline std::vector<DiscExample> build_pairs(const ModelPool& pool) {
  std::vector<DiscExample> out;
  for (std::size_t i = 0; i < pool.entries.size(); ++i) {
    const auto& e = pool.entries[i];
    const auto flat = flatten(e.model);
    for (int label : {1, 0}) {
      const Dataset& d = label == 1 ? e.train_set : e.neg_set;
      for (std::size_t s = 0; s < d.size(); ++s) {
        out.push_back({disc_features(e.model, flat, d.xs[s], d.ys[s], d.task_kind),
                       label, static_cast<int>(i)});
      }
    }
  }
  return out;
}

struct DiscConfig {
  std::vector<int> hidden = {256, 256};
  double learning_rate = 1e-3;
  int epochs = 200;
  int batch_size = 256;
  double validation_fraction = 0.2;  // of training entries, model-level
  int eval_every = 10;
  std::uint64_t seed = 0;
};

inline void validate(const DiscConfig& c) {
  require(c.learning_rate > 0.0, ErrorKind::kInvalidArgument,
          "discriminator learning rate must be positive");
  require(c.epochs >= 1 && c.batch_size >= 1 && c.eval_every >= 1,
          ErrorKind::kInvalidArgument,
          "discriminator epochs, batch_size and eval_every must be >= 1");
  require(c.validation_fraction >= 0.0 && c.validation_fraction < 1.0,
          ErrorKind::kInvalidArgument,
          "validation_fraction must lie in [0,1)");
  for (int h : c.hidden) {
    require(h >= 1, ErrorKind::kInvalidArgument, "hidden widths must be >= 1");
  }
}

// ReLU MLP with a sigmoid head over standardized features.
template <typename Scalar = float>
class Discriminator {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  Discriminator() = default;

  Discriminator(int input_dim, const std::vector<int>& hidden,
                std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    int in = input_dim;
    std::vector<int> widths = hidden;
    widths.push_back(1);
    for (int out : widths) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      std::uniform_real_distribution<double> u(-bound, bound);
      Matrix w(in, out);
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = static_cast<Scalar>(u(rng));
      }
      RowVector b(out);
      for (Eigen::Index c = 0; c < b.size(); ++c) b(c) = static_cast<Scalar>(u(rng));
      weights_.push_back(std::move(w));
      biases_.push_back(std::move(b));
      in = out;
    }
    shift_ = RowVector::Zero(input_dim);
    scale_ = RowVector::Ones(input_dim);
  }

  int input_dim() const {
    return weights_.empty() ? 0 : static_cast<int>(weights_.front().rows());
  }
  std::size_t n_layers() const { return weights_.size(); }
  std::vector<Matrix>& weights() { return weights_; }
  std::vector<RowVector>& biases() { return biases_; }
  const std::vector<Matrix>& weights() const { return weights_; }
  const std::vector<RowVector>& biases() const { return biases_; }

  void set_standardization(RowVector shift, RowVector scale) {
    shift_ = std::move(shift);
    scale_ = std::move(scale);
  }

  Matrix standardize(const Matrix& raw) const {
    return (raw.rowwise() - shift_).array().rowwise() / scale_.array();
  }

  // Logits for a batch of already standardized rows.
  Vector logits(const Matrix& x) const {
    Matrix a = x;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      Matrix z = (a * weights_[k]).rowwise() + biases_[k];
      if (k + 1 < weights_.size()) z = z.cwiseMax(Scalar(0));
      a = std::move(z);
    }
    return a.col(0);
  }

  double probability(std::span<const double> features) const {
    Matrix raw(1, static_cast<Eigen::Index>(features.size()));
    for (std::size_t i = 0; i < features.size(); ++i) {
      raw(0, static_cast<Eigen::Index>(i)) = static_cast<Scalar>(features[i]);
    }
    return detail::sigmoid(static_cast<double>(logits(standardize(raw))(0)));
  }

  // Mean BCE over the batch; gradients written to gw/gb (same shapes as
  // the parameters). Returns the loss.
  double loss_and_gradient(const Matrix& x, const Vector& y,
                           std::vector<Matrix>& gw,
                           std::vector<RowVector>& gb) const {
    const std::size_t L = weights_.size();
    std::vector<Matrix> acts(L + 1);
    acts[0] = x;
    for (std::size_t k = 0; k < L; ++k) {
      Matrix z = (acts[k] * weights_[k]).rowwise() + biases_[k];
      if (k + 1 < L) z = z.cwiseMax(Scalar(0));
      acts[k + 1] = std::move(z);
    }
    const Eigen::Index B = x.rows();
    Matrix delta(B, 1);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < B; ++i) {
      const double z = static_cast<double>(acts[L](i, 0));
      const double p = detail::sigmoid(z);
      loss += bce_from_logit(z, static_cast<double>(y(i)));
      delta(i, 0) = static_cast<Scalar>((p - static_cast<double>(y(i))) / B);
    }
    gw.resize(L);
    gb.resize(L);
    for (std::size_t kk = L; kk-- > 0;) {
      gw[kk].noalias() = acts[kk].transpose() * delta;
      gb[kk] = delta.colwise().sum();
      if (kk == 0) break;
      Matrix prev = delta * weights_[kk].transpose();
      prev = (acts[kk].array() > Scalar(0)).select(prev, Scalar(0));
      delta = std::move(prev);
    }
    return loss / static_cast<double>(B);
  }

 private:
  std::vector<Matrix> weights_;  // [in x out]
  std::vector<RowVector> biases_;
  RowVector shift_, scale_;
};

struct MisEstimate {
  double accuracy = 0.5;
  double mis = 1.0;
  std::size_t n_eval = 0;
};

inline double mis_from_accuracy(double accuracy) {
  return 2.0 * (1.0 - std::max(accuracy, 0.5));
}

namespace detail {

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> feature_matrix(
    std::span<const DiscExample* const> examples) {
  const Eigen::Index D = static_cast<Eigen::Index>(examples.front()->features.size());
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> m(
      static_cast<Eigen::Index>(examples.size()), D);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    require(examples[i]->features.size() == static_cast<std::size_t>(D),
            ErrorKind::kShape, "feature length differs across examples");
    for (Eigen::Index d = 0; d < D; ++d) {
      m(static_cast<Eigen::Index>(i), d) = static_cast<Scalar>(examples[i]->features[d]);
    }
  }
  return m;
}

template <typename Scalar>
double batch_accuracy(const Discriminator<Scalar>& g,
                      const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& x,
                      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& y) {
  const auto z = g.logits(x);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const int pred = z(i) >= Scalar(0) ? 1 : 0;  // sigmoid >= 0.5
    correct += pred == static_cast<int>(y(i));
  }
  return static_cast<double>(correct) / static_cast<double>(z.size());
}

}  // namespace detail

struct DiscTrainReport {
  int best_epoch = 0;
  double best_validation_accuracy = 0.0;
  std::vector<int> train_entries;
  std::vector<int> validation_entries;
};

// Minibatch Adam on BCE. A model-level validation slice of the entries
// selects the checkpoint with the best validation accuracy.
template <typename Scalar = float>
Discriminator<Scalar> train_discriminator(std::span<const DiscExample> examples,
                                          const DiscConfig& config,
                                          DiscTrainReport* report = nullptr) {
  using Matrix = typename Discriminator<Scalar>::Matrix;
  using Vector = typename Discriminator<Scalar>::Vector;
  using RowVector = typename Discriminator<Scalar>::RowVector;
  validate(config);
  require(!examples.empty(), ErrorKind::kInvalidArgument,
          "no discriminator examples");
  bool has0 = false, has1 = false;
  std::set<int> entry_set;
  for (const auto& e : examples) {
    has0 |= e.label == 0;
    has1 |= e.label == 1;
    entry_set.insert(e.entry);
  }
  require(has0 && has1, ErrorKind::kInvalidArgument,
          "discriminator examples need both labels");

  std::mt19937_64 rng(config.seed);
  std::vector<int> entries(entry_set.begin(), entry_set.end());
  std::shuffle(entries.begin(), entries.end(), rng);
  std::size_t n_val_entries = static_cast<std::size_t>(
      std::ceil(config.validation_fraction * static_cast<double>(entries.size())));
  if (entries.size() < 2) n_val_entries = 0;
  n_val_entries = std::min(n_val_entries, entries.size() - 1);
  const std::set<int> val_entries(entries.begin(), entries.begin() + n_val_entries);

  std::vector<const DiscExample*> train_ex, val_ex;
  for (const auto& e : examples) {
    (val_entries.contains(e.entry) ? val_ex : train_ex).push_back(&e);
  }
  // A validation slice that lost one label is useless; fold it back.
  auto has_both = [](const std::vector<const DiscExample*>& v) {
    bool a = false, b = false;
    for (auto* e : v) {
      a |= e->label == 0;
      b |= e->label == 1;
    }
    return a && b;
  };
  if (!val_ex.empty() && (!has_both(val_ex) || !has_both(train_ex))) {
    train_ex.insert(train_ex.end(), val_ex.begin(), val_ex.end());
    val_ex.clear();
  }

  Matrix x_train = detail::feature_matrix<Scalar>(train_ex);
  Vector y_train(static_cast<Eigen::Index>(train_ex.size()));
  for (std::size_t i = 0; i < train_ex.size(); ++i) {
    y_train(static_cast<Eigen::Index>(i)) = static_cast<Scalar>(train_ex[i]->label);
  }
  const Eigen::Index D = x_train.cols();
  const Eigen::Index N = x_train.rows();

  // Standardization from the training rows; constant columns keep scale 1.
  RowVector shift = x_train.colwise().mean();
  RowVector scale(D);
  for (Eigen::Index d = 0; d < D; ++d) {
    const double var =
        static_cast<double>((x_train.col(d).array() - shift(d)).square().mean());
    scale(d) = var > 1e-24 ? static_cast<Scalar>(std::sqrt(var)) : Scalar(1);
  }

  Discriminator<Scalar> g(static_cast<int>(D), config.hidden,
                          derive_seed(config.seed, 1));
  g.set_standardization(shift, scale);
  x_train = g.standardize(x_train);

  Matrix x_val;
  Vector y_val;
  if (!val_ex.empty()) {
    x_val = g.standardize(detail::feature_matrix<Scalar>(val_ex));
    y_val.resize(static_cast<Eigen::Index>(val_ex.size()));
    for (std::size_t i = 0; i < val_ex.size(); ++i) {
      y_val(static_cast<Eigen::Index>(i)) = static_cast<Scalar>(val_ex[i]->label);
    }
  }

  // Adam state per tensor.
  const std::size_t L = g.n_layers();
  std::vector<Matrix> mw(L), vw(L), gw;
  std::vector<RowVector> mb(L), vb(L), gb;
  for (std::size_t k = 0; k < L; ++k) {
    mw[k] = Matrix::Zero(g.weights()[k].rows(), g.weights()[k].cols());
    vw[k] = mw[k];
    mb[k] = RowVector::Zero(g.biases()[k].size());
    vb[k] = mb[k];
  }
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::int64_t step = 0;

  Discriminator<Scalar> best = g;
  double best_acc = -1.0;
  int best_epoch = 0;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Matrix xb;
  Vector yb;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < N; start += config.batch_size) {
      const Eigen::Index B = std::min<Eigen::Index>(config.batch_size, N - start);
      xb.resize(B, D);
      yb.resize(B);
      for (Eigen::Index i = 0; i < B; ++i) {
        xb.row(i) = x_train.row(order[start + i]);
        yb(i) = y_train(order[start + i]);
      }
      g.loss_and_gradient(xb, yb, gw, gb);
      ++step;
      const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(beta1, static_cast<double>(step)));
      const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(beta2, static_cast<double>(step)));
      const Scalar lr = static_cast<Scalar>(config.learning_rate);
      const Scalar b1 = static_cast<Scalar>(beta1), b2 = static_cast<Scalar>(beta2);
      const Scalar ep = static_cast<Scalar>(eps);
      for (std::size_t k = 0; k < L; ++k) {
        mw[k] = b1 * mw[k] + (Scalar(1) - b1) * gw[k];
        vw[k] = b2 * vw[k] + (Scalar(1) - b2) * gw[k].cwiseProduct(gw[k]);
        g.weights()[k].array() -=
            lr * (mw[k].array() / c1) / ((vw[k].array() / c2).sqrt() + ep);
        mb[k] = b1 * mb[k] + (Scalar(1) - b1) * gb[k];
        vb[k] = b2 * vb[k] + (Scalar(1) - b2) * gb[k].cwiseProduct(gb[k]);
        g.biases()[k].array() -=
            lr * (mb[k].array() / c1) / ((vb[k].array() / c2).sqrt() + ep);
      }
    }
    if (!val_ex.empty() &&
        (epoch % config.eval_every == 0 || epoch == config.epochs)) {
      const double acc = detail::batch_accuracy(g, x_val, y_val);
      if (acc > best_acc) {
        best_acc = acc;
        best = g;
        best_epoch = epoch;
      }
    }
  }
  if (val_ex.empty()) {
    best = g;
    best_epoch = config.epochs;
  }
  if (report != nullptr) {
    report->best_epoch = best_epoch;
    report->best_validation_accuracy = best_acc;
    report->validation_entries.assign(val_entries.begin(), val_entries.end());
    std::set<int> tr;
    for (auto* e : train_ex) tr.insert(e->entry);
    report->train_entries.assign(tr.begin(), tr.end());
  }
  return best;
}

template <typename Scalar>
MisEstimate estimate_mis(const Discriminator<Scalar>& g,
                         std::span<const DiscExample> eval_examples) {
  require(!eval_examples.empty(), ErrorKind::kInvalidArgument,
          "empty evaluation set");
  std::vector<const DiscExample*> ptrs;
  for (const auto& e : eval_examples) ptrs.push_back(&e);
  const auto x = g.standardize(detail::feature_matrix<Scalar>(ptrs));
  typename Discriminator<Scalar>::Vector y(static_cast<Eigen::Index>(ptrs.size()));
  for (std::size_t i = 0; i < ptrs.size(); ++i) {
    y(static_cast<Eigen::Index>(i)) = static_cast<Scalar>(ptrs[i]->label);
  }
  MisEstimate est;
  est.accuracy = detail::batch_accuracy(g, x, y);
  est.mis = mis_from_accuracy(est.accuracy);
  est.n_eval = ptrs.size();
  return est;
}

// Splits entry indices 0..n-1 into (train, eval) at the model level.
inline std::pair<std::vector<int>, std::vector<int>> split_entries(
    int n_entries, double eval_fraction, std::uint64_t seed) {
  require(n_entries >= 2, ErrorKind::kInvalidArgument,
          "need at least two entries to split");
  require(eval_fraction > 0.0 && eval_fraction < 1.0,
          ErrorKind::kInvalidArgument, "eval_fraction must lie in (0,1)");
  std::vector<int> idx(n_entries);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  int n_eval = static_cast<int>(std::ceil(eval_fraction * n_entries));
  n_eval = std::clamp(n_eval, 1, n_entries - 1);
  std::vector<int> eval(idx.begin(), idx.begin() + n_eval);
  std::vector<int> train(idx.begin() + n_eval, idx.end());
  std::sort(eval.begin(), eval.end());
  std::sort(train.begin(), train.end());
  return {train, eval};
}

struct BaselineResult {
  MisEstimate estimate;
  DiscTrainReport report;
  std::vector<int> eval_entries;
};

// Full protocol on one pool: model-level split, discriminator training on
// the training entries, evaluation on the held-out entries only.
inline BaselineResult run_baseline(const ModelPool& pool, const DiscConfig& config,
                                   double eval_fraction) {
  const auto [train_ids, eval_ids] = split_entries(
      static_cast<int>(pool.entries.size()), eval_fraction,
      derive_seed(config.seed, 2));
  const std::set<int> eval_set(eval_ids.begin(), eval_ids.end());
  std::vector<DiscExample> train_ex, eval_ex;
  for (auto& ex : build_pairs(pool)) {
    (eval_set.contains(ex.entry) ? eval_ex : train_ex).push_back(std::move(ex));
  }
  BaselineResult res;
  const auto g = train_discriminator<float>(train_ex, config, &res.report);
  res.estimate = estimate_mis(g, eval_ex);
  res.eval_entries = eval_ids;
  return res;
}

inline std::string mis_csv_header() { return "quantizer,accuracy,mis,n_eval,seed"; }

}  // namespace quantmis
