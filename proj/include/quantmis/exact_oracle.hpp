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

// Exact membership-inference security of deterministic ERM over a finite
// codebook, by enumerating every dataset of size n drawn from a finite
// sample space. MIS_n = 1 - TV(P(theta_hat, z_1), P(theta_hat) x P).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "quantmis/common.hpp"

namespace quantmis {

struct DiscreteTask {
  std::vector<double> sample_probs;             // M atoms
  std::vector<std::vector<double>> loss_table;  // [K][M]
  std::vector<std::string> names;               // optional atom labels

  std::size_t n_atoms() const { return sample_probs.size(); }
  std::size_t n_models() const { return loss_table.size(); }
};

inline void validate(const DiscreteTask& task) {
  require(!task.sample_probs.empty(), ErrorKind::kInvalidArgument,
          "task needs at least one atom");
  require(!task.loss_table.empty(), ErrorKind::kInvalidArgument,
          "task needs at least one model");
  CompensatedSum total;
  for (double p : task.sample_probs) {
    require(p >= 0.0 && std::isfinite(p), ErrorKind::kInvalidArgument,
            "sample probabilities must be finite and non-negative");
    total.add(p);
  }
  require(std::abs(total.value() - 1.0) <= 1e-12, ErrorKind::kInvalidArgument,
          "sample probabilities must sum to 1");
  for (const auto& row : task.loss_table) {
    require(row.size() == task.sample_probs.size(), ErrorKind::kShape,
            "loss table row length differs from atom count");
    for (double v : row) {
      require(std::isfinite(v), ErrorKind::kInvalidArgument,
              "loss table entries must be finite");
    }
  }
}

// argmin_k sum_m counts[m] * loss[k][m], lowest index on ties.
inline std::size_t erm_select(std::span<const int> counts,
                              const std::vector<std::vector<double>>& loss_table) {
  require(!loss_table.empty(), ErrorKind::kInvalidArgument, "empty loss table");
  long total = 0;
  for (int c : counts) {
    require(c >= 0, ErrorKind::kInvalidArgument, "negative count");
    total += c;
  }
  require(total >= 1, ErrorKind::kInvalidArgument, "empty dataset");
  std::size_t best = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < loss_table.size(); ++k) {
    require(loss_table[k].size() == counts.size(), ErrorKind::kShape,
            "loss table row length differs from count vector");
    double s = 0.0;
    for (std::size_t m = 0; m < counts.size(); ++m) {
      if (counts[m] != 0) s += counts[m] * loss_table[k][m];
    }
    if (s < best_loss) {
      best_loss = s;
      best = k;
    }
  }
  return best;
}

// 0.5 * sum |p_i - q_i|
inline double tv_distance(std::span<const double> p, std::span<const double> q) {
  require(p.size() == q.size(), ErrorKind::kInvalidArgument,
          "distributions have different support sizes");
  CompensatedSum acc;
  for (std::size_t i = 0; i < p.size(); ++i) acc.add(std::abs(p[i] - q[i]));
  return 0.5 * acc.value();
}

struct ExactMisResult {
  int n = 0;
  std::vector<double> erm_dist;            // P(theta_hat = k)
  std::vector<std::vector<double>> joint;  // P(theta_hat = k, z_1 = m)
  double mis = 1.0;
  double tv = 0.0;
};

inline constexpr double kEnumerationLimit = 1e7;

inline double dataset_count(std::size_t n_atoms, int n) {
  return std::pow(static_cast<double>(n_atoms), n);
}

inline void check_enumeration(const DiscreteTask& task, int n) {
  validate(task);
  require(n >= 1, ErrorKind::kInvalidArgument, "n must be >= 1");
  require(dataset_count(task.n_atoms(), n) <= kEnumerationLimit,
          ErrorKind::kTooLarge,
          "M^n exceeds the enumeration limit of 1e7 datasets");
}

namespace detail {

// Accumulator grid shared by both enumeration paths.
struct JointAccumulator {
  std::vector<std::vector<CompensatedSum>> cells;
  std::vector<bool> selected;

  JointAccumulator(std::size_t k, std::size_t m)
      : cells(k, std::vector<CompensatedSum>(m)), selected(k, false) {}

  void merge(const JointAccumulator& other) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      for (std::size_t m = 0; m < cells[k].size(); ++m) {
        cells[k][m].add(other.cells[k][m].value());
      }
      selected[k] = selected[k] || other.selected[k];
    }
  }
};

inline ExactMisResult finish(const DiscreteTask& task, int n,
                             const JointAccumulator& acc) {
  const std::size_t K = task.n_models(), M = task.n_atoms();
  ExactMisResult res;
  res.n = n;
  res.joint.assign(K, std::vector<double>(M, 0.0));
  res.erm_dist.assign(K, 0.0);
  std::size_t n_selected = 0;
  for (std::size_t k = 0; k < K; ++k) {
    CompensatedSum row;
    for (std::size_t m = 0; m < M; ++m) {
      res.joint[k][m] = acc.cells[k][m].value();
      row.add(res.joint[k][m]);
    }
    res.erm_dist[k] = row.value();
    n_selected += acc.selected[k];
  }
  if (n_selected <= 1) {
    // A single reachable model is independent of the data.
    res.tv = 0.0;
  } else {
    std::vector<double> joint_flat, product_flat;
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t m = 0; m < M; ++m) {
        joint_flat.push_back(res.joint[k][m]);
        product_flat.push_back(res.erm_dist[k] * task.sample_probs[m]);
      }
    }
    res.tv = std::clamp(tv_distance(joint_flat, product_flat), 0.0, 1.0);
  }
  res.mis = 1.0 - res.tv;
  return res;
}

inline std::uint64_t binomial(int n, int k) {
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / i;
  return r;
}

}  // namespace detail

// Reference path: every ordered sequence (z_1, ..., z_n). Partitioned over
// the leading atom z_1; partitions run on up to `threads` threads.
inline ExactMisResult exact_mis_ordered(const DiscreteTask& task, int n,
                                        int threads = 1) {
  check_enumeration(task, n);
  const std::size_t K = task.n_models(), M = task.n_atoms();
  std::vector<detail::JointAccumulator> parts(M, detail::JointAccumulator(K, M));

  auto run_partition = [&](std::size_t lead) {
    auto& acc = parts[lead];
    std::vector<std::size_t> seq(n, 0);
    seq[0] = lead;
    std::vector<int> counts(M, 0);
    while (true) {
      std::fill(counts.begin(), counts.end(), 0);
      double prob = 1.0;
      for (std::size_t z : seq) {
        ++counts[z];
        prob *= task.sample_probs[z];
      }
      const std::size_t k = erm_select(counts, task.loss_table);
      acc.cells[k][lead].add(prob);
      acc.selected[k] = true;
      // Odometer over positions 1..n-1.
      int pos = n - 1;
      while (pos >= 1 && ++seq[pos] == M) seq[pos--] = 0;
      if (pos < 1) break;
    }
  };

  const std::size_t n_threads =
      std::max<std::size_t>(1, std::min<std::size_t>(threads, M));
  if (n_threads == 1) {
    for (std::size_t lead = 0; lead < M; ++lead) run_partition(lead);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t lead = t; lead < M; lead += n_threads) run_partition(lead);
      });
    }
  }
  detail::JointAccumulator total(K, M);
  for (const auto& p : parts) total.merge(p);
  return detail::finish(task, n, total);
}

// Fast path: multinomial count classes. Given counts c, z_1 = m with
// probability c_m / n by exchangeability.
inline ExactMisResult exact_mis(const DiscreteTask& task, int n) {
  check_enumeration(task, n);
  const std::size_t K = task.n_models(), M = task.n_atoms();
  detail::JointAccumulator acc(K, M);
  std::vector<int> counts(M, 0);

  // Recursive composition of n into M parts; coefficient is the running
  // product of binomials.
  auto recurse = [&](auto&& self, std::size_t m, int remaining, double coef,
                     double prob) -> void {
    if (m + 1 == M) {
      counts[m] = remaining;
      const double w =
          coef * prob * std::pow(task.sample_probs[m], remaining);
      const std::size_t k = erm_select(counts, task.loss_table);
      acc.selected[k] = true;
      for (std::size_t a = 0; a < M; ++a) {
        if (counts[a] > 0) {
          acc.cells[k][a].add(w * counts[a] / static_cast<double>(n));
        }
      }
      return;
    }
    for (int c = 0; c <= remaining; ++c) {
      counts[m] = c;
      const double b = static_cast<double>(detail::binomial(remaining, c));
      self(self, m + 1, remaining - c, coef * b,
           prob * std::pow(task.sample_probs[m], c));
    }
  };
  recurse(recurse, 0, n, 1.0, 1.0);
  return detail::finish(task, n, acc);
}

struct RatePoint {
  int n = 0;
  double mis = 0.0;
  double rate = 0.0;  // -(1/n) log(1 - mis); +inf when mis == 1
};

inline std::vector<RatePoint> rate_curve(const DiscreteTask& task,
                                         std::span<const int> n_values) {
  std::vector<RatePoint> out;
  for (int n : n_values) check_enumeration(task, n);
  for (int n : n_values) {
    const auto res = exact_mis(task, n);
    RatePoint p{n, res.mis, std::numeric_limits<double>::infinity()};
    if (res.mis < 1.0) p.rate = -std::log(1.0 - res.mis) / n;
    out.push_back(p);
  }
  return out;
}

// JSON: {"sample_probs": [...], "loss_table": [[...]], "names": [...]}

inline void to_json(nlohmann::json& j, const DiscreteTask& t) {
  j = nlohmann::json{{"sample_probs", t.sample_probs},
                     {"loss_table", t.loss_table}};
  if (!t.names.empty()) j["names"] = t.names;
}

inline void from_json(const nlohmann::json& j, DiscreteTask& t) {
  j.at("sample_probs").get_to(t.sample_probs);
  j.at("loss_table").get_to(t.loss_table);
  t.names = j.value("names", std::vector<std::string>{});
  validate(t);
}

}  // namespace quantmis
