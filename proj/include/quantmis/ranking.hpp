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

// Quantizer rankings, rank correlations, resampling stability and the
// performance metrics reported alongside privacy scores.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "quantmis/common.hpp"

namespace quantmis {

// 1-based ranks in ascending order of value; ties share their mean rank.
inline std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  require(xs.size() == ys.size(), ErrorKind::kInvalidArgument,
          "vectors differ in length");
  require(xs.size() >= 2, ErrorKind::kUndefinedCorrelation,
          "correlation needs at least two points");
  const double mx = mean_of(xs), my = mean_of(ys);
  CompensatedSum sxy, sxx, syy;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy.add((xs[i] - mx) * (ys[i] - my));
    sxx.add((xs[i] - mx) * (xs[i] - mx));
    syy.add((ys[i] - my) * (ys[i] - my));
  }
  require(sxx.value() > 0.0 && syy.value() > 0.0,
          ErrorKind::kUndefinedCorrelation, "zero variance");
  return std::clamp(sxy.value() / std::sqrt(sxx.value() * syy.value()), -1.0,
                    1.0);
}

inline double spearman(std::span<const double> xs, std::span<const double> ys) {
  require(xs.size() == ys.size(), ErrorKind::kInvalidArgument,
          "vectors differ in length");
  require(xs.size() >= 2, ErrorKind::kUndefinedCorrelation,
          "correlation needs at least two points");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

enum class MetricKind { kRqn, kMis, kAccuracy, kAuroc, kR2 };

NLOHMANN_JSON_SERIALIZE_ENUM(MetricKind, {
                                             {MetricKind::kRqn, "r_qn"},
                                             {MetricKind::kMis, "mis"},
                                             {MetricKind::kAccuracy, "accuracy"},
                                             {MetricKind::kAuroc, "auroc"},
                                             {MetricKind::kR2, "r2"},
                                         })

struct RunMatrix {
  std::vector<std::string> quantizer_names;
  std::vector<std::vector<double>> values;  // [quantizer][run]
  MetricKind metric_kind = MetricKind::kRqn;

  std::size_t n_runs() const { return values.empty() ? 0 : values.front().size(); }
};

inline void validate(const RunMatrix& m) {
  require(!m.values.empty(), ErrorKind::kInvalidArgument, "empty run matrix");
  require(m.values.size() == m.quantizer_names.size(),
          ErrorKind::kInvalidArgument, "row count differs from name count");
  for (const auto& row : m.values) {
    require(!row.empty(), ErrorKind::kInvalidArgument,
            "every quantizer needs at least one run");
    for (double v : row) {
      require(!std::isnan(v), ErrorKind::kInvalidArgument, "NaN in run matrix");
    }
  }
}

inline std::vector<double> row_means(const RunMatrix& m) {
  std::vector<double> means;
  for (const auto& row : m.values) means.push_back(mean_of(row));
  return means;
}

// Indices sorted by value descending, ties by name.
inline std::vector<std::size_t> order_descending(
    std::span<const double> values, std::span<const std::string> names) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return names[a] < names[b];
  });
  return idx;
}

// Most private (largest mean) first.
inline std::vector<std::string> rank_quantizers(const RunMatrix& m) {
  validate(m);
  const auto means = row_means(m);
  std::vector<std::string> out;
  for (std::size_t i : order_descending(means, m.quantizer_names)) {
    out.push_back(m.quantizer_names[i]);
  }
  return out;
}

struct StabilityReport {
  std::vector<std::string> quantizer_names;
  std::vector<int> subset_sizes;
  int n_resamples = 0;
  // [subset][quantizer][rank - 1] -> count
  std::vector<std::vector<std::vector<int>>> rank_histograms;
  // [subset] -> Spearman of each resample against the full-run means
  std::vector<std::vector<double>> spearman_vs_full;
};

// Draws n_resamples subsets of the runs without replacement per subset size.
inline StabilityReport stability_analysis(const RunMatrix& m,
                                          std::span<const int> subset_sizes,
                                          int n_resamples, std::uint64_t seed) {
  validate(m);
  require(n_resamples >= 1, ErrorKind::kInvalidArgument,
          "n_resamples must be >= 1");
  const std::size_t n_runs = m.n_runs();
  for (const auto& row : m.values) {
    require(row.size() == n_runs, ErrorKind::kInvalidArgument,
            "all quantizers need the same number of runs");
  }
  for (int s : subset_sizes) {
    require(s >= 1 && static_cast<std::size_t>(s) <= n_runs,
            ErrorKind::kInvalidArgument,
            "subset size " + std::to_string(s) + " exceeds available runs");
  }
  const std::size_t Q = m.values.size();
  const auto full_means = row_means(m);
  StabilityReport rep;
  rep.quantizer_names = m.quantizer_names;
  rep.subset_sizes.assign(subset_sizes.begin(), subset_sizes.end());
  rep.n_resamples = n_resamples;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> runs(n_runs);
  for (int s : subset_sizes) {
    std::vector<std::vector<int>> hist(Q, std::vector<int>(Q, 0));
    std::vector<double> rhos;
    for (int r = 0; r < n_resamples; ++r) {
      std::iota(runs.begin(), runs.end(), std::size_t{0});
      for (int i = 0; i < s; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n_runs - 1);
        std::swap(runs[i], runs[pick(rng)]);
      }
      std::vector<double> means(Q);
      for (std::size_t q = 0; q < Q; ++q) {
        CompensatedSum acc;
        for (int i = 0; i < s; ++i) acc.add(m.values[q][runs[i]]);
        means[q] = acc.value() / s;
      }
      const auto order = order_descending(means, m.quantizer_names);
      for (std::size_t pos = 0; pos < Q; ++pos) ++hist[order[pos]][pos];
      if (Q >= 2) {
        try {
          rhos.push_back(spearman(means, full_means));
        } catch (const Error&) {
          // All subset means tied: no correlation defined for this draw.
        }
      }
    }
    rep.rank_histograms.push_back(std::move(hist));
    rep.spearman_vs_full.push_back(std::move(rhos));
  }
  return rep;
}

// Ranking by most frequent rank position: quantizers ordered by their modal
// rank (ties by mean rank, then name).
inline std::vector<std::string> modal_rank_order(const StabilityReport& rep,
                                                 std::size_t subset_index) {
  const auto& hist = rep.rank_histograms.at(subset_index);
  const std::size_t Q = hist.size();
  std::vector<double> modal(Q), mean_rank(Q);
  for (std::size_t q = 0; q < Q; ++q) {
    const auto it = std::max_element(hist[q].begin(), hist[q].end());
    modal[q] = static_cast<double>(it - hist[q].begin());
    double acc = 0.0;
    for (std::size_t r = 0; r < Q; ++r) acc += static_cast<double>(r) * hist[q][r];
    mean_rank[q] = acc / rep.n_resamples;
  }
  std::vector<std::size_t> idx(Q);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (modal[a] != modal[b]) return modal[a] < modal[b];
    if (mean_rank[a] != mean_rank[b]) return mean_rank[a] < mean_rank[b];
    return rep.quantizer_names[a] < rep.quantizer_names[b];
  });
  std::vector<std::string> out;
  for (std::size_t i : idx) out.push_back(rep.quantizer_names[i]);
  return out;
}

inline double relative_performance(double quantized_metric,
                                   double original_metric) {
  require(original_metric != 0.0, ErrorKind::kUndefinedRatio,
          "original metric is zero");
  return quantized_metric / original_metric;
}

// Mann-Whitney estimate of P(score_pos > score_neg), ties counted half.
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), ErrorKind::kInvalidArgument,
          "scores and labels differ in length");
  std::size_t n_pos = 0;
  for (int l : labels) {
    require(l == 0 || l == 1, ErrorKind::kInvalidArgument, "labels must be 0/1");
    n_pos += l;
  }
  const std::size_t n_neg = labels.size() - n_pos;
  require(n_pos > 0 && n_neg > 0, ErrorKind::kInvalidArgument,
          "auroc needs both classes");
  const auto ranks = average_ranks(scores);
  CompensatedSum pos_rank_sum;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (labels[i] == 1) pos_rank_sum.add(ranks[i]);
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum.value() - np * (np + 1.0) / 2.0) / (np * nn);
}

// Coefficient of determination 1 - SS_res / SS_tot.
inline double r2_score(std::span<const double> predictions,
                       std::span<const double> targets) {
  require(predictions.size() == targets.size() && !targets.empty(),
          ErrorKind::kInvalidArgument, "r2 needs equal non-empty vectors");
  const double mu = mean_of(targets);
  CompensatedSum res, tot;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    res.add((targets[i] - predictions[i]) * (targets[i] - predictions[i]));
    tot.add((targets[i] - mu) * (targets[i] - mu));
  }
  require(tot.value() > 0.0, ErrorKind::kUndefinedRatio,
          "targets have zero variance");
  return 1.0 - res.value() / tot.value();
}

inline nlohmann::json stability_to_json(const StabilityReport& rep) {
  nlohmann::json j;
  j["quantizers"] = rep.quantizer_names;
  j["subset_sizes"] = rep.subset_sizes;
  j["n_resamples"] = rep.n_resamples;
  j["rank_histograms"] = rep.rank_histograms;
  j["spearman_vs_full"] = rep.spearman_vs_full;
  return j;
}

}  // namespace quantmis
