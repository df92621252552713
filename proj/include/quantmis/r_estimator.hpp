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

// Privacy score r_Q^n from quantized per-sample validation losses recorded
// along a training trajectory.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "quantmis/common.hpp"
#include "quantmis/data_synth.hpp"
#include "quantmis/nn_core.hpp"
#include "quantmis/quantizers.hpp"

namespace quantmis {

struct TrajectoryLossRecord {
  int epoch = 0;
  std::uint64_t quantized_params_hash = 0;
  std::vector<double> per_sample_losses;  // validation order is fixed per run
  double mean_loss = 0.0;

  bool operator==(const TrajectoryLossRecord&) const = default;
};

struct REstimate {
  double r_qn = 0.0;
  double delta2 = 0.0;
  // lambda_values[i] belongs to the record at loss-sorted position i + 2.
  std::vector<double> lambda_values;
  int argmax_k = 0;  // 1-based loss-sorted position, so always >= 2
  int n_records_used = 0;
  std::uint64_t run_seed = 0;
};

inline constexpr double kDefaultEpsilonGap = 1e-12;

inline TrajectoryLossRecord make_record(int epoch, std::uint64_t hash,
                                        std::vector<double> losses) {
  TrajectoryLossRecord rec;
  rec.epoch = epoch;
  rec.quantized_params_hash = hash;
  rec.mean_loss = mean_of(losses);
  rec.per_sample_losses = std::move(losses);
  return rec;
}

// Quantizes the checkpoint and evaluates it on every validation sample.
inline TrajectoryLossRecord record_epoch(const ModelParams& params,
                                         const QuantizerSpec& spec,
                                         const Dataset& val_set, int epoch) {
  require(!val_set.empty(), ErrorKind::kInvalidArgument,
          "empty validation set");
  const auto q = quantize(flatten(params), spec);
  const ModelParams qp = unflatten(q.values, params.shape());
  std::vector<double> losses;
  losses.reserve(val_set.size());
  for (std::size_t i = 0; i < val_set.size(); ++i) {
    losses.push_back(
        per_sample_loss(qp, val_set.xs[i], val_set.ys[i], val_set.task_kind));
  }
  return make_record(epoch, hash_values(q.values), std::move(losses));
}

// Keeps the earliest record of each quantized model.
inline std::vector<TrajectoryLossRecord> dedup_records(
    std::span<const TrajectoryLossRecord> records) {
  std::vector<TrajectoryLossRecord> out;
  std::unordered_set<std::uint64_t> seen;
  for (const auto& rec : records) {
    if (seen.insert(rec.quantized_params_hash).second) out.push_back(rec);
  }
  return out;
}

struct LambdaProfile {
  std::vector<double> sorted_means;   // best record first
  std::vector<double> lambda_values;  // one per comparator
  int argmax_index = 0;               // 1-based loss-sorted position
  double delta2 = 0.0;
};

// Ascending mean loss, ties resolved by epoch.
inline std::vector<const TrajectoryLossRecord*> sort_by_mean_loss(
    std::span<const TrajectoryLossRecord> records) {
  std::vector<const TrajectoryLossRecord*> sorted;
  sorted.reserve(records.size());
  for (const auto& r : records) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) {
    if (a->mean_loss != b->mean_loss) return a->mean_loss < b->mean_loss;
    return a->epoch < b->epoch;
  });
  return sorted;
}

// lambda_k = Var(L_k - L_1) * (delta_2 / delta_k)^2 over loss-sorted records.
// Comparators closer than epsilon_gap to the best record are dropped;
// zero-variance comparators get lambda 0.
inline LambdaProfile lambda_profile(
    std::span<const TrajectoryLossRecord> records,
    double epsilon_gap = kDefaultEpsilonGap) {
  require(epsilon_gap > 0.0, ErrorKind::kInvalidArgument,
          "epsilon_gap must be positive");
  const auto unique = dedup_records(records);
  require(unique.size() >= 2, ErrorKind::kDegenerateTrajectory,
          "need at least two distinct quantized models");
  const std::size_t n_val = unique.front().per_sample_losses.size();
  for (const auto& r : unique) {
    require(r.per_sample_losses.size() == n_val && n_val >= 2,
            ErrorKind::kShape,
            "records must share a validation set of at least two samples");
  }
  const auto sorted = sort_by_mean_loss(unique);
  const TrajectoryLossRecord& best = *sorted.front();

  LambdaProfile profile;
  profile.sorted_means.push_back(best.mean_loss);
  std::vector<double> gaps, variances;
  std::vector<double> diff(n_val);
  for (std::size_t k = 1; k < sorted.size(); ++k) {
    const double gap = sorted[k]->mean_loss - best.mean_loss;
    if (gap < epsilon_gap) continue;
    for (std::size_t i = 0; i < n_val; ++i) {
      diff[i] = sorted[k]->per_sample_losses[i] - best.per_sample_losses[i];
    }
    profile.sorted_means.push_back(sorted[k]->mean_loss);
    gaps.push_back(gap);
    variances.push_back(sample_variance(diff));
  }
  require(!gaps.empty(), ErrorKind::kDegenerateTrajectory,
          "no record has a positive loss gap to the best record");
  profile.delta2 = gaps.front();
  double best_lambda = -1.0;
  for (std::size_t c = 0; c < gaps.size(); ++c) {
    const double ratio = profile.delta2 / gaps[c];
    const double lambda = variances[c] > 0.0 ? variances[c] * ratio * ratio : 0.0;
    profile.lambda_values.push_back(lambda);
    if (lambda > best_lambda) {
      best_lambda = lambda;
      profile.argmax_index = static_cast<int>(c) + 2;
    }
  }
  require(best_lambda > 0.0, ErrorKind::kDegenerateVariance,
          "every comparator has zero loss variability");
  return profile;
}

inline REstimate compute_r(std::span<const TrajectoryLossRecord> records,
                           double epsilon_gap = kDefaultEpsilonGap,
                           std::uint64_t run_seed = 0) {
  const LambdaProfile profile = lambda_profile(records, epsilon_gap);
  REstimate est;
  est.delta2 = profile.delta2;
  est.lambda_values = profile.lambda_values;
  est.argmax_k = profile.argmax_index;
  est.n_records_used = static_cast<int>(profile.sorted_means.size());
  est.run_seed = run_seed;
  const double max_lambda = est.lambda_values[est.argmax_k - 2];
  est.r_qn = est.delta2 * est.delta2 / (2.0 * max_lambda);
  return est;
}

struct RunAggregate {
  double mean = 0.0;
  double std = 0.0;  // sample std; 0 for a single run
  std::size_t count = 0;
};

inline RunAggregate aggregate_runs(std::span<const REstimate> estimates) {
  require(!estimates.empty(), ErrorKind::kInvalidArgument,
          "no estimates to aggregate");
  std::vector<double> values;
  values.reserve(estimates.size());
  for (const auto& e : estimates) values.push_back(e.r_qn);
  return {mean_of(values), std::sqrt(sample_variance(values)), values.size()};
}

// Record files: a header object on the first line, then one record per line.

inline void to_json(nlohmann::json& j, const TrajectoryLossRecord& r) {
  j = nlohmann::json{{"epoch", r.epoch},
                     {"hash", r.quantized_params_hash},
                     {"mean_loss", r.mean_loss},
                     {"losses", r.per_sample_losses}};
}

inline void from_json(const nlohmann::json& j, TrajectoryLossRecord& r) {
  j.at("epoch").get_to(r.epoch);
  j.at("hash").get_to(r.quantized_params_hash);
  j.at("losses").get_to(r.per_sample_losses);
  r.mean_loss = j.contains("mean_loss") ? j["mean_loss"].get<double>()
                                        : mean_of(r.per_sample_losses);
}

inline void to_json(nlohmann::json& j, const REstimate& e) {
  j = nlohmann::json{{"r_qn", e.r_qn},
                     {"delta2", e.delta2},
                     {"lambda_values", e.lambda_values},
                     {"argmax_k", e.argmax_k},
                     {"n_records_used", e.n_records_used},
                     {"run_seed", e.run_seed}};
}

inline void from_json(const nlohmann::json& j, REstimate& e) {
  j.at("r_qn").get_to(e.r_qn);
  j.at("delta2").get_to(e.delta2);
  e.lambda_values = j.value("lambda_values", std::vector<double>{});
  j.at("argmax_k").get_to(e.argmax_k);
  j.at("n_records_used").get_to(e.n_records_used);
  e.run_seed = j.value("run_seed", std::uint64_t{0});
}

struct RecordFile {
  nlohmann::json header;
  std::vector<TrajectoryLossRecord> records;
};

inline void write_record_file(std::ostream& os, const nlohmann::json& header,
                              std::span<const TrajectoryLossRecord> records) {
  os << nlohmann::json{{"header", header}}.dump() << '\n';
  for (const auto& r : records) os << nlohmann::json(r).dump() << '\n';
}

inline RecordFile read_record_file(std::istream& is) {
  RecordFile out;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    if (first && j.contains("header")) {
      out.header = std::move(j["header"]);
    } else {
      out.records.push_back(j.get<TrajectoryLossRecord>());
    }
    first = false;
  }
  return out;
}

inline std::string summary_csv_header() {
  return "run_id,quantizer,r_qn,delta2,argmax_k,n_records_used";
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string summary_csv_row(const std::string& run_id,
                                   const std::string& quantizer,
                                   const REstimate& e) {
  return run_id + "," + quantizer + "," + format_double(e.r_qn) + "," +
         format_double(e.delta2) + "," + std::to_string(e.argmax_k) + "," +
         std::to_string(e.n_records_used);
}

}  // namespace quantmis
