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

// Synthetic labeled Gaussian-mixture benchmark: mixture definition, i.i.d.
// sampling, squared-feature augmentation and shuffled splits.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "quantmis/common.hpp"

namespace quantmis {

enum class TaskKind { kClassification, kRegression };

NLOHMANN_JSON_SERIALIZE_ENUM(TaskKind, {
                                           {TaskKind::kClassification, "classification"},
                                           {TaskKind::kRegression, "regression"},
                                       })

struct MixtureSpec {
  int dim = 0;
  int k_modes = 0;
  double sigma = 1.0;
  double center_scale = 2.0;
  std::vector<std::vector<double>> centers;
  std::vector<int> labels;
  std::uint64_t seed = 0;

  bool operator==(const MixtureSpec&) const = default;
};

struct Dataset {
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  TaskKind task_kind = TaskKind::kClassification;

  std::size_t size() const { return xs.size(); }
  bool empty() const { return xs.empty(); }
  std::size_t dim() const { return xs.empty() ? 0 : xs.front().size(); }

  void push_back(std::vector<double> x, double y) {
    xs.push_back(std::move(x));
    ys.push_back(y);
  }

  bool operator==(const Dataset&) const = default;
};

inline void validate(const MixtureSpec& spec) {
  require(spec.dim >= 1, ErrorKind::kInvalidSpec, "dim must be >= 1");
  require(spec.k_modes >= 2, ErrorKind::kInvalidSpec,
          "k_modes must be >= 2 for a two-label task");
  require(spec.sigma > 0.0, ErrorKind::kInvalidSpec, "sigma must be positive");
  require(spec.centers.size() == static_cast<std::size_t>(spec.k_modes) &&
              spec.labels.size() == spec.centers.size(),
          ErrorKind::kInvalidSpec, "centers/labels must have k_modes entries");
  bool has0 = false, has1 = false;
  for (std::size_t c = 0; c < spec.centers.size(); ++c) {
    require(spec.centers[c].size() == static_cast<std::size_t>(spec.dim),
            ErrorKind::kInvalidSpec, "center length differs from dim");
    require(spec.labels[c] == 0 || spec.labels[c] == 1, ErrorKind::kInvalidSpec,
            "labels must be binary");
    has0 |= spec.labels[c] == 0;
    has1 |= spec.labels[c] == 1;
  }
  require(has0 && has1, ErrorKind::kInvalidSpec, "both labels must occur");
}

inline void validate(const Dataset& data) {
  require(data.xs.size() == data.ys.size(), ErrorKind::kShape,
          "xs and ys differ in length");
  if (data.task_kind == TaskKind::kClassification) {
    for (double y : data.ys) {
      require(y == 0.0 || y == 1.0, ErrorKind::kInvalidArgument,
              "classification targets must be 0 or 1");
    }
  }
}

// Centers are i.i.d. N(0, center_scale^2 I); labels alternate 0,1,0,1,...
inline MixtureSpec make_mixture_spec(int dim, int k_modes, double sigma,
                                     double center_scale, std::uint64_t seed) {
  require(k_modes >= 2, ErrorKind::kInvalidSpec,
          "k_modes must be >= 2 for a two-label task");
  require(dim >= 1, ErrorKind::kInvalidSpec, "dim must be >= 1");
  require(sigma > 0.0 && center_scale > 0.0, ErrorKind::kInvalidSpec,
          "sigma and center_scale must be positive");
  MixtureSpec spec;
  spec.dim = dim;
  spec.k_modes = k_modes;
  spec.sigma = sigma;
  spec.center_scale = center_scale;
  spec.seed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, center_scale);
  spec.centers.assign(k_modes, std::vector<double>(dim));
  for (auto& center : spec.centers) {
    for (double& c : center) c = normal(rng);
  }
  spec.labels.resize(k_modes);
  for (int c = 0; c < k_modes; ++c) spec.labels[c] = c % 2;
  return spec;
}

// Also returns the cluster index of every sample when `clusters` is given.
inline Dataset sample_dataset(const MixtureSpec& spec, std::size_t n,
                              std::uint64_t seed,
                              std::vector<int>* clusters = nullptr) {
  validate(spec);
  Dataset out;
  out.task_kind = TaskKind::kClassification;
  out.xs.reserve(n);
  out.ys.reserve(n);
  if (clusters != nullptr) clusters->clear();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, spec.k_modes - 1);
  std::normal_distribution<double> noise(0.0, spec.sigma);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = pick(rng);
    std::vector<double> x(spec.centers[c]);
    for (double& v : x) v += noise(rng);
    out.push_back(std::move(x), static_cast<double>(spec.labels[c]));
    if (clusters != nullptr) clusters->push_back(c);
  }
  return out;
}

// (x, x*x) concatenation.
inline std::vector<double> augment_features(std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  out.reserve(2 * x.size());
  for (double v : x) out.push_back(v * v);
  return out;
}

inline Dataset augment_dataset(const Dataset& data) {
  Dataset out;
  out.task_kind = data.task_kind;
  out.ys = data.ys;
  out.xs.reserve(data.size());
  for (const auto& x : data.xs) out.xs.push_back(augment_features(x));
  return out;
}

// Number of validation samples taken from n samples at val_fraction.
inline std::size_t validation_count(std::size_t n, double val_fraction) {
  return static_cast<std::size_t>(
      std::floor(val_fraction * static_cast<double>(n) + 1e-9));
}

// Returns (train, validation). The validation part holds
// floor(val_fraction * n) samples.
inline std::pair<Dataset, Dataset> split(const Dataset& data,
                                         double val_fraction,
                                         std::uint64_t seed) {
  require(val_fraction >= 0.0 && val_fraction < 1.0,
          ErrorKind::kInvalidArgument, "val_fraction must lie in [0,1)");
  validate(data);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_val = validation_count(data.size(), val_fraction);
  std::pair<Dataset, Dataset> out;
  out.first.task_kind = out.second.task_kind = data.task_kind;
  for (std::size_t i = 0; i < order.size(); ++i) {
    Dataset& dst = i < n_val ? out.second : out.first;
    dst.push_back(data.xs[order[i]], data.ys[order[i]]);
  }
  return out;
}

// JSON

inline void to_json(nlohmann::json& j, const MixtureSpec& s) {
  j = nlohmann::json{{"dim", s.dim},         {"k_modes", s.k_modes},
                     {"sigma", s.sigma},     {"center_scale", s.center_scale},
                     {"centers", s.centers}, {"labels", s.labels},
                     {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, MixtureSpec& s) {
  j.at("dim").get_to(s.dim);
  j.at("k_modes").get_to(s.k_modes);
  j.at("sigma").get_to(s.sigma);
  s.center_scale = j.value("center_scale", 2.0);
  j.at("centers").get_to(s.centers);
  j.at("labels").get_to(s.labels);
  j.at("seed").get_to(s.seed);
  validate(s);
}

// One {"x":[...],"y":...} object per line.
inline void write_jsonl(std::ostream& os, const Dataset& data) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    os << nlohmann::json{{"x", data.xs[i]}, {"y", data.ys[i]}}.dump() << '\n';
  }
}

inline Dataset read_jsonl(std::istream& is,
                          TaskKind kind = TaskKind::kClassification) {
  Dataset out;
  out.task_kind = kind;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back(j.at("x").get<std::vector<double>>(), j.at("y").get<double>());
  }
  validate(out);
  return out;
}

}  // namespace quantmis
