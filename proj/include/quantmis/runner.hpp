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

// Config-driven experiment orchestration and artifact layout.
//
//   <out>/config.json
//   <out>/<config_id>/mixture.json
//   <out>/<config_id>/runs/run_NNNN/{records_<slug>.jsonl, run.json}
//   <out>/<config_id>/{summary.csv, failures.csv, perf.csv}
//   <out>/<config_id>/baseline/{pool.json, model_NNNN.json, mis_<slug>.json}
//   <out>/<config_id>/mis_summary.csv
//   <out>/oracle/<task>.csv
//   <out>/{rankings.json, stability.csv, stability_spearman.csv,
//          scatter.csv, tradeoff.csv}

#ifndef QUANTMIS_RUNNER_HPP_
#define QUANTMIS_RUNNER_HPP_

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "quantmis/common.hpp"
#include "quantmis/data_synth.hpp"
#include "quantmis/exact_oracle.hpp"
#include "quantmis/mis_baseline.hpp"
#include "quantmis/nn_core.hpp"
#include "quantmis/quantizers.hpp"
#include "quantmis/r_estimator.hpp"
#include "quantmis/ranking.hpp"

namespace quantmis {

namespace fs = std::filesystem;

struct MixtureGrid {
  std::vector<int> dims = {128};
  std::vector<int> k_modes = {6};
  std::vector<double> sigmas = {1.5};
  double center_scale = 2.0;
};

// One point of the mixture grid.
struct MixtureConfig {
  int dim = 0;
  int k_modes = 0;
  double sigma = 0.0;
  double center_scale = 0.0;

  std::string id() const {
    char buf[96];
    std::snprintf(buf, sizeof buf, "d%d_k%d_s%g_c%g", dim, k_modes, sigma,
                  center_scale);
    return buf;
  }
};

struct BaselineSettings {
  int n_models = 0;   // 0: k_run
  int n_per_set = 0;  // 0: n_train
  DiscConfig disc;
  double eval_fraction = 0.2;
};

struct OracleTaskConfig {
  std::string name;
  DiscreteTask task;
  std::vector<int> n_values;
};

struct ReportSettings {
  std::vector<int> subset_sizes = {5, 10, 20};
  int n_resamples = 100;
};

struct ExperimentConfig {
  MixtureGrid mixture;
  TrainConfig train;
  std::vector<QuantizerSpec> quantizers = benchmark_quantizers();
  int k_run = 50;
  int n_train = 128;
  double val_fraction = 0.5;
  bool augment = true;
  std::optional<BaselineSettings> baseline;
  std::vector<OracleTaskConfig> oracle;
  ReportSettings report;
  std::string output_dir = "quantmis_out";
  std::uint64_t master_seed = 0;

  std::vector<MixtureConfig> grid() const {
    std::vector<MixtureConfig> out;
    for (int d : mixture.dims)
      for (int k : mixture.k_modes)
        for (double s : mixture.sigmas)
          out.push_back({d, k, s, mixture.center_scale});
    return out;
  }
};

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline void check_keys(const nlohmann::json& j,
                       std::initializer_list<std::string_view> allowed,
                       std::string_view where) {
  require(j.is_object(), ErrorKind::kConfig,
          std::string(where) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok |= key == a;
    require(ok, ErrorKind::kConfig,
            "unknown key '" + key + "' in " + std::string(where));
  }
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const DiscConfig& c) {
  j = nlohmann::json{{"hidden", c.hidden},
                     {"learning_rate", c.learning_rate},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"validation_fraction", c.validation_fraction},
                     {"eval_every", c.eval_every},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, DiscConfig& c) {
  detail::check_keys(j, {"hidden", "learning_rate", "epochs", "batch_size",
                         "validation_fraction", "eval_every", "seed"},
                     "baseline.disc");
  DiscConfig d;
  c.hidden = j.value("hidden", d.hidden);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.validation_fraction = j.value("validation_fraction", d.validation_fraction);
  c.eval_every = j.value("eval_every", d.eval_every);
  c.seed = j.value("seed", d.seed);
}

inline void to_json(nlohmann::json& j, const MixtureConfig& m) {
  j = nlohmann::json{{"dim", m.dim},
                     {"k_modes", m.k_modes},
                     {"sigma", m.sigma},
                     {"center_scale", m.center_scale}};
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{
      {"mixture",
       {{"dims", c.mixture.dims},
        {"k_modes", c.mixture.k_modes},
        {"sigmas", c.mixture.sigmas},
        {"center_scale", c.mixture.center_scale}}},
      {"train", c.train},
      {"quantizers", c.quantizers},
      {"k_run", c.k_run},
      {"n_train", c.n_train},
      {"val_fraction", c.val_fraction},
      {"augment", c.augment},
      {"report",
       {{"subset_sizes", c.report.subset_sizes},
        {"n_resamples", c.report.n_resamples}}},
      {"output_dir", c.output_dir},
      {"master_seed", c.master_seed}};
  if (c.baseline) {
    j["baseline"] = {{"n_models", c.baseline->n_models},
                     {"n_per_set", c.baseline->n_per_set},
                     {"disc", c.baseline->disc},
                     {"eval_fraction", c.baseline->eval_fraction}};
  }
  if (!c.oracle.empty()) {
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& t : c.oracle) {
      tasks.push_back({{"name", t.name}, {"task", t.task}, {"n_values", t.n_values}});
    }
    j["oracle"] = tasks;
  }
}

inline void validate(const ExperimentConfig& c);

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    detail::check_keys(j, {"mixture", "train", "quantizers", "k_run", "n_train",
                           "val_fraction", "augment", "baseline", "oracle",
                           "report", "output_dir", "master_seed"},
                       "config");
    if (j.contains("mixture")) {
      const auto& m = j.at("mixture");
      detail::check_keys(m, {"dims", "k_modes", "sigmas", "center_scale"},
                         "mixture");
      c.mixture.dims = m.value("dims", c.mixture.dims);
      c.mixture.k_modes = m.value("k_modes", c.mixture.k_modes);
      c.mixture.sigmas = m.value("sigmas", c.mixture.sigmas);
      c.mixture.center_scale = m.value("center_scale", c.mixture.center_scale);
    }
    if (j.contains("train")) {
      detail::check_keys(j.at("train"),
                         {"epochs", "learning_rate", "adam_beta1", "adam_beta2",
                          "adam_eps", "seed", "task_kind", "batch_mode",
                          "hidden_units", "use_bias"},
                         "train");
      c.train = j.at("train").get<TrainConfig>();
    }
    if (j.contains("quantizers")) {
      c.quantizers = j.at("quantizers").get<std::vector<QuantizerSpec>>();
    }
    c.k_run = j.value("k_run", c.k_run);
    c.n_train = j.value("n_train", c.n_train);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.augment = j.value("augment", c.augment);
    if (j.contains("baseline") && !j.at("baseline").is_null()) {
      const auto& b = j.at("baseline");
      detail::check_keys(b, {"n_models", "n_per_set", "disc", "eval_fraction"},
                         "baseline");
      BaselineSettings s;
      s.n_models = b.value("n_models", s.n_models);
      s.n_per_set = b.value("n_per_set", s.n_per_set);
      if (b.contains("disc")) s.disc = b.at("disc").get<DiscConfig>();
      s.eval_fraction = b.value("eval_fraction", s.eval_fraction);
      c.baseline = s;
    }
    if (j.contains("oracle")) {
      for (const auto& t : j.at("oracle")) {
        detail::check_keys(t, {"name", "task", "n_values"}, "oracle task");
        c.oracle.push_back({t.at("name").get<std::string>(),
                            t.at("task").get<DiscreteTask>(),
                            t.at("n_values").get<std::vector<int>>()});
      }
    }
    if (j.contains("report")) {
      const auto& r = j.at("report");
      detail::check_keys(r, {"subset_sizes", "n_resamples"}, "report");
      c.report.subset_sizes = r.value("subset_sizes", c.report.subset_sizes);
      c.report.n_resamples = r.value("n_resamples", c.report.n_resamples);
    }
    c.output_dir = j.value("output_dir", c.output_dir);
    c.master_seed = j.value("master_seed", c.master_seed);
    validate(c);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kConfig) throw;
    throw Error(ErrorKind::kConfig, e.message());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("malformed config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kConfig, "cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig,
                "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

inline void validate(const ExperimentConfig& c) {
  auto check = [](bool ok, const std::string& what) {
    require(ok, ErrorKind::kConfig, what);
  };
  check(c.k_run >= 1, "k_run must be >= 1");
  check(c.n_train >= 2, "n_train must be >= 2");
  check(c.val_fraction > 0.0 && c.val_fraction < 1.0,
        "val_fraction must lie in (0,1)");
  check(!c.quantizers.empty(), "at least one quantizer is required");
  std::set<std::string> names;
  for (const auto& q : c.quantizers) {
    try {
      validate(q);
    } catch (const Error& e) {
      throw Error(ErrorKind::kConfig, e.message());
    }
    check(names.insert(display_name(q)).second,
          "duplicate quantizer " + display_name(q));
  }
  check(!c.mixture.dims.empty() && !c.mixture.k_modes.empty() &&
            !c.mixture.sigmas.empty(),
        "mixture grid must not be empty");
  for (int d : c.mixture.dims) check(d >= 1, "mixture dims must be >= 1");
  for (int k : c.mixture.k_modes) check(k >= 2, "k_modes must be >= 2");
  for (double s : c.mixture.sigmas) check(s > 0.0, "sigmas must be positive");
  check(c.mixture.center_scale > 0.0, "center_scale must be positive");
  check(c.train.task_kind == TaskKind::kClassification,
        "the mixture benchmark is a classification task");
  try {
    validate(c.train);
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfig, e.message());
  }
  if (c.baseline) {
    const auto& b = *c.baseline;
    check(b.n_models == 0 || b.n_models >= 2, "baseline.n_models must be >= 2");
    check(b.n_per_set >= 0, "baseline.n_per_set must be >= 0");
    check(b.eval_fraction > 0.0 && b.eval_fraction < 1.0,
          "baseline.eval_fraction must lie in (0,1)");
    check(c.train.hidden_units == 0,
          "the discriminator baseline supports single-layer models only");
    try {
      validate(b.disc);
    } catch (const Error& e) {
      throw Error(ErrorKind::kConfig, e.message());
    }
  }
  std::set<std::string> tasks;
  for (const auto& t : c.oracle) {
    check(!t.name.empty() && t.name.find('/') == std::string::npos,
          "oracle task names must be non-empty file names");
    check(tasks.insert(t.name).second, "duplicate oracle task " + t.name);
    check(!t.n_values.empty(), "oracle task " + t.name + " needs n_values");
    for (int n : t.n_values) {
      try {
        check_enumeration(t.task, n);
      } catch (const Error& e) {
        throw Error(ErrorKind::kConfig, "oracle task " + t.name + ": " + e.message());
      }
    }
  }
  check(c.report.n_resamples >= 1, "report.n_resamples must be >= 1");
  for (int s : c.report.subset_sizes) check(s >= 1, "subset sizes must be >= 1");
}

// ---------------------------------------------------------------------------
// Seeds

// Everything that determines a run's data and training trajectory.
inline std::uint64_t config_digest(const ExperimentConfig& c,
                                   const MixtureConfig& m) {
  const nlohmann::json j{{"mixture", m},
                         {"train", c.train},
                         {"n_train", c.n_train},
                         {"val_fraction", c.val_fraction},
                         {"augment", c.augment}};
  return hash_text(j.dump());
}

inline std::uint64_t mixture_seed(const ExperimentConfig& c,
                                  const MixtureConfig& m) {
  return derive_seed(c.master_seed, hash_text("mixture:" + m.id()));
}

inline std::uint64_t run_seed(const ExperimentConfig& c, const MixtureConfig& m,
                              int run_index) {
  return derive_seed(c.master_seed, config_digest(c, m),
                     static_cast<std::uint64_t>(run_index));
}

inline std::uint64_t baseline_seed(const ExperimentConfig& c,
                                   const MixtureConfig& m) {
  return derive_seed(c.master_seed, config_digest(c, m), 0xba5e11e5ull);
}

inline MixtureSpec mixture_spec_for(const ExperimentConfig& c,
                                    const MixtureConfig& m) {
  return make_mixture_spec(m.dim, m.k_modes, m.sigma, m.center_scale,
                           mixture_seed(c, m));
}

// Smallest total size whose split leaves exactly n_train training samples.
inline std::size_t total_for_train(std::size_t n_train, double val_fraction) {
  auto n = static_cast<std::size_t>(
      std::floor(static_cast<double>(n_train) / (1.0 - val_fraction)));
  n = std::max(n, n_train);
  while (n - validation_count(n, val_fraction) < n_train) ++n;
  return n;
}

struct RunData {
  Dataset train;
  Dataset val;
};

inline RunData run_data(const ExperimentConfig& c, const MixtureSpec& spec,
                        std::uint64_t seed) {
  const std::size_t n = total_for_train(static_cast<std::size_t>(c.n_train),
                                        c.val_fraction);
  Dataset all = sample_dataset(spec, n, derive_seed(seed, 1));
  if (c.augment) all = augment_dataset(all);
  auto [train, val] = split(all, c.val_fraction, derive_seed(seed, 2));
  return {std::move(train), std::move(val)};
}

// ---------------------------------------------------------------------------
// Files

enum class WriteOutcome { kCreated, kUnchanged, kVersioned };

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(in.good(), ErrorKind::kNotFound, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes atomically. Existing different content is moved to <name>.vN
// first, never replaced in place.
inline WriteOutcome write_artifact(const fs::path& path,
                                   const std::string& content) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  require(!ec, ErrorKind::kIo,
          "cannot create directory " + path.parent_path().string());
  WriteOutcome outcome = WriteOutcome::kCreated;
  if (fs::exists(path)) {
    if (read_text(path) == content) return WriteOutcome::kUnchanged;
    int v = 1;
    fs::path old;
    do {
      old = path;
      old += ".v" + std::to_string(v++);
    } while (fs::exists(old));
    fs::rename(path, old, ec);
    require(!ec, ErrorKind::kIo, "cannot version " + path.string());
    outcome = WriteOutcome::kVersioned;
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorKind::kIo, "cannot write " + tmp.string());
    out << content;
    out.flush();
    require(out.good(), ErrorKind::kIo, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  require(!ec, ErrorKind::kIo, "cannot move " + tmp.string() + " into place");
  return outcome;
}

inline void ensure_writable(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), ErrorKind::kIo,
          "cannot create output directory " + dir.string());
  const fs::path probe = dir / ".quantmis_write_probe";
  {
    std::ofstream out(probe);
    require(out.good(), ErrorKind::kIo,
            "output directory " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Rows of a CSV file keyed by header name.
inline std::vector<std::map<std::string, std::string>> read_csv(
    const fs::path& p) {
  std::istringstream in(read_text(p));
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::kIo,
          "empty CSV " + p.string());
  const auto header = split_csv_line(line);
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    require(cells.size() == header.size(), ErrorKind::kIo,
            "ragged row in " + p.string());
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string run_id(int run_index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "run_%04d", run_index);
  return buf;
}

// Runs fn(0..n-1) on up to `workers` threads; the first exception wins.
inline void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex mu;
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int i = next++; i < n && !failed; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!error) error = std::current_exception();
            failed = true;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Experiment

struct RunOptions {
  int parallel = 1;
  bool resume = false;
  bool quiet = false;
};

class Experiment {
 public:
  Experiment(ExperimentConfig config, RunOptions options)
      : config_(std::move(config)), options_(options), out_(config_.output_dir) {
    validate(config_);
  }

  const ExperimentConfig& config() const { return config_; }
  const fs::path& out_dir() const { return out_; }

  fs::path config_dir(const MixtureConfig& m) const { return out_ / m.id(); }
  fs::path run_dir(const MixtureConfig& m, int run) const {
    return config_dir(m) / "runs" / run_id(run);
  }

  // Creates the output tree and records the resolved configuration.
  void prepare() {
    ensure_writable(out_);
    write_artifact(out_ / "config.json", nlohmann::json(config_).dump(2) + "\n");
    for (const auto& m : config_.grid()) {
      nlohmann::json j{{"id", m.id()},
                       {"mixture", m},
                       {"spec", mixture_spec_for(config_, m)},
                       {"config_digest", config_digest(config_, m)},
                       {"master_seed", config_.master_seed},
                       {"seed_rule",
                        "run_seed = derive_seed(master_seed, config_digest, "
                        "run_index)"}};
      write_artifact(config_dir(m) / "mixture.json", j.dump(2) + "\n");
    }
  }

  void gen_data() {
    prepare();
    for (const auto& m : config_.grid()) {
      const auto spec = mixture_spec_for(config_, m);
      parallel_for(config_.k_run, options_.parallel, [&](int run) {
        const auto data = run_data(config_, spec, run_seed(config_, m, run));
        for (const auto& [name, set] :
             {std::pair{"data_train.jsonl", &data.train},
              std::pair{"data_val.jsonl", &data.val}}) {
          std::ostringstream ss;
          write_jsonl(ss, *set);
          write_artifact(run_dir(m, run) / name, ss.str());
        }
      });
      log(m.id() + ": wrote datasets for " + std::to_string(config_.k_run) +
          " runs");
    }
  }

  // Trains each run once and probes every quantizer at every epoch.
  void train_probe() {
    prepare();
    for (const auto& m : config_.grid()) {
      const auto spec = mixture_spec_for(config_, m);
      std::atomic<int> done{0}, skipped{0};
      parallel_for(config_.k_run, options_.parallel, [&](int run) {
        if (probe_run(m, spec, run)) {
          ++skipped;
        }
        const int d = ++done;
        if (d % 10 == 0 || d == config_.k_run) {
          log(m.id() + ": " + std::to_string(d) + "/" +
              std::to_string(config_.k_run) + " runs");
        }
      });
      if (skipped > 0) {
        log(m.id() + ": skipped " + std::to_string(skipped.load()) +
            " completed runs");
      }
      write_perf(m);
    }
  }

  void estimate_r() {
    for (const auto& m : config_.grid()) {
      std::ostringstream summary, failures;
      summary << summary_csv_header() << "\n";
      failures << "run_id,quantizer,error\n";
      for (int run = 0; run < config_.k_run; ++run) {
        const fs::path dir = run_dir(m, run);
        require(fs::exists(dir / "run.json"), ErrorKind::kNotFound,
                "missing " + (dir / "run.json").string() +
                    "; run train-probe first");
        for (const auto& q : config_.quantizers) {
          std::ifstream in(dir / ("records_" + slug(q) + ".jsonl"));
          require(in.good(), ErrorKind::kNotFound,
                  "missing records for " + display_name(q) + " in " + dir.string());
          const auto file = read_record_file(in);
          try {
            const auto est = compute_r(file.records, 1e-12, run_seed(config_, m, run));
            summary << summary_csv_row(run_id(run), display_name(q), est) << "\n";
          } catch (const Error& e) {
            failures << run_id(run) << "," << display_name(q) << ","
                     << error_kind_name(e.kind()) << "\n";
          }
        }
      }
      write_artifact(config_dir(m) / "summary.csv", summary.str());
      write_artifact(config_dir(m) / "failures.csv", failures.str());
      log(m.id() + ": wrote summary.csv");
    }
  }

  void baseline_mis() {
    if (!config_.baseline) {
      log("no baseline configured; skipping baseline-mis");
      return;
    }
    prepare();
    for (const auto& m : config_.grid()) run_baseline_for(m);
  }

  void oracle() {
    if (config_.oracle.empty()) {
      log("no oracle tasks configured; skipping oracle");
      return;
    }
    ensure_writable(out_);
    for (const auto& t : config_.oracle) {
      std::ostringstream csv;
      csv << "n,mis,rate\n";
      for (const auto& p : rate_curve(t.task, t.n_values)) {
        csv << p.n << "," << format_double(p.mis) << "," << format_double(p.rate)
            << "\n";
      }
      write_artifact(out_ / "oracle" / (t.name + ".csv"), csv.str());
      log("oracle " + t.name + ": wrote rate curve");
    }
  }

  void all() {
    train_probe();
    estimate_r();
    baseline_mis();
    oracle();
    emit_report_files(true);
  }

  // rankings.json and stability tables; the full report adds scatter and
  // trade-off tables.
  void emit_report_files(bool full);

 private:
  void log(const std::string& msg) {
    if (options_.quiet) return;
    std::lock_guard lock(log_mu_);
    std::cerr << "[quantmis] " << msg << std::endl;
  }

  // Returns true when the run was already complete.
  bool probe_run(const MixtureConfig& m, const MixtureSpec& spec, int run) {
    const fs::path dir = run_dir(m, run);
    const std::uint64_t seed = run_seed(config_, m, run);
    const std::uint64_t digest = config_digest(config_, m);
    if (fs::exists(dir / "run.json")) {
      const auto j = nlohmann::json::parse(read_text(dir / "run.json"));
      require(j.at("config_digest").get<std::uint64_t>() == digest &&
                  j.at("run_seed").get<std::uint64_t>() == seed,
              ErrorKind::kConfig,
              dir.string() + " was produced by a different configuration");
      bool complete = true;
      for (const auto& q : config_.quantizers) {
        complete &= fs::exists(dir / ("records_" + slug(q) + ".jsonl"));
      }
      if (complete) return true;
    } else if (fs::exists(dir) && !fs::is_empty(dir) && !options_.resume) {
      bool only_data = true;
      for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        only_data &= name.rfind("data_", 0) == 0;
      }
      require(only_data, ErrorKind::kIo,
              dir.string() + " holds an incomplete run; pass --resume to recompute it");
    }

    const auto data = run_data(config_, spec, seed);
    const std::size_t Q = config_.quantizers.size();
    std::vector<std::vector<TrajectoryLossRecord>> records(Q);
    std::vector<std::unordered_set<std::uint64_t>> seen(Q);
    const ModelParams final_params = train_observed(
        data.train, config_.train, derive_seed(seed, 3),
        [&](int epoch, const ModelParams& p) {
          for (std::size_t q = 0; q < Q; ++q) {
            auto rec = record_epoch(p, config_.quantizers[q], data.val, epoch);
            if (seen[q].insert(rec.quantized_params_hash).second) {
              records[q].push_back(std::move(rec));
            }
          }
        });

    nlohmann::json perf = nlohmann::json::array();
    auto perf_row = [&](const QuantizerSpec& q) {
      const auto qp = quantize(flatten(final_params), q);
      const auto model = unflatten(qp.values, final_params.shape());
      return nlohmann::json{{"quantizer", display_name(q)},
                            {"train_accuracy", prediction_accuracy(model, data.train)},
                            {"val_accuracy", prediction_accuracy(model, data.val)}};
    };
    perf.push_back(perf_row(QuantizerSpec::identity()));
    for (std::size_t q = 0; q < Q; ++q) {
      const auto& spec_q = config_.quantizers[q];
      if (spec_q.kind != QuantizerKind::kIdentity) perf.push_back(perf_row(spec_q));
      const nlohmann::json header{{"run_id", run_id(run)},
                                  {"quantizer", display_name(spec_q)},
                                  {"run_seed", seed},
                                  {"config_digest", digest},
                                  {"epochs", config_.train.epochs},
                                  {"n_val", data.val.size()}};
      std::ostringstream ss;
      write_record_file(ss, header, records[q]);
      write_artifact(dir / ("records_" + slug(spec_q) + ".jsonl"), ss.str());
    }
    nlohmann::json distinct = nlohmann::json::object();
    for (std::size_t q = 0; q < Q; ++q) {
      distinct[display_name(config_.quantizers[q])] = records[q].size();
    }
    const nlohmann::json run_json{{"run_id", run_id(run)},
                                  {"run_seed", seed},
                                  {"config_digest", digest},
                                  {"n_train", data.train.size()},
                                  {"n_val", data.val.size()},
                                  {"distinct_models", distinct},
                                  {"performance", perf}};
    write_artifact(dir / "run.json", run_json.dump(2) + "\n");
    return false;
  }

  void write_perf(const MixtureConfig& m) {
    std::ostringstream csv;
    csv << "run_id,quantizer,train_accuracy,val_accuracy\n";
    for (int run = 0; run < config_.k_run; ++run) {
      const auto j = nlohmann::json::parse(read_text(run_dir(m, run) / "run.json"));
      for (const auto& row : j.at("performance")) {
        csv << run_id(run) << "," << row.at("quantizer").get<std::string>() << ","
            << format_double(row.at("train_accuracy").get<double>()) << ","
            << format_double(row.at("val_accuracy").get<double>()) << "\n";
      }
    }
    write_artifact(config_dir(m) / "perf.csv", csv.str());
  }

  ModelPool trained_pool(const MixtureConfig& m, const MixtureSpec& spec) {
    const auto& b = *config_.baseline;
    const int n_models = b.n_models > 0 ? b.n_models : config_.k_run;
    const int n_per_set = b.n_per_set > 0 ? b.n_per_set : config_.n_train;
    const std::uint64_t seed = baseline_seed(config_, m);
    const fs::path dir = config_dir(m) / "baseline";
    const fs::path manifest_path = dir / "pool.json";
    if (fs::exists(manifest_path)) {
      const auto man = nlohmann::json::parse(read_text(manifest_path));
      if (man.at("n_models").get<int>() == n_models &&
          man.at("n_per_set").get<int>() == n_per_set &&
          man.at("pool_seed").get<std::uint64_t>() == seed) {
        // Datasets are regenerated from their seeds; models are reloaded.
        ModelPool pool = build_pool_datasets(spec, n_models, n_per_set, seed);
        for (int i = 0; i < n_models; ++i) {
          pool.entries[i].model = checkpoint_from_json(nlohmann::json::parse(
              read_text(dir / ("model_" + std::to_string(i) + ".json"))));
        }
        log(m.id() + ": reloaded baseline pool of " + std::to_string(n_models));
        return pool;
      }
    }
    log(m.id() + ": training baseline pool of " + std::to_string(n_models) +
        " models");
    ModelPool pool = build_trained_pool(spec, n_models, n_per_set, config_.train,
                                        seed, config_.augment, options_.parallel);
    nlohmann::json entries = nlohmann::json::array();
    for (int i = 0; i < n_models; ++i) {
      const auto& e = pool.entries[i];
      const std::string model_file = "model_" + std::to_string(i) + ".json";
      write_artifact(dir / model_file, checkpoint_to_json(e.model).dump() + "\n");
      entries.push_back({{"train_seed", e.train_seed},
                         {"neg_seed", e.neg_seed},
                         {"model", model_file}});
    }
    const nlohmann::json man{{"n_models", n_models},
                             {"n_per_set", n_per_set},
                             {"pool_seed", seed},
                             {"train", config_.train},
                             {"augment", config_.augment},
                             {"collisions", count_collisions(pool)},
                             {"entries", entries}};
    write_artifact(manifest_path, man.dump(2) + "\n");
    return pool;
  }

  ModelPool build_pool_datasets(const MixtureSpec& spec, int n_models,
                                int n_per_set, std::uint64_t seed) const {
    ModelPool pool;
    for (int i = 0; i < n_models; ++i) {
      PoolEntry e;
      e.train_seed = pool_train_seed(seed, i);
      e.neg_seed = pool_neg_seed(seed, i);
      e.train_set = sample_dataset(spec, n_per_set, e.train_seed);
      e.neg_set = sample_dataset(spec, n_per_set, e.neg_seed);
      if (config_.augment) {
        e.train_set = augment_dataset(e.train_set);
        e.neg_set = augment_dataset(e.neg_set);
      }
      pool.entries.push_back(std::move(e));
    }
    return pool;
  }

  void run_baseline_for(const MixtureConfig& m) {
    const auto& b = *config_.baseline;
    const fs::path dir = config_dir(m) / "baseline";
    const std::uint64_t seed = baseline_seed(config_, m);
    DiscConfig disc = b.disc;
    disc.seed = derive_seed(seed, b.disc.seed, 7);
    auto result_path = [&](const QuantizerSpec& q) {
      return dir / ("mis_" + slug(q) + ".json");
    };
    bool need_pool = false;
    for (const auto& q : config_.quantizers) need_pool |= !fs::exists(result_path(q));
    std::optional<ModelPool> pool;
    if (need_pool) pool = trained_pool(m, mixture_spec_for(config_, m));
    const int Q = static_cast<int>(config_.quantizers.size());
    parallel_for(Q, options_.parallel, [&](int qi) {
      const auto& q = config_.quantizers[qi];
      if (fs::exists(result_path(q))) return;
      const auto t0 = std::chrono::steady_clock::now();
      const auto res = run_baseline(quantize_pool(*pool, q), disc, b.eval_fraction);
      const double secs = std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - t0).count();
      const nlohmann::json j{{"quantizer", display_name(q)},
                             {"accuracy", res.estimate.accuracy},
                             {"mis", res.estimate.mis},
                             {"n_eval", res.estimate.n_eval},
                             {"seed", disc.seed},
                             {"eval_entries", res.eval_entries},
                             {"best_epoch", res.report.best_epoch},
                             {"best_validation_accuracy",
                              res.report.best_validation_accuracy}};
      write_artifact(result_path(q), j.dump(2) + "\n");
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s: baseline %s accuracy %.4f mis %.4f (%.0fs)",
                    m.id().c_str(), display_name(q).c_str(), res.estimate.accuracy,
                    res.estimate.mis, secs);
      log(buf);
    });
    std::ostringstream csv;
    csv << mis_csv_header() << "\n";
    for (const auto& q : config_.quantizers) {
      const auto j = nlohmann::json::parse(read_text(result_path(q)));
      csv << display_name(q) << "," << format_double(j.at("accuracy").get<double>())
          << "," << format_double(j.at("mis").get<double>()) << ","
          << j.at("n_eval").get<std::size_t>() << ","
          << j.at("seed").get<std::uint64_t>() << "\n";
    }
    write_artifact(config_dir(m) / "mis_summary.csv", csv.str());
  }

  ExperimentConfig config_;
  RunOptions options_;
  fs::path out_;
  std::mutex log_mu_;
};

// ---------------------------------------------------------------------------
// Report

struct ConfigSummary {
  std::string id;
  RunMatrix r_matrix;                         // runs where every quantizer succeeded
  std::vector<std::string> run_ids;
  std::map<std::string, double> mis;          // quantizer -> baseline MIS
  std::map<std::string, double> val_accuracy; // quantizer -> mean over runs
};

inline ConfigSummary load_summary(const fs::path& out, const ExperimentConfig& cfg,
                                  const MixtureConfig& m) {
  ConfigSummary s;
  s.id = m.id();
  const fs::path dir = out / m.id();
  const fs::path summary = dir / "summary.csv";
  require(fs::exists(summary), ErrorKind::kNotFound,
          "missing " + summary.string() + "; run estimate-r first");
  std::vector<std::string> names;
  for (const auto& q : cfg.quantizers) names.push_back(display_name(q));
  std::map<std::string, std::map<std::string, double>> by_run;
  for (const auto& row : read_csv(summary)) {
    by_run[row.at("run_id")][row.at("quantizer")] = std::stod(row.at("r_qn"));
  }
  s.r_matrix.quantizer_names = names;
  s.r_matrix.values.assign(names.size(), {});
  s.r_matrix.metric_kind = MetricKind::kRqn;
  for (const auto& [run, vals] : by_run) {
    bool complete = true;
    for (const auto& n : names) complete &= vals.contains(n);
    if (!complete) continue;
    s.run_ids.push_back(run);
    for (std::size_t q = 0; q < names.size(); ++q) {
      s.r_matrix.values[q].push_back(vals.at(names[q]));
    }
  }
  require(!s.run_ids.empty(), ErrorKind::kNotFound,
          summary.string() + " has no run with every quantizer estimated");
  if (fs::exists(dir / "mis_summary.csv")) {
    for (const auto& row : read_csv(dir / "mis_summary.csv")) {
      s.mis[row.at("quantizer")] = std::stod(row.at("mis"));
    }
  }
  if (fs::exists(dir / "perf.csv")) {
    std::map<std::string, std::vector<double>> acc;
    for (const auto& row : read_csv(dir / "perf.csv")) {
      acc[row.at("quantizer")].push_back(std::stod(row.at("val_accuracy")));
    }
    for (const auto& [q, v] : acc) s.val_accuracy[q] = mean_of(v);
  }
  return s;
}

inline void Experiment::emit_report_files(bool full) {
  const ExperimentConfig& cfg = config_;
  nlohmann::json rankings = nlohmann::json::object();
  std::ostringstream stability, stab_rho, scatter, tradeoff;
  stability << "config,subset_size,quantizer,rank,frequency\n";
  stab_rho << "config,subset_size,spearman_mean,spearman_std,n_resamples\n";
  scatter << "config,quantizer,r_qn_mean,r_qn_std,n_runs,mis\n";
  tradeoff << "config,quantizer,r_qn_mean,val_accuracy,relative_performance\n";
  for (const auto& m : cfg.grid()) {
    const auto s = load_summary(out_, cfg, m);
    const auto& names = s.r_matrix.quantizer_names;
    const auto means = row_means(s.r_matrix);
    nlohmann::json entry;
    entry["n_runs"] = s.run_ids.size();
    entry["r_qn"]["order"] = rank_quantizers(s.r_matrix);
    for (std::size_t q = 0; q < names.size(); ++q) {
      entry["r_qn"]["mean"][names[q]] = means[q];
      entry["r_qn"]["std"][names[q]] = std::sqrt(sample_variance(s.r_matrix.values[q]));
    }
    bool have_mis = s.mis.size() > 0;
    for (const auto& n : names) have_mis &= s.mis.contains(n);
    if (have_mis) {
      RunMatrix mm{names, {}, MetricKind::kMis};
      std::vector<double> mis_vals;
      for (const auto& n : names) {
        mm.values.push_back({s.mis.at(n)});
        mis_vals.push_back(s.mis.at(n));
      }
      entry["mis"]["order"] = rank_quantizers(mm);
      for (const auto& n : names) entry["mis"]["value"][n] = s.mis.at(n);
      try {
        entry["spearman_r_vs_mis"] = spearman(means, mis_vals);
      } catch (const Error&) {
        entry["spearman_r_vs_mis"] = nullptr;
      }
    }

    std::vector<int> sizes;
    for (int k : cfg.report.subset_sizes) {
      if (k <= static_cast<int>(s.run_ids.size())) sizes.push_back(k);
    }
    if (!sizes.empty()) {
      const auto rep = stability_analysis(s.r_matrix, sizes, cfg.report.n_resamples,
                                          derive_seed(cfg.master_seed, hash_text(m.id())));
      nlohmann::json modal = nlohmann::json::object();
      for (std::size_t si = 0; si < sizes.size(); ++si) {
        modal[std::to_string(sizes[si])] = modal_rank_order(rep, si);
        for (std::size_t q = 0; q < names.size(); ++q) {
          for (std::size_t r = 0; r < names.size(); ++r) {
            stability << m.id() << "," << sizes[si] << "," << names[q] << ","
                      << (r + 1) << ","
                      << format_double(static_cast<double>(rep.rank_histograms[si][q][r]) /
                                       rep.n_resamples)
                      << "\n";
          }
        }
        const auto& rhos = rep.spearman_vs_full[si];
        const double mu = rhos.empty() ? std::nan("") : mean_of(rhos);
        const double sd = rhos.size() < 2 ? 0.0 : std::sqrt(sample_variance(rhos));
        stab_rho << m.id() << "," << sizes[si] << "," << format_double(mu) << ","
                 << format_double(sd) << "," << rhos.size() << "\n";
      }
      entry["r_qn"]["modal_rank_order"] = modal;
    }
    rankings[m.id()] = entry;

    const double identity_acc =
        s.val_accuracy.contains("Identity") ? s.val_accuracy.at("Identity") : 0.0;
    for (std::size_t q = 0; q < names.size(); ++q) {
      scatter << m.id() << "," << names[q] << "," << format_double(means[q]) << ","
              << format_double(std::sqrt(sample_variance(s.r_matrix.values[q]))) << ","
              << s.run_ids.size() << ","
              << (s.mis.contains(names[q]) ? format_double(s.mis.at(names[q])) : "")
              << "\n";
      if (s.val_accuracy.contains(names[q]) && identity_acc != 0.0) {
        const double acc = s.val_accuracy.at(names[q]);
        tradeoff << m.id() << "," << names[q] << "," << format_double(means[q]) << ","
                 << format_double(acc) << ","
                 << format_double(relative_performance(acc, identity_acc)) << "\n";
      }
    }
  }
  write_artifact(out_ / "rankings.json", rankings.dump(2) + "\n");
  write_artifact(out_ / "stability.csv", stability.str());
  write_artifact(out_ / "stability_spearman.csv", stab_rho.str());
  if (full) {
    write_artifact(out_ / "scatter.csv", scatter.str());
    write_artifact(out_ / "tradeoff.csv", tradeoff.str());
  }
  log(std::string("wrote ") + (full ? "report" : "rankings") + " to " + out_.string());
}

// Report for an existing artifact directory, using its recorded config.
inline void emit_report(const fs::path& artifact_dir, bool quiet = true) {
  require(fs::is_directory(artifact_dir), ErrorKind::kNotFound,
          "artifact directory " + artifact_dir.string() + " does not exist");
  const fs::path cfg_path = artifact_dir / "config.json";
  require(fs::exists(cfg_path), ErrorKind::kNotFound,
          "missing " + cfg_path.string());
  auto cfg = load_config(cfg_path);
  cfg.output_dir = artifact_dir.string();
  Experiment(cfg, RunOptions{1, false, quiet}).emit_report_files(true);
}

inline void run_experiment(const ExperimentConfig& config, RunOptions options = {}) {
  Experiment(config, options).all();
}

}  // namespace quantmis

#endif  // QUANTMIS_RUNNER_HPP_
