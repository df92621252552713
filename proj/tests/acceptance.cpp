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

// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--artifacts DIR] [--parallel N] [--only 1,2,...]
//
// Criteria 6-8 share one desk-scale experiment whose artifacts are kept in
// DIR; rerunning reuses completed runs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "quantmis/runner.hpp"
#include "test_support.hpp"

#ifndef QUANTMIS_ACCEPTANCE_DIR
#define QUANTMIS_ACCEPTANCE_DIR "acceptance_artifacts"
#endif

namespace {

using namespace quantmis;
using V = std::vector<double>;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

V normal_vector(std::mt19937_64& rng, std::size_t n, double sd = 0.3) {
  std::normal_distribution<double> g(0.0, sd);
  V v(n);
  for (double& x : v) x = g(rng);
  return v;
}

V random_simplex(std::mt19937_64& rng, int m) {
  std::exponential_distribution<double> e(1.0);
  V p(m);
  double s = 0;
  for (double& v : p) s += (v = e(rng));
  double t = 0;
  for (int i = 0; i + 1 < m; ++i) t += (p[i] /= s);
  p[m - 1] = 1.0 - t;
  return p;
}

// 1. Quantizer hand examples and level sets.
void quantizer_correctness(Outcome& o) {
  o.check(quantize_uniform_bits(V{0.6, -0.3, 1.0}, 2).values == V{1.0, -0.5, 1.5},
          "2-bit hand example");
  V grid, expect;
  for (int k = 1; k <= 16; ++k) grid.push_back(k / 16.0), expect.push_back((k + 1) / 16.0);
  o.check(quantize_uniform_bits(grid, 5).values == expect, "5-bit grid example");
  std::mt19937_64 rng(101);
  bool scales = true;
  for (int q = 2; q <= 5; ++q) {
    const V v = normal_vector(rng, 64);
    V s;
    for (double x : v) s.push_back(4.0 * x);
    const auto a = quantize_uniform_bits(v, q).values, b = quantize_uniform_bits(s, q).values;
    for (std::size_t i = 0; i < a.size(); ++i) scales &= b[i] == 4.0 * a[i];
  }
  o.check(scales, "power-of-two scaling");
  o.check(quantize_ternary(V{0.1, -0.5, 0.2, 0.9}, 0.5).values == V{0, -1, 0, 1},
          "ternary rank example");
  const V v100 = normal_vector(rng, 100);
  const auto t90 = quantize_ternary(v100, 0.9).values;
  o.check(std::count(t90.begin(), t90.end(), 0.0) == 90, "90 zeros of 100");
  const auto t33 = quantize_ternary(V{0.1, 0.2, 0.3}, 0.33).values;
  o.check(std::count(t33.begin(), t33.end(), 0.0) == 0, "floor rule on length 3");
  o.check(quantize_ternary(v100, 0.0).values == quantize_sign(v100).values,
          "zero sparsity is sign");
  std::uniform_int_distribution<std::size_t> len(1, 300);
  std::size_t checked = 0;
  for (const auto& spec : benchmark_quantizers()) {
    bool ok = true;
    for (int t = 0; t < 1000; ++t) {
      const V v = normal_vector(rng, len(rng));
      ok &= testing::level_set_ok(v, quantize(v, spec).values, spec);
      ++checked;
    }
    o.check(ok, "level sets for " + display_name(spec));
  }
  o.detail << "hand examples exact; " << checked << " level-set vectors";
}

// 2. r-score invariances.
void r_invariances(Outcome& o) {
  const double a = std::sqrt(0.02);
  const auto est = compute_r(std::vector{make_record(1, 1, V{0.5, 0.5}),
                                         make_record(2, 2, V{0.6 - a, 0.6 + a})});
  o.check(std::abs(est.r_qn - 0.125) <= 1e-12, "two-record example");
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> shift(-5.0, 5.0), scale(0.1, 10.0);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto recs = testing::random_records(rng, 2 + t % 25, 5 + t % 40);
    const double r0 = compute_r(recs).r_qn;
    for (const auto& [s, c] : {std::pair{1.0, shift(rng)}, std::pair{scale(rng), 0.0},
                               std::pair{1.0, 3.7}, std::pair{2.0, 0.0}}) {
      const double r = compute_r(testing::transform_losses(recs, s, c)).r_qn;
      worst = std::max(worst, std::abs(r - r0) / r0);
    }
  }
  o.check(worst <= 1e-9, "relative invariance error " + std::to_string(worst));
  o.detail << "two-record r=" << format_double(est.r_qn)
           << "; worst relative deviation " << worst << " over 100 record sets";
}

// 3. Analytic vs central finite-difference gradients.
void gradient_oracle(Outcome& o) {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const auto c = testing::random_net_case(rng, 1 + t % 3);
    const auto kind = c.classification ? TaskKind::kClassification : TaskKind::kRegression;
    Dataset d;
    d.xs = c.xs;
    d.ys = c.ys;
    d.task_kind = kind;
    const auto g = gradient(unflatten(c.flat, c.shape), d, kind);
    const auto fd = testing::finite_difference_gradient(c.flat, c.shape, c.xs, c.ys,
                                                        c.classification);
    worst = std::max(worst, testing::max_relative_error(g, fd));
  }
  o.check(worst < 1e-4, "max relative error");
  o.detail << "max relative error " << worst << " over 50 nets";
}

// 4. Exact-oracle math.
void oracle_math(Outcome& o) {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> msize(2, 10);
  bool sandwich = true;
  for (int t = 0; t < 1000; ++t) {
    const int m = msize(rng);
    const V p = random_simplex(rng, m), q = random_simplex(rng, m);
    const double a = 1.0 - p[0], b = 1.0 - q[0], tv = tv_distance(p, q);
    sandwich &= std::abs(a - b) <= tv + 1e-12 && tv <= (std::abs(a - b) + a + b) / 2 + 1e-12;
  }
  o.check(sandwich, "Lemma sandwich");
  const DiscreteTask flip{{0.5, 0.5}, {{0, 1}, {1, 0}}, {}};
  o.check(exact_mis(flip, 1).mis == 0.5 && exact_mis_ordered(flip, 1).mis == 0.5,
          "antisymmetric n=1");
  double worst = 0.0;
  int tasks = 0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int m : {2, 3, 4, 5, 7, 10}) {
    for (int n = 1; std::pow(m, n) <= 1e5; ++n) {
      for (int k : {2, 3, 5}) {
        DiscreteTask task;
        task.sample_probs = random_simplex(rng, m);
        task.loss_table.assign(k, V(m));
        for (auto& row : task.loss_table)
          for (double& v : row) v = u(rng);
        worst = std::max(worst, std::abs(exact_mis(task, n).mis -
                                         exact_mis_ordered(task, n, 2).mis));
        ++tasks;
      }
    }
  }
  o.check(worst <= 1e-12, "ordered vs multinomial");
  o.detail << "1000 sandwich pairs; flip task MIS "
           << format_double(exact_mis(flip, 1).mis) << "; " << tasks
           << " tasks with M^n <= 1e5, max enumeration gap " << worst;
}

// 5. Exponential decay of 1 - MIS for a task with a unique minimizer.
void theorem_check(Outcome& o) {
  // Expected losses 0.30 / 0.45 / 0.50.
  const DiscreteTask t{{0.5, 0.3, 0.2},
                       {{0.2, 0.5, 0.2}, {0.6, 0.1, 0.6}, {0.5, 0.5, 0.5}},
                       {}};
  const std::vector<int> ns{1, 2, 4, 8, 10};
  const auto curve = rate_curve(t, ns);
  double prev = 2.0;
  bool decreasing = true;
  for (const auto& p : curve) {
    decreasing &= 1.0 - p.mis < prev;
    prev = 1.0 - p.mis;
    o.detail << (p.n == ns.front() ? "" : "; ") << "n=" << p.n
             << " 1-MIS=" << fmt(1.0 - p.mis, 5) << " rate=" << fmt(p.rate, 4);
  }
  o.check(decreasing, "1-MIS not decreasing");
  o.check(curve.back().rate > 0.0 && std::isfinite(curve.back().rate),
          "rate at largest n not positive");
}

ExperimentConfig desk_config(const std::string& dir) {
  ExperimentConfig c;
  c.mixture.dims = {128};
  c.mixture.k_modes = {6};
  c.mixture.sigmas = {1.5};
  c.train.epochs = 3000;
  c.train.learning_rate = 1e-4;
  c.quantizers = benchmark_quantizers();
  c.k_run = 50;
  c.n_train = 128;
  c.val_fraction = 0.5;
  BaselineSettings b;
  b.n_models = 50;
  b.n_per_set = 128;
  c.baseline = b;
  c.report.subset_sizes = {5, 10, 20, 50};
  c.report.n_resamples = 100;
  c.output_dir = dir;
  c.master_seed = 2024;
  return c;
}

struct DeskResults {
  bool ok = false;
  std::string error;
  ExperimentConfig config;
  ConfigSummary summary;
  std::vector<std::map<std::string, std::string>> r_rows;
  double identity_train_accuracy = 0.0;
};

DeskResults run_desk(const std::string& dir, int parallel) {
  DeskResults res;
  res.config = desk_config(dir);
  try {
    Experiment exp(res.config, {parallel, true, false});
    exp.train_probe();
    exp.estimate_r();
    exp.baseline_mis();
    exp.emit_report_files(true);
    const auto m = res.config.grid()[0];
    res.summary = load_summary(dir, res.config, m);
    res.r_rows = read_csv(fs::path(dir) / m.id() / "summary.csv");
    V acc;
    for (const auto& row : read_csv(fs::path(dir) / m.id() / "perf.csv")) {
      if (row.at("quantizer") == "Identity") acc.push_back(std::stod(row.at("train_accuracy")));
    }
    res.identity_train_accuracy = mean_of(acc);
    res.ok = true;
  } catch (const std::exception& e) {
    res.error = e.what();
  }
  return res;
}

// 6. Desk-scale replication.
void desk_replication(Outcome& o, const DeskResults& d) {
  if (!d.ok) {
    o.check(false, "experiment failed: " + d.error);
    return;
  }
  o.check(d.identity_train_accuracy >= 0.97, "unquantized train accuracy");
  const auto order = rank_quantizers(d.summary.r_matrix);
  const auto pos = [&](const std::string& n) {
    return std::find(order.begin(), order.end(), n) - order.begin();
  };
  const long q = static_cast<long>(order.size());
  o.check(pos("5 bits") >= q - 2, "5 bits not among the two least private");
  o.check(pos("1.58b 90%") <= 1, "1.58b 90% not among the two most private");
  const auto& names = d.summary.r_matrix.quantizer_names;
  V mis;
  for (const auto& n : names) mis.push_back(d.summary.mis.at(n));
  double rho = std::nan("");
  try {
    rho = spearman(row_means(d.summary.r_matrix), mis);
  } catch (const Error& e) {
    o.check(false, e.what());
  }
  o.check(rho >= 0.7, "Spearman r vs MIS");
  o.detail << "train acc " << fmt(d.identity_train_accuracy) << "; r ranking [";
  for (std::size_t i = 0; i < order.size(); ++i) o.detail << (i ? " > " : "") << order[i];
  o.detail << "]; MIS [";
  for (std::size_t i = 0; i < names.size(); ++i) {
    o.detail << (i ? ", " : "") << names[i] << "=" << fmt(mis[i], 3);
  }
  o.detail << "]; Spearman(r, MIS) " << fmt(rho) << " over " << d.summary.run_ids.size()
           << " runs";
}

// 7. 20-run rankings against the 50-run ranking.
void stability(Outcome& o, const DeskResults& d) {
  if (!d.ok) {
    o.check(false, "experiment failed: " + d.error);
    return;
  }
  const int runs = static_cast<int>(d.summary.run_ids.size());
  o.check(runs >= 50, "fewer than 50 complete runs");
  const std::vector<int> sizes{20};
  const auto rep = stability_analysis(d.summary.r_matrix, sizes, 100, 707);
  const auto& rhos = rep.spearman_vs_full[0];
  const double mu = rhos.empty() ? 0.0 : mean_of(rhos);
  o.check(rhos.size() == 100, "undefined correlations among the resamples");
  o.check(mu >= 0.9, "mean Spearman");
  o.detail << "mean Spearman " << fmt(mu) << " over " << rhos.size()
           << " resamples of 20 of " << runs << " runs";
}

// 8. The lambda argmax sits among the lowest-loss comparators.
void lambda_dominance(Outcome& o, const DeskResults& d) {
  if (!d.ok) {
    o.check(false, "experiment failed: " + d.error);
    return;
  }
  std::size_t in_decile = 0;
  for (const auto& row : d.r_rows) {
    const int argmax = std::stoi(row.at("argmax_k"));
    const int used = std::stoi(row.at("n_records_used"));
    in_decile += argmax - 1 <= static_cast<int>(std::ceil(0.1 * (used - 1)));
  }
  const double frac = d.r_rows.empty() ? 0.0
                                       : static_cast<double>(in_decile) / d.r_rows.size();
  o.check(frac >= 0.8, "fraction in lowest decile");
  o.detail << in_decile << "/" << d.r_rows.size() << " estimates ("
           << fmt(100 * frac, 1) << "%) have the argmax in the lowest decile";
}

// 9. Baseline sanity on untrained and separable pools.
void baseline_sanity(Outcome& o, int parallel) {
  const auto spec = make_mixture_spec(128, 6, 1.5, 2.0, 909);
  ModelPool pool;
  const ModelArch arch{256, 0, true, Activation::kRelu};
  for (int i = 0; i < 50; ++i) {
    PoolEntry e;
    e.train_seed = pool_train_seed(909, i);
    e.neg_seed = pool_neg_seed(909, i);
    e.train_set = augment_dataset(sample_dataset(spec, 128, e.train_seed));
    e.neg_set = augment_dataset(sample_dataset(spec, 128, e.neg_seed));
    e.model = init_params(arch, pool_init_seed(909, i));
    pool.entries.push_back(std::move(e));
  }
  o.check(count_collisions(pool) == 0, "pool datasets overlap");
  DiscConfig disc;
  disc.seed = 910;
  const double eval_fraction = 0.2;
  const auto untrained = run_baseline(pool, disc, eval_fraction);
  o.check(untrained.estimate.n_eval >= 1000, "untrained eval size");
  o.check(untrained.estimate.mis >= 0.9, "untrained MIS");

  // Same inputs and parameters, loss feature replaced by a perfectly
  // separating one.
  auto examples = build_pairs(pool);
  std::mt19937_64 rng(911);
  std::uniform_real_distribution<double> lo(0.0, 0.4), hi(0.6, 1.0);
  for (auto& e : examples) e.features.back() = e.label == 1 ? lo(rng) : hi(rng);
  const auto [train_ids, eval_ids] =
      split_entries(static_cast<int>(pool.entries.size()), eval_fraction, 912);
  const std::set<int> eval_set(eval_ids.begin(), eval_ids.end());
  std::vector<DiscExample> tr, ev;
  for (auto& e : examples) (eval_set.contains(e.entry) ? ev : tr).push_back(std::move(e));
  const auto g = train_discriminator<float>(tr, disc);
  const auto separable = estimate_mis(g, std::span<const DiscExample>(ev));
  o.check(separable.mis <= 0.1, "separable MIS");
  o.detail << "untrained MIS " << fmt(untrained.estimate.mis) << " (acc "
           << fmt(untrained.estimate.accuracy) << ", n_eval " << untrained.estimate.n_eval
           << "); separable MIS " << fmt(separable.mis) << " (acc "
           << fmt(separable.accuracy) << ", n_eval " << separable.n_eval << ")";
  (void)parallel;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quantmis acceptance suite"};
  std::string artifacts = QUANTMIS_ACCEPTANCE_DIR;
  int parallel = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::vector<int> only;
  app.add_option("--artifacts", artifacts, "Directory for the desk-scale experiment");
  app.add_option("--parallel", parallel, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--only", only, "Criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const auto wanted = [&](int k) {
    return only.empty() || std::find(only.begin(), only.end(), k) != only.end();
  };
  struct Criterion {
    int id;
    const char* title;
    std::function<void(Outcome&)> run;
  };
  std::optional<DeskResults> desk;
  auto with_desk = [&](auto fn) {
    return [&, fn](Outcome& o) {
      if (!desk) desk = run_desk(artifacts, parallel);
      fn(o, *desk);
    };
  };
  const std::vector<Criterion> criteria = {
      {1, "quantizer correctness", quantizer_correctness},
      {2, "r-score invariances", r_invariances},
      {3, "gradient oracle", gradient_oracle},
      {4, "exact-oracle math", oracle_math},
      {5, "exponential MIS decay", theorem_check},
      {6, "desk-scale replication", with_desk(desk_replication)},
      {7, "ranking stability", with_desk(stability)},
      {8, "lambda dominance", with_desk(lambda_dominance)},
      {9, "baseline sanity", [&](Outcome& o) { baseline_sanity(o, parallel); }},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!wanted(c.id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id,
                c.title, o.detail.str().c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
