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

#include "quantmis/exact_oracle.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "gtest/gtest.h"

namespace quantmis {
namespace {

using V = std::vector<double>;
using Table = std::vector<V>;

DiscreteTask antisymmetric() { return {{0.5, 0.5}, {{0, 1}, {1, 0}}, {}}; }

V random_simplex(std::mt19937_64& rng, int m) {
  std::exponential_distribution<double> e(1.0);
  V p(m);
  double s = 0;
  for (double& v : p) s += (v = e(rng));
  for (double& v : p) v /= s;
  // Renormalize so the sum is within a few ulps of 1.
  double t = 0;
  for (int i = 0; i + 1 < m; ++i) t += p[i];
  p[m - 1] = 1.0 - t;
  return p;
}

DiscreteTask random_task(std::mt19937_64& rng, int k, int m) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DiscreteTask t;
  t.sample_probs = random_simplex(rng, m);
  t.loss_table.assign(k, V(m));
  for (auto& row : t.loss_table)
    for (double& v : row) v = u(rng);
  return t;
}

// Dyadic-valued random task: every sum of up to 16 entries is exact, so
// shifted and scaled tables produce the same argmin bit for bit.
DiscreteTask dyadic_task(std::mt19937_64& rng, int k, int m) {
  std::uniform_int_distribution<int> u(0, 15);
  auto t = random_task(rng, k, m);
  for (auto& row : t.loss_table)
    for (double& v : row) v = u(rng) / 16.0;
  return t;
}

// Independent reference: odometer over all ordered datasets, per-dataset
// empirical-loss argmin, joint accumulated directly.
struct NaiveResult {
  V erm;
  Table joint;
  double tv;
};

NaiveResult naive_exact(const DiscreteTask& t, int n) {
  const int K = static_cast<int>(t.loss_table.size());
  const int M = static_cast<int>(t.sample_probs.size());
  NaiveResult r{V(K, 0.0), Table(K, V(M, 0.0)), 0.0};
  std::vector<int> seq(n, 0);
  while (true) {
    double prob = 1.0;
    for (int z : seq) prob *= t.sample_probs[z];
    int best = 0;
    double best_loss = 0;
    for (int k = 0; k < K; ++k) {
      double l = 0;
      for (int z : seq) l += t.loss_table[k][z];
      if (k == 0 || l < best_loss) best = k, best_loss = l;
    }
    r.erm[best] += prob;
    r.joint[best][seq[0]] += prob;
    int pos = 0;
    while (pos < n && ++seq[pos] == M) seq[pos++] = 0;
    if (pos == n) break;
  }
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < M; ++m)
      r.tv += 0.5 * std::abs(r.joint[k][m] - r.erm[k] * t.sample_probs[m]);
  return r;
}

TEST(ErmSelectTest, Examples) {
  const Table dominated{{0.1, 0.2, 0.3}, {0.5, 0.6, 0.7}};
  const std::vector<std::vector<int>> counts{{1, 0, 0}, {0, 2, 1}, {3, 3, 3}};
  for (const auto& c : counts) EXPECT_EQ(erm_select(c, dominated), 0u);
  const Table tie{{1, 0}, {0, 1}};
  EXPECT_EQ(erm_select(std::vector{1, 1}, tie), 0u);
  EXPECT_EQ(erm_select(std::vector{2, 1}, tie), 1u);
  EXPECT_THROW(erm_select(std::vector{0, 0}, tie), Error);
}

TEST(ErmSelectTest, MatchesNaiveOnAllPairs) {
  std::mt19937_64 rng(1);
  const auto t = random_task(rng, 3, 3);
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      std::vector<int> c(3, 0);
      ++c[a];
      ++c[b];
      std::size_t best = 0;
      double bl = 1e300;
      for (std::size_t k = 0; k < 3; ++k) {
        const double l = t.loss_table[k][a] + t.loss_table[k][b];
        if (l < bl) bl = l, best = k;
      }
      EXPECT_EQ(erm_select(c, t.loss_table), best);
    }
  }
}

TEST(TvDistanceTest, Examples) {
  EXPECT_EQ(tv_distance(V{0.3, 0.7}, V{0.3, 0.7}), 0.0);
  EXPECT_EQ(tv_distance(V{1, 0}, V{0, 1}), 1.0);
  EXPECT_THROW(tv_distance(V{1, 0}, V{1}), Error);
}

TEST(TvDistanceTest, LemmaSandwich) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> msize(2, 8);
  for (int t = 0; t < 1000; ++t) {
    const int m = msize(rng);
    const V p = random_simplex(rng, m), q = random_simplex(rng, m);
    const double a = 1.0 - p[0], b = 1.0 - q[0];
    const double tv = tv_distance(p, q);
    EXPECT_LE(std::abs(a - b), tv + 1e-12);
    EXPECT_LE(tv, (std::abs(a - b) + a + b) / 2.0 + 1e-12);
  }
}

TEST(TvDistanceTest, MetricProperties) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 500; ++t) {
    const V p = random_simplex(rng, 5), q = random_simplex(rng, 5),
            r = random_simplex(rng, 5);
    EXPECT_EQ(tv_distance(p, q), tv_distance(q, p));
    EXPECT_NEAR(tv_distance(p, p), 0.0, 1e-12);
    EXPECT_LE(tv_distance(p, r), tv_distance(p, q) + tv_distance(q, r) + 1e-12);
    EXPECT_GE(tv_distance(p, q), 0.0);
    EXPECT_LE(tv_distance(p, q), 1.0);
  }
}

TEST(ExactMisTest, DominatedTableIsPerfectlyPrivate) {
  const DiscreteTask t{{0.2, 0.3, 0.5}, {{0, 0, 0}, {1, 1, 1}}, {}};
  for (int n : {1, 3, 6}) {
    EXPECT_EQ(exact_mis(t, n).tv, 0.0);
    EXPECT_EQ(exact_mis(t, n).mis, 1.0);
    EXPECT_EQ(exact_mis_ordered(t, n).mis, 1.0);
  }
  const std::vector<int> ns{1, 2, 4};
  for (const auto& p : rate_curve(t, ns)) EXPECT_TRUE(std::isinf(p.rate));
}

TEST(ExactMisTest, AntisymmetricHandComputed) {
  const auto r1 = exact_mis(antisymmetric(), 1);
  EXPECT_NEAR(r1.tv, 0.5, 1e-15);
  EXPECT_NEAR(r1.mis, 0.5, 1e-15);
  for (int k = 0; k < 2; ++k)
    for (int m = 0; m < 2; ++m)
      EXPECT_NEAR(r1.joint[k][m], k == m ? 0.5 : 0.0, 1e-15);
  // n=2: ties (a,b),(b,a) go to model 0, so P(model 0) = 3/4.
  const auto r2 = exact_mis(antisymmetric(), 2);
  EXPECT_NEAR(r2.erm_dist[0], 0.75, 1e-15);
  EXPECT_NEAR(r2.tv, 0.25, 1e-15);
  EXPECT_NEAR(r2.mis, 0.75, 1e-15);
}

TEST(ExactMisTest, AntisymmetricMisIncreasing) {
  double prev = -1.0;
  for (int n : {1, 2, 4, 8}) {
    const double mis = exact_mis(antisymmetric(), n).mis;
    EXPECT_GT(mis, prev) << "n=" << n;
    prev = mis;
  }
}

TEST(ExactMisTest, OrderedAndMultinomialAgree) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 40; ++t) {
    const auto task = random_task(rng, 2 + t % 4, 2 + t % 3);
    const int n = 1 + t % 6;
    const auto fast = exact_mis(task, n);
    const auto ref = exact_mis_ordered(task, n, 1 + t % 3);
    EXPECT_NEAR(fast.mis, ref.mis, 1e-12);
    for (std::size_t k = 0; k < fast.erm_dist.size(); ++k) {
      EXPECT_NEAR(fast.erm_dist[k], ref.erm_dist[k], 1e-12);
    }
  }
}

TEST(ExactMisTest, MatchesNaiveReference) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 30; ++t) {
    const auto task = random_task(rng, 3, 3);
    const int n = 1 + t % 5;
    const auto got = exact_mis(task, n);
    const auto want = naive_exact(task, n);
    EXPECT_NEAR(got.tv, want.tv, 1e-12);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_NEAR(got.erm_dist[k], want.erm[k], 1e-12);
      for (std::size_t m = 0; m < 3; ++m)
        EXPECT_NEAR(got.joint[k][m], want.joint[k][m], 1e-12);
    }
  }
}

TEST(ExactMisTest, ResultInvariants) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 30; ++t) {
    const auto task = random_task(rng, 4, 3);
    const auto r = exact_mis(task, 1 + t % 7);
    EXPECT_GE(r.mis, 0.0);
    EXPECT_LE(r.mis, 1.0);
    EXPECT_EQ(r.mis, 1.0 - r.tv);
    double total = 0;
    for (std::size_t k = 0; k < r.joint.size(); ++k) {
      double row = 0;
      for (double v : r.joint[k]) row += v;
      EXPECT_NEAR(row, r.erm_dist[k], 1e-10);
      total += r.erm_dist[k];
    }
    EXPECT_NEAR(total, 1.0, 1e-10);
    // Column sums recover the atom law: z_1 ~ P.
    for (std::size_t m = 0; m < task.n_atoms(); ++m) {
      double col = 0;
      for (const auto& row : r.joint) col += row[m];
      EXPECT_NEAR(col, task.sample_probs[m], 1e-10);
    }
  }
}

TEST(ExactMisTest, ShiftAndScaleInvariance) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 30; ++t) {
    const auto task = dyadic_task(rng, 3, 3);
    const int n = 1 + t % 5;
    const double base = exact_mis(task, n).mis;
    auto shifted = task, scaled = task;
    for (auto& row : shifted.loss_table)
      for (double& v : row) v += 3.0;
    for (auto& row : scaled.loss_table)
      for (double& v : row) v *= 4.0;
    EXPECT_EQ(exact_mis(shifted, n).mis, base);
    EXPECT_EQ(exact_mis(scaled, n).mis, base);
  }
}

TEST(ExactMisTest, EnumerationGuard) {
  const DiscreteTask t{V(10, 0.1), Table(2, V(10, 0.0)), {}};
  EXPECT_NO_THROW(check_enumeration(t, 7));
  try {
    exact_mis(t, 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTooLarge);
  }
  EXPECT_THROW(exact_mis_ordered(t, 8), Error);
  EXPECT_THROW(exact_mis(t, 0), Error);
}

TEST(ExactMisTest, InvalidTask) {
  EXPECT_THROW(exact_mis(DiscreteTask{{0.5, 0.6}, {{0, 1}}, {}}, 1), Error);
  EXPECT_THROW(exact_mis(DiscreteTask{{0.5, 0.5}, {{0}}, {}}, 1), Error);
  EXPECT_THROW(exact_mis(DiscreteTask{{1.0}, {{NAN}}, {}}, 1), Error);
}

// Unique expected-loss minimizer: model 0 has expected loss 0.3, model 1
// 0.45, model 2 0.5.
TEST(RateCurveTest, PositiveRateWithUniqueMinimizer) {
  const DiscreteTask t{{0.5, 0.3, 0.2},
                       {{0.2, 0.5, 0.2}, {0.6, 0.1, 0.6}, {0.5, 0.5, 0.5}},
                       {}};
  const std::vector<int> ns{1, 2, 4, 8, 10};
  const auto curve = rate_curve(t, ns);
  ASSERT_EQ(curve.size(), ns.size());
  EXPECT_GT(curve.back().rate, 0.0);
  EXPECT_TRUE(std::isfinite(curve.back().rate));
  for (const auto& p : curve) {
    EXPECT_NEAR(p.rate, -std::log(1.0 - p.mis) / p.n, 1e-15);
  }
}

TEST(DiscreteTaskJsonTest, RoundTrip) {
  DiscreteTask t{{0.25, 0.75}, {{0, 1}, {1, 0}}, {"a", "b"}};
  const nlohmann::json j = t;
  const auto back = j.get<DiscreteTask>();
  EXPECT_EQ(back.sample_probs, t.sample_probs);
  EXPECT_EQ(back.loss_table, t.loss_table);
  EXPECT_EQ(back.names, t.names);
  EXPECT_THROW(nlohmann::json::parse(R"({"sample_probs":[0.2],"loss_table":[[1]]})")
                   .get<DiscreteTask>(),
               Error);
}

}  // namespace
}  // namespace quantmis
