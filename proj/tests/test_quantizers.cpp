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

#include "quantmis/quantizers.hpp"

#include <random>
#include <vector>

#include "gtest/gtest.h"
#include "test_support.hpp"

namespace quantmis {
namespace {

using V = std::vector<double>;

V random_vector(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> normal(0.0, 0.3);
  V v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

TEST(SignTest, Examples) {
  EXPECT_EQ(quantize_sign(V{0.5, -0.2}).values, (V{1, -1}));
  EXPECT_EQ(quantize_sign(V{0.0}).values, (V{1}));
  EXPECT_EQ(quantize_sign(V{-0.0}).values, (V{1}));
}

TEST(SignTest, Idempotent) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    const auto v = random_vector(rng, 17);
    const auto once = quantize_sign(v).values;
    EXPECT_EQ(quantize_sign(once).values, once);
  }
}

TEST(TernaryTest, ZeroesSmallestMagnitudes) {
  EXPECT_EQ(quantize_ternary(V{0.1, -0.5, 0.2, 0.9}, 0.5).values,
            (V{0, -1, 0, 1}));
}

TEST(TernaryTest, ZeroSparsityIsSign) {
  std::mt19937_64 rng(2);
  const auto v = random_vector(rng, 33);
  EXPECT_EQ(quantize_ternary(v, 0.0).values, quantize_sign(v).values);
}

TEST(TernaryTest, NinetyPercentOfHundred) {
  std::mt19937_64 rng(3);
  const auto v = random_vector(rng, 100);
  const auto out = quantize_ternary(v, 0.9).values;
  // Oracle: the 90 smallest magnitudes by sorting.
  V mags;
  for (double x : v) mags.push_back(std::abs(x));
  std::sort(mags.begin(), mags.end());
  int zeros = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (out[i] == 0.0) {
      ++zeros;
      EXPECT_LE(std::abs(v[i]), mags[89]);
    }
  }
  EXPECT_EQ(zeros, 90);
}

TEST(TernaryTest, TiesBrokenByIndex) {
  EXPECT_EQ(quantize_ternary(V{0.3, -0.3, 0.3, 1.0}, 0.5).values,
            (V{0, 0, 1, 1}));
}

TEST(UniformBitsTest, TwoBitHandExample) {
  EXPECT_EQ(quantize_uniform_bits(V{0.6, -0.3, 1.0}, 2).values,
            (V{1.0, -0.5, 1.5}));
}

TEST(UniformBitsTest, FiveBitGrid) {
  V grid, expect;
  for (int k = 1; k <= 16; ++k) {
    grid.push_back(k / 16.0);
    expect.push_back((k + 1) / 16.0);
  }
  EXPECT_EQ(quantize_uniform_bits(grid, 5).values, expect);
}

TEST(UniformBitsTest, PowerOfTwoScaling) {
  std::mt19937_64 rng(4);
  for (int q = 2; q <= 5; ++q) {
    const auto v = random_vector(rng, 50);
    V scaled;
    for (double x : v) scaled.push_back(4.0 * x);
    const auto a = quantize_uniform_bits(v, q).values;
    const auto b = quantize_uniform_bits(scaled, q).values;
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(b[i], 4.0 * a[i]);
  }
}

TEST(UniformBitsTest, ScaleRoundsHalfToEven) {
  // log2(2^1.5) = 1.5 rounds to 2 (even); log2(2^2.5) = 2.5 rounds to 2.
  EXPECT_EQ(power_of_two_scale(V{std::pow(2.0, 1.5)}), 4.0);
  EXPECT_EQ(power_of_two_scale(V{std::pow(2.0, 2.5)}), 4.0);
  EXPECT_EQ(power_of_two_scale(V{0.7}), 0.5);
  EXPECT_EQ(power_of_two_scale(V{0.75, -0.1}), 1.0);
}

TEST(UniformBitsTest, AllZeroIsDegenerate) {
  try {
    quantize_uniform_bits(V{0.0, 0.0}, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateInput);
  }
}

TEST(UniformBitsTest, RejectsBitWidth) {
  EXPECT_THROW(quantize_uniform_bits(V{1.0}, 6), Error);
  EXPECT_THROW(quantize_uniform_bits(V{1.0}, 1), Error);
}

TEST(DispatchTest, Examples) {
  const V v{0.25, -3.0, 1e-9};
  EXPECT_EQ(quantize(v, QuantizerSpec::identity()).values, v);
  EXPECT_EQ(quantize(V{2.0}, QuantizerSpec::sign()).values, (V{1.0}));
  // floor(0.33 * 3) = 0 zeros under the shipped rank rule.
  const auto t = quantize(V{0.1, 0.2, 0.3}, QuantizerSpec::ternary(0.33)).values;
  EXPECT_EQ(std::count(t.begin(), t.end(), 0.0), 0);
}

TEST(InvariantTest, LevelSetsOnRandomVectors) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> len(1, 300);
  auto specs = benchmark_quantizers();
  specs.push_back(QuantizerSpec::identity());
  for (const auto& spec : specs) {
    for (int t = 0; t < 1000; ++t) {
      const auto v = random_vector(rng, len(rng));
      ASSERT_TRUE(testing::level_set_ok(v, quantize(v, spec).values, spec))
          << display_name(spec) << " trial " << t;
    }
  }
}

TEST(InvariantTest, SignAndTernaryScaleInvariant) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> lam(0.01, 100.0);
  for (const auto& spec :
       {QuantizerSpec::sign(), QuantizerSpec::ternary(0.33),
        QuantizerSpec::ternary(0.5), QuantizerSpec::ternary(0.9)}) {
    for (int t = 0; t < 100; ++t) {
      const auto v = random_vector(rng, 40);
      const double l = lam(rng);
      V scaled;
      for (double x : v) scaled.push_back(l * x);
      EXPECT_EQ(quantize(v, spec).values, quantize(scaled, spec).values);
    }
  }
}

TEST(NamesTest, DisplayNamesAndParsing) {
  std::vector<std::string> names;
  for (const auto& s : benchmark_quantizers()) names.push_back(display_name(s));
  EXPECT_EQ(names, (std::vector<std::string>{"Sign", "1.58b 33%", "1.58b 50%",
                                             "1.58b 90%", "2 bits", "3 bits",
                                             "4 bits", "5 bits"}));
  for (const auto& s : benchmark_quantizers()) {
    EXPECT_EQ(parse_quantizer_name(display_name(s)), s);
  }
  EXPECT_EQ(display_name(QuantizerSpec::identity()), "Identity");
  EXPECT_THROW(parse_quantizer_name("7 bits"), Error);
}

TEST(NamesTest, JsonForm) {
  const nlohmann::json j = QuantizerSpec::ternary(0.9);
  EXPECT_EQ(j["kind"], "ternary");
  EXPECT_EQ(j.get<QuantizerSpec>(), QuantizerSpec::ternary(0.9));
  EXPECT_EQ(nlohmann::json::parse(R"({"kind":"uniform_bits","bits":3})")
                .get<QuantizerSpec>(),
            QuantizerSpec::uniform_bits(3));
  EXPECT_THROW(nlohmann::json::parse(R"({"kind":"bogus"})").get<QuantizerSpec>(),
               Error);
  EXPECT_THROW(nlohmann::json::parse(R"({"kind":"ternary"})").get<QuantizerSpec>(),
               Error);
}

}  // namespace
}  // namespace quantmis
