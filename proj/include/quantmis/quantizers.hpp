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

// Post-training quantizers acting on a flattened parameter vector.

#pragma once

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "quantmis/common.hpp"

namespace quantmis {

enum class QuantizerKind { kSign, kTernary, kUniformBits, kIdentity };

NLOHMANN_JSON_SERIALIZE_ENUM(QuantizerKind,
                             {
                                 {QuantizerKind::kSign, "sign"},
                                 {QuantizerKind::kTernary, "ternary"},
                                 {QuantizerKind::kUniformBits, "uniform_bits"},
                                 {QuantizerKind::kIdentity, "identity"},
                             })

struct QuantizerSpec {
  QuantizerKind kind = QuantizerKind::kIdentity;
  std::optional<double> sparsity;  // ternary only
  std::optional<int> bits;         // uniform_bits only

  static QuantizerSpec sign() { return {QuantizerKind::kSign, {}, {}}; }
  static QuantizerSpec ternary(double s) {
    return {QuantizerKind::kTernary, s, {}};
  }
  static QuantizerSpec uniform_bits(int q) {
    return {QuantizerKind::kUniformBits, {}, q};
  }
  static QuantizerSpec identity() { return {QuantizerKind::kIdentity, {}, {}}; }

  bool operator==(const QuantizerSpec&) const = default;
};

inline void validate(const QuantizerSpec& spec) {
  switch (spec.kind) {
    case QuantizerKind::kTernary:
      require(spec.sparsity.has_value(), ErrorKind::kInvalidSpec,
              "ternary quantizer needs a sparsity");
      require(*spec.sparsity >= 0.0 && *spec.sparsity < 1.0,
              ErrorKind::kInvalidSpec, "sparsity must lie in [0,1)");
      break;
    case QuantizerKind::kUniformBits:
      require(spec.bits.has_value(), ErrorKind::kInvalidSpec,
              "uniform_bits quantizer needs a bit count");
      require(*spec.bits >= 2 && *spec.bits <= 5, ErrorKind::kInvalidSpec,
              "bits must be one of 2,3,4,5");
      break;
    default:
      break;
  }
}

// Names used in every report: "Sign", "1.58b 33%", "2 bits", "Identity", ...
inline std::string display_name(const QuantizerSpec& spec) {
  switch (spec.kind) {
    case QuantizerKind::kSign: return "Sign";
    case QuantizerKind::kIdentity: return "Identity";
    case QuantizerKind::kTernary:
      return "1.58b " +
             std::to_string(static_cast<int>(std::lround(*spec.sparsity * 100))) +
             "%";
    case QuantizerKind::kUniformBits:
      return std::to_string(*spec.bits) + " bits";
  }
  return "?";
}

// File-name friendly variant of display_name: "sign", "ternary33", "bits2".
inline std::string slug(const QuantizerSpec& spec) {
  switch (spec.kind) {
    case QuantizerKind::kSign: return "sign";
    case QuantizerKind::kIdentity: return "identity";
    case QuantizerKind::kTernary:
      return "ternary" +
             std::to_string(static_cast<int>(std::lround(*spec.sparsity * 100)));
    case QuantizerKind::kUniformBits: return "bits" + std::to_string(*spec.bits);
  }
  return "unknown";
}

inline QuantizerSpec parse_quantizer_name(const std::string& name) {
  if (name == "Sign") return QuantizerSpec::sign();
  if (name == "Identity") return QuantizerSpec::identity();
  if (name.starts_with("1.58b ") && name.ends_with("%")) {
    const std::string pct = name.substr(6, name.size() - 7);
    QuantizerSpec s = QuantizerSpec::ternary(std::stod(pct) / 100.0);
    validate(s);
    return s;
  }
  if (name.ends_with(" bits")) {
    QuantizerSpec s = QuantizerSpec::uniform_bits(std::stoi(name));
    validate(s);
    return s;
  }
  throw Error(ErrorKind::kInvalidSpec, "unknown quantizer name '" + name + "'");
}

// The eight quantizers compared in the synthetic benchmark.
inline std::vector<QuantizerSpec> benchmark_quantizers() {
  return {QuantizerSpec::sign(),          QuantizerSpec::ternary(0.33),
          QuantizerSpec::ternary(0.50),   QuantizerSpec::ternary(0.90),
          QuantizerSpec::uniform_bits(2), QuantizerSpec::uniform_bits(3),
          QuantizerSpec::uniform_bits(4), QuantizerSpec::uniform_bits(5)};
}

struct QuantizedParams {
  std::vector<double> values;
  QuantizerSpec source_spec;
};

// sign(0) is +1.
inline double sign_of(double v) { return v < 0.0 ? -1.0 : 1.0; }

inline QuantizedParams quantize_sign(std::span<const double> theta) {
  QuantizedParams out{{}, QuantizerSpec::sign()};
  out.values.reserve(theta.size());
  for (double v : theta) out.values.push_back(sign_of(v));
  return out;
}

// Number of entries the ternary quantizer zeroes: floor(sparsity * n).
inline std::size_t ternary_zero_count(std::size_t n, double sparsity) {
  return static_cast<std::size_t>(
      std::floor(sparsity * static_cast<double>(n) + 1e-9));
}

// Zeroes the floor(sparsity * n) smallest-magnitude entries (ties by index)
// and maps the rest to their sign.
inline QuantizedParams quantize_ternary(std::span<const double> theta,
                                        double sparsity) {
  QuantizerSpec spec = QuantizerSpec::ternary(sparsity);
  validate(spec);
  std::vector<std::size_t> order(theta.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(theta[a]) < std::abs(theta[b]);
  });
  QuantizedParams out{{}, spec};
  out.values.resize(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) out.values[i] = sign_of(theta[i]);
  const std::size_t n_zero = ternary_zero_count(theta.size(), sparsity);
  for (std::size_t r = 0; r < n_zero; ++r) out.values[order[r]] = 0.0;
  return out;
}

// alpha = 2^round(log2(max|theta|)), rounding half to even.
inline double power_of_two_scale(std::span<const double> theta) {
  double max_abs = 0.0;
  for (double v : theta) max_abs = std::max(max_abs, std::abs(v));
  require(max_abs > 0.0, ErrorKind::kDegenerateInput,
          "uniform quantization of an all-zero vector");
  const int old_mode = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double e = std::nearbyint(std::log2(max_abs));
  std::fesetround(old_mode);
  return std::ldexp(1.0, static_cast<int>(e));
}

// Q(t) = sign(t) * (alpha / 2^(q-1)) * int(1 + clip(2^(q-1) |t| / alpha, 0, 2^(q-1)))
inline QuantizedParams quantize_uniform_bits(std::span<const double> theta,
                                             int q) {
  QuantizerSpec spec = QuantizerSpec::uniform_bits(q);
  validate(spec);
  const double alpha = power_of_two_scale(theta);
  const double half = std::ldexp(1.0, q - 1);
  const double step = alpha / half;
  QuantizedParams out{{}, spec};
  out.values.reserve(theta.size());
  for (double v : theta) {
    const double scaled = std::clamp(half * std::abs(v) / alpha, 0.0, half);
    out.values.push_back(sign_of(v) * step * std::trunc(1.0 + scaled));
  }
  return out;
}

inline QuantizedParams quantize(std::span<const double> theta,
                                const QuantizerSpec& spec) {
  validate(spec);
  switch (spec.kind) {
    case QuantizerKind::kSign: return quantize_sign(theta);
    case QuantizerKind::kTernary: return quantize_ternary(theta, *spec.sparsity);
    case QuantizerKind::kUniformBits:
      return quantize_uniform_bits(theta, *spec.bits);
    case QuantizerKind::kIdentity:
      return {std::vector<double>(theta.begin(), theta.end()), spec};
  }
  throw Error(ErrorKind::kInvalidSpec, "unknown quantizer kind");
}

// JSON: {"kind": "...", "sparsity": ..., "bits": ...}

inline void to_json(nlohmann::json& j, const QuantizerSpec& s) {
  j = nlohmann::json{{"kind", s.kind}};
  if (s.sparsity) j["sparsity"] = *s.sparsity;
  if (s.bits) j["bits"] = *s.bits;
}

inline void from_json(const nlohmann::json& j, QuantizerSpec& s) {
  if (j.is_string()) {
    s = parse_quantizer_name(j.get<std::string>());
    return;
  }
  s = QuantizerSpec{};
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "sign") {
    s.kind = QuantizerKind::kSign;
  } else if (kind == "ternary") {
    s.kind = QuantizerKind::kTernary;
  } else if (kind == "uniform_bits") {
    s.kind = QuantizerKind::kUniformBits;
  } else if (kind == "identity") {
    s.kind = QuantizerKind::kIdentity;
  } else {
    throw Error(ErrorKind::kInvalidSpec, "unknown quantizer kind '" + kind + "'");
  }
  if (j.contains("sparsity") && !j["sparsity"].is_null()) {
    s.sparsity = j["sparsity"].get<double>();
  }
  if (j.contains("bits") && !j["bits"].is_null()) s.bits = j["bits"].get<int>();
  validate(s);
}

}  // namespace quantmis
