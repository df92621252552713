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

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace quantmis {

enum class ErrorKind {
  kInvalidArgument,
  kInvalidSpec,
  kShape,
  kDegenerateInput,
  kDegenerateTrajectory,
  kDegenerateVariance,
  kTooLarge,
  kUndefinedCorrelation,
  kUndefinedRatio,
  kNotFound,
  kConfig,
  kIo,
};

inline std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kInvalidSpec: return "invalid-spec";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kDegenerateInput: return "degenerate-input";
    case ErrorKind::kDegenerateTrajectory: return "degenerate-trajectory";
    case ErrorKind::kDegenerateVariance: return "degenerate-variance";
    case ErrorKind::kTooLarge: return "too-large";
    case ErrorKind::kUndefinedCorrelation: return "undefined-correlation";
    case ErrorKind::kUndefinedRatio: return "undefined-ratio";
    case ErrorKind::kNotFound: return "not-found";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

// All library failures are reported through this type; kind() is stable and
// tests switch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what),
        kind_(kind),
        message_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  // The description without the kind prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

// Neumaier compensated summation.
class CompensatedSum {
 public:
  void add(double value) {
    const double t = sum_ + value;
    if (std::abs(sum_) >= std::abs(value)) {
      carry_ += (sum_ - t) + value;
    } else {
      carry_ += (value - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

inline double compensated_sum(std::span<const double> values) {
  CompensatedSum acc;
  for (double v : values) acc.add(v);
  return acc.value();
}

inline double mean_of(std::span<const double> values) {
  require(!values.empty(), ErrorKind::kInvalidArgument, "mean of empty vector");
  return compensated_sum(values) / static_cast<double>(values.size());
}

// Sample variance with denominator N-1; 0 for fewer than two values.
inline double sample_variance(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mu = mean_of(values);
  CompensatedSum acc;
  for (double v : values) acc.add((v - mu) * (v - mu));
  return acc.value() / static_cast<double>(values.size() - 1);
}

// splitmix64 finalizer; used for all seed derivation.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t salt) {
  return mix64(parent ^ mix64(salt + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b,
                                    std::uint64_t c) {
  return derive_seed(derive_seed(a, b), c);
}

// 64-bit FNV-1a.
class Fnv1a {
 public:
  void update(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      state_ ^= bytes[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view text) { update(text.data(), text.size()); }
  void update(std::span<const double> values) {
    for (double v : values) {
      // +0.0 and -0.0 compare equal, so hash them equally.
      const double canonical = v == 0.0 ? 0.0 : v;
      std::uint64_t bits;
      std::memcpy(&bits, &canonical, sizeof bits);
      update(&bits, sizeof bits);
    }
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t hash_values(std::span<const double> values) {
  Fnv1a h;
  h.update(values);
  return h.digest();
}

inline std::uint64_t hash_text(std::string_view text) {
  Fnv1a h;
  h.update(text);
  return h.digest();
}

}  // namespace quantmis
