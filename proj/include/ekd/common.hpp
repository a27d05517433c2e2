// ekd/common.hpp

// Copyright 2026  The ekd Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ekd {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

using ClassId = std::uint32_t;

// Error taxonomy. Every failure surfaced by the library derives from Error so
// callers can catch one type; the subclasses map one-to-one onto the kinds of
// misuse the CLI reports differently.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct ParameterError : Error { using Error::Error; };
struct DataError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct TrainingError : Error { using Error::Error; };
struct CorruptionError : Error { using Error::Error; };
struct VersionError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };

inline void require_shape(bool ok, const std::string &what) {
  if (!ok) throw ShapeError(what);
}
inline void require_param(bool ok, const std::string &what) {
  if (!ok) throw ParameterError(what);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived> &m) {
  return m.allFinite();
}

// SplitMix64 seeding feeding a xoshiro256** generator. std::uniform_real_distribution
// and std::normal_distribution are implementation-defined, so the conversions
// below are written out to keep results identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    for (auto &s : state_) {
      seed += 0x9E3779B97F4A7C15ull;
      std::uint64_t z = seed;
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
      s = z ^ (z >> 31);
    }
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ParameterError("Rng::below: n must be positive");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller; one draw per call, the pair's twin is discarded.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t state_[4]{};
};

/// Derives an independent stream seed from a base seed and a purpose tag.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  std::uint64_t z = base ^ (tag * 0xD1B54A32D192ED03ull + 0x8CB92BA72F3D8DD7ull);
  z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDull;
  z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ull;
  return z ^ (z >> 33);
}

}  // namespace ekd
