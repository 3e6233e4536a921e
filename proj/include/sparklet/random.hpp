/*
Copyright 2026 The Sparklet Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace sparklet {

// Counter-based helpers: a value is a pure function of (seed, stream keys),
// so sampling decisions never depend on partitioning or scheduling.

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t mixKeys(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

/// Uniform double in [0, 1) with 53 random bits.
inline constexpr double toUnit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline double hashUniform(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept {
  return toUnit(mixKeys(seed, keys));
}

/// Poisson(1) draw by inversion of a keyed uniform.
inline int hashPoisson1(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept {
  const double u = hashUniform(seed, keys);
  double p = std::exp(-1.0);
  double cdf = p;
  int k = 0;
  while (u >= cdf && k < 64) {
    ++k;
    p /= k;
    cdf += p;
  }
  return k;
}

/// Sequential generator for a keyed stream.
inline std::mt19937_64 keyedEngine(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  return std::mt19937_64(mixKeys(seed, keys));
}

inline double uniform01(std::mt19937_64& rng) { return toUnit(rng()); }

/// Standard normal via Box-Muller; implemented here so streams are portable across standard libraries.
inline double standardNormal(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace sparklet
