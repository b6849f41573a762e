// Copyright 2026 The glyphemb Authors. Apache 2.0 License.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

#include "glyphemb/tensor.hpp"

namespace glyphemb {

/// Seeded generator with platform-independent derived distributions.
///
/// std::mt19937_64's output sequence is fixed by the standard, but the
/// <random> distributions are not, so the helpers below are written out.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // Rejection sampling on the top of the range keeps this unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  /// Uniform real in [0, 1).
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double normal() {
    // Box-Muller; uses (0,1] for the log argument.
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = uniform_index(i);
      using std::swap;
      swap(first[static_cast<std::ptrdiff_t>(i - 1)],
           first[static_cast<std::ptrdiff_t>(j)]);
    }
  }

  /// Derives an independent stream, e.g. one for shuffling and one for jitter.
  Rng split() { return Rng(engine_() ^ 0x9e3779b97f4a7c15ULL); }

 private:
  std::mt19937_64 engine_;
};

/// Glorot-style uniform init, bound sqrt(6 / (fan_in + fan_out)).
template <typename T>
void fan_uniform_init(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out,
                      Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
Parameter<T> uniform_parameter(std::string name, Shape shape,
                               std::size_t fan_in, std::size_t fan_out,
                               Rng& rng) {
  Tensor<T> t(std::move(shape));
  fan_uniform_init(t, fan_in, fan_out, rng);
  return Parameter<T>(std::move(name), std::move(t));
}

template <typename T>
Parameter<T> zero_parameter(std::string name, Shape shape) {
  return Parameter<T>(std::move(name), Tensor<T>(std::move(shape)));
}

}  // namespace glyphemb
