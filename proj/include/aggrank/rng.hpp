#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "aggrank/error.hpp"

namespace aggrank {

// splitmix64 finalizer; spreads low-entropy seeds across the word.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and up to two tags.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  return mix_seed(base ^ mix_seed(a) ^ mix_seed(mix_seed(b)));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

  // Inclusive bounds.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }

  bool bernoulli(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform(0.0, 1.0) < p;
  }

  // Inverse-CDF draw over unnormalized nonnegative weights.
  std::size_t sample_index(const std::vector<double>& weights) {
    if (weights.empty()) throw ArgumentError("sample_index: empty weights");
    double total = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw ArgumentError("sample_index: negative weight");
      total += w;
    }
    if (total <= 0.0) throw ArgumentError("sample_index: zero total weight");
    double u = uniform(0.0, 1.0) * total;
    double cum = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      cum += weights[i];
      if (u < cum) return i;
    }
    return weights.size() - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace aggrank
