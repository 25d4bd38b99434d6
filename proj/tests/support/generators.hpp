// Copyright 2026 The mtlopt Authors
// SPDX-License-Identifier: Apache-2.0

// Seeded random generators for property tests.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mtlopt/linalg.hpp"

namespace mtlopt::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::mt19937_64& rng() { return rng_; }

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  std::size_t size(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  bool coin() { return std::bernoulli_distribution(0.5)(rng_); }

  Vec vec(std::size_t n, double scale = 1.0) {
    Vec v(n);
    for (double& x : v) x = scale * normal();
    return v;
  }

  /// A vector with norm in [lo, hi].
  Vec nonzero_vec(std::size_t n, double lo = 0.1, double hi = 10.0) {
    Vec v = vec(n);
    double s = 0.0;
    for (double x : v) s += x * x;
    s = std::sqrt(s);
    if (s == 0.0) v[0] = s = 1.0;
    const double target = uniform(lo, hi);
    for (double& x : v) x *= target / s;
    return v;
  }

  std::vector<Vec> vecs(std::size_t k, std::size_t n) {
    std::vector<Vec> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(nonzero_vec(n));
    return out;
  }

  Mat mat(std::size_t r, std::size_t c) { return Mat(r, c, vec(r * c)); }

  /// Full-rank matrix whose singular values span [1, condition].
  Mat conditioned(std::size_t r, std::size_t c, double condition) {
    const std::size_t k = std::min(r, c);
    Vec sigma(k);
    for (std::size_t i = 0; i < k; ++i)
      sigma[i] = k == 1 ? 1.0 : std::pow(condition, static_cast<double>(k - 1 - i) / static_cast<double>(k - 1));
    return random_with_spectrum(r, c, sigma, rng_);
  }

  Vec simplex(std::size_t k) {
    Vec w(k);
    double s = 0.0;
    for (double& x : w) s += (x = -std::log(uniform(1e-12, 1.0)));
    for (double& x : w) x /= s;
    return w;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace mtlopt::testing
