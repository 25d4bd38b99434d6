// Copyright 2026 The mtlopt Authors
// SPDX-License-Identifier: Apache-2.0

// Brute-force reference computations. They share no code paths with the
// library beyond the Vec/Mat containers.

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "mtlopt/linalg.hpp"

namespace mtlopt::testing {

inline double vnorm(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline Vec mix(const std::vector<Vec>& pts, const Vec& w) {
  Vec out(pts.front().size(), 0.0);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w[i] * pts[i][j];
  return out;
}

struct GridResult {
  Vec weights;
  double value = std::numeric_limits<double>::infinity();
};

/// Minimizes f over the probability simplex of dimension 2 or 3 on a
/// regular grid with the given step.
inline GridResult grid_simplex(std::size_t k, double step, const std::function<double(const Vec&)>& f) {
  GridResult best;
  const int n = static_cast<int>(std::lround(1.0 / step));
  if (k == 2) {
    for (int a = 0; a <= n; ++a) {
      const double g = static_cast<double>(a) / n;
      const Vec w{g, 1.0 - g};
      const double v = f(w);
      if (v < best.value) best = {w, v};
    }
    return best;
  }
  for (int a = 0; a <= n; ++a)
    for (int b = 0; a + b <= n; ++b) {
      const Vec w{static_cast<double>(a) / n, static_cast<double>(b) / n, static_cast<double>(n - a - b) / n};
      const double v = f(w);
      if (v < best.value) best = {w, v};
    }
  return best;
}

inline GridResult grid_min_norm(const std::vector<Vec>& pts, double step) {
  return grid_simplex(pts.size(), step, [&](const Vec& w) { return vnorm(mix(pts, w)); });
}

/// The CAGrad inner objective g_wᵀg₀ + c‖g₀‖‖g_w‖ evaluated on raw vectors.
inline double cagrad_inner(const std::vector<Vec>& pts, const Vec& w, double c) {
  const Vec g0 = mix(pts, Vec(pts.size(), 1.0 / static_cast<double>(pts.size())));
  const Vec gw = mix(pts, w);
  double lin = 0.0;
  for (std::size_t j = 0; j < g0.size(); ++j) lin += gw[j] * g0[j];
  return lin + c * vnorm(g0) * vnorm(gw);
}

/// Central finite-difference gradient of a scalar function.
inline Vec central_difference(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    Vec a = x;
    Vec b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

/// Two-task PCGrad written out longhand for a fixed visiting order.
inline Vec pcgrad_two(const Vec& g1, const Vec& g2) {
  auto project = [](Vec a, const Vec& b) {
    double ab = 0.0;
    double bb = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      ab += a[j] * b[j];
      bb += b[j] * b[j];
    }
    if (ab < 0.0 && bb > 0.0)
      for (std::size_t j = 0; j < a.size(); ++j) a[j] -= ab / bb * b[j];
    return a;
  };
  const Vec a = project(g1, g2);
  const Vec b = project(g2, g1);
  Vec out(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) out[j] = 0.5 * (a[j] + b[j]);
  return out;
}

/// Checks the defining property of the polar factor: O has orthonormal
/// columns (or rows) and OᵀA is symmetric positive semi-definite. Returns
/// the largest violation found.
inline double polar_violation(const Mat& a, const Mat& o) {
  const bool tall = a.rows() >= a.cols();
  const Mat q = tall ? o : o.transposed();
  const Mat x = tall ? a : a.transposed();
  double worst = 0.0;
  const std::size_t n = q.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < q.rows(); ++r) s += q(r, i) * q(r, j);
      worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  // P = QᵀX must be symmetric, with non-negative diagonal and 2×2 principal
  // minors (necessary conditions for positive semi-definiteness).
  Mat p(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < q.rows(); ++r) s += q(r, i) * x(r, j);
      p(i, j) = s;
    }
  double scale = 1.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(p(i, i)));
  for (std::size_t i = 0; i < n; ++i) {
    worst = std::max(worst, std::max(0.0, -p(i, i)) / scale);
    for (std::size_t j = 0; j < n; ++j) {
      worst = std::max(worst, std::abs(p(i, j) - p(j, i)) / scale);
      if (i < j) worst = std::max(worst, std::max(0.0, p(i, j) * p(j, i) - p(i, i) * p(j, j)) / (scale * scale));
    }
  }
  return worst;
}

}  // namespace mtlopt::testing
