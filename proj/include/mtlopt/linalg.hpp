// Copyright 2026 The mtlopt Authors
// SPDX-License-Identifier: Apache-2.0

// Dense linear algebra for small matrices: vector helpers, a row-major Mat,
// one-sided Jacobi SVD, exact polar factor, Newton-Schulz orthogonalization,
// simplex projection and the min-norm point of a convex hull.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtlopt/error.hpp"

namespace mtlopt {

using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// Vector helpers
// ---------------------------------------------------------------------------

inline double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double x) { return std::isfinite(x); });
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require(x.size() == y.size(), "axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vec scaled(std::span<const double> x, double alpha) {
  Vec out(x.begin(), x.end());
  for (double& v : out) v *= alpha;
  return out;
}

inline Vec sub(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "sub: length mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

// ---------------------------------------------------------------------------
// Mat
// ---------------------------------------------------------------------------

class Mat {
 public:
  Mat() = default;

  Mat(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  Mat(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, "Mat: data length must equal rows*cols");
    require(all_finite(data_), "Mat: entries must be finite");
  }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Mat diag(std::span<const double> d) {
    Mat m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  Mat transposed() const {
    Mat t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  Mat& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  Mat& operator+=(const Mat& o) {
    require(rows_ == o.rows_ && cols_ == o.cols_, "Mat +=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  Mat& operator-=(const Mat& o) {
    require(rows_ == o.rows_ && cols_ == o.cols_, "Mat -=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }

  friend bool operator==(const Mat&, const Mat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Mat operator*(double s, Mat m) { return m *= s; }
inline Mat operator+(Mat a, const Mat& b) { return a += b; }
inline Mat operator-(Mat a, const Mat& b) { return a -= b; }

inline Mat matmul(const Mat& a, const Mat& b) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Mat out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

/// a * bᵀ without materializing the transpose.
inline Mat matmul_nt(const Mat& a, const Mat& b) {
  require(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
  Mat out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
      out(i, j) = s;
    }
  return out;
}

inline double frobenius_inner(const Mat& a, const Mat& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "frobenius_inner: shape mismatch");
  return dot(a.data(), b.data());
}

inline double frobenius_norm(const Mat& a) { return norm(a.data()); }

inline double max_abs_diff(const Mat& a, const Mat& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// ---------------------------------------------------------------------------
// SVD (one-sided Jacobi)
// ---------------------------------------------------------------------------

/// Thin SVD. For an m×n input with p = min(m, n): u is m×p, sigma has p
/// entries sorted non-increasing, vt is p×n.
struct SvdResult {
  Mat u;
  Vec sigma;
  Mat vt;

  Mat reconstruct() const {
    Mat us = u;
    for (std::size_t r = 0; r < us.rows(); ++r)
      for (std::size_t c = 0; c < us.cols(); ++c) us(r, c) *= sigma[c];
    return matmul(us, vt);
  }
};

namespace detail {

// Hestenes one-sided Jacobi for m >= n. Columns are stored as separate
// vectors so rotations touch contiguous memory.
inline SvdResult jacobi_svd_tall(const Mat& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  std::vector<Vec> w(n, Vec(m));
  std::vector<Vec> v(n, Vec(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) w[j][i] = a(i, j);
    v[j][j] = 1.0;
  }

  constexpr double kTol = 1e-15;
  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = dot(w[p], w[p]);
        const double beta = dot(w[q], w[q]);
        const double gamma = dot(w[p], w[q]);
        if (gamma == 0.0 || alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = w[p][i];
          const double wq = w[q][i];
          w[p][i] = c * wp - s * wq;
          w[q][i] = s * wp + c * wq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v[p][i];
          const double vq = v[q][i];
          v[p][i] = c * vp - s * vq;
          v[q][i] = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  Vec sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = norm(w[j]);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  const double smax = n > 0 ? sigma[order[0]] : 0.0;
  const double zero_cut = static_cast<double>(std::max(m, n)) *
                          std::numeric_limits<double>::epsilon() * smax;

  SvdResult out{Mat(m, n), Vec(n), Mat(n, n)};
  std::vector<Vec> ucols;
  ucols.reserve(n);
  std::vector<bool> numerically_zero(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.sigma[k] = sigma[j];
    Vec col(m, 0.0);
    if (sigma[j] > zero_cut && sigma[j] > 0.0) {
      for (std::size_t i = 0; i < m; ++i) col[i] = w[j][i] / sigma[j];
    } else {
      numerically_zero[k] = true;
    }
    ucols.push_back(std::move(col));
    for (std::size_t i = 0; i < n; ++i) out.vt(k, i) = v[j][i];
  }

  // Complete U for numerically-zero singular values so its columns stay
  // orthonormal.
  std::size_t candidate = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!numerically_zero[k]) continue;
    while (candidate < m) {
      Vec e(m, 0.0);
      e[candidate++] = 1.0;
      for (int pass = 0; pass < 2; ++pass)
        for (std::size_t other = 0; other < n; ++other) {
          if (other == k || (numerically_zero[other] && other > k)) continue;
          const double proj = dot(e, ucols[other]);
          axpy(-proj, ucols[other], e);
        }
      const double len = norm(e);
      if (len > 0.5) {
        for (double& x : e) x /= len;
        ucols[k] = std::move(e);
        break;
      }
    }
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < m; ++i) out.u(i, k) = ucols[k][i];
  return out;
}

}  // namespace detail

inline SvdResult svd(const Mat& a) {
  require(all_finite(a.data()), "svd: non-finite input");
  if (a.rows() >= a.cols()) return detail::jacobi_svd_tall(a);
  SvdResult t = detail::jacobi_svd_tall(a.transposed());
  return SvdResult{t.vt.transposed(), std::move(t.sigma), t.u.transposed()};
}

/// Number of singular values above `rel_tol * sigma_max`.
inline std::size_t numerical_rank(const SvdResult& s, double rel_tol = 1e-12) {
  if (s.sigma.empty() || s.sigma.front() == 0.0) return 0;
  const double cut = rel_tol * s.sigma.front();
  return static_cast<std::size_t>(
      std::count_if(s.sigma.begin(), s.sigma.end(), [&](double x) { return x > cut; }));
}

/// Exact polar factor U·Vᵀ. Throws kDegeneratePolar (detail = numerical
/// rank) when the smallest singular value is below 1e-12·σ_max.
inline Mat polar_factor(const Mat& a) {
  const SvdResult s = svd(a);
  const std::size_t rank = numerical_rank(s, 1e-12);
  if (rank < s.sigma.size()) {
    fail(ErrorCode::kDegeneratePolar,
         "polar_factor: rank " + std::to_string(rank) + " < " + std::to_string(s.sigma.size()),
         rank);
  }
  return matmul(s.u, s.vt);
}

// ---------------------------------------------------------------------------
// Newton-Schulz
// ---------------------------------------------------------------------------

struct NewtonSchulzConfig {
  int iterations = 5;
  // Quintic coefficients used for the first `fast_steps` iterations.
  double a = 3.4445;
  double b = -4.7750;
  double c = 2.0315;
  int fast_steps = 5;
  // Convergent quintic (15x - 10x^3 + 3x^5) / 8 used for any iteration past
  // `fast_steps`; drives singular values to 1 instead of an oscillating band.
  double polish_a = 15.0 / 8.0;
  double polish_b = -10.0 / 8.0;
  double polish_c = 3.0 / 8.0;
};

/// Quintic Newton-Schulz approximation of the polar factor:
/// X0 = G/‖G‖_F, X <- aX + b(XXᵀ)X + c(XXᵀ)²X. Tall inputs are processed
/// transposed so the Gram matrix is the smaller side.
inline Mat newton_schulz(const Mat& g, const NewtonSchulzConfig& cfg) {
  require(cfg.iterations >= 1, "newton_schulz: iterations must be >= 1");
  const double gnorm = frobenius_norm(g);
  if (!(gnorm > 0.0)) fail(ErrorCode::kZeroGradient, "newton_schulz: zero matrix");
  const bool tall = g.rows() > g.cols();
  Mat x = tall ? g.transposed() : g;
  x *= 1.0 / gnorm;
  for (int it = 0; it < cfg.iterations; ++it) {
    const bool fast = it < cfg.fast_steps;
    const double a = fast ? cfg.a : cfg.polish_a;
    const double b = fast ? cfg.b : cfg.polish_b;
    const double c = fast ? cfg.c : cfg.polish_c;
    const Mat gram = matmul_nt(x, x);
    Mat poly = matmul(gram, gram);
    poly *= c;
    poly += b * gram;
    Mat next = matmul(poly, x);
    next += a * x;
    x = std::move(next);
  }
  return tall ? x.transposed() : x;
}

inline Mat newton_schulz(const Mat& g, int iterations) {
  NewtonSchulzConfig cfg;
  cfg.iterations = iterations;
  return newton_schulz(g, cfg);
}

// ---------------------------------------------------------------------------
// Simplex
// ---------------------------------------------------------------------------

/// Weights on the probability simplex.
class Simplex {
 public:
  Simplex() = default;

  explicit Simplex(Vec weights) : weights_(std::move(weights)) {
    require(!weights_.empty(), "Simplex: empty weights");
    double s = 0.0;
    for (double w : weights_) {
      require(std::isfinite(w) && w >= 0.0, "Simplex: weights must be finite and non-negative");
      s += w;
    }
    require(std::abs(s - 1.0) <= 1e-12, "Simplex: weights must sum to 1");
  }

  static Simplex uniform(std::size_t k) { return Simplex(Vec(k, 1.0 / static_cast<double>(k))); }

  /// Clamps tiny negatives and renormalizes before validating.
  static Simplex normalized(Vec w) {
    double s = 0.0;
    for (double& x : w) {
      x = std::max(x, 0.0);
      s += x;
    }
    require(s > 0.0, "Simplex::normalized: all weights zero");
    for (double& x : w) x /= s;
    return Simplex(std::move(w));
  }

  const Vec& weights() const noexcept { return weights_; }
  std::size_t size() const noexcept { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_[i]; }

 private:
  Vec weights_;
};

/// Euclidean projection onto the probability simplex (sort-based).
inline Vec project_to_simplex(std::span<const double> v) {
  require(!v.empty(), "project_to_simplex: empty input");
  Vec u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumsum += u[j];
    const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - theta, 0.0);
  return out;
}

inline Vec combine(std::span<const Vec> points, std::span<const double> weights) {
  require(!points.empty() && points.size() == weights.size(), "combine: size mismatch");
  Vec out(points.front().size(), 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) axpy(weights[i], points[i], out);
  return out;
}

// ---------------------------------------------------------------------------
// Min-norm point in the convex hull
// ---------------------------------------------------------------------------

struct MinNormResult {
  Simplex weights;
  Vec combined;
  double norm = 0.0;
};

struct MinNormConfig {
  int max_iterations = 250;
  double tolerance = 1e-12;
};

namespace detail {

/// Weight on the first point of the minimum-norm element of the segment
/// between two points, given the Gram entries.
inline double min_norm_segment(double v1v1, double v1v2, double v2v2) {
  const double denom = v1v1 + v2v2 - 2.0 * v1v2;
  if (denom <= 0.0) return 0.5;
  return std::clamp((v2v2 - v1v2) / denom, 0.0, 1.0);
}

inline std::vector<Vec> gram(std::span<const Vec> pts) {
  const std::size_t k = pts.size();
  std::vector<Vec> g(k, Vec(k));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j) g[i][j] = g[j][i] = dot(pts[i], pts[j]);
  return g;
}

}  // namespace detail

/// Frank-Wolfe with exact line search over the simplex, started from the
/// best pairwise solution. K = 1 and K = 2 are solved in closed form.
inline MinNormResult min_norm_simplex(std::span<const Vec> points, const MinNormConfig& cfg = {}) {
  require(!points.empty(), "min_norm_simplex: need at least one point");
  const std::size_t dim = points.front().size();
  for (const Vec& p : points) {
    require(p.size() == dim, "min_norm_simplex: dimension mismatch");
    require(all_finite(p), "min_norm_simplex: non-finite point");
  }
  const std::size_t k = points.size();
  auto finish = [&](Vec w) {
    Simplex s = Simplex::normalized(std::move(w));
    Vec comb = combine(points, s.weights());
    const double n = norm(comb);
    return MinNormResult{std::move(s), std::move(comb), n};
  };
  if (k == 1) return finish(Vec{1.0});

  const auto g = detail::gram(points);
  if (k == 2) {
    const double gamma = detail::min_norm_segment(g[0][0], g[0][1], g[1][1]);
    return finish(Vec{gamma, 1.0 - gamma});
  }

  Vec w(k, 0.0);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      const double gamma = detail::min_norm_segment(g[i][i], g[i][j], g[j][j]);
      const double cost = gamma * gamma * g[i][i] + 2.0 * gamma * (1.0 - gamma) * g[i][j] +
                          (1.0 - gamma) * (1.0 - gamma) * g[j][j];
      if (cost < best) {
        best = cost;
        std::fill(w.begin(), w.end(), 0.0);
        w[i] = gamma;
        w[j] = 1.0 - gamma;
      }
    }

  Vec gw(k);
  for (int it = 0; it < cfg.max_iterations; ++it) {
    for (std::size_t i = 0; i < k; ++i) gw[i] = dot(g[i], w);
    const std::size_t t = static_cast<std::size_t>(std::min_element(gw.begin(), gw.end()) - gw.begin());
    const double v1v1 = dot(w, gw);
    const double v1v2 = gw[t];
    const double v2v2 = g[t][t];
    // Duality gap of the quadratic objective; zero at the optimum.
    if (v1v1 - v1v2 <= cfg.tolerance) break;
    const double gamma = detail::min_norm_segment(v1v1, v1v2, v2v2);
    double change = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double nw = gamma * w[i] + (i == t ? 1.0 - gamma : 0.0);
      change += std::abs(nw - w[i]);
      w[i] = nw;
    }
    if (change <= cfg.tolerance) break;
  }
  return finish(std::move(w));
}

// ---------------------------------------------------------------------------
// Random helpers for generators and tests
// ---------------------------------------------------------------------------

/// Matrix with `cols` orthonormal columns (rows >= cols), Gram-Schmidt on
/// Gaussian draws.
template <class Rng>
Mat random_orthonormal(std::size_t rows, std::size_t cols, Rng& rng) {
  require(rows >= cols, "random_orthonormal: need rows >= cols");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vec> q;
  while (q.size() < cols) {
    Vec v(rows);
    for (double& x : v) x = normal(rng);
    for (int pass = 0; pass < 2; ++pass)
      for (const Vec& prev : q) axpy(-dot(v, prev), prev, v);
    const double len = norm(v);
    if (len < 1e-8) continue;
    for (double& x : v) x /= len;
    q.push_back(std::move(v));
  }
  Mat out(rows, cols);
  for (std::size_t c = 0; c < cols; ++c)
    for (std::size_t r = 0; r < rows; ++r) out(r, c) = q[c][r];
  return out;
}

/// U·diag(sigma)·Vᵀ with random orthonormal U, V; sigma.size() must equal
/// min(rows, cols).
template <class Rng>
Mat random_with_spectrum(std::size_t rows, std::size_t cols, std::span<const double> sigma, Rng& rng) {
  const std::size_t p = std::min(rows, cols);
  require(sigma.size() == p, "random_with_spectrum: sigma length must be min(rows, cols)");
  Mat u = random_orthonormal(rows, p, rng);
  Mat v = random_orthonormal(cols, p, rng);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < p; ++c) u(r, c) *= sigma[c];
  return matmul_nt(u, v);
}

}  // namespace mtlopt
