// Copyright 2026 The mtlopt Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic multi-task objectives with analytic gradients.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mtlopt/blocks.hpp"
#include "mtlopt/error.hpp"
#include "mtlopt/linalg.hpp"

namespace mtlopt {

/// L(θ) = ½(θ−θ*)ᵀA(θ−θ*) with A symmetric positive definite.
struct QuadraticTask {
  Vec center;
  Mat curvature;

  void validate() const {
    const std::size_t n = center.size();
    require(curvature.rows() == n && curvature.cols() == n, "QuadraticTask: curvature must be n×n");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        require(std::abs(curvature(i, j) - curvature(j, i)) <= 1e-12 * std::max(1.0, std::abs(curvature(i, j))),
                "QuadraticTask: curvature must be symmetric");
    // Cholesky succeeds iff A is positive definite.
    Mat l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
      double d = curvature(j, j);
      for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
      require(d > 0.0, "QuadraticTask: curvature must be positive definite");
      l(j, j) = std::sqrt(d);
      for (std::size_t i = j + 1; i < n; ++i) {
        double s = curvature(i, j);
        for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
        l(i, j) = s / l(j, j);
      }
    }
  }

  double loss(std::span<const double> theta) const {
    const Vec d = sub(theta, center);
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < d.size(); ++j) row += curvature(i, j) * d[j];
      s += d[i] * row;
    }
    return 0.5 * s;
  }

  Vec gradient(std::span<const double> theta) const {
    const Vec d = sub(theta, center);
    Vec g(d.size(), 0.0);
    for (std::size_t i = 0; i < d.size(); ++i)
      for (std::size_t j = 0; j < d.size(); ++j) g[i] += curvature(i, j) * d[j];
    return g;
  }
};

enum class ProblemKind { kQuadraticEnsemble, kToy2d };

struct Evaluation {
  Vec losses;
  TaskGradients grads;
};

struct StationarityReport {
  double min_norm_value = 0.0;
  Simplex weights;
};

/// Two-task 2-D benchmark with log-barrier valleys above the x-axis and
/// quadratic bowls below it, blended by clipped tanh gates.
namespace toy2d {

inline constexpr double kLower = 5e-6;

inline double sech2(double x) {
  const double c = std::cosh(x);
  return 1.0 / (c * c);
}

inline Evaluation eval(std::span<const double> x) {
  require(x.size() == 2, "toy2d: theta must have 2 entries");
  const double x1 = x[0];
  const double x2 = x[1];
  const double th = std::tanh(x2);

  const double a1 = 0.5 * (-x1 - 7.0) + th;  // 0.5(−x1−7) − tanh(−x2)
  const double a2 = 0.5 * (-x1 + 3.0) - th + 2.0;
  const bool a1_active = std::abs(a1) > kLower;
  const bool a2_active = std::abs(a2) > kLower;
  const double f1 = std::log(a1_active ? std::abs(a1) : kLower) + 6.0;
  const double f2 = std::log(a2_active ? std::abs(a2) : kLower) + 6.0;
  // d/dx log|a| = a'/a
  const double df1_dx1 = a1_active ? -0.5 / a1 : 0.0;
  const double df1_dx2 = a1_active ? sech2(x2) / a1 : 0.0;
  const double df2_dx1 = a2_active ? -0.5 / a2 : 0.0;
  const double df2_dx2 = a2_active ? -sech2(x2) / a2 : 0.0;

  const double f1_sq = ((-x1 + 7.0) * (-x1 + 7.0) + 0.1 * (-x2 - 8.0) * (-x2 - 8.0)) / 10.0 - 20.0;
  const double f2_sq = ((-x1 - 7.0) * (-x1 - 7.0) + 0.1 * (-x2 - 8.0) * (-x2 - 8.0)) / 10.0 - 20.0;
  const double df1sq_dx1 = (x1 - 7.0) / 5.0;
  const double df2sq_dx1 = (x1 + 7.0) / 5.0;
  const double dsq_dx2 = (x2 + 8.0) / 50.0;

  const double t = std::tanh(0.5 * x2);
  const double c1 = std::max(t, 0.0);
  const double c2 = std::max(-t, 0.0);
  const double dc1 = x2 > 0.0 ? 0.5 * sech2(0.5 * x2) : 0.0;
  const double dc2 = x2 < 0.0 ? -0.5 * sech2(0.5 * x2) : 0.0;

  Vec losses{f1 * c1 + f1_sq * c2, f2 * c1 + f2_sq * c2};
  Vec g1{df1_dx1 * c1 + df1sq_dx1 * c2, df1_dx2 * c1 + f1 * dc1 + dsq_dx2 * c2 + f1_sq * dc2};
  Vec g2{df2_dx1 * c1 + df2sq_dx1 * c2, df2_dx2 * c1 + f2 * dc1 + dsq_dx2 * c2 + f2_sq * dc2};
  return Evaluation{std::move(losses), TaskGradients(Layout::flat(2, "x"), {std::move(g1), std::move(g2)})};
}

/// The five shipped starting points.
inline std::vector<Vec> initializations() {
  return {{-8.5, 7.5}, {-8.5, -5.0}, {9.0, 9.0}, {-7.5, -0.5}, {9.0, -1.0}};
}

}  // namespace toy2d

/// A registered multi-task problem: a quadratic ensemble over an arbitrary
/// block layout, or the 2-D toy.
class Problem {
 public:
  static Problem quadratic(std::vector<QuadraticTask> tasks, Layout layout) {
    require(!tasks.empty(), "Problem: need at least one task");
    for (const QuadraticTask& t : tasks) {
      t.validate();
      require(t.center.size() == layout.total(), "Problem: task dimension must match layout");
    }
    Problem p;
    p.kind_ = ProblemKind::kQuadraticEnsemble;
    p.layout_ = std::move(layout);
    p.quads_ = std::move(tasks);
    return p;
  }

  static Problem quadratic(std::vector<QuadraticTask> tasks) {
    require(!tasks.empty(), "Problem: need at least one task");
    Layout layout = Layout::flat(tasks.front().center.size());
    return quadratic(std::move(tasks), std::move(layout));
  }

  static Problem toy() {
    Problem p;
    p.kind_ = ProblemKind::kToy2d;
    p.layout_ = Layout::flat(2, "x");
    return p;
  }

  ProblemKind kind() const noexcept { return kind_; }
  const Layout& layout() const noexcept { return layout_; }
  std::size_t dimension() const noexcept { return layout_.total(); }
  std::size_t tasks() const noexcept { return kind_ == ProblemKind::kToy2d ? 2 : quads_.size(); }
  const std::vector<QuadraticTask>& quadratic_tasks() const noexcept { return quads_; }

  Evaluation eval(std::span<const double> theta) const {
    require(theta.size() == dimension(), "eval_tasks: theta dimension mismatch");
    require(all_finite(theta), "eval_tasks: non-finite theta");
    if (kind_ == ProblemKind::kToy2d) return toy2d::eval(theta);
    Vec losses;
    std::vector<Vec> grads;
    for (const QuadraticTask& t : quads_) {
      losses.push_back(t.loss(theta));
      grads.push_back(t.gradient(theta));
    }
    return Evaluation{std::move(losses), TaskGradients(layout_, std::move(grads))};
  }

  /// Per-task minimum loss value: 0 for quadratics; the clamped log floor
  /// of the valley for toy2d.
  Vec single_task_optima() const {
    if (kind_ == ProblemKind::kToy2d) {
      const double floor = std::log(toy2d::kLower) + 6.0;
      return {floor, floor};
    }
    return Vec(quads_.size(), 0.0);
  }

 private:
  ProblemKind kind_ = ProblemKind::kQuadraticEnsemble;
  Layout layout_;
  std::vector<QuadraticTask> quads_;
};

inline Evaluation eval_tasks(const Problem& p, std::span<const double> theta) { return p.eval(theta); }

/// Min-norm point of the task-gradient hull at θ; a value near zero
/// certifies approximate Pareto stationarity.
inline StationarityReport pareto_stationarity(const Problem& p, std::span<const double> theta) {
  const Evaluation e = p.eval(theta);
  MinNormResult mn = min_norm_simplex(e.grads.all());
  return StationarityReport{mn.norm, std::move(mn.weights)};
}

// ---------------------------------------------------------------------------

struct EnsembleOptions {
  std::uint64_t seed = 0;
  std::size_t tasks = 2;
  /// Parameter shape; a single rows×cols block (cols == 1 for a vector).
  std::size_t rows = 2;
  std::size_t cols = 1;
  double condition = 10.0;
  double conflict_angle = std::numbers::pi / 2.0;
  /// All tasks share one curvature matrix.
  bool shared_curvature = false;
  /// Norm of every task gradient at the origin.
  double gradient_scale = 1.0;
};

namespace detail {

template <class Rng>
Mat random_spd(std::size_t n, double condition, Rng& rng) {
  Mat q = random_orthonormal(n, n, rng);
  Vec lambda(n, 1.0);
  for (std::size_t i = 0; i < n && n > 1; ++i)
    lambda[i] = std::pow(condition, static_cast<double>(i) / static_cast<double>(n - 1));
  Mat a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += q(i, k) * lambda[k] * q(j, k);
      a(i, j) = a(j, i) = s;
    }
  return a;
}

/// Solves A x = b for SPD A (Cholesky).
inline Vec spd_solve(const Mat& a, std::span<const double> b) {
  const std::size_t n = b.size();
  Mat l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    require(d > 0.0, "spd_solve: matrix not positive definite");
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  Vec y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  Vec x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
    x[ii] = s / l(ii, ii);
  }
  return x;
}

}  // namespace detail

/// Quadratic ensemble whose task gradients at the origin are unit-scaled
/// directions with pairwise angle exactly `conflict_angle`, and whose
/// curvatures have eigenvalues log-spaced on [1, condition].
inline Problem make_conflict_ensemble(const EnsembleOptions& opt) {
  const std::size_t k = opt.tasks;
  const std::size_t dim = opt.rows * opt.cols;
  require(k >= 2, "make_conflict_ensemble: need K >= 2");
  require(dim >= 2, "make_conflict_ensemble: need dim >= 2");
  require(opt.condition >= 1.0 && std::isfinite(opt.condition), "make_conflict_ensemble: condition must be >= 1");
  require(opt.conflict_angle >= 0.0 && opt.conflict_angle <= std::numbers::pi,
          "make_conflict_ensemble: angle must lie in [0, pi]");
  require(opt.gradient_scale > 0.0, "make_conflict_ensemble: gradient_scale must be > 0");

  // d_i = cosφ·c + sinφ·s_i with s_i the vertices of a regular simplex
  // (pairwise cosine −1/(K−1)) and c orthogonal to all of them.
  const double kk = static_cast<double>(k);
  const double cos_a = std::cos(opt.conflict_angle);
  const double floor_cos = -1.0 / (kk - 1.0);
  if (cos_a < floor_cos - 1e-12)
    fail(ErrorCode::kInvalidInput, "make_conflict_ensemble: angle exceeds the regular-simplex limit for K");
  const double cos2_phi = std::clamp((cos_a + 1.0 / (kk - 1.0)) * (kk - 1.0) / kk, 0.0, 1.0);
  const bool needs_common = cos2_phi > 1e-15;
  const std::size_t needed = needs_common ? k : k - 1;
  if (dim < needed)
    fail(ErrorCode::kInvalidInput, "make_conflict_ensemble: dimension too small for K and angle");

  // Orthonormal basis of the complement of the all-ones vector in R^K.
  std::vector<Vec> basis;
  for (std::size_t j = 0; basis.size() < k - 1; ++j) {
    Vec e(k, 0.0);
    e[j] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      const double m = std::accumulate(e.begin(), e.end(), 0.0) / kk;
      for (double& x : e) x -= m;
      for (const Vec& b : basis) axpy(-dot(e, b), b, e);
    }
    const double len = norm(e);
    if (len < 1e-8) continue;
    for (double& x : e) x /= len;
    basis.push_back(std::move(e));
  }

  std::mt19937_64 rng(opt.seed);
  const Mat embed = random_orthonormal(dim, needed, rng);
  const double cos_phi = std::sqrt(cos2_phi);
  const double sin_phi = std::sqrt(1.0 - cos2_phi);
  std::vector<Vec> dirs;
  for (std::size_t i = 0; i < k; ++i) {
    Vec vertex(k, -1.0 / kk);
    vertex[i] += 1.0;
    const double vlen = norm(vertex);
    Vec coords;
    if (needs_common) coords.push_back(cos_phi);
    for (const Vec& b : basis) coords.push_back(sin_phi * dot(vertex, b) / vlen);
    Vec d(dim, 0.0);
    for (std::size_t r = 0; r < dim; ++r)
      for (std::size_t c = 0; c < needed; ++c) d[r] += embed(r, c) * coords[c];
    for (double& x : d) x *= opt.gradient_scale;
    dirs.push_back(std::move(d));
  }

  std::vector<QuadraticTask> tasks;
  Mat shared;
  if (opt.shared_curvature) shared = detail::random_spd(dim, opt.condition, rng);
  for (std::size_t i = 0; i < k; ++i) {
    Mat a = opt.shared_curvature ? shared : detail::random_spd(dim, opt.condition, rng);
    // g_i(0) = A(0 − θ*) = d_i  ⇒  θ* = −A⁻¹d_i
    Vec center = detail::spd_solve(a, dirs[i]);
    for (double& x : center) x = -x;
    tasks.push_back(QuadraticTask{std::move(center), std::move(a)});
  }
  Layout layout({BlockShape{"W", opt.rows, opt.cols}});
  return Problem::quadratic(std::move(tasks), std::move(layout));
}

}  // namespace mtlopt
