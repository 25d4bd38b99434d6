// Copyright 2026 The mtlopt Authors
// SPDX-License-Identifier: Apache-2.0

// Gradient aggregators: turn K task gradients into one combined direction.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtlopt/blocks.hpp"
#include "mtlopt/error.hpp"
#include "mtlopt/linalg.hpp"

namespace mtlopt {

enum class AggregatorId { kLs, kPcgrad, kMgda, kCagrad, kLdp };

inline std::string_view to_string(AggregatorId id) {
  switch (id) {
    case AggregatorId::kLs: return "ls";
    case AggregatorId::kPcgrad: return "pcgrad";
    case AggregatorId::kMgda: return "mgda";
    case AggregatorId::kCagrad: return "cagrad";
    case AggregatorId::kLdp: return "ldp";
  }
  return "?";
}

inline std::optional<AggregatorId> parse_aggregator(std::string_view s) {
  for (AggregatorId id : {AggregatorId::kLs, AggregatorId::kPcgrad, AggregatorId::kMgda,
                          AggregatorId::kCagrad, AggregatorId::kLdp})
    if (to_string(id) == s) return id;
  return std::nullopt;
}

struct AggregationResult {
  AggregatorId method = AggregatorId::kLs;
  Vec combined;
  /// Per-task weights such that combined = Σ weights_i g_i. Absent for
  /// PCGrad and for per-block LDP (see block_weights).
  std::optional<Vec> weights;
  /// Per-block task weights, filled only by per-block LDP.
  std::vector<Vec> block_weights;
  /// PCGrad: a zero task gradient was skipped as a projection target.
  bool skipped_zero_task = false;
  /// CAGrad: ‖g_w‖ = 0, the mean gradient was returned unchanged.
  bool degenerate = false;
};

struct LdpConfig {
  double xi = 4.0;
  bool per_block = false;
};

// ---------------------------------------------------------------------------

/// Cosine similarity clamped to [-1, 1]; throws kUndefinedCosine on a zero
/// argument.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) fail(ErrorCode::kUndefinedCosine, "cosine of a zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

/// Cosine or nullopt when either vector is zero.
inline std::optional<double> try_cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) return std::nullopt;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------

inline AggregationResult ls_aggregate(const TaskGradients& tg) {
  const std::size_t k = tg.tasks();
  return AggregationResult{AggregatorId::kLs, tg.mean(), Vec(k, 1.0 / static_cast<double>(k)), {},
                           false, false};
}

/// Gradient surgery: each task gradient is projected off the normal plane of
/// every other task gradient it conflicts with, visiting the others in a
/// seeded random order. The combined direction is the mean.
inline AggregationResult pcgrad(const TaskGradients& tg, std::uint64_t seed) {
  const std::size_t k = tg.tasks();
  require(k >= 2, "pcgrad: need at least two tasks");
  std::mt19937_64 rng(seed);
  std::vector<double> sq(k);
  for (std::size_t j = 0; j < k; ++j) sq[j] = dot(tg.task(j), tg.task(j));

  AggregationResult out{AggregatorId::kPcgrad, Vec(tg.dimension(), 0.0), std::nullopt, {}, false, false};
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < k; ++i) {
    Vec gi(tg.task(i).begin(), tg.task(i).end());
    order.clear();
    for (std::size_t j = 0; j < k; ++j)
      if (j != i) order.push_back(j);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t j : order) {
      if (!(sq[j] > 0.0)) {
        out.skipped_zero_task = true;
        continue;
      }
      const double d = dot(gi, tg.task(j));
      if (d < 0.0) axpy(-d / sq[j], tg.task(j), gi);
    }
    axpy(1.0 / static_cast<double>(k), gi, out.combined);
  }
  return out;
}

inline AggregationResult mgda(const TaskGradients& tg, const MinNormConfig& cfg = {}) {
  MinNormResult mn = min_norm_simplex(tg.all(), cfg);
  return AggregationResult{AggregatorId::kMgda, std::move(mn.combined), mn.weights.weights(), {},
                           false, false};
}

struct CagradConfig {
  double c = 0.4;
  int iterations = 500;
};

/// Objective of the CAGrad inner problem, g_wᵀg₀ + √φ‖g_w‖, written in terms
/// of the task Gram matrix.
inline double cagrad_objective(std::span<const Vec> gram, std::span<const double> w, double sqrt_phi) {
  const std::size_t k = w.size();
  double lin = 0.0;
  double quad = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double row = 0.0;
    double mean_row = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      row += gram[i][j] * w[j];
      mean_row += gram[i][j];
    }
    lin += w[i] * mean_row / static_cast<double>(k);
    quad += w[i] * row;
  }
  return lin + sqrt_phi * std::sqrt(std::max(quad, 0.0));
}

/// Conflict-averse gradient: min over the simplex of g_wᵀg₀ + √φ‖g_w‖ with
/// φ = c²‖g₀‖², solved by projected gradient descent with backtracking;
/// returns d = g₀ + (√φ/‖g_w‖) g_w.
inline AggregationResult cagrad(const TaskGradients& tg, const CagradConfig& cfg = {}) {
  const std::size_t k = tg.tasks();
  require(k >= 2, "cagrad: need at least two tasks");
  require(cfg.c >= 0.0 && cfg.c < 1.0, "cagrad: c must lie in [0, 1)");

  const Vec g0 = tg.mean();
  const double sqrt_phi = cfg.c * norm(g0);
  const auto gram = detail::gram(tg.all());

  Vec w(k, 1.0 / static_cast<double>(k));
  if (sqrt_phi > 0.0) {
    double trace = 0.0;
    for (std::size_t i = 0; i < k; ++i) trace += gram[i][i];
    double step = trace > 0.0 ? 1.0 / trace : 1.0;
    double fw = cagrad_objective(gram, w, sqrt_phi);
    Vec grad(k), trial(k), aw(k);
    for (int it = 0; it < cfg.iterations; ++it) {
      double quad = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        aw[i] = dot(gram[i], w);
        quad += w[i] * aw[i];
      }
      const double gw_norm = std::sqrt(std::max(quad, 0.0));
      for (std::size_t i = 0; i < k; ++i) {
        double mean_row = 0.0;
        for (std::size_t j = 0; j < k; ++j) mean_row += gram[i][j];
        grad[i] = mean_row / static_cast<double>(k) + (gw_norm > 0.0 ? sqrt_phi * aw[i] / gw_norm : 0.0);
      }
      bool accepted = false;
      for (int bt = 0; bt < 60; ++bt) {
        for (std::size_t i = 0; i < k; ++i) trial[i] = w[i] - step * grad[i];
        Vec proj = project_to_simplex(trial);
        double moved = 0.0;
        double lin = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
          const double d = proj[i] - w[i];
          moved += d * d;
          lin += grad[i] * d;
        }
        const double fp = cagrad_objective(gram, proj, sqrt_phi);
        if (fp <= fw + lin + moved / (2.0 * step) + 1e-15 * std::abs(fw)) {
          accepted = moved > 0.0 && fp < fw;
          if (accepted) {
            w = std::move(proj);
            fw = fp;
          }
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
      step *= 1.5;
    }
  }

  Vec gw = combine(tg.all(), w);
  const double gw_norm = norm(gw);
  AggregationResult out{AggregatorId::kCagrad, g0, Vec(k, 1.0 / static_cast<double>(k)), {}, false, false};
  if (!(gw_norm > 0.0)) {
    out.degenerate = true;
    return out;
  }
  const double lambda = sqrt_phi / gw_norm;
  axpy(lambda, gw, out.combined);
  for (std::size_t i = 0; i < k; ++i) (*out.weights)[i] += lambda * w[i];
  return out;
}

namespace detail {

/// Normalized LDP gates for one set of task vectors; Σ ω = K.
inline Vec ldp_gates(const std::vector<std::span<const double>>& g, double xi) {
  const std::size_t k = g.size();
  Vec anchor(g.front().size(), 0.0);
  for (const auto& gi : g) axpy(1.0 / static_cast<double>(k), gi, anchor);
  if (!(norm(anchor) > 0.0))
    fail(ErrorCode::kUndefinedCosine, "ldp: mean gradient (anchor) is zero");
  Vec w(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!(norm(g[i]) > 0.0))
      fail(ErrorCode::kUndefinedCosine, "ldp: task " + std::to_string(i) + " has a zero gradient", i);
    w[i] = sigmoid(xi * cosine(g[i], anchor));
    total += w[i];
  }
  for (double& x : w) x = static_cast<double>(k) * x / total;
  return w;
}

}  // namespace detail

/// Light direction preservation: gate each task by the sigmoid of its
/// cosine to the mean gradient, renormalize gates to sum to K, and sum.
inline AggregationResult ldp(const TaskGradients& tg, const LdpConfig& cfg = {}) {
  require(std::isfinite(cfg.xi) && cfg.xi > 0.0, "ldp: xi must be finite and > 0");
  const std::size_t k = tg.tasks();
  AggregationResult out{AggregatorId::kLdp, Vec(tg.dimension(), 0.0), std::nullopt, {}, false, false};
  if (!cfg.per_block) {
    std::vector<std::span<const double>> g;
    for (std::size_t i = 0; i < k; ++i) g.push_back(tg.task(i));
    Vec w = detail::ldp_gates(g, cfg.xi);
    out.combined = combine(tg.all(), w);
    out.weights = std::move(w);
    return out;
  }
  const Layout& layout = tg.layout();
  for (std::size_t b = 0; b < layout.block_count(); ++b) {
    std::vector<std::span<const double>> g;
    for (std::size_t i = 0; i < k; ++i) g.push_back(tg.block(i, b));
    Vec w = detail::ldp_gates(g, cfg.xi);
    auto dst = layout.slice(std::span<double>(out.combined), b);
    for (std::size_t i = 0; i < k; ++i) axpy(w[i], g[i], dst);
    out.block_weights.push_back(std::move(w));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct AggregatorConfig {
  AggregatorId id = AggregatorId::kLs;
  CagradConfig cagrad;
  LdpConfig ldp;
  MinNormConfig min_norm;
  std::uint64_t seed = 0;
};

/// Dispatch by id. `step` decorrelates the PCGrad shuffle across steps while
/// keeping it a pure function of (seed, step).
inline AggregationResult aggregate(const TaskGradients& tg, const AggregatorConfig& cfg,
                                   std::uint64_t step = 0) {
  switch (cfg.id) {
    case AggregatorId::kLs: return ls_aggregate(tg);
    case AggregatorId::kPcgrad: {
      std::seed_seq seq{cfg.seed, step};
      std::uint64_t s = 0;
      std::uint32_t words[2];
      seq.generate(words, words + 2);
      s = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
      return pcgrad(tg, s);
    }
    case AggregatorId::kMgda: return mgda(tg, cfg.min_norm);
    case AggregatorId::kCagrad: return cagrad(tg, cfg.cagrad);
    case AggregatorId::kLdp: return ldp(tg, cfg.ldp);
  }
  fail(ErrorCode::kInvalidInput, "aggregate: unknown aggregator");
}

}  // namespace mtlopt
