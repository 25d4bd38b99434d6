// Copyright 2026 The mtlopt Authors
// SPDX-License-Identifier: Apache-2.0

// Update rules driven by an aggregated gradient G_t: SGD, Adam/AdamW and
// Muon, each with a static first-moment coefficient or the curvature-adaptive
// one (β_t interpolated from the cosine of adjacent combined gradients).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mtlopt/aggregators.hpp"
#include "mtlopt/blocks.hpp"
#include "mtlopt/error.hpp"
#include "mtlopt/linalg.hpp"

namespace mtlopt {

struct MomentumBounds {
  double beta_min = 0.1;
  double beta_max = 0.9;

  void validate() const {
    require(std::isfinite(beta_min) && std::isfinite(beta_max), "MomentumBounds: non-finite bound");
    require(0.0 <= beta_min && beta_min <= beta_max && beta_max < 1.0,
            "MomentumBounds: need 0 <= beta_min <= beta_max < 1");
  }
};

inline double beta_from_rho(double rho, const MomentumBounds& bounds) {
  return bounds.beta_min + (bounds.beta_max - bounds.beta_min) * std::clamp((rho + 1.0) / 2.0, 0.0, 1.0);
}

struct BetaChoice {
  double beta = 0.0;
  std::optional<double> rho;
};

/// β_t = β_min + (β_max − β_min)·clip((ρ+1)/2, 0, 1) with ρ = cos(G_t, G_{t−1}).
/// Without a usable previous gradient (first step, or a zero vector on either
/// side) ρ is undefined and β_max is returned.
inline BetaChoice adaptive_beta(std::span<const double> g_now,
                                std::optional<std::span<const double>> g_prev,
                                const MomentumBounds& bounds) {
  bounds.validate();
  if (!g_prev) return {bounds.beta_max, std::nullopt};
  const std::optional<double> rho = try_cosine(g_now, *g_prev);
  if (!rho) return {bounds.beta_max, std::nullopt};
  return {beta_from_rho(*rho, bounds), rho};
}

// ---------------------------------------------------------------------------

enum class OptimizerId { kSgd, kAdam, kAdamW, kMuon };

inline std::string_view to_string(OptimizerId id) {
  switch (id) {
    case OptimizerId::kSgd: return "sgd";
    case OptimizerId::kAdam: return "adam";
    case OptimizerId::kAdamW: return "adamw";
    case OptimizerId::kMuon: return "muon";
  }
  return "?";
}

inline std::optional<OptimizerId> parse_optimizer(std::string_view s) {
  for (OptimizerId id : {OptimizerId::kSgd, OptimizerId::kAdam, OptimizerId::kAdamW, OptimizerId::kMuon})
    if (to_string(id) == s) return id;
  return std::nullopt;
}

struct OptimizerConfig {
  OptimizerId id = OptimizerId::kAdam;
  double lr = 1e-4;
  double beta1 = 0.9;
  bool apt = false;
  MomentumBounds bounds;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  NewtonSchulzConfig ns;

  static OptimizerConfig defaults(OptimizerId id) {
    OptimizerConfig c;
    c.id = id;
    if (id == OptimizerId::kMuon) c.lr = 0.02;
    if (id == OptimizerId::kSgd) c.lr = 1e-2;
    return c;
  }

  void validate() const {
    require(std::isfinite(lr) && lr >= 0.0, "optimizer: lr must be finite and >= 0");
    require(std::isfinite(beta1) && beta1 >= 0.0 && beta1 < 1.0, "optimizer: beta1 must lie in [0, 1)");
    require(std::isfinite(beta2) && beta2 >= 0.0 && beta2 < 1.0, "optimizer: beta2 must lie in [0, 1)");
    require(std::isfinite(eps) && eps > 0.0, "optimizer: eps must be > 0");
    require(std::isfinite(weight_decay) && weight_decay >= 0.0, "optimizer: weight_decay must be >= 0");
    require(ns.iterations >= 1, "optimizer: ns iterations must be >= 1");
    bounds.validate();
  }
};

struct OptimizerState {
  std::uint64_t step = 0;
  Vec m;
  Vec v;
  std::optional<Vec> prev_combined;
  /// Running ∏ β_j; zero once any β_j = 0.
  double beta_product = 1.0;
  double last_beta = 0.0;

  static OptimizerState zeros(std::size_t n) {
    OptimizerState s;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    return s;
  }
};

struct StepReport {
  double beta_used = 0.0;
  std::optional<double> rho;
  double tracking_error_norm = 0.0;
  double update_norm = 0.0;
  bool degenerate_update = false;
};

namespace detail {

inline BetaChoice choose_beta(const OptimizerState& st, std::span<const double> g,
                              const OptimizerConfig& cfg) {
  if (!cfg.apt) return {cfg.beta1, std::nullopt};
  std::optional<std::span<const double>> prev;
  if (st.prev_combined) prev = std::span<const double>(*st.prev_combined);
  return adaptive_beta(g, prev, cfg.bounds);
}

inline void check_shapes(const OptimizerState& st, std::span<const double> params,
                         std::span<const double> g) {
  require(params.size() == g.size(), "optimizer step: parameter/gradient length mismatch");
  require(st.m.size() == params.size() && st.v.size() == params.size(),
          "optimizer step: state shape does not match parameters");
}

/// Advances the step counter, β_t and ∏β, and updates m in place.
inline BetaChoice advance_momentum(OptimizerState& st, std::span<const double> g,
                                   const OptimizerConfig& cfg) {
  const BetaChoice choice = choose_beta(st, g, cfg);
  const double beta = choice.beta;
  st.step += 1;
  st.beta_product *= beta;
  st.last_beta = beta;
  for (std::size_t i = 0; i < g.size(); ++i) st.m[i] = beta * st.m[i] + (1.0 - beta) * g[i];
  return choice;
}

inline double tracking_error(const OptimizerState& st, std::span<const double> g) {
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double d = st.m[i] - g[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// Adam moment update and parameter step on the index range [lo, hi).
/// Assumes m has already been updated for this step.
inline void adam_update_range(OptimizerState& st, std::span<double> params,
                              std::span<const double> g, const OptimizerConfig& cfg,
                              std::size_t lo, std::size_t hi) {
  const double rho1 = 1.0 - st.beta_product;
  const double rho2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t i = lo; i < hi; ++i) {
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double m_hat = st.m[i] / rho1;
    const double v_hat = st.v[i] / rho2;
    params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

inline void decoupled_decay(std::span<double> params, const OptimizerConfig& cfg, std::size_t lo,
                            std::size_t hi) {
  if (cfg.weight_decay == 0.0) return;
  const double f = 1.0 - cfg.lr * cfg.weight_decay;
  for (std::size_t i = lo; i < hi; ++i) params[i] *= f;
}

inline double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace detail

/// θ ← θ − η G.
inline void sgd_step(std::span<double> params, std::span<const double> g, double eta) {
  require(params.size() == g.size(), "sgd_step: length mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= eta * g[i];
}

/// Adam/AdamW step with bias corrections ρ₁ = 1 − ∏β_j and ρ₂ = 1 − β₂ᵗ.
/// Decoupled decay is applied first when cfg.id is kAdamW.
inline StepReport adam_step(OptimizerState& st, std::span<double> params, const AggregationResult& g,
                            const OptimizerConfig& cfg) {
  const std::span<const double> grad = g.combined;
  detail::check_shapes(st, params, grad);
  const Vec before(params.begin(), params.end());
  const BetaChoice choice = detail::advance_momentum(st, grad, cfg);
  if (cfg.id == OptimizerId::kAdamW) detail::decoupled_decay(params, cfg, 0, params.size());
  detail::adam_update_range(st, params, grad, cfg, 0, params.size());
  st.prev_combined = Vec(grad.begin(), grad.end());
  return StepReport{choice.beta, choice.rho, detail::tracking_error(st, grad),
                    detail::distance(before, params), false};
}

/// Muon step: per matrix block, O = NewtonSchulz(m_block) and θ ← θ − ηO.
/// Non-matrix blocks take the Adam update with the same η and β_t.
inline StepReport muon_step(OptimizerState& st, const Layout& layout, std::span<double> params,
                            const AggregationResult& g, const OptimizerConfig& cfg) {
  const std::span<const double> grad = g.combined;
  detail::check_shapes(st, params, grad);
  require(layout.total() == params.size(), "muon_step: layout does not match parameters");
  const Vec before(params.begin(), params.end());
  const BetaChoice choice = detail::advance_momentum(st, grad, cfg);
  bool degenerate = false;
  for (std::size_t b = 0; b < layout.block_count(); ++b) {
    const BlockShape& shape = layout.blocks()[b];
    const std::size_t lo = layout.offset(b);
    const std::size_t hi = lo + shape.size();
    detail::decoupled_decay(params, cfg, lo, hi);
    if (!shape.is_matrix()) {
      detail::adam_update_range(st, params, grad, cfg, lo, hi);
      continue;
    }
    const Mat momentum = layout.as_matrix(st.m, b);
    if (!(frobenius_norm(momentum) > 0.0)) {
      degenerate = true;
      continue;
    }
    const Mat ortho = newton_schulz(momentum, cfg.ns);
    for (std::size_t i = lo; i < hi; ++i) params[i] -= cfg.lr * ortho.data()[i - lo];
  }
  st.prev_combined = Vec(grad.begin(), grad.end());
  return StepReport{choice.beta, choice.rho, detail::tracking_error(st, grad),
                    detail::distance(before, params), degenerate};
}

// ---------------------------------------------------------------------------

/// One recorded step for tracking-error analysis.
struct MomentumTrace {
  double beta = 0.0;
  Vec combined;
  Vec momentum;
};

/// max_t ‖δ_t − β_t(δ_{t−1} + G_{t−1} − G_t)‖ with δ_t = m_t − G_t. The first
/// recorded step is the base case (its predecessor is not in the history).
inline double tracking_error_recursion_check(std::span<const MomentumTrace> history) {
  require(history.size() >= 2, "tracking_error_recursion_check: need at least two steps");
  double worst = 0.0;
  for (std::size_t t = 1; t < history.size(); ++t) {
    const MomentumTrace& now = history[t];
    const MomentumTrace& prev = history[t - 1];
    require(now.combined.size() == prev.combined.size() && now.momentum.size() == now.combined.size(),
            "tracking_error_recursion_check: inconsistent trace lengths");
    double s = 0.0;
    for (std::size_t i = 0; i < now.combined.size(); ++i) {
      const double delta_now = now.momentum[i] - now.combined[i];
      const double delta_prev = prev.momentum[i] - prev.combined[i];
      const double r = delta_now - now.beta * (delta_prev + prev.combined[i] - now.combined[i]);
      s += r * r;
    }
    worst = std::max(worst, std::sqrt(s));
  }
  return worst;
}

/// Running sums for the averaged tracking-error bound:
/// (1/T)Σ‖δ_t‖² against (1/T)Σβ_t²‖G_t − G_{t−1}‖², with G_0 = 0.
class TrackingMonitor {
 public:
  void observe(double beta, std::span<const double> combined, std::span<const double> momentum) {
    require(combined.size() == momentum.size(), "TrackingMonitor: length mismatch");
    if (prev_.empty()) prev_.assign(combined.size(), 0.0);
    double dd = 0.0;
    double gg = 0.0;
    for (std::size_t i = 0; i < combined.size(); ++i) {
      const double d = momentum[i] - combined[i];
      const double v = combined[i] - prev_[i];
      dd += d * d;
      gg += v * v;
    }
    delta_sq_ += dd;
    variation_sq_ += beta * beta * gg;
    prev_.assign(combined.begin(), combined.end());
    ++steps_;
  }

  std::size_t steps() const noexcept { return steps_; }
  double mean_delta_sq() const { return steps_ ? delta_sq_ / static_cast<double>(steps_) : 0.0; }
  double mean_variation_sq() const { return steps_ ? variation_sq_ / static_cast<double>(steps_) : 0.0; }

  /// Zero when no tracking error accumulated; +inf if error accrued with no
  /// gradient variation (cannot happen under the momentum recursion).
  double ratio() const {
    if (delta_sq_ == 0.0) return 0.0;
    if (variation_sq_ == 0.0) return std::numeric_limits<double>::infinity();
    return delta_sq_ / variation_sq_;
  }

  /// 4(β_max/(1−β_max))², the constant the monitor is checked against.
  static double bound_constant(double beta_max) {
    const double r = beta_max / (1.0 - beta_max);
    return 4.0 * r * r;
  }

 private:
  Vec prev_;
  double delta_sq_ = 0.0;
  double variation_sq_ = 0.0;
  std::size_t steps_ = 0;
};

// ---------------------------------------------------------------------------

/// Owns configuration and state for one parameter vector.
class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, Layout layout)
      : cfg_(std::move(cfg)), layout_(std::move(layout)), state_(OptimizerState::zeros(layout_.total())) {
    cfg_.validate();
    if (cfg_.id == OptimizerId::kAdam)
      require(cfg_.weight_decay == 0.0, "optimizer: adam takes no weight decay, use adamw");
  }

  StepReport step(std::span<double> params, const AggregationResult& g) {
    StepReport rep;
    switch (cfg_.id) {
      case OptimizerId::kSgd: {
        detail::check_shapes(state_, params, g.combined);
        const Vec before(params.begin(), params.end());
        sgd_step(params, g.combined, cfg_.lr);
        // Momentum-free: m_t = G_t, β_t = 0.
        state_.step += 1;
        state_.beta_product = 0.0;
        state_.last_beta = 0.0;
        state_.m = g.combined;
        state_.prev_combined = g.combined;
        rep.update_norm = detail::distance(before, params);
        break;
      }
      case OptimizerId::kAdam:
      case OptimizerId::kAdamW: rep = adam_step(state_, params, g, cfg_); break;
      case OptimizerId::kMuon: rep = muon_step(state_, layout_, params, g, cfg_); break;
    }
    monitor_.observe(state_.last_beta, g.combined, state_.m);
    if (record_history_) history_.push_back(MomentumTrace{state_.last_beta, g.combined, state_.m});
    return rep;
  }

  void record_history(bool on) { record_history_ = on; }
  const std::vector<MomentumTrace>& history() const noexcept { return history_; }
  const TrackingMonitor& monitor() const noexcept { return monitor_; }
  const OptimizerState& state() const noexcept { return state_; }
  const OptimizerConfig& config() const noexcept { return cfg_; }
  void set_lr(double lr) {
    require(std::isfinite(lr) && lr >= 0.0, "optimizer: lr must be finite and >= 0");
    cfg_.lr = lr;
  }
  /// Upper momentum coefficient in effect: β_max under APT, else β₁.
  double effective_beta_max() const {
    if (cfg_.id == OptimizerId::kSgd) return 0.0;
    return cfg_.apt ? cfg_.bounds.beta_max : cfg_.beta1;
  }

 private:
  OptimizerConfig cfg_;
  Layout layout_;
  OptimizerState state_;
  TrackingMonitor monitor_;
  bool record_history_ = false;
  std::vector<MomentumTrace> history_;
};

}  // namespace mtlopt
