// Copyright 2026 The mtlopt Authors
// SPDX-License-Identifier: Apache-2.0

// Measurements on combined gradients and updates: per-task similarity and
// projection profiles, spectral effective rank, projections of G and its
// polar factor onto task gradients, and benchmark aggregates (Δm%, mean rank).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "mtlopt/aggregators.hpp"
#include "mtlopt/blocks.hpp"
#include "mtlopt/error.hpp"
#include "mtlopt/linalg.hpp"

namespace mtlopt {

struct DiagnosticsRecord {
  std::size_t step = 0;
  std::vector<std::optional<double>> cos_combined_vs_task;
  Vec proj_norms;
  std::optional<double> proj_norm_ratio;
  bool proj_sign_mixed = false;
  std::vector<std::optional<double>> effective_rank;
  double beta = 0.0;
  std::optional<double> rho;
  double tracking_error = 0.0;
};

/// cos(combined, g_i) for every task.
inline Vec similarity_profile(std::span<const double> combined, const TaskGradients& tg) {
  require(combined.size() == tg.dimension(), "similarity_profile: length mismatch");
  Vec out(tg.tasks());
  for (std::size_t i = 0; i < tg.tasks(); ++i) out[i] = cosine(combined, tg.task(i));
  return out;
}

struct ProjectionProfile {
  Vec projections;
  /// max p / min p, present only when every projection is positive.
  std::optional<double> ratio;
  bool sign_mixed = false;
};

/// Scalar projections p_i = ⟨update, g_i⟩/‖g_i‖.
inline ProjectionProfile projection_profile(std::span<const double> update, const TaskGradients& tg) {
  require(update.size() == tg.dimension(), "projection_profile: length mismatch");
  ProjectionProfile out;
  out.projections.resize(tg.tasks());
  for (std::size_t i = 0; i < tg.tasks(); ++i) {
    const double n = norm(tg.task(i));
    if (!(n > 0.0))
      fail(ErrorCode::kUndefinedProjection, "projection_profile: task " + std::to_string(i) + " gradient is zero", i);
    out.projections[i] = dot(update, tg.task(i)) / n;
  }
  const auto [lo, hi] = std::minmax_element(out.projections.begin(), out.projections.end());
  if (*lo > 0.0) {
    out.ratio = *hi / *lo;
  } else {
    out.sign_mixed = true;
  }
  return out;
}

/// exp of the entropy of p_k = σ_k/Σσ over the non-zero singular values.
/// With q_k = σ_k/σ_max and S = Σq this equals S·exp(−Σ (q_k/S) ln q_k),
/// which is exact for equal singular values (every ln q_k is 0).
inline double effective_rank(const Mat& a) {
  const SvdResult s = svd(a);
  if (s.sigma.empty() || !(s.sigma.front() > 0.0))
    fail(ErrorCode::kUndefinedRank, "effective_rank: zero matrix");
  const double top = s.sigma.front();
  // Singular values at rounding level of σ_max count as zero.
  const double cut = 1e-14 * top;
  double total = 0.0;
  for (double x : s.sigma)
    if (x > cut) total += x / top;
  double weighted_log = 0.0;
  for (double x : s.sigma) {
    if (!(x > cut)) continue;
    const double q = x / top;
    weighted_log += q * std::log(q);
  }
  return total * std::exp(-weighted_log / total);
}

struct MuonProjection {
  Vec sigma;
  /// P_i(G) = ⟨G, g_i⟩_F
  Vec p_g;
  /// P_i(O) = ⟨O, g_i⟩_F with O the exact polar factor of G
  Vec p_o;
  /// alpha[i][k] = ⟨g_i, u_k v_kᵀ⟩_F
  std::vector<Vec> alpha;
};

inline MuonProjection muon_projection_pair(const Mat& g, std::span<const Mat> task_grads) {
  for (const Mat& t : task_grads)
    require(t.rows() == g.rows() && t.cols() == g.cols(), "muon_projection_pair: shape mismatch");
  const SvdResult s = svd(g);
  if (numerical_rank(s, 1e-12) < s.sigma.size())
    fail(ErrorCode::kDegeneratePolar, "muon_projection_pair: G is rank deficient", numerical_rank(s, 1e-12));
  const Mat o = matmul(s.u, s.vt);
  MuonProjection out;
  out.sigma = s.sigma;
  const std::size_t r = s.sigma.size();
  for (const Mat& t : task_grads) {
    out.p_g.push_back(frobenius_inner(g, t));
    out.p_o.push_back(frobenius_inner(o, t));
    Vec alpha(r);
    // ⟨g_i, u_k v_kᵀ⟩_F = u_kᵀ g_i v_k
    for (std::size_t k = 0; k < r; ++k) {
      double acc = 0.0;
      for (std::size_t row = 0; row < t.rows(); ++row) {
        double tv = 0.0;
        for (std::size_t col = 0; col < t.cols(); ++col) tv += t(row, col) * s.vt(k, col);
        acc += s.u(row, k) * tv;
      }
      alpha[k] = acc;
    }
    out.alpha.push_back(std::move(alpha));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct BenchmarkScores {
  Vec method;
  Vec baseline;
  /// true where a larger metric is better (δ_k = 1).
  std::vector<bool> higher_better;
};

/// (1/K)Σ (−1)^{δ_k}(M_m,k − M_b,k)/M_b,k × 100. Negative means the method
/// beats the baselines.
inline double delta_m(const BenchmarkScores& s) {
  const std::size_t k = s.method.size();
  require(k > 0 && s.baseline.size() == k && s.higher_better.size() == k,
          "delta_m: method, baseline and direction lengths must match");
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    require(s.baseline[i] != 0.0, "delta_m: zero baseline for metric " + std::to_string(i));
    const double rel = (s.method[i] - s.baseline[i]) / s.baseline[i];
    total += (s.higher_better[i] ? -rel : rel);
  }
  return total / static_cast<double>(k) * 100.0;
}

/// Per-method mean over metrics of the rank within each metric column
/// (1 = best, ties share the average of their ranks). `table[m][j]` is the
/// score of method m on metric j; NaN marks a missing entry.
inline Vec mean_rank(const std::vector<Vec>& table, const std::vector<bool>& higher_better) {
  require(!table.empty(), "mean_rank: need at least one method");
  const std::size_t metrics = higher_better.size();
  require(metrics > 0, "mean_rank: need at least one metric");
  for (const Vec& row : table) {
    require(row.size() == metrics, "mean_rank: every method needs a score per metric");
    for (double x : row) require(std::isfinite(x), "mean_rank: missing or non-finite entry");
  }
  const std::size_t n = table.size();
  Vec sums(n, 0.0);
  std::vector<std::size_t> order(n);
  for (std::size_t j = 0; j < metrics; ++j) {
    std::iota(order.begin(), order.end(), 0);
    auto better = [&](std::size_t a, std::size_t b) {
      return higher_better[j] ? table[a][j] > table[b][j] : table[a][j] < table[b][j];
    };
    std::stable_sort(order.begin(), order.end(), better);
    std::size_t pos = 0;
    while (pos < n) {
      std::size_t end = pos + 1;
      while (end < n && table[order[end]][j] == table[order[pos]][j]) ++end;
      // positions pos..end-1 share ranks pos+1..end
      const double avg = (static_cast<double>(pos + 1) + static_cast<double>(end)) / 2.0;
      for (std::size_t q = pos; q < end; ++q) sums[order[q]] += avg;
      pos = end;
    }
  }
  for (double& x : sums) x /= static_cast<double>(metrics);
  return sums;
}

}  // namespace mtlopt
