// Copyright 2026 The mtlopt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtlopt/error.hpp"
#include "mtlopt/linalg.hpp"

namespace mtlopt {

/// A named parameter block. Vectors and scalars use cols == 1.
struct BlockShape {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 1;

  std::size_t size() const noexcept { return rows * cols; }
  bool is_matrix() const noexcept { return rows > 1 && cols > 1; }

  friend bool operator==(const BlockShape&, const BlockShape&) = default;
};

/// Ordered parameter blocks laid out back to back in one flat vector.
class Layout {
 public:
  Layout() = default;

  explicit Layout(std::vector<BlockShape> blocks) : blocks_(std::move(blocks)) {
    require(!blocks_.empty(), "Layout: need at least one block");
    offsets_.reserve(blocks_.size());
    for (const BlockShape& b : blocks_) {
      require(b.size() > 0, "Layout: empty block '" + b.name + "'");
      offsets_.push_back(total_);
      total_ += b.size();
    }
  }

  static Layout flat(std::size_t n, std::string name = "theta") {
    return Layout({BlockShape{std::move(name), n, 1}});
  }

  const std::vector<BlockShape>& blocks() const noexcept { return blocks_; }
  std::size_t block_count() const noexcept { return blocks_.size(); }
  std::size_t total() const noexcept { return total_; }
  std::size_t offset(std::size_t b) const { return offsets_.at(b); }

  template <class T>
  std::span<T> slice(std::span<T> flat, std::size_t b) const {
    require(flat.size() == total_, "Layout::slice: flat length mismatch");
    return flat.subspan(offsets_.at(b), blocks_.at(b).size());
  }

  Mat as_matrix(std::span<const double> flat, std::size_t b) const {
    const auto s = slice(flat, b);
    return Mat(blocks_[b].rows, blocks_[b].cols, Vec(s.begin(), s.end()));
  }

  friend bool operator==(const Layout& a, const Layout& b) { return a.blocks_ == b.blocks_; }

 private:
  std::vector<BlockShape> blocks_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

/// Per-task gradients over a shared block layout, stored flattened.
class TaskGradients {
 public:
  TaskGradients(Layout layout, std::vector<Vec> grads)
      : layout_(std::move(layout)), grads_(std::move(grads)) {
    require(!grads_.empty(), "TaskGradients: need at least one task");
    for (const Vec& g : grads_) {
      require(g.size() == layout_.total(), "TaskGradients: gradient length must match layout");
      require(all_finite(g), "TaskGradients: non-finite gradient");
    }
  }

  /// Single flat block of length equal to the gradients.
  static TaskGradients flat(std::vector<Vec> grads) {
    require(!grads.empty(), "TaskGradients: need at least one task");
    const std::size_t n = grads.front().size();
    return TaskGradients(Layout::flat(n), std::move(grads));
  }

  std::size_t tasks() const noexcept { return grads_.size(); }
  std::size_t dimension() const noexcept { return layout_.total(); }
  const Layout& layout() const noexcept { return layout_; }
  const std::vector<Vec>& all() const noexcept { return grads_; }
  std::span<const double> task(std::size_t i) const { return grads_.at(i); }

  std::span<const double> block(std::size_t i, std::size_t b) const {
    return layout_.slice(std::span<const double>(grads_.at(i)), b);
  }

  Mat block_matrix(std::size_t i, std::size_t b) const {
    return layout_.as_matrix(grads_.at(i), b);
  }

  Vec mean() const {
    Vec out(dimension(), 0.0);
    const double inv = 1.0 / static_cast<double>(tasks());
    for (const Vec& g : grads_) axpy(inv, g, out);
    return out;
  }

  TaskGradients permuted(std::span<const std::size_t> perm) const {
    require(perm.size() == tasks(), "TaskGradients::permuted: bad permutation");
    std::vector<Vec> g;
    g.reserve(perm.size());
    for (std::size_t p : perm) g.push_back(grads_.at(p));
    return TaskGradients(layout_, std::move(g));
  }

 private:
  Layout layout_;
  std::vector<Vec> grads_;
};

}  // namespace mtlopt
