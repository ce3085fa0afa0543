#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "motionseg/common.hpp"

namespace motionseg {

/// Uniform voxel hash over row-major point data of arbitrary dimension.
///
/// Only the first min(dim, 3) coordinates are hashed; distances always use all
/// coordinates, so every query stays exact (projected distance never exceeds the
/// full distance). Nearest-neighbor queries expand Chebyshev rings of cells until
/// the next ring is strictly farther than the current k-th hit, and fall back to a
/// linear scan once a ring would cost more cell lookups than there are points.
class VoxelGrid {
 public:
  VoxelGrid(std::span<const double> data, int dim, double cell_size)
      : data_(data), dim_(dim), hashed_dims_(std::min(dim, 3)), cell_(cell_size) {
    if (dim <= 0 || cell_size <= 0.0) throw ConfigError("VoxelGrid: dim and cell size must be positive");
    n_ = static_cast<int>(data.size() / static_cast<std::size_t>(dim));
    std::vector<std::pair<std::uint64_t, int>> keyed(n_);
    for (int i = 0; i < n_; ++i) keyed[i] = {key_of(cell_of(point(i))), i};
    std::sort(keyed.begin(), keyed.end());
    order_.resize(n_);
    for (int i = 0; i < n_; ++i) {
      order_[i] = keyed[i].second;
      if (i == 0 || keyed[i].first != keyed[i - 1].first) {
        cells_.emplace(keyed[i].first, std::pair<int, int>{i, 1});
      } else {
        ++cells_[keyed[i].first].second;
      }
    }
  }

  int size() const { return n_; }
  int dim() const { return dim_; }

  std::span<const double> point(int i) const {
    return data_.subspan(static_cast<std::size_t>(i) * dim_, static_cast<std::size_t>(dim_));
  }

  double squared_distance(std::span<const double> q, int i) const {
    const auto p = point(i);
    double d = 0.0;
    for (int a = 0; a < dim_; ++a) {
      const double t = q[a] - p[a];
      d += t * t;
    }
    return d;
  }

  /// Exact k nearest neighbors of q as (squared distance, index), sorted by
  /// distance then index. `exclude` (e.g. the query's own index) is skipped.
  std::vector<std::pair<double, int>> knn(std::span<const double> q, int k, int exclude = -1) const {
    std::vector<std::pair<double, int>> best;
    const int available = n_ - ((exclude >= 0 && exclude < n_) ? 1 : 0);
    k = std::min(k, available);
    if (k <= 0) return best;
    best.reserve(static_cast<std::size_t>(k) + 1);
    auto offer = [&](int idx) {
      if (idx == exclude) return;
      const std::pair<double, int> cand{squared_distance(q, idx), idx};
      if (static_cast<int>(best.size()) == k && !(cand < best.back())) return;
      best.insert(std::upper_bound(best.begin(), best.end(), cand), cand);
      if (static_cast<int>(best.size()) > k) best.pop_back();
    };
    const auto c = cell_of(q);
    int visited = 0;
    for (int r = 0;; ++r) {
      const long long side = 2LL * r + 1;
      long long ring_cells = side;
      for (int a = 1; a < hashed_dims_; ++a) ring_cells *= side;
      if (r > 0 && ring_cells > 4LL * n_ + 64) {
        best.clear();
        for (int i = 0; i < n_; ++i) offer(i);
        return best;
      }
      visit_ring(c, r, [&](int start, int count) {
        for (int s = start; s < start + count; ++s) offer(order_[s]);
        visited += count;
      });
      if (visited >= n_) break;
      if (static_cast<int>(best.size()) == k) {
        const double bound = r * cell_;
        if (best.back().first < bound * bound) break;
      }
    }
    return best;
  }

  /// Nearest neighbor (squared distance, index); index -1 if the grid is empty.
  std::pair<double, int> nearest(std::span<const double> q, int exclude = -1) const {
    auto r = knn(q, 1, exclude);
    if (r.empty()) return {std::numeric_limits<double>::infinity(), -1};
    return r.front();
  }

  /// All indices within distance eps of q (inclusive), in ascending index order.
  std::vector<int> radius(std::span<const double> q, double eps) const {
    std::vector<int> out;
    const double eps2 = eps * eps;
    const int rings = static_cast<int>(std::ceil(eps / cell_));
    const auto c = cell_of(q);
    for (int r = 0; r <= rings; ++r) {
      visit_ring(c, r, [&](int start, int count) {
        for (int s = start; s < start + count; ++s) {
          const int idx = order_[s];
          if (squared_distance(q, idx) <= eps2) out.push_back(idx);
        }
      });
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  using Cell = std::array<long long, 3>;

  Cell cell_of(std::span<const double> p) const {
    Cell c{0, 0, 0};
    for (int a = 0; a < hashed_dims_; ++a) c[a] = static_cast<long long>(std::floor(p[a] / cell_));
    return c;
  }

  static std::uint64_t key_of(const Cell& c) {
    constexpr long long offset = 1LL << 20;
    constexpr std::uint64_t mask = (1ULL << 21) - 1;
    std::uint64_t k = 0;
    for (int a = 0; a < 3; ++a) k = (k << 21) | (static_cast<std::uint64_t>(c[a] + offset) & mask);
    return k;
  }

  template <typename Fn>
  void visit_cell(const Cell& c, Fn&& fn) const {
    const auto it = cells_.find(key_of(c));
    if (it != cells_.end()) fn(it->second.first, it->second.second);
  }

  // Visits every occupied cell at Chebyshev distance exactly r from c.
  template <typename Fn>
  void visit_ring(const Cell& c, int r, Fn&& fn) const {
    const int rz = hashed_dims_ >= 3 ? r : 0;
    const int ry = hashed_dims_ >= 2 ? r : 0;
    for (int dx = -r; dx <= r; ++dx) {
      for (int dy = -ry; dy <= ry; ++dy) {
        const bool on_shell_xy = std::abs(dx) == r || (hashed_dims_ >= 2 && std::abs(dy) == r);
        if (hashed_dims_ < 3) {
          if (on_shell_xy) visit_cell(Cell{c[0] + dx, c[1] + dy, 0}, fn);
        } else if (on_shell_xy) {
          for (int dz = -rz; dz <= rz; ++dz) visit_cell(Cell{c[0] + dx, c[1] + dy, c[2] + dz}, fn);
        } else {
          visit_cell(Cell{c[0] + dx, c[1] + dy, c[2] - rz}, fn);
          visit_cell(Cell{c[0] + dx, c[1] + dy, c[2] + rz}, fn);
        }
      }
    }
  }

  std::span<const double> data_;
  int dim_;
  int hashed_dims_;
  double cell_;
  int n_ = 0;
  std::vector<int> order_;
  std::unordered_map<std::uint64_t, std::pair<int, int>> cells_;
};

}  // namespace motionseg
