#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <tuple>
#include <vector>

#include "motionseg/common.hpp"
#include "motionseg/config_fields.hpp"
#include "motionseg/graph.hpp"

namespace motionseg {

enum class ClusterMode { signed_weights, prune_then_cc };

template <>
struct EnumNames<ClusterMode> {
  static constexpr std::array<std::pair<ClusterMode, std::string_view>, 2> values{{
      {ClusterMode::signed_weights, "signed"},
      {ClusterMode::prune_then_cc, "prune-then-cc"},
  }};
};

inline constexpr double kLogitClamp = 13.8;

/// Undirected edge with i < j.
struct WeightedEdge {
  int i = 0;
  int j = 0;
  double score = 0.0;
};

/// One undirected edge per unordered pair, weighted by the mean of the directed scores present.
inline std::vector<WeightedEdge> symmetrize(std::span<const Edge> edges, std::span<const double> scores) {
  if (edges.size() != scores.size()) throw ShapeError("symmetrize: edge and score counts differ");
  std::map<std::pair<int, int>, std::pair<double, int>> acc;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    auto [a, b] = edges[e];
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    auto& slot = acc[{a, b}];
    slot.first += scores[e];
    slot.second += 1;
  }
  std::vector<WeightedEdge> out;
  out.reserve(acc.size());
  for (const auto& [key, v] : acc) out.push_back({key.first, key.second, v.first / v.second});
  return out;
}

inline double logit_weight(double score) {
  if (!(score > 0.0)) return -kLogitClamp;
  if (!(score < 1.0)) return kLogitClamp;
  return std::clamp(std::log(score) - std::log1p(-score), -kLogitClamp, kLogitClamp);
}

/// Greedy additive edge contraction. Returns, per node, the id of its cluster
/// (the smallest node index in the cluster).
inline std::vector<int> correlation_cluster(int n, std::span<const WeightedEdge> edges,
                                            ClusterMode mode = ClusterMode::signed_weights) {
  std::vector<int> parent(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) parent[i] = i;
  std::vector<std::map<int, double>> adj(static_cast<std::size_t>(n));
  for (const auto& e : edges) {
    if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n) throw ShapeError("correlation_cluster: edge endpoint out of range");
    if (e.i == e.j) continue;
    if (mode == ClusterMode::prune_then_cc && e.score < 0.5) continue;
    const double w = logit_weight(e.score);
    adj[e.i][e.j] += w;
    adj[e.j][e.i] += w;
  }
  // ordered by (-weight, lo, hi): the front is the best merge
  using Key = std::tuple<double, int, int>;
  std::set<Key> heap;
  for (int a = 0; a < n; ++a) {
    for (const auto& [b, w] : adj[a]) {
      if (a < b && w > 0.0) heap.insert({-w, a, b});
    }
  }
  while (!heap.empty()) {
    const auto [negw, a, b] = *heap.begin();
    heap.erase(heap.begin());
    // merge b into a (a < b)
    for (const auto& [c, w] : adj[a]) {
      if (w > 0.0) heap.erase({-w, std::min(a, c), std::max(a, c)});
    }
    for (const auto& [c, w] : adj[b]) {
      if (w > 0.0) heap.erase({-w, std::min(b, c), std::max(b, c)});
      if (c == a) continue;
      auto& cb = adj[c];
      cb.erase(b);
      cb[a] += w;
      adj[a][c] += w;
    }
    adj[a].erase(b);
    adj[b].clear();
    parent[b] = a;
    for (const auto& [c, w] : adj[a]) {
      adj[c][a] = w;
      if (w > 0.0) heap.insert({-w, std::min(a, c), std::max(a, c)});
    }
  }
  std::vector<int> label(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    int r = i;
    while (parent[r] != r) r = parent[r];
    label[i] = r;
  }
  return label;
}

/// Sum of weights of edges whose endpoints share a cluster.
inline double correlation_objective(std::span<const int> labels, std::span<const WeightedEdge> edges,
                                    ClusterMode mode = ClusterMode::signed_weights) {
  double total = 0.0;
  for (const auto& e : edges) {
    if (mode == ClusterMode::prune_then_cc && e.score < 0.5) continue;
    if (labels[e.i] == labels[e.j]) total += logit_weight(e.score);
  }
  return total;
}

struct SegmentationResult {
  std::vector<std::vector<int>> clusters;
  std::vector<int> unassigned;
};

/// Groups a labeling into clusters ordered by smallest member; singletons become unassigned.
inline SegmentationResult finalize(std::span<const int> labels) {
  std::map<int, std::vector<int>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(static_cast<int>(i));
  std::vector<std::vector<int>> ordered;
  for (auto& [id, members] : groups) ordered.push_back(std::move(members));
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  SegmentationResult r;
  for (auto& members : ordered) {
    if (members.size() >= 2) {
      r.clusters.push_back(std::move(members));
    } else {
      r.unassigned.push_back(members.front());
    }
  }
  std::sort(r.unassigned.begin(), r.unassigned.end());
  return r;
}

inline SegmentationResult segment(int n, std::span<const Edge> edges, std::span<const double> final_scores,
                                  ClusterMode mode = ClusterMode::signed_weights) {
  const auto sym = symmetrize(edges, final_scores);
  const auto labels = correlation_cluster(n, sym, mode);
  return finalize(labels);
}

}  // namespace motionseg
