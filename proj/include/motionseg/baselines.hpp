#pragma once

#include <deque>
#include <map>
#include <span>
#include <vector>

#include "motionseg/boxes.hpp"
#include "motionseg/cluster.hpp"
#include "motionseg/common.hpp"
#include "motionseg/config_fields.hpp"
#include "motionseg/graph.hpp"
#include "motionseg/preprocess.hpp"
#include "motionseg/spatial_index.hpp"

namespace motionseg {

enum class DbscanVariant { vanilla, plus, plus_long };

template <>
struct EnumNames<DbscanVariant> {
  static constexpr std::array<std::pair<DbscanVariant, std::string_view>, 3> values{{
      {DbscanVariant::vanilla, "vanilla"},
      {DbscanVariant::plus, "plus"},
      {DbscanVariant::plus_long, "plus-long"},
  }};
};

struct SizeBounds {
  double l_min = 0.3, l_max = 20.0;
  double w_min = 0.3, w_max = 4.0;
  double h_min = 0.5, h_max = 4.0;

  bool accepts(const Box3D& b) const {
    return b.dims.x >= l_min && b.dims.x <= l_max && b.dims.y >= w_min && b.dims.y <= w_max && b.dims.z >= h_min &&
           b.dims.z <= h_max;
  }
};

struct DbscanConfig {
  double eps_pos = 1.0;
  double eps_flow = 0.1;
  int min_samples_pos = 10;
  int min_samples_flow = 10;
  int min_samples_intersection = 20;
  DbscanVariant variant = DbscanVariant::plus;
  bool size_filter = false;
  SizeBounds bounds;

  template <typename V>
  void visit(V& v) {
    v("eps_pos", eps_pos);
    v("eps_flow", eps_flow);
    v("min_samples_pos", min_samples_pos);
    v("min_samples_flow", min_samples_flow);
    v("min_samples_intersection", min_samples_intersection);
    v("variant", variant);
    v("size_filter", size_filter);
    v("size_l_min", bounds.l_min);
    v("size_l_max", bounds.l_max);
    v("size_w_min", bounds.w_min);
    v("size_w_max", bounds.w_max);
    v("size_h_min", bounds.h_min);
    v("size_h_max", bounds.h_max);
  }

  void validate() const {
    if (!(eps_pos > 0.0 && eps_flow > 0.0)) throw ConfigError("dbscan eps must be > 0");
    if (min_samples_pos < 1 || min_samples_flow < 1 || min_samples_intersection < 1) {
      throw ConfigError("dbscan min_samples must be >= 1");
    }
  }
};

/// DBSCAN over row-major M x dim data. Core iff at least min_samples points
/// (itself included) lie within eps inclusive. Clusters are numbered in order
/// of their lowest-index core point; a border point joins the first cluster
/// that reaches it. Noise is -1.
inline std::vector<int> dbscan(std::span<const double> data, int dim, double eps, int min_samples) {
  if (!(eps > 0.0)) throw ConfigError("dbscan: eps must be > 0");
  const int n = dim > 0 ? static_cast<int>(data.size()) / dim : 0;
  std::vector<int> label(static_cast<std::size_t>(n), -1);
  if (n == 0) return label;
  const VoxelGrid grid(data, dim, eps);
  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(n));
  std::vector<char> core(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    nbrs[i] = grid.radius(data.subspan(static_cast<std::size_t>(i) * dim, dim), eps);
    core[i] = static_cast<int>(nbrs[i].size()) >= min_samples ? 1 : 0;
  }
  int next = 0;
  std::deque<int> queue;
  for (int i = 0; i < n; ++i) {
    if (!core[i] || label[i] != -1) continue;
    const int c = next++;
    label[i] = c;
    queue.push_back(i);
    while (!queue.empty()) {
      const int p = queue.front();
      queue.pop_front();
      for (int q : nbrs[p]) {
        if (label[q] != -1) continue;
        label[q] = c;
        if (core[q]) queue.push_back(q);
      }
    }
  }
  return label;
}

/// Per-point flow used by the density baselines: first-step velocity (3) or long-term statistics (9).
inline std::vector<double> baseline_flow(std::span<const PointTrajectory> trajs, DbscanVariant variant) {
  std::vector<double> out;
  if (variant == DbscanVariant::plus_long) {
    const Matrix stats = velocity_statistics(trajs, VelocityStats::per_axis);
    out.assign(stats.data(), stats.data() + stats.size());
  } else {
    out.reserve(trajs.size() * 3);
    for (const auto& t : trajs) {
      const Vec3 v = (t[1] - t[0]) / kFrameDt;
      out.insert(out.end(), {v.x, v.y, v.z});
    }
  }
  return out;
}

inline SegmentationResult dbscan_plus(const FilteredFrame& frame, const DbscanConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<int>(frame.size());
  SegmentationResult r;
  if (n == 0) return r;
  const auto pos = detail::flatten(frame.points);
  const auto pos_label = dbscan(pos, 3, cfg.eps_pos, cfg.min_samples_pos);
  std::map<std::pair<int, int>, std::vector<int>> groups;
  int min_size = 1;
  if (cfg.variant == DbscanVariant::vanilla) {
    for (int i = 0; i < n; ++i) {
      if (pos_label[i] >= 0) groups[{pos_label[i], 0}].push_back(i);
    }
  } else {
    if (frame.trajectories.size() != frame.size()) throw ShapeError("dbscan_plus: trajectories missing");
    const auto flow = baseline_flow(frame.trajectories, cfg.variant);
    const int fdim = cfg.variant == DbscanVariant::plus_long ? 9 : 3;
    const auto flow_label = dbscan(flow, fdim, cfg.eps_flow, cfg.min_samples_flow);
    for (int i = 0; i < n; ++i) {
      if (pos_label[i] >= 0 && flow_label[i] >= 0) groups[{pos_label[i], flow_label[i]}].push_back(i);
    }
    min_size = cfg.min_samples_intersection;
  }
  std::vector<char> assigned(static_cast<std::size_t>(n), 0);
  for (auto& [key, members] : groups) {
    if (static_cast<int>(members.size()) < std::max(min_size, 2)) continue;
    for (int i : members) assigned[i] = 1;
    r.clusters.push_back(std::move(members));
  }
  std::sort(r.clusters.begin(), r.clusters.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  for (int i = 0; i < n; ++i) {
    if (!assigned[i]) r.unassigned.push_back(i);
  }
  return r;
}

inline std::vector<ScoredBox> size_filter(std::span<const ScoredBox> boxes, const SizeBounds& bounds = {}) {
  std::vector<ScoredBox> out;
  for (const auto& b : boxes) {
    if (bounds.accepts(b.box)) out.push_back(b);
  }
  return out;
}

/// Boxes for each cluster (heading from the frame's trajectories), before inflation.
inline std::vector<ScoredBox> cluster_boxes(const FilteredFrame& frame, const SegmentationResult& seg, CenterMode mode,
                                            double min_dim, std::span<const double> cluster_scores = {}) {
  std::vector<ScoredBox> out;
  for (std::size_t c = 0; c < seg.clusters.size(); ++c) {
    const auto& idx = seg.clusters[c];
    std::vector<Vec3> pts;
    std::vector<PointTrajectory> tr;
    for (int i : idx) {
      pts.push_back(frame.points[i]);
      if (!frame.trajectories.empty()) tr.push_back(frame.trajectories[i]);
    }
    if (auto b = extract_box(pts, tr, mode, min_dim)) {
      const double score = c < cluster_scores.size() ? cluster_scores[c] : 1.0;
      out.push_back({*b, score, -1, static_cast<int>(idx.size())});
    }
  }
  return out;
}

/// Full density baseline for one frame: cluster, box, optional size filter, inflate.
inline std::vector<ScoredBox> baseline_labels(const FilteredFrame& frame, const DbscanConfig& cfg, const BoxConfig& boxes) {
  const auto seg = dbscan_plus(frame, cfg);
  auto out = cluster_boxes(frame, seg, boxes.center, boxes.min_dim);
  if (cfg.size_filter) out = size_filter(out, cfg.bounds);
  const Vec3 minima = inflation_minima(boxes.profile);
  for (auto& b : out) b.box = inflate(b.box, minima);
  return out;
}

}  // namespace motionseg
