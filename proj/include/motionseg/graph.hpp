#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <limits>
#include <span>
#include <unordered_set>
#include <vector>

#include "motionseg/common.hpp"
#include "motionseg/config_fields.hpp"
#include "motionseg/preprocess.hpp"
#include "motionseg/scene.hpp"
#include "motionseg/spatial_index.hpp"

namespace motionseg {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

enum class KnnSpace { position, velocity };
enum class FeatureVariant { velocity, position, both };
enum class VelocityStats { per_axis, magnitude };

template <>
struct EnumNames<KnnSpace> {
  static constexpr std::array<std::pair<KnnSpace, std::string_view>, 2> values{{
      {KnnSpace::position, "position"},
      {KnnSpace::velocity, "velocity"},
  }};
};
template <>
struct EnumNames<FeatureVariant> {
  static constexpr std::array<std::pair<FeatureVariant, std::string_view>, 3> values{{
      {FeatureVariant::velocity, "velocity"},
      {FeatureVariant::position, "position"},
      {FeatureVariant::both, "both"},
  }};
};
template <>
struct EnumNames<VelocityStats> {
  static constexpr std::array<std::pair<VelocityStats, std::string_view>, 2> values{{
      {VelocityStats::per_axis, "per-axis"},
      {VelocityStats::magnitude, "magnitude"},
  }};
};

struct FeatureConfig {
  KnnSpace knn_space = KnnSpace::position;
  int k = 16;
  FeatureVariant node_variant = FeatureVariant::both;
  FeatureVariant edge_variant = FeatureVariant::position;
  VelocityStats velocity_stats = VelocityStats::per_axis;
  double moving_speed = 1.0;
  double voxel_size = 0.5;

  template <typename V>
  void visit(V& v) {
    v("knn_space", knn_space);
    v("k", k);
    v("node_variant", node_variant);
    v("edge_variant", edge_variant);
    v("velocity_stats", velocity_stats);
    v("moving_speed", moving_speed);
    v("voxel_size", voxel_size);
  }

  void validate() const {
    if (k < 1) throw ConfigError("graph.k must be >= 1");
  }

  int stats_dim() const { return velocity_stats == VelocityStats::per_axis ? 9 : 3; }
  int node_dim() const { return variant_dim(node_variant); }
  int edge_dim() const { return variant_dim(edge_variant); }
  int variant_dim(FeatureVariant v) const {
    switch (v) {
      case FeatureVariant::position:
        return 3;
      case FeatureVariant::velocity:
        return stats_dim();
      case FeatureVariant::both:
        return 3 + stats_dim();
    }
    return 0;
  }
};

using Edge = std::array<int, 2>;

struct MotionGraph {
  Matrix node_feats;
  std::vector<Edge> edges;
  Matrix edge_feats;
  /// Positive iff both endpoints belong to the same moving object.
  std::vector<char> edge_labels;
  std::vector<Vec3> node_positions;
  std::vector<int> node_gt_ids;

  int num_nodes() const { return static_cast<int>(node_positions.size()); }
  int num_edges() const { return static_cast<int>(edges.size()); }
};

/// Exact directed kNN edges (i -> its k nearest others), ties broken by lower index.
inline std::vector<Edge> knn_edges(std::span<const Vec3> points, int k, double voxel_size = 0.5) {
  std::vector<Edge> edges;
  if (points.size() < 2 || k < 1) return edges;
  const auto flat = detail::flatten(points);
  const VoxelGrid grid(flat, 3, voxel_size);
  edges.reserve(points.size() * static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::array<double, 3> q{points[i].x, points[i].y, points[i].z};
    for (const auto& [d2, j] : grid.knn(q, k, static_cast<int>(i))) edges.push_back({static_cast<int>(i), j});
  }
  return edges;
}

/// Velocity statistics along each trajectory: 24 finite differences in m/s, then
/// per-axis (mean, min, max) as 9 values, or (mean, min, max) of the speed as 3.
inline Matrix velocity_statistics(std::span<const PointTrajectory> trajs, VelocityStats mode = VelocityStats::per_axis) {
  const int dim = mode == VelocityStats::per_axis ? 9 : 3;
  Matrix out(static_cast<Eigen::Index>(trajs.size()), dim);
  constexpr int steps = kTrajectoryLength - 1;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const auto& tr = trajs[i];
    if (mode == VelocityStats::per_axis) {
      std::array<double, 3> sum{0, 0, 0};
      std::array<double, 3> lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                               std::numeric_limits<double>::infinity()};
      std::array<double, 3> hi{-lo[0], -lo[1], -lo[2]};
      for (int k = 0; k < steps; ++k) {
        const Vec3 v = (tr[k + 1] - tr[k]) / kFrameDt;
        for (int a = 0; a < 3; ++a) {
          sum[a] += v[a];
          lo[a] = std::min(lo[a], v[a]);
          hi[a] = std::max(hi[a], v[a]);
        }
      }
      for (int a = 0; a < 3; ++a) {
        out(i, a) = sum[a] / steps;
        out(i, 3 + a) = lo[a];
        out(i, 6 + a) = hi[a];
      }
    } else {
      double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = 0.0;
      for (int k = 0; k < steps; ++k) {
        const double s = ((tr[k + 1] - tr[k]) / kFrameDt).norm();
        sum += s;
        lo = std::min(lo, s);
        hi = std::max(hi, s);
      }
      out(i, 0) = sum / steps;
      out(i, 1) = lo;
      out(i, 2) = hi;
    }
  }
  return out;
}

inline Matrix node_features(std::span<const Vec3> positions, std::span<const PointTrajectory> trajs, FeatureVariant variant,
                            VelocityStats mode = VelocityStats::per_axis) {
  if (positions.size() != trajs.size()) throw ShapeError("node_features: positions and trajectories differ in length");
  const Matrix stats = velocity_statistics(trajs, mode);
  const auto m = static_cast<Eigen::Index>(positions.size());
  const Eigen::Index sd = stats.cols();
  Matrix out;
  switch (variant) {
    case FeatureVariant::velocity:
      return stats;
    case FeatureVariant::position:
      out.resize(m, 3);
      break;
    case FeatureVariant::both:
      out.resize(m, 3 + sd);
      out.rightCols(sd) = stats;
      break;
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    out(i, 0) = positions[i].x;
    out(i, 1) = positions[i].y;
    out(i, 2) = positions[i].z;
  }
  return out;
}

/// Per-edge differences (source minus target) of positions and/or velocity statistics.
inline Matrix edge_features(std::span<const Vec3> positions, const Matrix& stats, std::span<const Edge> edges,
                            FeatureVariant variant) {
  const Eigen::Index sd = stats.cols();
  const Eigen::Index dim = variant == FeatureVariant::position ? 3 : (variant == FeatureVariant::velocity ? sd : 3 + sd);
  Matrix out(static_cast<Eigen::Index>(edges.size()), dim);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [i, j] = edges[e];
    Eigen::Index col = 0;
    if (variant != FeatureVariant::velocity) {
      const Vec3 d = positions[i] - positions[j];
      out(e, 0) = d.x;
      out(e, 1) = d.y;
      out(e, 2) = d.z;
      col = 3;
    }
    if (variant != FeatureVariant::position) out.row(e).segment(col, sd) = stats.row(i) - stats.row(j);
  }
  return out;
}

inline std::unordered_set<int> moving_ids(std::span<const GtBox> boxes, double moving_speed = 1.0) {
  std::unordered_set<int> ids;
  for (const auto& b : boxes) {
    if (b.speed() > moving_speed) ids.insert(b.instance_id);
  }
  return ids;
}

inline MotionGraph build_graph(const FilteredFrame& frame, const FeatureConfig& cfg, const std::unordered_set<int>& moving) {
  cfg.validate();
  MotionGraph g;
  g.node_positions = frame.points;
  g.node_gt_ids = frame.gt_ids;
  const Matrix stats = velocity_statistics(frame.trajectories, cfg.velocity_stats);
  if (cfg.knn_space == KnnSpace::position) {
    g.edges = knn_edges(frame.points, cfg.k, cfg.voxel_size);
  } else {
    std::vector<Vec3> mean_velocity(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i) {
      if (cfg.velocity_stats == VelocityStats::per_axis) {
        mean_velocity[i] = {stats(i, 0), stats(i, 1), stats(i, 2)};
      } else {
        mean_velocity[i] = {stats(i, 0), 0.0, 0.0};
      }
    }
    g.edges = knn_edges(mean_velocity, cfg.k, cfg.voxel_size);
  }
  g.node_feats = node_features(frame.points, frame.trajectories, cfg.node_variant, cfg.velocity_stats);
  g.edge_feats = edge_features(frame.points, stats, g.edges, cfg.edge_variant);
  g.edge_labels.resize(g.edges.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const int a = frame.gt_ids[g.edges[e][0]];
    const int b = frame.gt_ids[g.edges[e][1]];
    g.edge_labels[e] = (a >= 0 && a == b && moving.contains(a)) ? 1 : 0;
  }
  return g;
}

inline MotionGraph build_graph(const FilteredFrame& frame, const FeatureConfig& cfg) {
  return build_graph(frame, cfg, moving_ids(frame.boxes, cfg.moving_speed));
}

}  // namespace motionseg
