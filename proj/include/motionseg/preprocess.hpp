#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "motionseg/common.hpp"
#include "motionseg/scene.hpp"
#include "motionseg/sequence_io.hpp"
#include "motionseg/spatial_index.hpp"

namespace motionseg {

enum class TrajectorySource { oracle, noisy_oracle, constant_velocity };

template <>
struct EnumNames<TrajectorySource> {
  static constexpr std::array<std::pair<TrajectorySource, std::string_view>, 3> values{{
      {TrajectorySource::oracle, "oracle"},
      {TrajectorySource::noisy_oracle, "noisy-oracle"},
      {TrajectorySource::constant_velocity, "constant-velocity"},
  }};
};

struct PreprocessConfig {
  double max_range = 80.0;
  double max_height = 4.0;
  double ground_threshold = 0.2;
  int ground_iterations = 100;
  double ground_max_tilt_deg = 30.0;
  /// A plane supported by fewer than this fraction of points is not treated as ground.
  double ground_min_inlier_fraction = 0.1;
  std::uint64_t ground_seed = 7;
  int chamfer_frames = 4;
  double static_speed = 0.2;
  double voxel_size = 0.5;
  TrajectorySource trajectory_source = TrajectorySource::oracle;
  TrajectoryNoise noise;

  template <typename V>
  void visit(V& v) {
    v("max_range", max_range);
    v("max_height", max_height);
    v("ground_threshold", ground_threshold);
    v("ground_iterations", ground_iterations);
    v("ground_max_tilt_deg", ground_max_tilt_deg);
    v("ground_min_inlier_fraction", ground_min_inlier_fraction);
    v("ground_seed", ground_seed);
    v("chamfer_frames", chamfer_frames);
    v("static_speed", static_speed);
    v("voxel_size", voxel_size);
    v("trajectory_source", trajectory_source);
    v("noise_sigma", noise.sigma);
    v("noise_random_fraction", noise.random_fraction);
    v("noise_random_speed", noise.random_speed);
  }
};

struct FilteredFrame {
  std::size_t frame_index = 0;
  double timestamp = 0.0;
  Pose pose;
  std::vector<Vec3> points;
  std::vector<int> origin_index;
  std::vector<PointTrajectory> trajectories;
  std::vector<int> gt_ids;
  std::vector<GtBox> boxes;

  std::size_t size() const { return points.size(); }
  bool operator==(const FilteredFrame&) const = default;
};

struct ChamferResult {
  /// Per-query speed in m/s; +inf when the reference frame is empty.
  std::vector<double> speeds;
  /// Displacement to the matched point divided by the signed frame offset, i.e. a
  /// per-frame velocity estimate in the sensor axes of the query frame (m per frame).
  std::vector<Vec3> step_displacement;
  int warnings = 0;
};

namespace detail {

inline std::vector<double> flatten(std::span<const Vec3> pts) {
  std::vector<double> out;
  out.reserve(pts.size() * 3);
  for (const auto& p : pts) {
    out.push_back(p.x);
    out.push_back(p.y);
    out.push_back(p.z);
  }
  return out;
}

}  // namespace detail

/// Nearest-neighbor (Chamfer) speed of selected points of `frame` against `other`,
/// which lies `frames_apart` frames later (negative: earlier). Both clouds are
/// ego-compensated into the sensor frame of `frame`.
inline ChamferResult chamfer_velocity(const Frame& frame, const Frame& other, int frames_apart,
                                      std::span<const int> query, double voxel_size = 0.5) {
  if (frames_apart == 0) throw ConfigError("chamfer_velocity: frames_apart must be nonzero");
  ChamferResult res;
  res.speeds.resize(query.size());
  res.step_displacement.resize(query.size());
  const double dt = std::abs(frames_apart) * kFrameDt;
  if (other.points.empty()) {
    std::fill(res.speeds.begin(), res.speeds.end(), std::numeric_limits<double>::infinity());
    res.warnings = 1;
    return res;
  }
  std::vector<Vec3> moved;
  moved.reserve(other.points.size());
  for (const auto& p : other.points) moved.push_back(frame.pose.to_sensor(other.pose.to_world(p)));
  const auto flat = detail::flatten(moved);
  const VoxelGrid grid(flat, 3, voxel_size);
  for (std::size_t q = 0; q < query.size(); ++q) {
    const Vec3& p = frame.points[query[q]];
    const std::array<double, 3> qp{p.x, p.y, p.z};
    const auto [d2, idx] = grid.nearest(qp);
    res.speeds[q] = std::sqrt(d2) / dt;
    res.step_displacement[q] = (moved[idx] - p) / static_cast<double>(frames_apart);
  }
  return res;
}

inline ChamferResult chamfer_velocity(const Frame& frame, const Frame& other, int frames_apart = 4) {
  std::vector<int> all(frame.points.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return chamfer_velocity(frame, other, frames_apart, all);
}

/// RANSAC ground plane removal. Returns a keep-mask (1 = keep).
inline std::vector<char> remove_ground(std::span<const Vec3> points, const PreprocessConfig& cfg = {}) {
  std::vector<char> keep(points.size(), 1);
  const std::size_t n = points.size();
  if (n < 3) return keep;
  std::mt19937_64 rng(cfg.ground_seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const double min_cos = std::cos(cfg.ground_max_tilt_deg * std::numbers::pi / 180.0);
  std::size_t best_count = 0;
  Vec3 best_normal;
  double best_offset = 0.0;
  for (int it = 0; it < cfg.ground_iterations; ++it) {
    const std::size_t a = pick(rng), b = pick(rng), c = pick(rng);
    if (a == b || b == c || a == c) continue;
    Vec3 normal = (points[b] - points[a]).cross(points[c] - points[a]);
    const double len = normal.norm();
    if (len < 1e-9) continue;
    normal = normal / len;
    if (std::abs(normal.z) < min_cos) continue;
    const double offset = -normal.dot(points[a]);
    std::size_t count = 0;
    for (const auto& p : points) {
      if (std::abs(normal.dot(p) + offset) <= cfg.ground_threshold) ++count;
    }
    if (count > best_count) {
      best_count = count;
      best_normal = normal;
      best_offset = offset;
    }
  }
  if (best_count < 3 || static_cast<double>(best_count) < cfg.ground_min_inlier_fraction * static_cast<double>(n)) {
    return keep;
  }
  // least-squares refit on the consensus set
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  std::size_t inliers = 0;
  for (const auto& p : points) {
    if (std::abs(best_normal.dot(p) + best_offset) <= cfg.ground_threshold) {
      mean += Eigen::Vector3d(p.x, p.y, p.z);
      ++inliers;
    }
  }
  mean /= static_cast<double>(inliers);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : points) {
    if (std::abs(best_normal.dot(p) + best_offset) <= cfg.ground_threshold) {
      const Eigen::Vector3d d = Eigen::Vector3d(p.x, p.y, p.z) - mean;
      cov += d * d.transpose();
    }
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Eigen::Vector3d nrm = eig.eigenvectors().col(0);
  if (eig.info() == Eigen::Success && std::abs(nrm.z()) >= min_cos) {
    best_normal = Vec3{nrm.x(), nrm.y(), nrm.z()};
    best_offset = -nrm.dot(mean);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(best_normal.dot(points[i]) + best_offset) <= cfg.ground_threshold) keep[i] = 0;
  }
  return keep;
}

/// Per-stage survivor counts of one filter_frame call.
struct FilterStats {
  std::size_t raw = 0;
  std::size_t after_range = 0;
  std::size_t after_ground = 0;
  std::size_t after_static = 0;
};

/// Range crop, ground removal and static-point removal; trajectories are not attached.
/// `frames_apart` is the signed offset of `other` relative to `frame`.
inline FilteredFrame filter_frame(const Frame& frame, const Frame& other, int frames_apart, const PreprocessConfig& cfg,
                                  FilterStats* stats = nullptr, ChamferResult* chamfer_out = nullptr) {
  FilterStats st;
  st.raw = frame.points.size();
  std::vector<int> in_range;
  std::vector<Vec3> cropped;
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    const auto& p = frame.points[i];
    if (p.norm_xy() <= cfg.max_range && p.z < cfg.max_height) {
      in_range.push_back(static_cast<int>(i));
      cropped.push_back(p);
    }
  }
  st.after_range = in_range.size();
  const auto keep = remove_ground(cropped, cfg);
  std::vector<int> non_ground;
  for (std::size_t i = 0; i < in_range.size(); ++i) {
    if (keep[i]) non_ground.push_back(in_range[i]);
  }
  st.after_ground = non_ground.size();
  const auto chamfer = chamfer_velocity(frame, other, frames_apart, non_ground, cfg.voxel_size);

  FilteredFrame out;
  out.timestamp = frame.timestamp;
  out.pose = frame.pose;
  out.boxes = frame.boxes;
  ChamferResult kept;
  kept.warnings = chamfer.warnings;
  for (std::size_t q = 0; q < non_ground.size(); ++q) {
    if (chamfer.speeds[q] < cfg.static_speed) continue;
    const int idx = non_ground[q];
    out.origin_index.push_back(idx);
    out.points.push_back(frame.points[idx]);
    out.gt_ids.push_back(frame.gt_ids[idx]);
    kept.speeds.push_back(chamfer.speeds[q]);
    kept.step_displacement.push_back(chamfer.step_displacement[q]);
  }
  st.after_static = out.points.size();
  if (stats != nullptr) *stats = st;
  if (chamfer_out != nullptr) *chamfer_out = std::move(kept);
  return out;
}

/// Signed offset of the Chamfer reference frame: forward when available, else backward.
inline int chamfer_offset(std::size_t t, std::size_t n_frames, int frames) {
  if (t + frames < n_frames) return frames;
  if (t >= static_cast<std::size_t>(frames)) return -frames;
  // Short sequences: use the farthest available frame.
  if (n_frames > 1) return t + 1 < n_frames ? static_cast<int>(n_frames - 1 - t) : -static_cast<int>(t);
  return 0;
}

/// Full preprocessing of frame t: filtering plus trajectories from the configured source.
inline FilteredFrame preprocess_frame(const Sequence& seq, std::size_t t, const PreprocessConfig& cfg,
                                      FilterStats* stats = nullptr) {
  const Frame& frame = seq.frames.at(t);
  const int offset = chamfer_offset(t, seq.frames.size(), cfg.chamfer_frames);
  ChamferResult chamfer;
  FilteredFrame out;
  if (offset == 0) {
    // Single-frame sequence: no motion evidence, everything counts as moving.
    Frame empty;
    empty.pose = frame.pose;
    out = filter_frame(frame, empty, 1, cfg, stats, &chamfer);
  } else {
    out = filter_frame(frame, seq.frames[t + offset], offset, cfg, stats, &chamfer);
  }
  out.frame_index = t;
  out.trajectories.resize(out.points.size());
  if (cfg.trajectory_source == TrajectorySource::constant_velocity) {
    for (std::size_t i = 0; i < out.points.size(); ++i) {
      const Vec3 step = offset == 0 ? Vec3{} : chamfer.step_displacement[i];
      for (int k = 0; k < kTrajectoryLength; ++k) out.trajectories[i][k] = out.points[i] + step * k;
    }
    return out;
  }
  const auto all = gt_trajectories(seq, t);
  for (std::size_t i = 0; i < out.points.size(); ++i) out.trajectories[i] = all[out.origin_index[i]];
  if (cfg.trajectory_source == TrajectorySource::noisy_oracle) {
    corrupt_trajectories(out.trajectories, cfg.noise, mix_seed(seq.seed ^ 0x5eedULL, t));
  }
  return out;
}

struct InteriorRow {
  int x_f = 0;
  double static_original = 0.0;
  double static_filtered = 0.0;
  double moving_original = 0.0;
  double moving_filtered = 0.0;
};

struct FilteringReport {
  std::size_t removed_static = 0;   // true positives
  std::size_t removed_moving = 0;   // false positives
  std::size_t total_static = 0;
  std::size_t total_moving = 0;
  std::size_t static_boxes = 0;
  std::size_t moving_boxes = 0;
  std::vector<InteriorRow> interior;

  double precision() const {
    const auto d = removed_static + removed_moving;
    return d == 0 ? 0.0 : static_cast<double>(removed_static) / static_cast<double>(d);
  }
  double recall() const {
    return total_static == 0 ? 0.0 : static_cast<double>(removed_static) / static_cast<double>(total_static);
  }
};

inline int count_interior(const Box3D& box, std::span<const Vec3> points) {
  int n = 0;
  for (const auto& p : points) n += box.contains(p) ? 1 : 0;
  return n;
}

/// Quality of static-point removal against generator labels (static: gt speed < 1 m/s),
/// plus the share of gt boxes in the region keeping at least x_f interior points.
inline FilteringReport filtering_report(const Sequence& seq, const std::vector<FilteredFrame>& filtered,
                                        std::vector<int> thresholds = {0, 1, 10, 30, 50},
                                        double moving_speed = 1.0) {
  FilteringReport rep;
  std::vector<std::array<std::size_t, 4>> counts(thresholds.size(), {0, 0, 0, 0});
  for (std::size_t t = 0; t < filtered.size(); ++t) {
    const auto& ff = filtered[t];
    const Frame& fr = seq.frames.at(ff.frame_index);
    std::vector<char> kept(fr.points.size(), 0);
    for (int idx : ff.origin_index) kept[idx] = 1;
    for (std::size_t i = 0; i < fr.points.size(); ++i) {
      const int id = fr.gt_ids[i];
      const GtBox* b = id >= 0 ? fr.find_box(id) : nullptr;
      const bool moving = b != nullptr && b->speed() >= moving_speed;
      if (moving) {
        ++rep.total_moving;
        if (!kept[i]) ++rep.removed_moving;
      } else {
        ++rep.total_static;
        if (!kept[i]) ++rep.removed_static;
      }
    }
    for (const auto& b : fr.boxes) {
      if (!seq.region.contains(b.box.center.x, b.box.center.y)) continue;
      const bool moving = b.speed() > moving_speed;
      (moving ? rep.moving_boxes : rep.static_boxes) += 1;
      const int orig = count_interior(b.box, fr.points);
      const int filt = count_interior(b.box, ff.points);
      for (std::size_t k = 0; k < thresholds.size(); ++k) {
        const std::size_t base = moving ? 2 : 0;
        if (orig >= thresholds[k]) ++counts[k][base];
        if (filt >= thresholds[k]) ++counts[k][base + 1];
      }
    }
  }
  auto pct = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : 100.0 * static_cast<double>(a) / static_cast<double>(b); };
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    rep.interior.push_back({thresholds[k], pct(counts[k][0], rep.static_boxes), pct(counts[k][1], rep.static_boxes),
                            pct(counts[k][2], rep.moving_boxes), pct(counts[k][3], rep.moving_boxes)});
  }
  return rep;
}

inline void write_filtered_sequence(const std::vector<FilteredFrame>& frames, const Sequence& source,
                                    const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::write_manifest(dir, "motionseg-filtered", source.seed, frames.size(), source.region, source.config_echo);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& ff = frames[t];
    auto f = io::open_write(io::frame_path(dir, t));
    Frame body;
    body.timestamp = ff.timestamp;
    body.pose = ff.pose;
    body.points = ff.points;
    body.gt_ids = ff.gt_ids;
    body.boxes = ff.boxes;
    io::write_frame_body(f.get(), body);
    std::fprintf(f.get(), "INDEX %zu\n", ff.frame_index);
    std::fprintf(f.get(), "ORIGIN %zu\n", ff.origin_index.size());
    for (int idx : ff.origin_index) std::fprintf(f.get(), "%d\n", idx);
    std::fprintf(f.get(), "TRAJ %zu\n", ff.trajectories.size());
    for (const auto& tr : ff.trajectories) {
      for (int k = 0; k < kTrajectoryLength; ++k) {
        std::fprintf(f.get(), k == 0 ? "%.9g %.9g %.9g" : " %.9g %.9g %.9g", tr[k].x, tr[k].y, tr[k].z);
      }
      std::fputc('\n', f.get());
    }
  }
}

struct FilteredSequence {
  std::uint64_t seed = 0;
  Region region;
  std::vector<FilteredFrame> frames;
};

inline FilteredSequence read_filtered_sequence(const std::filesystem::path& dir) {
  const auto m = io::read_manifest(dir);
  if (m.kind != "motionseg-filtered") throw ParseError(dir.string() + ": not a filtered sequence (kind " + m.kind + ")");
  FilteredSequence out;
  out.seed = m.seed;
  out.region = m.region;
  for (std::size_t t = 0; t < m.frames; ++t) {
    const auto path = io::frame_path(dir, t);
    const std::string context = "frame " + std::to_string(t) + " (" + path.string() + ")";
    io::LineReader r(io::read_file(path), context);
    Frame body = io::read_frame_body(r);
    FilteredFrame ff;
    ff.timestamp = body.timestamp;
    ff.pose = body.pose;
    ff.points = std::move(body.points);
    ff.gt_ids = std::move(body.gt_ids);
    ff.boxes = std::move(body.boxes);
    ff.frame_index = r.count(r.expect("INDEX", 1)[1], "INDEX");
    const std::size_t n_origin = r.count(r.expect("ORIGIN", 1)[1], "ORIGIN");
    if (n_origin != ff.points.size()) r.fail("ORIGIN", "count differs from POINTS");
    for (std::size_t i = 0; i < n_origin; ++i) {
      auto tok = r.next("ORIGIN");
      if (tok.size() != 1) r.fail("ORIGIN", "expected one index per line");
      ff.origin_index.push_back(static_cast<int>(r.integer(tok[0], "ORIGIN")));
    }
    const std::size_t n_traj = r.count(r.expect("TRAJ", 1)[1], "TRAJ");
    if (n_traj != ff.points.size()) r.fail("TRAJ", "count differs from POINTS");
    ff.trajectories.resize(n_traj);
    for (std::size_t i = 0; i < n_traj; ++i) {
      auto tok = r.next("TRAJ");
      if (tok.size() != 3 * kTrajectoryLength) r.fail("TRAJ", "expected 75 values per trajectory");
      for (int k = 0; k < kTrajectoryLength; ++k) {
        ff.trajectories[i][k] = {r.number(tok[3 * k], "TRAJ"), r.number(tok[3 * k + 1], "TRAJ"),
                                 r.number(tok[3 * k + 2], "TRAJ")};
      }
    }
    out.frames.push_back(std::move(ff));
  }
  return out;
}

}  // namespace motionseg
