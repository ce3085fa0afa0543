#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "motionseg/common.hpp"
#include "motionseg/config_fields.hpp"
#include "motionseg/geometry.hpp"
#include "motionseg/preprocess.hpp"
#include "motionseg/scene.hpp"
#include "motionseg/sequence_io.hpp"

namespace motionseg {

enum class CenterMode { extent, centroid };

template <>
struct EnumNames<CenterMode> {
  static constexpr std::array<std::pair<CenterMode, std::string_view>, 2> values{{
      {CenterMode::extent, "extent"},
      {CenterMode::centroid, "centroid"},
  }};
};

/// Minimum box size after inflation: named profile (waymo, av2, none) or "l,w,h".
inline Vec3 inflation_minima(const std::string& profile) {
  if (profile == "waymo") return {1.0, 1.0, 2.0};
  if (profile == "av2") return {0.75, 0.75, 1.75};
  if (profile == "none") return {0.0, 0.0, 0.0};
  Vec3 v;
  double* out[3] = {&v.x, &v.y, &v.z};
  std::size_t start = 0;
  for (int k = 0; k < 3; ++k) {
    const std::size_t comma = profile.find(',', start);
    if ((k < 2) == (comma == std::string::npos)) {
      throw ConfigError("inflation profile '" + profile + "': expected waymo|av2|none or l,w,h");
    }
    const std::string part = profile.substr(start, k < 2 ? comma - start : std::string::npos);
    field_from_string(part, *out[k]);
    if (*out[k] < 0.0) throw ConfigError("inflation profile '" + profile + "': minima must be >= 0");
    start = comma + 1;
  }
  return v;
}

struct BoxConfig {
  CenterMode center = CenterMode::extent;
  double min_dim = 0.1;
  std::string profile = "waymo";
  /// Minimum interior points for ground-truth-identity (oracle) extraction.
  int oracle_min_points = 2;

  template <typename V>
  void visit(V& v) {
    v("center", center);
    v("min_dim", min_dim);
    v("profile", profile);
    v("oracle_min_points", oracle_min_points);
  }

  void validate() const {
    inflation_minima(profile);
    if (oracle_min_points < 1) throw ConfigError("boxes.oracle_min_points must be >= 1");
  }
};

/// Heading from mean-trajectory step 1 -> 2; BEV principal axis if that step is degenerate.
inline double cluster_heading(std::span<const Vec3> points, std::span<const PointTrajectory> trajs) {
  Vec3 p1, p2;
  for (const auto& t : trajs) {
    p1 += t[1];
    p2 += t[2];
  }
  const double n = static_cast<double>(trajs.size());
  const Vec3 d = trajs.empty() ? Vec3{} : (p2 - p1) / n;
  if (!trajs.empty() && d.norm() >= 1e-3) return std::atan2(d.y, d.x);
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += p.x;
    my += p.y;
  }
  mx /= static_cast<double>(points.size());
  my /= static_cast<double>(points.size());
  double cxx = 0.0, cyy = 0.0, cxy = 0.0;
  for (const auto& p : points) {
    cxx += (p.x - mx) * (p.x - mx);
    cyy += (p.y - my) * (p.y - my);
    cxy += (p.x - mx) * (p.y - my);
  }
  return 0.5 * std::atan2(2.0 * cxy, cxx - cyy);
}

/// Tight oriented box around a cluster; nullopt when any dimension is below min_dim.
inline std::optional<Box3D> extract_box(std::span<const Vec3> points, std::span<const PointTrajectory> trajs,
                                        CenterMode mode = CenterMode::extent, double min_dim = 0.1) {
  if (points.size() < 2) return std::nullopt;
  if (!trajs.empty() && trajs.size() != points.size()) throw ShapeError("extract_box: points and trajectories differ");
  const double yaw = wrap_angle(cluster_heading(points, trajs));
  constexpr double inf = std::numeric_limits<double>::infinity();
  Vec3 lo{inf, inf, inf}, hi{-inf, -inf, -inf};
  for (const auto& p : points) {
    const Vec3 l = rotate_z(p, -yaw);
    lo = {std::min(lo.x, l.x), std::min(lo.y, l.y), std::min(lo.z, l.z)};
    hi = {std::max(hi.x, l.x), std::max(hi.y, l.y), std::max(hi.z, l.z)};
  }
  Box3D b;
  b.yaw = yaw;
  b.dims = hi - lo;
  if (mode == CenterMode::extent) {
    b.center = rotate_z((lo + hi) * 0.5, yaw);
  } else {
    Vec3 c;
    for (const auto& p : points) c += p;
    b.center = c / static_cast<double>(points.size());
  }
  if (b.dims.x < min_dim || b.dims.y < min_dim || b.dims.z < min_dim) return std::nullopt;
  return b;
}

inline Box3D inflate(Box3D b, const Vec3& minima) {
  b.dims = {std::max(b.dims.x, minima.x), std::max(b.dims.y, minima.y), std::max(b.dims.z, minima.z)};
  return b;
}

struct ScoredBox {
  Box3D box;
  double score = 1.0;
  /// Ground-truth identity for oracle boxes, -1 otherwise.
  int gt_id = -1;
  int num_points = 0;
};

/// Boxes from ground-truth identity groups of at least min_points filtered points.
inline std::vector<ScoredBox> oracle_extract(const FilteredFrame& frame, std::span<const PointTrajectory> trajs,
                                             int min_points, CenterMode mode = CenterMode::extent, double min_dim = 0.1) {
  if (trajs.size() != frame.size()) throw ShapeError("oracle_extract: trajectory count does not match points");
  std::map<int, std::vector<int>> groups;
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (frame.gt_ids[i] >= 0) groups[frame.gt_ids[i]].push_back(static_cast<int>(i));
  }
  std::vector<ScoredBox> out;
  for (const auto& [id, idx] : groups) {
    if (static_cast<int>(idx.size()) < min_points) continue;
    std::vector<Vec3> pts;
    std::vector<PointTrajectory> tr;
    for (int i : idx) {
      pts.push_back(frame.points[i]);
      tr.push_back(trajs[i]);
    }
    if (auto b = extract_box(pts, tr, mode, min_dim)) out.push_back({*b, 1.0, id, static_cast<int>(idx.size())});
  }
  return out;
}

inline std::filesystem::path label_path(const std::filesystem::path& dir, std::size_t frame) {
  return dir / ("labels_" + std::to_string(frame));
}

inline void write_labels(const std::filesystem::path& path, std::span<const ScoredBox> boxes) {
  auto f = io::open_write(path);
  for (const auto& b : boxes) {
    std::fprintf(f.get(), "%.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", b.box.center.x, b.box.center.y, b.box.center.z,
                 b.box.dims.x, b.box.dims.y, b.box.dims.z, b.box.yaw, b.score);
  }
}

inline std::vector<ScoredBox> read_labels(const std::filesystem::path& path) {
  io::LineReader r(io::read_file(path), path.string());
  std::vector<ScoredBox> out;
  while (!r.at_end()) {
    auto t = r.next("label");
    if (t.size() != 8) r.fail("label", "expected 'cx cy cz l w h yaw score'");
    ScoredBox b;
    b.box.center = {r.number(t[0], "label"), r.number(t[1], "label"), r.number(t[2], "label")};
    b.box.dims = {r.number(t[3], "label"), r.number(t[4], "label"), r.number(t[5], "label")};
    b.box.yaw = r.number(t[6], "label");
    b.score = r.number(t[7], "label");
    if (!(b.box.dims.x > 0.0 && b.box.dims.y > 0.0 && b.box.dims.z > 0.0)) r.fail("label", "dimensions must be positive");
    out.push_back(b);
  }
  return out;
}

}  // namespace motionseg
