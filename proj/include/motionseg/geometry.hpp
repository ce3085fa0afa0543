#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "motionseg/common.hpp"

namespace motionseg {

/// Yaw-oriented 3D box: center, (length, width, height) along the box axes, heading about z.
struct Box3D {
  Vec3 center;
  Vec3 dims;
  double yaw = 0.0;

  bool operator==(const Box3D&) const = default;

  double volume() const { return dims.x * dims.y * dims.z; }

  /// Expresses a point in the box frame (origin at center, x along heading).
  Vec3 to_local(const Vec3& p) const { return rotate_z(p - center, -yaw); }
  Vec3 to_world(const Vec3& local) const { return rotate_z(local, yaw) + center; }

  /// Inclusive interior test, optionally grown by margin on every face.
  bool contains(const Vec3& p, double margin = 0.0) const {
    const Vec3 l = to_local(p);
    return std::abs(l.x) <= 0.5 * dims.x + margin && std::abs(l.y) <= 0.5 * dims.y + margin &&
           std::abs(l.z) <= 0.5 * dims.z + margin;
  }

  double z_min() const { return center.z - 0.5 * dims.z; }
  double z_max() const { return center.z + 0.5 * dims.z; }
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline double cross2(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }

/// BEV footprint corners in counter-clockwise order.
inline std::array<Vec2, 4> bev_corners(const Box3D& b) {
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const double hl = 0.5 * b.dims.x;
  const double hw = 0.5 * b.dims.y;
  const std::array<Vec2, 4> local{{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
  std::array<Vec2, 4> out{};
  // (hl,hw) -> (-hl,hw) -> ... is counter-clockwise.
  for (int i = 0; i < 4; ++i) {
    out[i] = {b.center.x + c * local[i].x - s * local[i].y, b.center.y + s * local[i].x + c * local[i].y};
  }
  return out;
}

inline double polygon_area(const std::vector<Vec2>& poly) {
  if (poly.size() < 3) return 0.0;
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    a += cross2(poly[i], poly[(i + 1) % poly.size()]);
  }
  return 0.5 * std::abs(a);
}

/// Sutherland-Hodgman clip of a polygon against a convex counter-clockwise clip polygon.
inline std::vector<Vec2> clip_convex(std::vector<Vec2> subject, const std::vector<Vec2>& clip) {
  for (std::size_t e = 0; e < clip.size() && !subject.empty(); ++e) {
    const Vec2 a = clip[e];
    const Vec2 b = clip[(e + 1) % clip.size()];
    const Vec2 edge{b.x - a.x, b.y - a.y};
    auto side = [&](const Vec2& p) { return cross2(edge, Vec2{p.x - a.x, p.y - a.y}); };
    std::vector<Vec2> out;
    out.reserve(subject.size() + 2);
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Vec2 cur = subject[i];
      const Vec2 nxt = subject[(i + 1) % subject.size()];
      const double sc = side(cur);
      const double sn = side(nxt);
      if (sc >= 0.0) out.push_back(cur);
      if ((sc >= 0.0) != (sn >= 0.0)) {
        const double t = sc / (sc - sn);
        out.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
      }
    }
    subject = std::move(out);
  }
  return subject;
}

/// Exact area of the intersection of two BEV footprints.
inline double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  std::vector<Vec2> subject(ca.begin(), ca.end());
  const std::vector<Vec2> clip(cb.begin(), cb.end());
  return polygon_area(clip_convex(std::move(subject), clip));
}

inline double intersection_volume(const Box3D& a, const Box3D& b) {
  const double dz = std::min(a.z_max(), b.z_max()) - std::max(a.z_min(), b.z_min());
  if (dz <= 0.0) return 0.0;
  // Cheap reject on bounding circles before clipping.
  const double ra = 0.5 * std::hypot(a.dims.x, a.dims.y);
  const double rb = 0.5 * std::hypot(b.dims.x, b.dims.y);
  if (std::hypot(a.center.x - b.center.x, a.center.y - b.center.y) > ra + rb) return 0.0;
  return bev_intersection_area(a, b) * dz;
}

/// Inclusive axis-aligned rectangle in the sensor frame.
struct Region {
  double x_min = -50.0;
  double x_max = 50.0;
  double y_min = -20.0;
  double y_max = 20.0;

  bool contains(double x, double y) const { return x >= x_min && x <= x_max && y >= y_min && y <= y_max; }
  bool operator==(const Region&) const = default;
};

}  // namespace motionseg
