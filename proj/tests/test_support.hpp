#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "motionseg/motionseg.hpp"

namespace testing_support {

using namespace motionseg;

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("motionseg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

inline PointTrajectory linear_trajectory(const Vec3& p, const Vec3& v) {
  PointTrajectory t;
  for (int k = 0; k < kTrajectoryLength; ++k) t[k] = p + v * (kFrameDt * k);
  return t;
}

struct ObjectSpec {
  int id;
  Vec3 center;
  Vec3 velocity;
  int points;
  double half = 0.5;
  ObjectClass cls = ObjectClass::vehicle;
};

/// Filtered frame of cube-shaped point objects with exact linear trajectories.
inline FilteredFrame object_frame(const std::vector<ObjectSpec>& objects, std::uint64_t seed = 1, int noise_points = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FilteredFrame f;
  for (const auto& o : objects) {
    for (int i = 0; i < o.points; ++i) {
      const Vec3 p = o.center + Vec3{u(rng), u(rng), u(rng)} * o.half;
      f.points.push_back(p);
      f.gt_ids.push_back(o.id);
      f.trajectories.push_back(linear_trajectory(p, o.velocity));
      f.origin_index.push_back(static_cast<int>(f.origin_index.size()));
    }
    GtBox b;
    b.instance_id = o.id;
    b.cls = o.cls;
    b.box.center = o.center;
    b.box.dims = Vec3{2, 2, 2} * (o.half + 1e-6);
    b.vx = o.velocity.x;
    b.vy = o.velocity.y;
    f.boxes.push_back(b);
  }
  std::uniform_real_distribution<double> spread(-15.0, 15.0);
  for (int i = 0; i < noise_points; ++i) {
    const Vec3 p{spread(rng), spread(rng), 1.0 + 0.5 * u(rng)};
    f.points.push_back(p);
    f.gt_ids.push_back(-1);
    f.trajectories.push_back(linear_trajectory(p, Vec3{u(rng), u(rng), 0.0} * 3.0));
    f.origin_index.push_back(static_cast<int>(f.origin_index.size()));
  }
  return f;
}

/// Two well-separated objects moving in different directions.
inline FilteredFrame two_object_frame(std::uint64_t seed = 1) {
  return object_frame({{1, {0, 0, 1}, {5, 0, 0}, 20}, {2, {10, 0, 1}, {0, 5, 0}, 20}}, seed);
}

}  // namespace testing_support
