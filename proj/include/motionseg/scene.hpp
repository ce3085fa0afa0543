#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "motionseg/common.hpp"
#include "motionseg/config_fields.hpp"
#include "motionseg/geometry.hpp"

namespace motionseg {

enum class ObjectClass { vehicle, pedestrian, cyclist, clutter };

template <>
struct EnumNames<ObjectClass> {
  static constexpr std::array<std::pair<ObjectClass, std::string_view>, 4> values{{
      {ObjectClass::vehicle, "vehicle"},
      {ObjectClass::pedestrian, "pedestrian"},
      {ObjectClass::cyclist, "cyclist"},
      {ObjectClass::clutter, "clutter"},
  }};
};

/// Planar ego pose; z is carried for the file format and is always 0 for generated data.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;

  Vec3 to_world(const Vec3& p) const { return rotate_z(p, yaw) + Vec3{x, y, z}; }
  Vec3 to_sensor(const Vec3& p) const { return rotate_z(p - Vec3{x, y, z}, -yaw); }
  bool operator==(const Pose&) const = default;
};

struct GtBox {
  int instance_id = -1;
  ObjectClass cls = ObjectClass::vehicle;
  Box3D box;
  /// Ego-compensated velocity expressed in the sensor frame axes, m/s.
  double vx = 0.0;
  double vy = 0.0;

  double speed() const { return std::hypot(vx, vy); }
  bool operator==(const GtBox&) const = default;
};

struct Frame {
  double timestamp = 0.0;
  Pose pose;
  std::vector<Vec3> points;
  std::vector<int> gt_ids;
  std::vector<GtBox> boxes;

  const GtBox* find_box(int id) const {
    for (const auto& b : boxes) {
      if (b.instance_id == id) return &b;
    }
    return nullptr;
  }
  bool operator==(const Frame&) const = default;
};

struct Sequence {
  std::vector<Frame> frames;
  std::uint64_t seed = 0;
  Region region;
  /// Generator settings echoed into the manifest, `key=value`.
  std::vector<std::pair<std::string, std::string>> config_echo;

  bool operator==(const Sequence&) const = default;
};

using PointTrajectory = std::array<Vec3, kTrajectoryLength>;

struct SceneConfig {
  int frames = 20;
  int vehicles = 4;
  int pedestrians = 2;
  int cyclists = 2;
  int parked = 3;
  int clutter = 8;
  double noise_fraction = 0.2;
  /// Points per square meter of projected surface at the reference range.
  double density = 60.0;
  double reference_range = 10.0;
  int max_points_per_object = 80;
  double min_object_range = 6.0;
  double spawn_half_x = 44.0;
  double spawn_half_y = 18.0;
  double min_gap = 1.2;
  double ego_speed = 5.0;
  double ego_yaw_rate = 0.0;
  double sensor_height = 1.9;
  double shell_depth = 0.15;
  double jitter = 0.0;
  int ground_points = 2500;
  double ground_half_x = 85.0;
  double ground_half_y = 40.0;
  double size_scatter = 0.1;
  double vehicle_speed_min = 1.0;
  double vehicle_speed_max = 15.0;
  double pedestrian_speed_min = 0.5;
  double pedestrian_speed_max = 2.0;
  double cyclist_speed_min = 2.0;
  double cyclist_speed_max = 6.0;
  double region_half_x = 50.0;
  double region_half_y = 20.0;

  template <typename V>
  void visit(V& v) {
    v("frames", frames);
    v("vehicles", vehicles);
    v("pedestrians", pedestrians);
    v("cyclists", cyclists);
    v("parked", parked);
    v("clutter", clutter);
    v("noise_fraction", noise_fraction);
    v("density", density);
    v("reference_range", reference_range);
    v("max_points_per_object", max_points_per_object);
    v("min_object_range", min_object_range);
    v("spawn_half_x", spawn_half_x);
    v("spawn_half_y", spawn_half_y);
    v("min_gap", min_gap);
    v("ego_speed", ego_speed);
    v("ego_yaw_rate", ego_yaw_rate);
    v("sensor_height", sensor_height);
    v("shell_depth", shell_depth);
    v("jitter", jitter);
    v("ground_points", ground_points);
    v("ground_half_x", ground_half_x);
    v("ground_half_y", ground_half_y);
    v("size_scatter", size_scatter);
    v("vehicle_speed_min", vehicle_speed_min);
    v("vehicle_speed_max", vehicle_speed_max);
    v("pedestrian_speed_min", pedestrian_speed_min);
    v("pedestrian_speed_max", pedestrian_speed_max);
    v("cyclist_speed_min", cyclist_speed_min);
    v("cyclist_speed_max", cyclist_speed_max);
    v("region_half_x", region_half_x);
    v("region_half_y", region_half_y);
  }

  void validate() const {
    if (frames < 1) throw ConfigError("scene.frames must be >= 1");
    if (vehicles < 0 || pedestrians < 0 || cyclists < 0 || parked < 0 || clutter < 0 || ground_points < 0) {
      throw ConfigError("scene object counts must be nonnegative");
    }
    if (!(density > 0.0)) throw ConfigError("scene.density must be > 0");
    if (!(noise_fraction >= 0.0 && noise_fraction < 1.0)) throw ConfigError("scene.noise_fraction must be in [0,1)");
    if (max_points_per_object < 1) throw ConfigError("scene.max_points_per_object must be >= 1");
    if (std::hypot(spawn_half_x, spawn_half_y) > 160.0) {
      throw ConfigError("scene spawn area extends beyond the 160 m disc around the ego vehicle");
    }
    if (!(reference_range > 0.0)) throw ConfigError("scene.reference_range must be > 0");
  }
};

/// Per-class size anchor and the fraction of the (amodal) box the sampled body occupies.
struct ClassTemplate {
  Vec3 anchor;
  Vec3 body_fill;
};

inline ClassTemplate class_template(ObjectClass c) {
  switch (c) {
    case ObjectClass::vehicle:
      return {{4.75, 2.0, 1.75}, {0.95, 0.95, 0.92}};
    case ObjectClass::pedestrian:
      return {{0.9, 0.85, 1.75}, {0.55, 0.5, 0.95}};
    case ObjectClass::cyclist:
      return {{1.8, 0.85, 1.75}, {0.9, 0.45, 0.95}};
    case ObjectClass::clutter:
      break;
  }
  return {{1.0, 1.0, 1.0}, {1.0, 1.0, 1.0}};
}

namespace detail {

struct SceneObject {
  int id = -1;  // -1 for clutter
  ObjectClass cls = ObjectClass::vehicle;
  Vec3 center0;  // world, bottom face on the ground: center z = h/2
  Vec3 dims;
  Vec3 body;
  double yaw = 0.0;
  Vec3 velocity;  // world
  std::vector<Vec3> fixed_points;  // world; static objects only

  bool is_static() const { return velocity.x == 0.0 && velocity.y == 0.0; }
};

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

struct Face {
  Vec3 center;
  Vec3 normal;
  Vec3 axis_u;  // half extent vectors spanning the face
  Vec3 axis_v;
  double depth_extent;  // body extent along the inward normal
  double area;
};

// Bottom face excluded: it is never visible to a roof-mounted sensor.
inline std::array<Face, 5> body_faces(const Vec3& center, const Vec3& body, double yaw) {
  const Vec3 ex = rotate_z({1, 0, 0}, yaw);
  const Vec3 ey = rotate_z({0, 1, 0}, yaw);
  const Vec3 ez{0, 0, 1};
  const double hl = 0.5 * body.x, hw = 0.5 * body.y, hh = 0.5 * body.z;
  return {{
      {center + ex * hl, ex, ey * hw, ez * hh, body.x, body.y * body.z},
      {center - ex * hl, ex * -1.0, ey * hw, ez * hh, body.x, body.y * body.z},
      {center + ey * hw, ey, ex * hl, ez * hh, body.y, body.x * body.z},
      {center - ey * hw, ey * -1.0, ex * hl, ez * hh, body.y, body.x * body.z},
      {center + ez * hh, ez, ex * hl, ey * hw, body.z, body.x * body.y},
  }};
}

// Points on the faces of `body` visible from `sensor`; count per face scales with
// projected area and inversely with range.
inline std::vector<Vec3> sample_visible(const Vec3& center, const Vec3& body, double yaw, const Vec3& sensor,
                                        const SceneConfig& cfg, bool all_faces, std::mt19937_64& rng) {
  const auto faces = body_faces(center, body, yaw);
  std::array<double, 5> expected{};
  double total = 0.0;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Vec3 view = faces[f].center - sensor;
    const double range = std::max(view.norm(), 1e-6);
    double cosine = -faces[f].normal.dot(view) / range;
    if (all_faces) cosine = 0.5;
    if (cosine <= 0.0) continue;
    expected[f] = cfg.density * faces[f].area * cosine * cfg.reference_range / std::max(range, cfg.reference_range * 0.5);
    total += expected[f];
  }
  const double scale = total > cfg.max_points_per_object ? cfg.max_points_per_object / total : 1.0;
  std::vector<Vec3> pts;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const double lambda = expected[f] * scale;
    if (lambda <= 0.0) continue;
    int count = static_cast<int>(std::floor(lambda));
    if (uniform(rng, 0.0, 1.0) < lambda - count) ++count;
    const double depth = std::min(cfg.shell_depth, faces[f].depth_extent);
    for (int i = 0; i < count; ++i) {
      const double a = uniform(rng, -1.0, 1.0);
      const double b = uniform(rng, -1.0, 1.0);
      const double d = uniform(rng, 0.0, depth);
      pts.push_back(faces[f].center + faces[f].axis_u * a + faces[f].axis_v * b - faces[f].normal * d);
    }
  }
  return pts;
}

inline Vec3 quantize(const Vec3& v) { return {quantize9(v.x), quantize9(v.y), quantize9(v.z)}; }

inline double footprint_radius(const Vec3& dims) { return 0.5 * std::hypot(dims.x, dims.y); }

inline std::vector<Pose> ego_poses(const SceneConfig& cfg) {
  std::vector<Pose> poses(cfg.frames);
  Pose p;
  for (int t = 0; t < cfg.frames; ++t) {
    poses[t] = {quantize9(p.x), quantize9(p.y), 0.0, quantize9(wrap_angle(p.yaw))};
    p.x += cfg.ego_speed * kFrameDt * std::cos(p.yaw);
    p.y += cfg.ego_speed * kFrameDt * std::sin(p.yaw);
    p.yaw += cfg.ego_yaw_rate * kFrameDt;
  }
  return poses;
}

}  // namespace detail

/// Deterministic synthetic Lidar sequence. Identical (cfg, seed) yields identical output.
inline Sequence generate_sequence(const SceneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  using detail::uniform;
  std::mt19937_64 rng(seed);
  const auto poses = detail::ego_poses(cfg);
  const double duration = (cfg.frames - 1) * kFrameDt;

  std::vector<detail::SceneObject> objects;
  auto separated = [&](const detail::SceneObject& cand) {
    for (const auto& o : objects) {
      const double need = detail::footprint_radius(cand.dims) + detail::footprint_radius(o.dims) + cfg.min_gap;
      for (int t = 0; t < cfg.frames; ++t) {
        const double time = t * kFrameDt;
        const Vec3 a = cand.center0 + cand.velocity * time;
        const Vec3 b = o.center0 + o.velocity * time;
        if (std::hypot(a.x - b.x, a.y - b.y) < need) return false;
      }
    }
    return true;
  };

  auto scatter = [&](const Vec3& anchor) {
    const double lo = std::log(1.0 - cfg.size_scatter);
    const double hi = std::log(1.0 + cfg.size_scatter);
    if (cfg.size_scatter <= 0.0) return anchor;
    return Vec3{anchor.x * std::exp(uniform(rng, lo, hi)), anchor.y * std::exp(uniform(rng, lo, hi)),
                anchor.z * std::exp(uniform(rng, lo, hi))};
  };

  auto place = [&](detail::SceneObject obj, double speed) -> bool {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double x = uniform(rng, -cfg.spawn_half_x, cfg.spawn_half_x);
      const double y = uniform(rng, -cfg.spawn_half_y, cfg.spawn_half_y);
      const double yaw = uniform(rng, -std::numbers::pi, std::numbers::pi);
      if (std::hypot(x, y) < cfg.min_object_range) continue;
      obj.center0 = {x, y, 0.5 * obj.dims.z};
      obj.yaw = yaw;
      obj.velocity = rotate_z({speed, 0.0, 0.0}, yaw);
      if (!separated(obj)) continue;
      objects.push_back(std::move(obj));
      return true;
    }
    return false;
  };

  int next_id = 0;
  auto add_actor = [&](ObjectClass cls, double vmin, double vmax) {
    detail::SceneObject o;
    o.cls = cls;
    const auto tmpl = class_template(cls);
    o.dims = scatter(tmpl.anchor);
    o.body = {o.dims.x * tmpl.body_fill.x, o.dims.y * tmpl.body_fill.y, o.dims.z * tmpl.body_fill.z};
    const double speed = vmax > vmin ? uniform(rng, vmin, vmax) : vmin;
    o.id = next_id;
    if (place(std::move(o), speed)) ++next_id;
  };
  for (int i = 0; i < cfg.vehicles; ++i) add_actor(ObjectClass::vehicle, cfg.vehicle_speed_min, cfg.vehicle_speed_max);
  for (int i = 0; i < cfg.pedestrians; ++i) {
    add_actor(ObjectClass::pedestrian, cfg.pedestrian_speed_min, cfg.pedestrian_speed_max);
  }
  for (int i = 0; i < cfg.cyclists; ++i) add_actor(ObjectClass::cyclist, cfg.cyclist_speed_min, cfg.cyclist_speed_max);
  for (int i = 0; i < cfg.parked; ++i) {
    const auto cls = i % 3 == 2 ? ObjectClass::pedestrian : ObjectClass::vehicle;
    add_actor(cls, 0.0, 0.0);
  }
  for (int i = 0; i < cfg.clutter; ++i) {
    detail::SceneObject o;
    o.cls = ObjectClass::clutter;
    o.id = -1;
    o.dims = i % 2 == 0 ? Vec3{0.3, 0.3, 3.0} : Vec3{uniform(rng, 3.0, 8.0), 0.3, uniform(rng, 1.0, 2.5)};
    o.body = o.dims;
    place(std::move(o), 0.0);
  }

  // Static geometry is sampled once in the world frame so that it repeats exactly
  // across frames after ego compensation.
  const Vec3 sensor0{0.0, 0.0, cfg.sensor_height};
  for (auto& o : objects) {
    if (!o.is_static()) continue;
    const Vec3 body_center{o.center0.x, o.center0.y, 0.5 * o.body.z};
    auto pts = detail::sample_visible(body_center, o.body, o.yaw, sensor0, cfg, true, rng);
    o.fixed_points.reserve(pts.size());
    for (const auto& p : pts) o.fixed_points.push_back(detail::quantize(p));
  }
  std::vector<Vec3> ground;
  ground.reserve(cfg.ground_points);
  const double travel = cfg.ego_speed * duration;
  for (int i = 0; i < cfg.ground_points; ++i) {
    ground.push_back(detail::quantize({uniform(rng, -cfg.ground_half_x, cfg.ground_half_x + travel),
                                       uniform(rng, -cfg.ground_half_y, cfg.ground_half_y), uniform(rng, -0.05, 0.05)}));
  }

  Sequence seq;
  seq.seed = seed;
  seq.region = {quantize9(-cfg.region_half_x), quantize9(cfg.region_half_x), quantize9(-cfg.region_half_y),
                quantize9(cfg.region_half_y)};
  for (auto& [k, v] : to_fields(cfg)) seq.config_echo.emplace_back(k, v);
  seq.frames.resize(cfg.frames);

  for (int t = 0; t < cfg.frames; ++t) {
    Frame& fr = seq.frames[t];
    fr.timestamp = quantize9(t * kFrameDt);
    fr.pose = poses[t];
    const Pose& pose = fr.pose;
    const double time = t * kFrameDt;
    auto push = [&](const Vec3& p, int id) {
      fr.points.push_back(detail::quantize(p));
      fr.gt_ids.push_back(id);
    };
    for (const auto& g : ground) push(pose.to_sensor(g), -1);
    for (const auto& o : objects) {
      if (!o.is_static()) continue;
      for (const auto& p : o.fixed_points) push(pose.to_sensor(p), o.id);
    }
    int moving_points = 0;
    const Vec3 sensor{0.0, 0.0, cfg.sensor_height};
    for (const auto& o : objects) {
      Vec3 world_center = o.center0 + o.velocity * time;
      if (!o.is_static() && cfg.jitter > 0.0) {
        std::normal_distribution<double> jit(0.0, cfg.jitter);
        world_center.x += jit(rng);
        world_center.y += jit(rng);
      }
      const Vec3 c = pose.to_sensor(world_center);
      const double yaw = wrap_angle(o.yaw - pose.yaw);
      if (o.id >= 0) {
        GtBox gb;
        gb.instance_id = o.id;
        gb.cls = o.cls;
        gb.box = {detail::quantize(c), detail::quantize(o.dims), quantize9(yaw)};
        const Vec3 v = rotate_z(o.velocity, -pose.yaw);
        gb.vx = quantize9(v.x);
        gb.vy = quantize9(v.y);
        fr.boxes.push_back(gb);
      }
      if (o.is_static()) continue;
      const Vec3 body_center{c.x, c.y, 0.5 * o.body.z};
      const auto pts = detail::sample_visible(body_center, o.body, yaw, sensor, cfg, false, rng);
      for (const auto& p : pts) push(p, o.id);
      moving_points += static_cast<int>(pts.size());
    }
    const int noise = static_cast<int>(std::lround(cfg.noise_fraction / (1.0 - cfg.noise_fraction) * moving_points));
    for (int i = 0; i < noise; ++i) {
      push({uniform(rng, -cfg.region_half_x, cfg.region_half_x), uniform(rng, -cfg.region_half_y, cfg.region_half_y),
            uniform(rng, 0.3, 3.0)},
           -1);
    }
  }
  return seq;
}

/// Analytic ego-compensated trajectories for every point of frame t, expressed in the
/// sensor axes of frame t. Object points follow their box velocity; background is fixed.
inline std::vector<PointTrajectory> gt_trajectories(const Sequence& seq, std::size_t t, int horizon = kTrajectoryLength - 1) {
  if (horizon != kTrajectoryLength - 1) throw ConfigError("gt_trajectories: horizon must be 24");
  const Frame& fr = seq.frames.at(t);
  std::unordered_map<int, Vec3> velocity;
  for (const auto& b : fr.boxes) velocity[b.instance_id] = {b.vx, b.vy, 0.0};
  std::vector<PointTrajectory> out(fr.points.size());
  for (std::size_t i = 0; i < fr.points.size(); ++i) {
    Vec3 v;
    if (fr.gt_ids[i] >= 0) {
      const auto it = velocity.find(fr.gt_ids[i]);
      if (it != velocity.end()) v = it->second;
    }
    for (int k = 0; k < kTrajectoryLength; ++k) out[i][k] = fr.points[i] + v * (kFrameDt * k);
  }
  return out;
}

/// Emulates estimated (rather than oracle) trajectories.
struct TrajectoryNoise {
  /// Standard deviation of a per-point constant velocity bias, per axis, m/s.
  double sigma = 0.0;
  /// Fraction of points whose trajectory is replaced by a random constant-velocity one.
  double random_fraction = 0.0;
  /// Maximum speed of random trajectories, m/s.
  double random_speed = 5.0;

  template <typename V>
  void visit(V& v) {
    v("sigma", sigma);
    v("random_fraction", random_fraction);
    v("random_speed", random_speed);
  }
  bool enabled() const { return sigma > 0.0 || random_fraction > 0.0; }
};

inline void corrupt_trajectories(std::vector<PointTrajectory>& trajs, const TrajectoryNoise& noise, std::uint64_t seed) {
  if (!noise.enabled()) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& tr : trajs) {
    const double u = detail::uniform(rng, 0.0, 1.0);
    Vec3 v;
    if (u < noise.random_fraction) {
      const double speed = noise.random_speed * std::sqrt(detail::uniform(rng, 0.0, 1.0));
      const double dir = detail::uniform(rng, -std::numbers::pi, std::numbers::pi);
      const Vec3 base = (tr[1] - tr[0]) / kFrameDt;
      v = Vec3{speed * std::cos(dir), speed * std::sin(dir), 0.0} - base;
    } else {
      v = Vec3{gauss(rng), gauss(rng), gauss(rng)} * noise.sigma;
    }
    for (int k = 1; k < kTrajectoryLength; ++k) tr[k] += v * (kFrameDt * k);
  }
}

}  // namespace motionseg
