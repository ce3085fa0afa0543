#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace motionseg;
using testing_support::TempDir;

namespace {

SceneConfig empty_config() {
  SceneConfig c;
  c.frames = 1;
  c.vehicles = c.pedestrians = c.cyclists = c.parked = c.clutter = 0;
  c.noise_fraction = 0.0;
  c.ground_points = 0;
  return c;
}

SceneConfig single_vehicle() {
  SceneConfig c = empty_config();
  c.frames = 5;
  c.vehicles = 1;
  c.size_scatter = 0.0;
  c.vehicle_speed_min = c.vehicle_speed_max = 5.0;
  c.density = 400.0;
  c.max_points_per_object = 1000;
  return c;
}

std::string read_all(const std::filesystem::path& dir) {
  std::string s;
  for (const auto& e : std::filesystem::directory_iterator(dir)) s += io::read_file(e.path());
  return s;
}

}  // namespace

TEST(Scene, EmptyConfigGivesOneEmptyFrame) {
  const auto seq = generate_sequence(empty_config(), 3);
  ASSERT_EQ(seq.frames.size(), 1u);
  EXPECT_TRUE(seq.frames[0].points.empty());
  EXPECT_TRUE(seq.frames[0].boxes.empty());
}

TEST(Scene, SingleVehiclePointsMapToItsBox) {
  const auto seq = generate_sequence(single_vehicle(), 11);
  for (const auto& fr : seq.frames) {
    ASSERT_EQ(fr.boxes.size(), 1u);
    const auto& b = fr.boxes[0];
    EXPECT_NEAR(b.box.dims.x, 4.75, 1e-9);
    EXPECT_NEAR(b.box.dims.y, 2.0, 1e-9);
    EXPECT_NEAR(b.box.dims.z, 1.75, 1e-9);
    EXPECT_NEAR(b.speed(), 5.0, 1e-6);
    ASSERT_FALSE(fr.points.empty());
    for (int id : fr.gt_ids) EXPECT_EQ(id, b.instance_id);
  }
}

TEST(Scene, GenerationIsDeterministic) {
  TempDir a("scene_a"), b("scene_b");
  SceneConfig cfg;
  cfg.frames = 3;
  write_sequence(generate_sequence(cfg, 42), a.path);
  write_sequence(generate_sequence(cfg, 42), b.path);
  EXPECT_EQ(read_all(a.path), read_all(b.path));
  EXPECT_EQ(generate_sequence(cfg, 42), generate_sequence(cfg, 42));
  EXPECT_NE(generate_sequence(cfg, 42).frames[0].points, generate_sequence(cfg, 43).frames[0].points);
}

TEST(Scene, PointsLieInsideTheirBoxes) {
  SceneConfig cfg;
  cfg.frames = 4;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto seq = generate_sequence(cfg, seed);
    for (const auto& fr : seq.frames) {
      for (std::size_t i = 0; i < fr.points.size(); ++i) {
        if (fr.gt_ids[i] < 0) continue;
        const GtBox* b = fr.find_box(fr.gt_ids[i]);
        ASSERT_NE(b, nullptr);
        EXPECT_TRUE(b->box.contains(fr.points[i], 1e-6));
      }
    }
  }
}

TEST(Scene, StaticTrajectoryIsConstant) {
  Sequence seq;
  Frame fr;
  fr.points = {{1, 2, 0}};
  fr.gt_ids = {-1};
  seq.frames.push_back(fr);
  const auto tr = gt_trajectories(seq, 0);
  ASSERT_EQ(tr.size(), 1u);
  ASSERT_EQ(tr[0].size(), 25u);
  for (const auto& p : tr[0]) EXPECT_EQ(p, Vec3(1, 2, 0));
}

TEST(Scene, MovingTrajectoryIsLinear) {
  Sequence seq;
  Frame fr;
  fr.points = {{3, 1, 0.5}};
  fr.gt_ids = {7};
  GtBox b;
  b.instance_id = 7;
  b.box.dims = {1, 1, 1};
  b.vx = 2.0;
  fr.boxes.push_back(b);
  seq.frames.push_back(fr);
  const auto tr = gt_trajectories(seq, 0);
  for (int k = 0; k < 25; ++k) {
    EXPECT_NEAR(tr[0][k].x, 3.0 + 0.2 * k, 1e-12);
    EXPECT_DOUBLE_EQ(tr[0][k].y, 1.0);
    EXPECT_DOUBLE_EQ(tr[0][k].z, 0.5);
  }
  EXPECT_THROW(gt_trajectories(seq, 0, 10), ConfigError);
}

TEST(Scene, TrajectoryVelocityMatchesBoxVelocity) {
  SceneConfig cfg;
  cfg.frames = 3;
  const auto seq = generate_sequence(cfg, 5);
  const auto& fr = seq.frames[1];
  const auto tr = gt_trajectories(seq, 1);
  for (std::size_t i = 0; i < fr.points.size(); ++i) {
    Vec3 v;
    if (fr.gt_ids[i] >= 0) {
      const GtBox* b = fr.find_box(fr.gt_ids[i]);
      v = {b->vx, b->vy, 0.0};
    }
    for (int k = 0; k + 1 < 25; ++k) {
      const Vec3 fd = (tr[i][k + 1] - tr[i][k]) / kFrameDt;
      EXPECT_NEAR((fd - v).norm(), 0.0, 1e-9);
    }
  }
}

TEST(Scene, NoiseCorruptionIsSeeded) {
  std::vector<PointTrajectory> a(50, testing_support::linear_trajectory({1, 1, 1}, {1, 0, 0}));
  auto b = a;
  auto c = a;
  TrajectoryNoise noise{0.3, 0.1, 5.0};
  corrupt_trajectories(b, noise, 9);
  corrupt_trajectories(c, noise, 9);
  EXPECT_EQ(b, c);
  EXPECT_NE(a, b);
  for (const auto& t : b) EXPECT_EQ(t[0], Vec3(1, 1, 1));
}

TEST(SequenceIo, RoundTrip) {
  TempDir dir("seq_rt");
  SceneConfig cfg;
  cfg.frames = 3;
  const auto seq = generate_sequence(cfg, 8);
  write_sequence(seq, dir.path);
  const auto back = read_sequence(dir.path);
  ASSERT_EQ(back.frames.size(), seq.frames.size());
  EXPECT_EQ(back.seed, seq.seed);
  EXPECT_EQ(back.region, seq.region);
  // coordinates are generated on the 9-digit grid, so the text form is exact
  EXPECT_EQ(back, seq);
}

TEST(SequenceIo, EmptySequence) {
  TempDir dir("seq_empty");
  Sequence seq;
  write_sequence(seq, dir.path);
  EXPECT_TRUE(read_sequence(dir.path).frames.empty());
}

TEST(SequenceIo, MismatchedCountsNameTheFrame) {
  TempDir dir("seq_bad");
  SceneConfig cfg;
  cfg.frames = 2;
  write_sequence(generate_sequence(cfg, 8), dir.path);
  auto text = io::read_file(io::frame_path(dir.path, 1));
  const auto pos = text.find("POINTS ");
  const auto eol = text.find('\n', pos);
  const int n = std::stoi(text.substr(pos + 7, eol - pos - 7));
  text.replace(pos, eol - pos, "POINTS " + std::to_string(n + 1));
  {
    auto f = io::open_write(io::frame_path(dir.path, 1));
    std::fputs(text.c_str(), f.get());
  }
  try {
    read_sequence(dir.path);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 1"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("POINTS"), std::string::npos) << e.what();
  }
}
