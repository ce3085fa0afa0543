#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>

#include "oracles.hpp"
#include "test_support.hpp"

using namespace motionseg;
using testing_support::linear_trajectory;
using testing_support::object_frame;
using testing_support::brute_knn_edges;

namespace {

EvalConfig seg_eval() {
  EvalConfig e;
  e.iou = IouKind::seg;
  return e;
}

BoxConfig modal_boxes() {
  BoxConfig b;
  b.profile = "none";
  return b;
}

}  // namespace

TEST(Knn, SingletonHasNoEdges) {
  const std::vector<Vec3> one{{1, 2, 3}};
  EXPECT_TRUE(knn_edges(one, 4).empty());
}

TEST(Knn, CollinearPoints) {
  const std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  const auto e = knn_edges(pts, 2);
  EXPECT_EQ(e, brute_knn_edges(pts, 2));
  const std::vector<Edge> expected{{0, 1}, {0, 2}, {1, 0}, {1, 2}, {2, 1}, {2, 3}, {3, 2}, {3, 1}};
  EXPECT_EQ(e, expected);
}

TEST(Knn, MatchesBruteForceOnRandomClouds) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-8.0, 8.0);
  for (int m : {2, 10, 64, 250, 500}) {
    std::vector<Vec3> pts;
    for (int i = 0; i < m; ++i) pts.push_back({u(rng), u(rng), 0.2 * u(rng)});
    EXPECT_EQ(knn_edges(pts, 16), brute_knn_edges(pts, 16)) << m;
  }
}

TEST(Knn, VelocitySpaceLinksDistantCoMovingPoints) {
  FilteredFrame f;
  f.points = {{0, 0, 1}, {30, 0, 1}, {1, 0, 1}};
  f.gt_ids = {-1, -1, -1};
  f.trajectories = {linear_trajectory(f.points[0], {5, 0, 0}), linear_trajectory(f.points[1], {5, 0, 0}),
                    linear_trajectory(f.points[2], {0, -5, 0})};
  FeatureConfig cfg;
  cfg.knn_space = KnnSpace::velocity;
  cfg.k = 1;
  const auto g = build_graph(f, cfg);
  EXPECT_NE(std::find(g.edges.begin(), g.edges.end(), Edge{0, 1}), g.edges.end());
  EXPECT_NE(std::find(g.edges.begin(), g.edges.end(), Edge{1, 0}), g.edges.end());
}

TEST(Features, StaticTrajectoryStatsAreZero) {
  const std::vector<Vec3> pos{{1, 2, 3}};
  const std::vector<PointTrajectory> tr{linear_trajectory(pos[0], {})};
  const Matrix both = node_features(pos, tr, FeatureVariant::both);
  ASSERT_EQ(both.cols(), 12);
  EXPECT_EQ(both(0, 0), 1.0);
  EXPECT_EQ(both(0, 1), 2.0);
  EXPECT_EQ(both(0, 2), 3.0);
  for (int c = 3; c < 12; ++c) EXPECT_EQ(both(0, c), 0.0);
}

TEST(Features, ConstantVelocityStats) {
  const std::vector<Vec3> pos{{0, 0, 0}};
  const std::vector<PointTrajectory> tr{linear_trajectory(pos[0], {2, 0, 0})};
  const Matrix v = node_features(pos, tr, FeatureVariant::velocity);
  ASSERT_EQ(v.cols(), 9);
  for (int s = 0; s < 3; ++s) {
    EXPECT_NEAR(v(0, 3 * s + 0), 2.0, 1e-12);
    EXPECT_NEAR(v(0, 3 * s + 1), 0.0, 1e-12);
    EXPECT_NEAR(v(0, 3 * s + 2), 0.0, 1e-12);
  }
  const Matrix mag = velocity_statistics(tr, VelocityStats::magnitude);
  ASSERT_EQ(mag.cols(), 3);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(mag(0, c), 2.0, 1e-12);
}

TEST(Features, Dimensionality) {
  FeatureConfig cfg;
  for (auto [v, d] : {std::pair{FeatureVariant::both, 12}, {FeatureVariant::position, 3}, {FeatureVariant::velocity, 9}}) {
    EXPECT_EQ(cfg.variant_dim(v), d);
    const std::vector<Vec3> pos{{0, 0, 0}, {1, 1, 1}};
    const std::vector<PointTrajectory> tr{linear_trajectory(pos[0], {}), linear_trajectory(pos[1], {})};
    EXPECT_EQ(node_features(pos, tr, v).cols(), d);
    const std::vector<Edge> e{{0, 1}};
    EXPECT_EQ(edge_features(pos, velocity_statistics(tr), e, v).cols(), d);
  }
}

TEST(Features, EdgeDifferences) {
  const std::vector<Vec3> pos{{1, 2, 3}, {0, 2, 1}, {1, 2, 3}};
  const std::vector<PointTrajectory> tr{linear_trajectory(pos[0], {3, 1, 0}), linear_trajectory(pos[1], {-1, 0, 0}),
                                        linear_trajectory(pos[2], {3, 1, 0})};
  const Matrix stats = velocity_statistics(tr);
  const std::vector<Edge> e{{0, 1}, {0, 2}};
  const Matrix p = edge_features(pos, stats, e, FeatureVariant::position);
  EXPECT_EQ(p(0, 0), 1.0);
  EXPECT_EQ(p(0, 1), 0.0);
  EXPECT_EQ(p(0, 2), 2.0);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(p(1, c), 0.0);
  const std::vector<Vec3> far{{0, 0, 0}, {50, -20, 1}};
  const std::vector<PointTrajectory> co{linear_trajectory(far[0], {4, 4, 0}), linear_trajectory(far[1], {4, 4, 0})};
  const std::vector<Edge> one{{0, 1}};
  const Matrix v = edge_features(far, velocity_statistics(co), one, FeatureVariant::velocity);
  for (int c = 0; c < 9; ++c) EXPECT_NEAR(v(0, c), 0.0, 1e-9);
}

TEST(BuildGraph, SeparatedObjectsHaveNoPositiveCrossEdges) {
  const auto f = testing_support::two_object_frame();
  FeatureConfig cfg;
  cfg.k = 5;
  const auto g = build_graph(f, cfg);
  ASSERT_EQ(g.num_edges(), 40 * 5);
  for (int e = 0; e < g.num_edges(); ++e) {
    const int a = f.gt_ids[g.edges[e][0]], b = f.gt_ids[g.edges[e][1]];
    EXPECT_EQ(a, b);
    EXPECT_EQ(g.edge_labels[e], 1);
  }
}

TEST(BuildGraph, SingleObjectAllPositiveNoiseAllNegative) {
  FeatureConfig cfg;
  cfg.k = 6;
  const auto one = object_frame({{3, {0, 0, 1}, {4, 0, 0}, 30}});
  const auto g1 = build_graph(one, cfg);
  EXPECT_TRUE(std::all_of(g1.edge_labels.begin(), g1.edge_labels.end(), [](char c) { return c == 1; }));
  const auto noise = object_frame({}, 3, 40);
  const auto g2 = build_graph(noise, cfg);
  EXPECT_GT(g2.num_edges(), 0);
  EXPECT_TRUE(std::all_of(g2.edge_labels.begin(), g2.edge_labels.end(), [](char c) { return c == 0; }));
}

TEST(BuildGraph, SlowObjectsAreNegative) {
  const auto f = object_frame({{3, {0, 0, 1}, {0.5, 0, 0}, 30}});
  const auto g = build_graph(f, FeatureConfig{});
  EXPECT_TRUE(std::all_of(g.edge_labels.begin(), g.edge_labels.end(), [](char c) { return c == 0; }));
}

TEST(BuildGraph, LabelSymmetry) {
  const auto f = object_frame({{1, {0, 0, 1}, {5, 0, 0}, 40}, {2, {1.5, 0, 1}, {-5, 0, 0}, 40}}, 9, 30);
  const auto g = build_graph(f, FeatureConfig{});
  std::map<std::pair<int, int>, char> lab;
  for (int e = 0; e < g.num_edges(); ++e) lab[{g.edges[e][0], g.edges[e][1]}] = g.edge_labels[e];
  for (const auto& [k, v] : lab) {
    const auto it = lab.find({k.second, k.first});
    if (it != lab.end()) {
      EXPECT_EQ(it->second, v);
    }
  }
}

TEST(BuildGraph, TranslationInvariance) {
  auto f = object_frame({{1, {0, 0, 1}, {5, 0, 0}, 30}, {2, {3, 0, 1}, {0, 5, 0}, 30}}, 4, 20);
  const auto g = build_graph(f, FeatureConfig{});
  const Vec3 shift{0.25, -0.5, 0.125};
  for (auto& p : f.points) p += shift;
  for (auto& t : f.trajectories) {
    for (auto& p : t) p += shift;
  }
  const auto h = build_graph(f, FeatureConfig{});
  EXPECT_EQ(g.edges, h.edges);
  EXPECT_LT((g.edge_feats - h.edge_feats).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GT((g.node_feats - h.node_feats).cwiseAbs().maxCoeff(), 0.1);
}

TEST(GraphOracle, SeparableSceneIsPerfect) {
  const auto f = testing_support::two_object_frame();
  FeatureConfig cfg;
  const auto labels = graph_oracle_labels(f, cfg, ClusterMode::signed_weights, modal_boxes());
  ASSERT_EQ(labels.size(), 2u);
  const auto rep = evaluate_frame(labels, f.boxes, f.points, seg_eval());
  EXPECT_DOUBLE_EQ(rep.f1(0.4), 1.0);
}

TEST(GraphOracle, DenserGraphIsNoWorse) {
  FilteredFrame f;
  for (int i = 0; i < 100; ++i) {
    f.points.push_back({0.1 * i, 0.2 * (i % 2) - 0.1, 1.0 + 0.2 * ((i / 2) % 2) - 0.1});
    f.gt_ids.push_back(1);
    f.trajectories.push_back(linear_trajectory(f.points.back(), {5, 0, 0}));
  }
  GtBox b;
  b.instance_id = 1;
  b.box = {{4.95, 0, 1}, {10.2, 0.5, 0.5}, 0.0};
  b.vx = 5.0;
  f.boxes.push_back(b);
  auto f1_for = [&](int k) {
    FeatureConfig cfg;
    cfg.k = k;
    const auto labels = graph_oracle_labels(f, cfg, ClusterMode::signed_weights, modal_boxes());
    return evaluate_frame(labels, f.boxes, f.points, seg_eval()).f1(0.4);
  };
  const double k1 = f1_for(1), k8 = f1_for(8);
  EXPECT_GE(k8, k1);
  EXPECT_DOUBLE_EQ(k8, 1.0);
  EXPECT_LT(k1, 1.0);
}

TEST(GraphOracle, EmptyFrame) {
  const FilteredFrame f;
  const auto labels = graph_oracle_labels(f, FeatureConfig{}, ClusterMode::signed_weights, modal_boxes());
  EXPECT_TRUE(labels.empty());
  const auto rep = evaluate_frame(labels, f.boxes, f.points, seg_eval());
  for (const auto& row : rep.rows) {
    EXPECT_EQ(row.precision(), 0.0);
    EXPECT_EQ(row.recall(), 0.0);
    EXPECT_EQ(row.f1(), 0.0);
  }
}
