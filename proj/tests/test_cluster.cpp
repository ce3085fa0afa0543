#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "oracles.hpp"
#include "test_support.hpp"

using namespace motionseg;
using testing_support::best_objective;
using testing_support::same_partition;
using testing_support::for_each_partition;

TEST(Symmetrize, Examples) {
  const std::vector<Edge> one{{0, 1}};
  const std::vector<double> s1{0.9};
  auto r = symmetrize(one, s1);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_DOUBLE_EQ(r[0].score, 0.9);

  const std::vector<Edge> two{{0, 1}, {1, 0}};
  const std::vector<double> s2{0.8, 0.6};
  r = symmetrize(two, s2);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_NEAR(r[0].score, 0.7, 1e-15);
  EXPECT_EQ(r[0].i, 0);
  EXPECT_EQ(r[0].j, 1);

  EXPECT_TRUE(symmetrize({}, {}).empty());
  const std::vector<double> bad{0.1, 0.2};
  EXPECT_THROW(symmetrize(one, bad), ShapeError);
}

TEST(CorrelationCluster, OutlierCrossEdgeDoesNotMerge) {
  std::vector<WeightedEdge> e;
  for (int base : {0, 3}) {
    e.push_back({base, base + 1, 0.99});
    e.push_back({base, base + 2, 0.99});
    e.push_back({base + 1, base + 2, 0.99});
  }
  e.push_back({0, 3, 0.9});
  e.push_back({1, 4, 0.1});
  e.push_back({2, 5, 0.1});
  const auto labels = correlation_cluster(6, e);
  EXPECT_EQ(labels, (std::vector<int>{0, 0, 0, 3, 3, 3}));
  EXPECT_NEAR(correlation_objective(labels, e), best_objective(6, e), 1e-12);
}

TEST(CorrelationCluster, AllPositiveAndAllNegative) {
  std::vector<WeightedEdge> pos{{0, 1, 0.8}, {1, 2, 0.7}, {2, 3, 0.9}};
  for (auto mode : {ClusterMode::signed_weights, ClusterMode::prune_then_cc}) {
    EXPECT_EQ(correlation_cluster(4, pos, mode), (std::vector<int>{0, 0, 0, 0}));
  }
  std::vector<WeightedEdge> neg{{0, 1, 0.2}, {1, 2, 0.3}, {0, 2, 0.1}};
  for (auto mode : {ClusterMode::signed_weights, ClusterMode::prune_then_cc}) {
    const auto r = finalize(correlation_cluster(3, neg, mode));
    EXPECT_TRUE(r.clusters.empty());
    EXPECT_EQ(r.unassigned, (std::vector<int>{0, 1, 2}));
  }
}

TEST(CorrelationCluster, LogitWeightsAreClamped) {
  EXPECT_DOUBLE_EQ(logit_weight(1.0), kLogitClamp);
  EXPECT_DOUBLE_EQ(logit_weight(0.0), -kLogitClamp);
  EXPECT_DOUBLE_EQ(logit_weight(1e-12), -kLogitClamp);
  EXPECT_NEAR(logit_weight(0.9), std::log(9.0), 1e-12);
}

TEST(CorrelationCluster, RandomSmallGraphs) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int consistent_cases = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 7);
    std::vector<int> gt(static_cast<std::size_t>(n));
    const int groups = 1 + static_cast<int>(rng() % 3);
    for (auto& g : gt) g = static_cast<int>(rng() % groups);
    const bool sign_consistent = trial % 2 == 0;
    std::vector<WeightedEdge> edges;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (u(rng) < 0.4) continue;
        double s = u(rng);
        if (sign_consistent) s = gt[i] == gt[j] ? 0.5 + 0.5 * (0.02 + 0.96 * s) : 0.5 * (0.02 + 0.96 * s);
        edges.push_back({i, j, s});
      }
    }
    const auto greedy = correlation_cluster(n, edges, ClusterMode::signed_weights);
    const auto pruned = correlation_cluster(n, edges, ClusterMode::prune_then_cc);
    const double g_obj = correlation_objective(greedy, edges);
    EXPECT_GE(g_obj + 1e-12, correlation_objective(pruned, edges));
    if (sign_consistent) {
      ++consistent_cases;
      EXPECT_NEAR(g_obj, best_objective(n, edges), 1e-9) << "trial " << trial;
    }
  }
  EXPECT_EQ(consistent_cases, 200);
}

TEST(CorrelationCluster, CleanScoresRecoverInstances) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 30;
    std::vector<int> gt(n);
    for (int i = 0; i < n; ++i) gt[i] = static_cast<int>(rng() % 4);
    std::vector<WeightedEdge> edges;
    // chain inside each instance keeps every positive subgraph connected
    std::map<int, int> last;
    for (int i = 0; i < n; ++i) {
      if (last.contains(gt[i])) edges.push_back({last[gt[i]], i, 1.0});
      last[gt[i]] = i;
    }
    for (int k = 0; k < 60; ++k) {
      int i = static_cast<int>(rng() % n), j = static_cast<int>(rng() % n);
      if (i == j) continue;
      if (i > j) std::swap(i, j);
      edges.push_back({i, j, gt[i] == gt[j] ? 1.0 : 0.0});
    }
    for (auto mode : {ClusterMode::signed_weights, ClusterMode::prune_then_cc}) {
      EXPECT_TRUE(same_partition(correlation_cluster(n, edges, mode), gt));
    }
  }
}

TEST(CorrelationCluster, PruneModeIgnoresMonotoneRescaling) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<WeightedEdge> a, b;
  for (int k = 0; k < 80; ++k) {
    int i = static_cast<int>(rng() % 25), j = static_cast<int>(rng() % 25);
    if (i == j) continue;
    if (i > j) std::swap(i, j);
    const double s = u(rng);
    a.push_back({i, j, s});
    // strictly increasing and fixes 0.5
    b.push_back({i, j, s < 0.5 ? s * s * 2.0 : 1.0 - 2.0 * (1.0 - s) * (1.0 - s)});
  }
  EXPECT_EQ(correlation_cluster(25, a, ClusterMode::prune_then_cc), correlation_cluster(25, b, ClusterMode::prune_then_cc));
}

TEST(CorrelationCluster, RejectsOutOfRangeEndpoints) {
  const std::vector<WeightedEdge> e{{0, 5, 0.9}};
  EXPECT_THROW(correlation_cluster(3, e), ShapeError);
}

TEST(Finalize, Examples) {
  auto r = finalize(std::vector<int>{0, 1, 1});
  ASSERT_EQ(r.clusters.size(), 1u);
  EXPECT_EQ(r.clusters[0], (std::vector<int>{1, 2}));
  EXPECT_EQ(r.unassigned, (std::vector<int>{0}));

  r = finalize(std::vector<int>{});
  EXPECT_TRUE(r.clusters.empty());
  EXPECT_TRUE(r.unassigned.empty());

  r = finalize(std::vector<int>{7, 2, 2, 9, 2, 2, 2});
  ASSERT_EQ(r.clusters.size(), 1u);
  EXPECT_EQ(r.clusters[0].size(), 5u);
  EXPECT_EQ(r.unassigned, (std::vector<int>{0, 3}));
}
