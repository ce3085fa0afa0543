#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "oracles.hpp"
#include "test_support.hpp"

using namespace motionseg;
using testing_support::linear_trajectory;
using testing_support::object_frame;
using testing_support::blob_cloud;
using testing_support::reference_dbscan;

namespace {

double seg_precision(const FilteredFrame& f, const std::vector<ScoredBox>& labels) {
  EvalConfig e;
  return evaluate_frame(labels, f.boxes, f.points, e).at(0.4).precision();
}

}  // namespace

TEST(Dbscan, DenseBlob) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  std::vector<double> d;
  for (int i = 0; i < 12; ++i) d.insert(d.end(), {u(rng), u(rng), u(rng)});
  EXPECT_EQ(dbscan(d, 3, 1.0, 10), std::vector<int>(12, 0));
}

TEST(Dbscan, TwoBlobs) {
  std::vector<double> d;
  for (int i = 0; i < 12; ++i) d.insert(d.end(), {0.01 * i, 0.0, 0.0});
  for (int i = 0; i < 12; ++i) d.insert(d.end(), {10.0 + 0.01 * i, 0.0, 0.0});
  const auto l = dbscan(d, 3, 1.0, 10);
  EXPECT_EQ(std::set<int>(l.begin(), l.begin() + 12), std::set<int>{0});
  EXPECT_EQ(std::set<int>(l.begin() + 12, l.end()), std::set<int>{1});
}

TEST(Dbscan, MatchesReference) {
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = trial % 3 == 0 ? 9 : 3;
    const int n = 50 + 30 * (trial % 6);
    const auto d = blob_cloud(n, dim, 1000 + trial);
    const double eps = 0.4 + 0.1 * (trial % 5);
    const int ms = 3 + trial % 8;
    EXPECT_EQ(dbscan(d, dim, eps, ms), reference_dbscan(d, dim, eps, ms)) << "trial " << trial;
  }
  const auto d = blob_cloud(200, 3, 7);
  EXPECT_EQ(dbscan(d, 3, 0.6, 5), reference_dbscan(d, 3, 0.6, 5));
}

TEST(Dbscan, PermutationStability) {
  const auto d = blob_cloud(150, 3, 8);
  const auto base = dbscan(d, 3, 0.6, 6);
  const auto ref = reference_dbscan(d, 3, 0.6, 6);
  std::vector<int> perm(150);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(8);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> p(d.size());
  for (int i = 0; i < 150; ++i) std::copy_n(d.begin() + 3 * perm[i], 3, p.begin() + 3 * i);
  const auto pl = dbscan(p, 3, 0.6, 6);
  // core points: same grouping under any order
  std::vector<int> counts(150, 0);
  for (int i = 0; i < 150; ++i) {
    for (int j = 0; j < 150; ++j) {
      double s = 0.0;
      for (int a = 0; a < 3; ++a) s += (d[3 * i + a] - d[3 * j + a]) * (d[3 * i + a] - d[3 * j + a]);
      counts[i] += s <= 0.36 ? 1 : 0;
    }
  }
  for (int i = 0; i < 150; ++i) {
    for (int j = 0; j < 150; ++j) {
      if (counts[perm[i]] < 6 || counts[perm[j]] < 6) continue;
      EXPECT_EQ(pl[i] == pl[j], base[perm[i]] == base[perm[j]]);
    }
  }
  EXPECT_EQ(base, ref);
  EXPECT_EQ(dbscan(d, 3, 0.6, 6), base);
}

TEST(Dbscan, GrowingEpsNeverAddsNoise) {
  const auto d = blob_cloud(300, 3, 9);
  long prev = 301;
  for (double eps : {0.1, 0.2, 0.4, 0.8, 1.6, 3.2}) {
    const auto l = dbscan(d, 3, eps, 8);
    const long noise = std::count(l.begin(), l.end(), -1);
    EXPECT_LE(noise, prev);
    prev = noise;
  }
  EXPECT_THROW(dbscan(d, 3, 0.0, 8), ConfigError);
}

TEST(DbscanPlus, FlowSplitsAdjacentCounterMovingObjects) {
  const auto f = object_frame({{1, {0, 0, 1}, {5, 0, 0}, 40, 0.5}, {2, {1.2, 0, 1}, {-5, 0, 0}, 40, 0.5}}, 3);
  DbscanConfig cfg;
  const auto pos = dbscan(detail::flatten(f.points), 3, cfg.eps_pos, cfg.min_samples_pos);
  EXPECT_EQ(std::set<int>(pos.begin(), pos.end()).size(), 1u);
  const auto r = dbscan_plus(f, cfg);
  ASSERT_EQ(r.clusters.size(), 2u);
  for (const auto& c : r.clusters) {
    std::set<int> ids;
    for (int i : c) ids.insert(f.gt_ids[i]);
    EXPECT_EQ(ids.size(), 1u);
  }
  cfg.variant = DbscanVariant::vanilla;
  EXPECT_EQ(dbscan_plus(f, cfg).clusters.size(), 1u);
}

TEST(DbscanPlus, TinyIntersectionsHurtPrecision) {
  auto f = object_frame({{1, {0, 0, 1}, {5, 0, 0}, 40, 0.5}, {2, {10, 0, 1}, {0, 5, 0}, 40, 0.5}}, 4);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int i = 0; i < 5; ++i) {
    const Vec3 p{u(rng), u(rng), 1.0 + u(rng)};
    f.points.push_back(p);
    f.gt_ids.push_back(-1);
    f.trajectories.push_back(linear_trajectory(p, {0, 5, 0}));
    f.origin_index.push_back(static_cast<int>(f.origin_index.size()));
  }
  DbscanConfig loose, strict;
  loose.min_samples_intersection = 1;
  strict.min_samples_intersection = 20;
  BoxConfig modal;
  modal.profile = "none";
  const double p_loose = seg_precision(f, baseline_labels(f, loose, modal));
  const double p_strict = seg_precision(f, baseline_labels(f, strict, modal));
  EXPECT_LT(p_loose, p_strict);
}

TEST(DbscanPlus, EmptyFrame) {
  const auto r = dbscan_plus(FilteredFrame{}, DbscanConfig{});
  EXPECT_TRUE(r.clusters.empty());
  EXPECT_TRUE(r.unassigned.empty());
}

TEST(DbscanPlus, ClustersRefinePositionClusters) {
  SceneConfig sc;
  sc.frames = 6;
  const auto seq = generate_sequence(sc, 31);
  const auto f = preprocess_frame(seq, 1, PreprocessConfig{});
  for (auto v : {DbscanVariant::plus, DbscanVariant::plus_long}) {
    DbscanConfig cfg;
    cfg.variant = v;
    const auto pos = dbscan(detail::flatten(f.points), 3, cfg.eps_pos, cfg.min_samples_pos);
    const auto r = dbscan_plus(f, cfg);
    EXPECT_FALSE(r.clusters.empty());
    for (const auto& c : r.clusters) {
      std::set<int> labels;
      for (int i : c) labels.insert(pos[i]);
      EXPECT_EQ(labels.size(), 1u);
      EXPECT_NE(*labels.begin(), -1);
    }
  }
}

TEST(SizeFilter, Examples) {
  const std::vector<ScoredBox> boxes{{{{0, 0, 0}, {30, 5, 5}, 0}}, {{{0, 0, 0}, {4.7, 2, 1.8}, 0}}};
  const auto kept = size_filter(boxes);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].box.dims, Vec3(4.7, 2, 1.8));
  const auto again = size_filter(kept);
  ASSERT_EQ(again.size(), 1u);
  EXPECT_EQ(again[0].box, kept[0].box);
}
