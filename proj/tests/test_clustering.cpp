#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "delaysense/clustering.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace delaysense;

static const std::vector<double> kTen{0.1, 0.15, 0.3, 0.25, 1.2, 1.4, 1.35, 0.9, 2.0, 0.05};

// Reference values from scikit-learn's silhouette_score.
TEST(Silhouette, FixedTenPoints) {
  const std::vector<int> two{0, 0, 0, 0, 1, 1, 1, 1, 1, 0};
  const std::vector<int> three{0, 0, 0, 0, 1, 1, 1, 1, 2, 0};
  EXPECT_NEAR(silhouette(kTen, two), 0.7315459334658663, 1e-12);
  EXPECT_NEAR(silhouette(kTen, three), 0.6776164588678993, 1e-12);
}

TEST(Silhouette, NeedsTwoClusters) {
  const std::vector<int> one(kTen.size(), 0);
  try {
    silhouette(kTen, one);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingleCluster);
  }
}

TEST(KMeans, MatchesContiguousOptimum) {
  std::mt19937_64 rng(100);
  std::uniform_real_distribution<double> u(0, 2);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 5 + rng() % 26;
    const int k = 2 + static_cast<int>(rng() % 3);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    const auto r = kmeans(v, k);
    EXPECT_NEAR(r.inertia, oracle::kmeans_1d_optimum(v, k), 1e-9) << "trial " << t;
  }
}

TEST(KMeans, DeterministicAndSortedCentroids) {
  std::mt19937_64 rng(1);
  const auto v = fixtures::two_group_drops(30, rng);
  const auto a = kmeans(v, 3, 99, 8);
  const auto b = kmeans(v, 3, 99, 8);
  EXPECT_EQ(a.assignments, b.assignments);
  EXPECT_EQ(a.centroids, b.centroids);
  EXPECT_TRUE(std::is_sorted(a.centroids.begin(), a.centroids.end()));
}

TEST(KMeans, PermutationInvariance) {
  std::mt19937_64 rng(2);
  auto v = fixtures::two_group_drops(24, rng);
  const auto ref = kmeans(v, 2);
  const double sil = silhouette(v, ref.assignments);
  for (int t = 0; t < 10; ++t) {
    std::shuffle(v.begin(), v.end(), rng);
    const auto r = kmeans(v, 2);
    ASSERT_EQ(r.centroids.size(), ref.centroids.size());
    for (std::size_t c = 0; c < r.centroids.size(); ++c) EXPECT_NEAR(r.centroids[c][0], ref.centroids[c][0], 1e-12);
    EXPECT_NEAR(silhouette(v, r.assignments), sil, 1e-12);
  }
}

TEST(KMeans, TwoClustersSplitAtAThreshold) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 3);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(15);
    for (auto& x : v) x = u(rng);
    const auto r = kmeans(v, 2);
    double max_low = -1e9, min_high = 1e9;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (r.assignments[i] == 0) max_low = std::max(max_low, v[i]);
      else min_high = std::min(min_high, v[i]);
    }
    EXPECT_LT(max_low, min_high);
  }
}

TEST(KMeans, TooFewDistinctPoints) {
  const std::vector<double> v{1, 1, 1, 2, 2};
  try {
    kmeans(v, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewDistinctPoints);
  }
  EXPECT_NO_THROW(kmeans(v, 2));
}

static std::vector<std::string> ids(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(fixtures::game_id(static_cast<int>(i)));
  return out;
}

TEST(Selection, TwoSeparatedGroups) {
  std::mt19937_64 rng(4);
  const auto v = fixtures::two_group_drops(30, rng);
  const auto r = select_cluster_count(ids(30), v);
  EXPECT_EQ(r.k, 2);
  EXPECT_GT(r.silhouette, 0.7);
  EXPECT_TRUE(r.warnings.empty());
  ASSERT_EQ(r.candidates.size(), 5u);
  for (std::size_t i = 0; i < v.size(); ++i)
    EXPECT_EQ(r.class_of(i), v[i] < 0.8 ? SensitivityClass::C1_low : SensitivityClass::C2_high);
  EXPECT_EQ(classify_drop(r, 0.1), SensitivityClass::C1_low);
  EXPECT_EQ(classify_drop(r, 1.7), SensitivityClass::C2_high);
}

TEST(Selection, LowConfidenceWarning) {
  // Uniform drops have no cluster structure; nearly all samples are flagged.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 2);
  int flagged = 0;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(30);
    for (auto& x : v) x = u(rng);
    const auto r = select_cluster_count(ids(30), v);
    if (r.silhouette < kLowConfidenceSilhouette) {
      ++flagged;
      ASSERT_FALSE(r.warnings.empty());
      EXPECT_NE(r.warnings.front().find("low confidence"), std::string::npos);
    }
  }
  EXPECT_GE(flagged, 180);
  for (int t = 0; t < 200; ++t) {
    const auto v = fixtures::two_group_drops(30, rng);
    for (const auto& w : select_cluster_count(ids(30), v).warnings) EXPECT_EQ(w.find("low confidence"), std::string::npos);
  }
}

TEST(Selection, ThreeGroups) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> z(0, 0.05);
  std::vector<double> v;
  for (int i = 0; i < 30; ++i) v.push_back(0.8 * (i % 3) + z(rng));
  EXPECT_EQ(select_cluster_count(ids(30), v).k, 3);
}

TEST(Silhouette, Limits) {
  const std::vector<double> far{0, 0.01, 100, 100.01};
  const std::vector<int> split{0, 0, 1, 1}, interleaved{0, 1, 0, 1};
  EXPECT_GT(silhouette(far, split), 0.999);
  const std::vector<double> tight{0, 0.01, 0.02, 0.03};
  EXPECT_LT(silhouette(tight, interleaved), 0);
}

TEST(KMeans, TrivialCases) {
  const std::vector<double> v{0, 0, 0, 10, 10, 10};
  const auto r = kmeans(v, 2);
  EXPECT_EQ(r.centroids[0][0], 0);
  EXPECT_EQ(r.centroids[1][0], 10);
  EXPECT_EQ(r.inertia, 0);
  const auto one = kmeans(v, 1);
  EXPECT_DOUBLE_EQ(one.centroids[0][0], 5);
  EXPECT_DOUBLE_EQ(one.inertia, 150);
}

TEST(Selection, NegativeDropWarned) {
  const std::vector<double> v{-0.1, 0.2, 0.1, 1.3, 1.5, 1.4};
  const auto r = select_cluster_count(ids(6), v, {2, 3});
  bool found = false;
  for (const auto& w : r.warnings) found |= w.find("negative") != std::string::npos;
  EXPECT_TRUE(found);
}

TEST(Selection, ClassMapForThreeClusters) {
  const std::vector<double> c{0.1, 0.5, 1.5};
  const auto m = sensitivity_class_map(c);
  EXPECT_EQ(m, (std::vector<SensitivityClass>{SensitivityClass::C1_low, SensitivityClass::C1_low,
                                              SensitivityClass::C2_high}));
}

TEST(Selection, Writers) {
  const std::vector<double> v{0.1, 0.2, 1.3, 1.4};
  const auto r = select_cluster_count(ids(4), v, {2, 2});
  std::ostringstream csv, plot;
  write_clustering_csv(csv, r);
  write_plot_data_csv(plot, r);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "game_id,delta_iq,cluster,class");
  EXPECT_NE(plot.str().find("red"), std::string::npos);
  EXPECT_EQ(to_json(r)["k"], 2);
}

TEST(Drop, FromMeasurement) {
  EXPECT_DOUBLE_EQ(iq_drop({"g", 4.5, 3.0, 20}), 1.5);
  EXPECT_THROW(iq_drop({"g", 4.5, 0.0, 20}), Error);
}
