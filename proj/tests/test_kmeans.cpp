#include <gtest/gtest.h>


#include "oracles.hpp"
#include "sliceguard/kmeans.hpp"

using namespace sliceguard;
using namespace sliceguard::cluster;

using oracles::brute_force_sse;

TEST(KMeans, TwoPointsAreTheirOwnCentroids) {
  Eigen::MatrixXd x(2, 2);
  x << 0, 0, 3, 4;
  const auto r = kmeans_fit(x);
  EXPECT_NEAR(r.inertia, 0.0, 1e-12);
  EXPECT_NE(r.assignments[0], r.assignments[1]);
  EXPECT_EQ(r.centroids.row(static_cast<Eigen::Index>(r.assignments[1])), x.row(1));
}

TEST(KMeans, TwoTriplesSplitCleanly) {
  Eigen::MatrixXd x(6, 2);
  x << 0, 0, 0, 1, 1, 0, 10, 10, 10, 11, 11, 10;
  const auto r = kmeans_fit(x);
  EXPECT_NEAR(r.inertia, brute_force_sse(x), 1e-9);
  EXPECT_NEAR(r.inertia, 8.0 / 3.0, 1e-9);
  EXPECT_EQ(r.assignments[0], r.assignments[2]);
  EXPECT_NE(r.assignments[0], r.assignments[3]);
}

TEST(KMeans, DefaultConfiguration) {
  const KMeansConfig c;
  EXPECT_EQ(c.k, 2u);
  EXPECT_EQ(c.n_init, 10u);
  EXPECT_EQ(c.max_iter, 300u);
  EXPECT_DOUBLE_EQ(c.tol, 1e-4);
  EXPECT_EQ(c.seed, 42u);
  const nlohmann::json j = c;
  EXPECT_EQ(j.get<KMeansConfig>().seed, 42u);
}

TEST(KMeans, TooFewDistinctPoints) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(5, 3);
  EXPECT_THROW(kmeans_fit(x), Error);
  EXPECT_THROW(kmeans_fit(Eigen::MatrixXd::Zero(1, 2)), Error);
  KMeansConfig bad;
  bad.n_init = 0;
  EXPECT_THROW(kmeans_fit(Eigen::MatrixXd::Random(4, 2), bad), ConfigError);
}

TEST(KMeans, MatchesBruteForceAndInertiaNeverRises) {
  Rng rng(21);
  std::size_t optimal = 0;
  const std::size_t N = 60;
  for (std::size_t n = 0; n < N; ++n) {
    const auto pts = static_cast<Eigen::Index>(3 + rng.below(8));
    const auto dims = static_cast<Eigen::Index>(1 + rng.below(3));
    Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(pts, dims, [&] { return rng.normal(); });
    const auto r = kmeans_fit(x);
    if (r.inertia <= brute_force_sse(x) * (1 + 1e-9) + 1e-12) ++optimal;
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
      ASSERT_LE(r.inertia_history[i], r.inertia_history[i - 1] * (1 + 1e-12));
  }
  EXPECT_GE(optimal * 100, 95 * N);
}

TEST(KMeans, BestOfRestartsBeatsSingleInit) {
  Rng rng(5);
  for (int n = 0; n < 10; ++n) {
    Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(40, 3, [&] { return rng.normal(); });
    KMeansConfig one, ten;
    one.n_init = 1;
    one.k = ten.k = 4;
    EXPECT_LE(kmeans_fit(x, ten).inertia, kmeans_fit(x, one).inertia + 1e-12);
  }
}

TEST(KMeans, PredictUsesNearestCentroid) {
  Eigen::MatrixXd c(2, 1);
  c << 0, 10;
  Eigen::MatrixXd x(3, 1);
  x << 1, 6, 4.999;
  EXPECT_EQ(kmeans_predict(c, x), (std::vector<std::size_t>{0, 1, 0}));
}

TEST(KMeans, SeededRunsRepeat) {
  Rng rng(1);
  Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(100, 4, [&] { return rng.uniform(); });
  const auto a = kmeans_fit(x), b = kmeans_fit(x);
  EXPECT_EQ(a.assignments, b.assignments);
  EXPECT_EQ(a.inertia, b.inertia);
}
