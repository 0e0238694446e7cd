#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "oracles.hpp"
#include "softpatch/discriminators.hpp"
#include "softpatch/error.hpp"
#include "softpatch/experiment.hpp"
#include "support.hpp"

using namespace softpatch;
namespace sp_test = softpatch::testing;

namespace {

void expect_near_all(const std::vector<double>& got, const std::vector<double>& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "index " << i;
}

}  // namespace

TEST(NearestScores, Examples) {
  expect_near_all(nn_scores(sp_test::group_from_rows({{2.0, 3.0}, {2.0, 3.0}})), {0.0, 0.0}, 0.0);
  expect_near_all(nn_scores(sp_test::group_from_rows({{0.0}, {1.0}})), {1.0, 1.0}, 0.0);
  EXPECT_THROW(nn_scores(sp_test::group_from_rows({{1.0}})), InputError);
}

TEST(NearestScores, MatchesPairwiseOracle) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    const auto rows = sp_test::random_rows(rng, 5, 8);
    expect_near_all(nn_scores(sp_test::group_from_rows(rows)), oracle::nearest_other(rows), 1e-6);
  }
}

TEST(Gaussian, ConstantRowsGiveEpsilonCovariance) {
  const auto m = gaussian_fit(sp_test::group_from_rows({{3.0, -1.0}, {3.0, -1.0}, {3.0, -1.0}}), 0.01);
  EXPECT_DOUBLE_EQ(m.mean(0), 3.0);
  EXPECT_DOUBLE_EQ(m.mean(1), -1.0);
  EXPECT_TRUE(m.covariance.isApprox(0.01 * Eigen::MatrixXd::Identity(2, 2)));
}

TEST(Gaussian, TwoPointClosedForm) {
  const auto g = sp_test::group_from_rows({{-1.0}, {1.0}});
  const auto m = gaussian_fit(g, 0.01);
  EXPECT_DOUBLE_EQ(m.mean(0), 0.0);
  EXPECT_NEAR(m.covariance(0, 0), 2.01, 1e-12);
  expect_near_all(mahalanobis_scores(g, m), {1.0 / std::sqrt(2.01), 1.0 / std::sqrt(2.01)}, 1e-12);
  EXPECT_NEAR(1.0 / std::sqrt(2.01), 0.7053, 1e-4);
}

TEST(Gaussian, CovarianceMatchesTextbookOracle) {
  std::mt19937_64 rng(5);
  const auto rows = sp_test::random_rows(rng, 6, 4);
  const auto m = gaussian_fit(sp_test::group_from_rows(rows), 0.01);
  const auto want = oracle::covariance(rows, 0.01);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) EXPECT_NEAR(m.covariance(a, b), want[a][b], 1e-8);
}

TEST(Gaussian, MeanScoresZero) {
  const auto g = sp_test::group_from_rows({{1.0, 2.0}, {3.0, 2.0}, {2.0, 5.0}});
  const auto m = gaussian_fit(g, 0.01);
  PositionGroup at_mean;
  at_mean.vectors = m.mean.transpose();
  EXPECT_NEAR(mahalanobis_scores(at_mean, m)[0], 0.0, 1e-12);
}

TEST(Gaussian, MahalanobisMatchesExplicitInverse) {
  std::mt19937_64 rng(8);
  const auto rows = sp_test::random_rows(rng, 10, 5);
  const auto g = sp_test::group_from_rows(rows);
  const auto got = mahalanobis_scores(g, gaussian_fit(g, 0.01));
  const auto want = oracle::mahalanobis(rows, 0.01);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-6 * want[i]);
}

TEST(Gaussian, SomeSampleScoresPositive) {
  std::mt19937_64 rng(2);
  const auto g = sp_test::group_from_rows(sp_test::random_rows(rng, 4, 3));
  const auto s = mahalanobis_scores(g, gaussian_fit(g, 0.01));
  EXPECT_GT(*std::max_element(s.begin(), s.end()), 0.0);
}

TEST(Lof, RegularPolygonIsUniform) {
  sp_test::Rows rows;
  for (int i = 0; i < 9; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 9.0;
    rows.push_back({std::cos(a), std::sin(a)});
  }
  for (std::size_t k : {1u, 2u, 4u, 8u}) {
    const auto s = lof_scores(sp_test::group_from_rows(rows), k);
    for (double v : s) EXPECT_NEAR(v, s[0], 1e-9) << "k=" << k;
  }
}

TEST(Lof, DuplicatesScoreOne) {
  const auto s = lof_scores(sp_test::group_from_rows(sp_test::Rows(7, {0.5, 0.5, 0.5})), 3);
  for (double v : s) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Lof, IsolatedPointStandsOut) {
  std::mt19937_64 rng(21);
  auto rows = sp_test::random_rows(rng, 12, 2, 0.1);
  rows.push_back({10.0, 0.0});
  const auto got = lof_scores(sp_test::group_from_rows(rows), 3);
  const auto want = oracle::lof(rows, 3);
  EXPECT_NEAR(got.back(), want.back(), 1e-6);
  const double inlier_max = *std::max_element(got.begin(), got.end() - 1);
  EXPECT_GE(got.back(), 10.0 * inlier_max);
}

TEST(Lof, KOutOfRange) {
  const auto g = sp_test::group_from_rows({{0.0}, {1.0}, {2.0}});
  EXPECT_THROW(lof_scores(g, 3), InputError);
  EXPECT_THROW(lof_scores(g, 0), InputError);
}

TEST(Lof, TiesAtKthDistanceGoToLowerIndex) {
  // Point 0 has two neighbors at equal distance; with k=1 only index 1 is used.
  const sp_test::Rows rows{{0.0}, {1.0}, {-1.0}, {-1.5}, {3.0}};
  expect_near_all(lof_scores(sp_test::group_from_rows(rows), 1), oracle::lof(rows, 1), 1e-12);
}

TEST(Lof, UniformClusterAveragesNearOne) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  sp_test::Rows rows(200, std::vector<double>(2));
  for (auto& r : rows)
    for (auto& v : r) v = u(rng);
  const auto s = lof_scores(sp_test::group_from_rows(rows), 6);
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  EXPECT_GE(mean, 0.8);
  EXPECT_LE(mean, 1.3);
}

TEST(ScoreAll, IdenticalMapsNearestIsZero) {
  FeatureMap a{"a", {3, 2, 2}, std::vector<float>(12, 0.25f)};
  FeatureMap b = a;
  b.image_id = "b";
  const auto s = score_all(make_dataset({a, b}), {Method::nearest, 6, 0.01});
  EXPECT_EQ(s.scores, std::vector<double>(8, 0.0));
}

TEST(ScoreAll, LofNeedsMoreThanKImages) {
  std::mt19937_64 rng(1);
  const auto ds = sp_test::random_dataset(rng, 3, {4, 2, 2});
  try {
    score_all(ds, {Method::lof, 6, 0.01});
    FAIL() << "expected an error";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("k out of range"), std::string::npos);
  }
}

TEST(ScoreAll, NoneIsAllOnes) {
  std::mt19937_64 rng(1);
  const auto s = score_all(sp_test::random_dataset(rng, 3, {4, 2, 2}), {Method::none, 6, 0.01});
  EXPECT_EQ(s.scores, std::vector<double>(12, 1.0));
}

TEST(ScoreAll, MatchesPerPositionLoopOnSynthetic) {
  SyntheticSpec spec;
  spec.n_images = 20;
  spec.channels = 8;
  const auto data = generate_synthetic(spec);
  for (Method method : {Method::nearest, Method::gaussian, Method::lof}) {
    const auto tensor = score_all(data.dataset, {method, 6, 0.01});
    for (std::size_t h = 0; h < 8; ++h)
      for (std::size_t w = 0; w < 8; ++w) {
        sp_test::Rows rows;
        for (const auto& m : data.dataset.maps) {
          const auto p = m.patch(h, w);
          rows.emplace_back(p.begin(), p.end());
        }
        std::vector<double> want;
        if (method == Method::nearest) want = oracle::nearest_other(rows);
        if (method == Method::gaussian) want = oracle::mahalanobis(rows, 0.01);
        if (method == Method::lof) want = oracle::lof(rows, 6);
        for (std::size_t n = 0; n < rows.size(); ++n)
          ASSERT_NEAR(tensor.at(n, h, w), want[n], 1e-6) << to_string(method) << " at " << n << "," << h << "," << w;
      }
  }
}

TEST(ScoreAll, PermutationEquivariance) {
  std::mt19937_64 rng(4);
  const auto ds = sp_test::random_dataset(rng, 12, {4, 2, 3});
  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<FeatureMap> shuffled;
  for (auto p : perm) shuffled.push_back(ds.maps[p]);
  const auto permuted = make_dataset(shuffled);
  for (Method method : {Method::nearest, Method::gaussian, Method::lof}) {
    const auto a = score_all(ds, {method, 4, 0.01});
    const auto b = score_all(permuted, {method, 4, 0.01});
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t h = 0; h < 2; ++h)
        for (std::size_t w = 0; w < 3; ++w) EXPECT_NEAR(b.at(i, h, w), a.at(perm[i], h, w), 1e-9);
  }
}

TEST(ScoreAll, ScaleBehaviour) {
  std::mt19937_64 rng(6);
  const auto rows = sp_test::random_rows(rng, 30, 3);
  auto scaled = rows;
  const double lambda = 3.5;
  for (auto& r : scaled)
    for (auto& v : r) v *= lambda;
  const auto g = sp_test::group_from_rows(rows), gs = sp_test::group_from_rows(scaled);
  const auto nn = nn_scores(g), nns = nn_scores(gs);
  const auto lof = lof_scores(g, 6), lofs = lof_scores(gs, 6);
  const auto mh = mahalanobis_scores(g, gaussian_fit(g, 0.01));
  const auto mhs = mahalanobis_scores(gs, gaussian_fit(gs, 0.01 * lambda * lambda));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_NEAR(nns[i], lambda * nn[i], 1e-9);
    EXPECT_NEAR(lofs[i], lof[i], 1e-9);
    EXPECT_NEAR(mhs[i], mh[i], 1e-9);
  }
}

TEST(ScoreFile, RoundTrip) {
  softpatch::testing::TempDir dir("sps");
  std::mt19937_64 rng(2);
  const auto s = score_all(sp_test::random_dataset(rng, 8, {3, 2, 2}), {Method::gaussian, 6, 0.01});
  write_score_file(s, dir / "s.sps");
  const auto back = read_score_file(dir / "s.sps");
  EXPECT_EQ(back.method, Method::gaussian);
  EXPECT_EQ(back.images, 8u);
  EXPECT_EQ(back.scores, s.scores);
}
