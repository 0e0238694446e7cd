#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "softpatch/error.hpp"
#include "softpatch/experiment.hpp"
#include "softpatch/inference.hpp"
#include "support.hpp"

using namespace softpatch;
namespace sp_test = softpatch::testing;

namespace {

std::vector<float> as_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST(QueryNearest, ExactMatch) {
  const auto bank = sp_test::bank_from_rows({{0, 0}, {1, 1}, {2, 2}, {3, 4}, {5, 5}});
  const auto hit = query_nearest(bank, as_float({3, 4}));
  EXPECT_EQ(hit.index, 3u);
  EXPECT_EQ(hit.distance, 0.0);
}

TEST(QueryNearest, NearerEndpoint) {
  const auto hit = query_nearest(sp_test::bank_from_rows({{0}, {10}}), as_float({4}));
  EXPECT_EQ(hit.index, 0u);
  EXPECT_DOUBLE_EQ(hit.distance, 4.0);
}

TEST(QueryNearest, TieGoesToLowerIndex) {
  EXPECT_EQ(query_nearest(sp_test::bank_from_rows({{-1}, {1}}), as_float({0})).index, 0u);
}

TEST(QueryNearest, DimensionMismatch) {
  EXPECT_THROW(query_nearest(sp_test::bank_from_rows({{1, 2}}), as_float({1})), InputError);
}

TEST(QueryNearest, MatchesLinearScanOracle) {
  std::mt19937_64 rng(31);
  auto rows = sp_test::random_rows(rng, 1000, 8);
  for (auto& r : rows)
    for (auto& v : r) v = static_cast<float>(v);
  const auto bank = sp_test::bank_from_rows(rows);
  for (const auto& q : sp_test::random_rows(rng, 100, 8)) {
    std::vector<double> qd(q.begin(), q.end());
    for (auto& v : qd) v = static_cast<float>(v);
    const auto want = oracle::nearest(rows, qd);
    const auto got = query_nearest(bank, as_float(qd));
    EXPECT_EQ(got.index, want.first);
    EXPECT_NEAR(got.distance, want.second, 1e-12);
  }
}

TEST(ScorePatch, WeightTimesDistance) {
  const auto bank = sp_test::bank_from_rows({{0.0}, {3.0}}, {2.5, 9.0});
  EXPECT_EQ(query_nearest(bank, as_float({0.4})).index, 0u);
  EXPECT_NEAR(score_patch(bank, as_float({0.4})), 1.0, 1e-6);
  EXPECT_EQ(score_patch(bank, as_float({3.0})), 0.0);
}

TEST(ScorePatch, UnitWeightsGivePlainDistance) {
  const auto bank = sp_test::bank_from_rows({{0.0, 0.0}, {6.0, 8.0}});
  EXPECT_DOUBLE_EQ(score_patch(bank, as_float({3.0, 4.0})), 5.0);
}

TEST(ScoreImage, MaxOfPatchScores) {
  const auto bank = sp_test::bank_from_rows({{0.0}});
  FeatureMap m{"m", {1, 2, 2}, {0.1f, 0.2f, 0.9f, 0.3f}};
  const auto r = score_image(bank, m);
  EXPECT_EQ(r.image_score, r.patch_scores.at(1, 0));
  EXPECT_NEAR(r.image_score, 0.9, 1e-6);
}

TEST(ScoreImage, MembersScoreZero) {
  std::mt19937_64 rng(2);
  const auto m = sp_test::random_map(rng, "m", {3, 2, 2});
  sp_test::Rows rows;
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t w = 0; w < 2; ++w) {
      const auto p = m.patch(h, w);
      rows.emplace_back(p.begin(), p.end());
    }
  EXPECT_EQ(score_image(sp_test::bank_from_rows(rows, {3, 4, 5, 6}), m).image_score, 0.0);
}

TEST(ScoreImage, WeightScalingScalesScores) {
  std::mt19937_64 rng(4);
  const auto rows = sp_test::random_rows(rng, 20, 3);
  std::vector<double> w(20);
  for (auto& v : w) v = 0.5 + std::uniform_real_distribution<double>(0, 1)(rng);
  std::vector<double> w3 = w;
  for (auto& v : w3) v *= 3.0;
  const auto m = sp_test::random_map(rng, "m", {3, 3, 3});
  const auto a = score_image(sp_test::bank_from_rows(rows, w), m);
  const auto b = score_image(sp_test::bank_from_rows(rows, w3), m);
  EXPECT_NEAR(b.image_score, 3.0 * a.image_score, 1e-12);
  for (std::size_t i = 0; i < a.patch_scores.values.size(); ++i)
    EXPECT_NEAR(b.patch_scores.values[i], 3.0 * a.patch_scores.values[i], 1e-12);
}

TEST(ScoreImage, SyntheticAnomaliesOutscoreNormals) {
  SyntheticSpec spec;
  spec.n_images = 60;
  const auto data = generate_synthetic(spec);
  std::vector<FeatureMap> train, normals, anomalies;
  for (std::size_t i = 0; i < data.dataset.size(); ++i) {
    if (data.image_outlier[i]) anomalies.push_back(data.dataset.maps[i]);
    else if (train.size() < 40) train.push_back(data.dataset.maps[i]);
    else normals.push_back(data.dataset.maps[i]);
  }
  ASSERT_EQ(anomalies.size(), 6u);
  const auto ds = make_dataset(train);
  const DiscriminatorConfig disc{};
  const auto bank = build_bank(ds, score_all(ds, disc), DenoiseConfig{}, disc);
  double normal_max = 0.0;
  for (const auto& m : normals) normal_max = std::max(normal_max, score_image(bank, m).image_score);
  for (const auto& m : anomalies) EXPECT_GT(score_image(bank, m).image_score, normal_max) << m.image_id;
}

TEST(AnomalyMap, ConstantStaysConstant) {
  AnomalyResult r;
  r.patch_scores = {3, 3, std::vector<double>(9, 1.75)};
  const auto out = anomaly_map(r, 24, 30, 4.0);
  ASSERT_EQ(out.pixel_map.values.size(), 24u * 30u);
  for (double v : out.pixel_map.values) EXPECT_NEAR(v, 1.75, 1e-12);
}

TEST(AnomalyMap, SigmaZeroIsBilinear) {
  AnomalyResult r;
  r.patch_scores = {2, 2, {0, 1, 2, 3}};
  const auto out = anomaly_map(r, 4, 4, 0.0);
  EXPECT_EQ(out.pixel_map.values, bilinear_upsample(r.patch_scores, 4, 4).values);
  // Half-pixel centers: pixel 0 maps to source -0.25 (clamped), pixel 1 to 0.25.
  EXPECT_DOUBLE_EQ(out.pixel_map.at(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(out.pixel_map.at(0, 1), 0.25);
  EXPECT_DOUBLE_EQ(out.pixel_map.at(1, 1), 0.75);
  EXPECT_DOUBLE_EQ(out.pixel_map.at(3, 3), 3.0);
}

TEST(AnomalyMap, SingleHotMatchesDirectConvolution) {
  AnomalyResult r;
  r.patch_scores = {8, 8, std::vector<double>(64, 0.0)};
  r.patch_scores.at(3, 4) = 1.0;
  const auto up = bilinear_upsample(r.patch_scores, 64, 64);
  const auto out = anomaly_map(r, 64, 64, 4.0);
  const auto want = oracle::blur2d(up.values, 64, 64, 4.0);
  for (std::size_t i = 0; i < want.size(); ++i) ASSERT_NEAR(out.pixel_map.values[i], want[i], 1e-12);

  const auto peak = static_cast<std::size_t>(
      std::max_element(out.pixel_map.values.begin(), out.pixel_map.values.end()) - out.pixel_map.values.begin());
  const std::size_t py = peak / 64, px = peak % 64;
  EXPECT_TRUE(py == 27 || py == 28) << py;
  EXPECT_TRUE(px == 35 || px == 36) << px;

  const double before = std::accumulate(up.values.begin(), up.values.end(), 0.0);
  const double after = std::accumulate(out.pixel_map.values.begin(), out.pixel_map.values.end(), 0.0);
  EXPECT_NEAR(after, before, 0.01 * before);
}

TEST(AnomalyMap, TargetSmallerThanGridRejected) {
  AnomalyResult r;
  r.patch_scores = {4, 4, std::vector<double>(16, 0.0)};
  EXPECT_THROW(anomaly_map(r, 2, 8), InputError);
}

TEST(Results, RoundTripKeepsFullPrecision) {
  sp_test::TempDir dir("res");
  ResultsFile f{"abc123", {{"a", 0.1 + 0.2}, {"b", 1e-300}, {"c", 12345.678901234567}}};
  write_results(f, dir / "r.txt");
  const auto back = read_results(dir / "r.txt");
  EXPECT_EQ(back.fingerprint, "abc123");
  ASSERT_EQ(back.scores.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.scores[i].image_id, f.scores[i].image_id);
    EXPECT_EQ(back.scores[i].score, f.scores[i].score);
  }
}
