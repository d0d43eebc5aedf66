#include "contactforge/sampling.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

using namespace contactforge;

TEST(BalanceScore, HandEvaluatedExample) {
  const std::vector<double> mean = {0.9, 0.1, 0.1, 0.1};
  const std::vector<std::uint8_t> c = {0, 1, 0, 0};
  EXPECT_NEAR(contact_balance_score(c, mean), 0.2, 1e-15);
}

TEST(BalanceScore, ZeroCases) {
  const std::vector<double> mean = {0.3, 0.7, 0.2};
  const std::vector<std::uint8_t> zero = {0, 0, 0}, ones = {1, 1, 1};
  EXPECT_EQ(contact_balance_score(zero, mean), 0.0);
  EXPECT_EQ(contact_balance_score(ones, std::vector<double>(3, 0.5)), 0.0);
  EXPECT_THROW(contact_balance_score(zero, std::vector<double>(2, 0.5)), std::invalid_argument);
}

TEST(BinEdges, LogSpacedFixture) {
  const auto e = compute_bin_edges(0.0, 1.0, 4, 5.0);
  ASSERT_EQ(e.edges.size(), 5u);
  EXPECT_FALSE(e.degenerate);
  EXPECT_EQ(e.edges[0], 0.0);
  EXPECT_NEAR(e.edges[1], 0.4525887711, 1e-9);
  EXPECT_NEAR(e.edges[2], 0.6991803253, 1e-9);
  EXPECT_NEAR(e.edges[3], 0.8696170690, 1e-9);
  EXPECT_EQ(e.edges[4], 1.0);
}

TEST(BinEdges, SmallCurvatureIsNearlyUniform) {
  const auto e = compute_bin_edges(2.0, 4.0, 8, 1e-10);
  for (std::size_t k = 0; k <= 8; ++k)
    EXPECT_NEAR(e.edges[k], 2.0 + 0.25 * static_cast<double>(k), 1e-6);
}

TEST(BinEdges, DegenerateRangeAndErrors) {
  const auto e = compute_bin_edges(0.3, 0.3, 8, 5.0);
  EXPECT_TRUE(e.degenerate);
  EXPECT_EQ(e.bin_count(), 1u);
  EXPECT_THROW(compute_bin_edges(0.0, 1.0, 1, 5.0), std::invalid_argument);
  EXPECT_THROW(compute_bin_edges(0.0, 1.0, 4, 0.0), std::invalid_argument);
  EXPECT_THROW(compute_bin_edges(1.0, 0.0, 4, 5.0), std::invalid_argument);
}

TEST(AssignBins, HalfOpenIntervals) {
  const auto e = compute_bin_edges(0.0, 1.0, 4, 5.0);
  const std::vector<double> s = {0.0, e.edges[1], std::nextafter(e.edges[2], 0.0), e.edges[2], e.edges[3], 1.0};
  const auto bins = assign_bins(s, e);
  EXPECT_EQ(bins[0], (std::vector<std::size_t>{0}));
  EXPECT_EQ(bins[1], (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(bins[2], (std::vector<std::size_t>{3}));
  EXPECT_EQ(bins[3], (std::vector<std::size_t>{4, 5}));
  const std::vector<double> outside = {1.5};
  EXPECT_THROW(assign_bins(outside, e), std::invalid_argument);
}

TEST(AssignBins, EqualScoresShareOneBin) {
  const std::vector<double> s(10, 0.25);
  const auto e = compute_bin_edges(0.25, 0.25, 8, 5.0);
  const auto bins = assign_bins(s, e);
  ASSERT_EQ(bins.size(), 1u);
  EXPECT_EQ(bins[0].size(), 10u);
}

TEST(AssignBins, UniformScoresFollowEdgeWidths) {
  const auto e = compute_bin_edges(0.0, 1.0, 4, 5.0);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = 20000;
  std::vector<double> s(n);
  for (double &x : s)
    x = u(rng);
  const auto bins = assign_bins(s, e);
  for (std::size_t k = 0; k < 4; ++k) {
    const double p = e.edges[k + 1] - e.edges[k];
    const double sd = std::sqrt(static_cast<double>(n) * p * (1 - p));
    EXPECT_NEAR(static_cast<double>(bins[k].size()), static_cast<double>(n) * p, 3 * sd) << "bin " << k;
  }
}

TEST(Resample, EqualQuotaAcrossUnequalBins) {
  std::vector<std::vector<std::size_t>> bins(2);
  for (std::size_t i = 0; i < 900; ++i)
    bins[0].push_back(i);
  for (std::size_t i = 900; i < 1000; ++i)
    bins[1].push_back(i);
  const auto draw = stratified_resample(bins, 200, 1);
  std::size_t from0 = 0;
  for (const auto &r : draw)
    from0 += r.bin == 0;
  EXPECT_EQ(from0, 100u);
  EXPECT_EQ(draw.size() - from0, 100u);
  // The 100-member bin is covered exactly once.
  std::map<std::size_t, int> seen;
  for (const auto &r : draw)
    if (r.bin == 1)
      ++seen[r.sample];
  EXPECT_EQ(seen.size(), 100u);
}

TEST(Resample, SmallBinRepeatsEveryMember) {
  std::vector<std::vector<std::size_t>> bins = {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, {10, 11}};
  const auto draw = stratified_resample(bins, 200, 3);
  std::map<std::size_t, int> seen;
  for (const auto &r : draw)
    if (r.bin == 0)
      ++seen[r.sample];
  EXPECT_EQ(seen.size(), 10u);
  for (const auto &[s, n] : seen)
    EXPECT_EQ(n, 10);
}

TEST(Resample, EmptyBinsAreSkippedAndSeedsMatter) {
  std::vector<std::vector<std::size_t>> bins = {{0, 1, 2}, {}, {3, 4, 5, 6, 7}, {}};
  const auto a = stratified_resample(bins, 7, 9), b = stratified_resample(bins, 7, 9);
  const auto c = stratified_resample(bins, 7, 10);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  for (const auto *draw : {&a, &c}) {
    std::size_t n0 = 0, n2 = 0;
    for (const auto &r : *draw) {
      EXPECT_TRUE(r.bin == 0 || r.bin == 2);
      (r.bin == 0 ? n0 : n2)++;
    }
    EXPECT_EQ(n0, 4u);
    EXPECT_EQ(n2, 3u);
  }
  EXPECT_THROW(stratified_resample(bins, 3, 1), std::invalid_argument);
  EXPECT_THROW(stratified_resample({{}, {}}, 5, 1), std::invalid_argument);
}

TEST(SamplingPlan, RebalancesSyntheticData) {
  SyntheticConfig cfg;
  cfg.samples = 1000;
  const auto ds = generate_synthetic(cfg);
  const auto plan = build_sampling_plan(ds, kDefaultBinCount, kDefaultCurvature, 2000, 4);
  ASSERT_EQ(plan.resampled.size(), 2000u);
  std::size_t empty = 0;
  for (const auto &r : plan.resampled)
    empty += !ds[r.sample].has_contact();
  EXPECT_LT(static_cast<double>(empty) / 2000.0, 0.7);
  EXPECT_EQ(format_plan_csv(plan.resampled),
            format_plan_csv(build_sampling_plan(ds, kDefaultBinCount, kDefaultCurvature, 2000, 4).resampled));
}

TEST(SamplingPlan, UniformPlanCoversEverySamplePerPass) {
  const auto plan = build_uniform_plan(10, 25, 2);
  ASSERT_EQ(plan.resampled.size(), 25u);
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<int> seen(10, 0);
    for (int i = 0; i < 10; ++i)
      ++seen[plan.resampled[static_cast<std::size_t>(pass * 10 + i)].sample];
    for (int s : seen)
      EXPECT_EQ(s, 1);
  }
}

TEST(PlanCsv, RoundTripAndErrors) {
  const std::vector<ResampledIndex> seq = {{4, 0}, {7, 2}, {4, 0}};
  const auto text = format_plan_csv(seq);
  EXPECT_EQ(text, "position,sample_index,bin\n0,4,0\n1,7,2\n2,4,0\n");
  EXPECT_EQ(parse_plan_csv(text), seq);
  EXPECT_THROW(parse_plan_csv("position,sample_index,bin\n1,4,0\n"), DataError);
  EXPECT_THROW(parse_plan_csv("position,sample_index,bin\n0,x,0\n"), DataError);
  EXPECT_THROW(parse_plan_csv("position,sample_index,bin\n"), DataError);
}
