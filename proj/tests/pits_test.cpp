#include <gtest/gtest.h>

#include "qrdyn/pits.hpp"
#include "stubs.hpp"

using namespace qrdyn;
using namespace qrdyn::pits;

namespace {

// Optimal cover of sorted points on a line by intervals of length 2r: start
// each interval at the leftmost uncovered point.
std::size_t optimal_line_cover(const std::vector<double>& xs, double r) {
  std::size_t count = 0;
  double reach = -std::numeric_limits<double>::infinity();
  for (double x : xs) {
    if (x <= reach) continue;
    ++count;
    reach = x + 2.0 * r;
  }
  return count;
}

// Area of {R <= |z| <= cR, Re z <= a} for 0 <= a < R, by Simpson's rule on
// the strip 0 <= x <= a.
double annulus_left_area(double R, double c, double a) {
  const int n = 2000;
  auto height = [&](double x) { return 2.0 * (std::sqrt(c * c * R * R - x * x) - std::sqrt(R * R - x * x)); };
  const double h = a / n;
  double s = height(0) + height(a);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * height(i * h);
  return 0.5 * std::numbers::pi * (c * c - 1.0) * R * R + s * h / 3.0;
}

}  // namespace

TEST(SublevelSample, ExpHalfPlane) {
  const auto map = maps::make_exp(0.2);
  std::size_t sampled = 0;
  const auto pts = sublevel_sample(map, 20.0, 2.0, 1.0, 64, 10'000'000, &sampled);
  ASSERT_FALSE(pts.empty());
  const double edge = std::log(5.0);
  for (const auto& p : pts) EXPECT_LE(p[0], edge + 1e-12);
  const double expected = annulus_left_area(20.0, 2.0, edge) / (3.0 * std::numbers::pi * 400.0);
  EXPECT_NEAR(static_cast<double>(pts.size()) / static_cast<double>(sampled), expected, 0.01);
}

TEST(SublevelSample, ClusterStubKeepsOnlyClusters) {
  const auto map = testing_stubs::three_cluster_map();
  for (double R : {10.0, 20.0, 40.0}) {
    const auto pts = sublevel_sample(map, R, 2.0, 1.0, 160);
    ASSERT_FALSE(pts.empty());
    for (const auto& p : pts) EXPECT_TRUE(testing_stubs::in_cluster(p));
    EXPECT_EQ(greedy_cover_count(pts, 0.05 * R), 3u);
  }
}

TEST(SublevelSample, PolynomialStubIsEmpty) {
  const auto map = testing_stubs::polynomial_map();
  for (double R : {2.0, 4.0, 8.0}) EXPECT_TRUE(sublevel_sample(map, R, 2.0, 1.0, 32).empty());
}

TEST(SublevelSample, InvalidArguments) {
  const auto map = maps::make_exp(0.2);
  EXPECT_THROW(sublevel_sample(map, 0.0, 2.0, 1.0, 32), ParameterError);
  EXPECT_THROW(sublevel_sample(map, 10.0, 1.0, 1.0, 32), ParameterError);
  EXPECT_THROW(sublevel_sample(map, 10.0, 2.0, 1.0, 16), ParameterError);
}

TEST(GreedyCover, SmallExamples) {
  EXPECT_EQ(greedy_cover_count({}, 1.0), 0u);
  EXPECT_EQ(greedy_cover_count({Point{3, 4, 0}}, 1.0), 1u);
  std::vector<Point> clusters;
  for (const Point& c : {Point{0, 0, 0}, Point{10, 0, 0}, Point{0, 10, 0}})
    for (int i = 0; i < 20; ++i) clusters.push_back(c + Point{0.02 * i, 0.01 * (i % 3), 0});
  EXPECT_EQ(greedy_cover_count(clusters, 1.0), 3u);
  EXPECT_THROW(greedy_cover_count(clusters, 0.0), ParameterError);
}

TEST(GreedyCover, CollinearPointsAgainstLineOracle) {
  const double r = 1.0;
  std::vector<Point> pts;
  std::vector<double> xs;
  for (int i = 0; i < 100; ++i) {
    pts.push_back({1.01 * r * i, 0, 0});
    xs.push_back(1.01 * r * i);
  }
  const std::size_t greedy = greedy_cover_count(pts, r);
  EXPECT_GE(greedy, 34u);
  EXPECT_LE(greedy, optimal_line_cover(xs, r));
  EXPECT_GE(greedy, optimal_line_cover(xs, 2.0 * r));
  EXPECT_EQ(optimal_line_cover(xs, r), 50u);
}

TEST(GreedyCover, PicksAreSeparatedAndCover) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::vector<Point> pts(3000);
  for (auto& p : pts) p = {u(rng), u(rng), 0.0};
  const double r = 0.7;
  const auto cover = greedy_cover(pts, r);
  for (std::size_t i = 0; i < cover.centers.size(); ++i)
    for (std::size_t j = i + 1; j < cover.centers.size(); ++j) EXPECT_GT(dist(cover.centers[i], cover.centers[j]), 2 * r);
  for (const auto& p : pts) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : cover.centers) best = std::min(best, dist(p, c));
    EXPECT_LE(best, 2 * r);
  }
}

TEST(GreedyCover, NonIncreasingInRadiusAndOrderFree) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Point> pts(500);
    for (auto& p : pts) p = {u(rng), u(rng), trial % 2 ? u(rng) : 0.0};
    std::size_t previous = std::numeric_limits<std::size_t>::max();
    for (double r : {0.05, 0.1, 0.2, 0.4, 0.8, 1.6}) {
      const std::size_t count = greedy_cover_count(pts, r);
      EXPECT_LE(count, previous);
      previous = count;
    }
    auto shuffled = pts;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(greedy_cover_count(shuffled, 0.3), greedy_cover_count(pts, 0.3));
  }
}

TEST(PitsScan, ExpHasNoPitsWithWitness) {
  const auto report = pits_scan(maps::make_exp(0.2), PitsScanParams{});
  EXPECT_EQ(report.verdict, PitsVerdict::NoPits);
  EXPECT_EQ(report.N_used, 10u);
  ASSERT_GT(report.witness.size(), 10u);
  EXPECT_DOUBLE_EQ(report.witness_R, 80.0);
  const double sep = 2.0 * 0.05 * 80.0;
  for (std::size_t i = 0; i < report.witness.size(); i += 7)
    for (std::size_t j = i + 1; j < report.witness.size(); ++j) EXPECT_GT(dist(report.witness[i], report.witness[j]), sep);
  EXPECT_LE(report.sequence_ratio, report.c + 1e-9);
  EXPECT_EQ(report.cover_counts.size(), 4u);
}

TEST(PitsScan, ExpCountAtSmallestRadiusMatchesBruteCover) {
  const auto map = maps::make_exp(0.2);
  const auto report = pits_scan(map, PitsScanParams{});
  const auto pts = sublevel_sample(map, 10.0, 2.0, 1.0, 160);
  auto sorted = pts;
  std::sort(sorted.begin(), sorted.end());
  std::vector<Point> picks;
  for (const auto& p : sorted) {
    bool covered = false;
    for (const auto& c : picks) covered |= dist(p, c) <= 2.0 * 0.25;
    if (!covered) picks.push_back(p);
  }
  EXPECT_EQ(report.records[0].cover_upper, picks.size());
}

TEST(PitsScan, ClusterStubHasPits) {
  const auto report = pits_scan(testing_stubs::three_cluster_map(), PitsScanParams{});
  EXPECT_EQ(report.verdict, PitsVerdict::HasPits);
  for (std::size_t n : report.cover_counts) EXPECT_EQ(n, 3u);
  EXPECT_TRUE(report.witness.empty());
}

TEST(PitsScan, FatouModifiedIsNotCertifiedAsHavingPits) {
  const auto report = pits_scan(maps::make_fatou_modified(50.0), PitsScanParams{});
  EXPECT_NE(report.verdict, PitsVerdict::HasPits);
}

TEST(PitsScan, InvalidRadii) {
  const auto map = maps::make_exp(0.2);
  PitsScanParams p;
  p.radii = {10, 20, 40};
  EXPECT_THROW(pits_scan(map, p), ParameterError);
  p.radii = {10, 20, 15, 80};
  EXPECT_THROW(pits_scan(map, p), ParameterError);
  p.radii = {10, 12, 14, 16};
  EXPECT_THROW(pits_scan(map, p), ParameterError);
}

TEST(Robustness, ExpAndClusterStubAgree) {
  const auto e = threshold_robustness(maps::make_exp(0.2), PitsScanParams{}, 1.5);
  ASSERT_TRUE(e.agree.has_value());
  EXPECT_TRUE(*e.agree);
  EXPECT_EQ(e.power_threshold.verdict, PitsVerdict::NoPits);
  const auto s = threshold_robustness(testing_stubs::three_cluster_map(), PitsScanParams{}, 1.5);
  ASSERT_TRUE(s.agree.has_value());
  EXPECT_TRUE(*s.agree);
  EXPECT_EQ(s.power_threshold.verdict, PitsVerdict::HasPits);
}

TEST(Robustness, PolynomialTypeIsRefused) {
  EXPECT_THROW(threshold_robustness(testing_stubs::polynomial_map(), PitsScanParams{}, 1.5), ParameterError);
  EXPECT_THROW(threshold_robustness(maps::make_exp(0.2), PitsScanParams{}, 1.0), ParameterError);
}

TEST(Robustness, InconclusiveScanGivesNoAnswer) {
  const auto r = threshold_robustness(maps::make_qr_sine(), PitsScanParams{}, 1.5);
  EXPECT_EQ(r.unit_threshold.verdict, PitsVerdict::Inconclusive);
  EXPECT_FALSE(r.agree.has_value());
}
