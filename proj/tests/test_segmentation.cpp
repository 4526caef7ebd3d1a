#include "trendsearch/data.hpp"
#include "trendsearch/error.hpp"
#include "trendsearch/segmentation.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

namespace trendsearch {
namespace {

/// Closed-form SSE of the OLS line through (i, y[i]) for i in [b, e).
double oracle_sse(const std::vector<double>& y, std::size_t b, std::size_t e) {
    const double n = static_cast<double>(e - b);
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = b; i < e; ++i) {
        const double x = static_cast<double>(i);
        sx += x;
        sy += y[i];
        sxx += x * x;
        sxy += x * y[i];
        syy += y[i] * y[i];
    }
    const double cxx = sxx - sx * sx / n;
    const double cxy = sxy - sx * sy / n;
    const double cyy = syy - sy * sy / n;
    return std::max(0.0, cyy - cxy * cxy / cxx);
}

TEST(FitLineTest, ExactLine) {
    const TimeSeries s({0.0, 1.0, 2.0});
    const LineFit f = fit_line(s, {0, 3});
    EXPECT_DOUBLE_EQ(f.slope_m, 1.0);
    EXPECT_EQ(f.sse, 0.0);
}

TEST(FitLineTest, Constant) {
    const LineFit f = fit_line(TimeSeries({5.0, 5.0, 5.0}), {0, 3});
    EXPECT_EQ(f.slope_m, 0.0);
    EXPECT_EQ(f.sse, 0.0);
}

TEST(FitLineTest, HandLeastSquares) {
    const LineFit f = fit_line(TimeSeries({0.0, 1.0, 0.0}), {0, 3});
    EXPECT_NEAR(f.slope_m, 0.0, 1e-15);
    EXPECT_NEAR(f.intercept, 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(f.sse, 2.0 / 3.0, 1e-15);
}

TEST(FitLineTest, ExplicitIndices) {
    const std::vector<double> x{0.0, 2.0, 4.0};
    const std::vector<double> y{1.0, 2.0, 3.0};
    const LineFit f = fit_line(x, y);
    EXPECT_NEAR(f.slope_m, 0.5, 1e-15);
    EXPECT_NEAR(f.intercept, 1.0, 1e-15);
}

TEST(FitLineTest, RequiresTwoDistinctPoints) {
    const std::vector<double> one{1.0};
    EXPECT_THROW(fit_line(one, one), DomainError);
    const std::vector<double> same{2.0, 2.0};
    const std::vector<double> y{1.0, 3.0};
    EXPECT_THROW(fit_line(same, y), DomainError);
}

TEST(MergeCostTest, HalvesOfOneLine) {
    const TimeSeries s({0.0, 2.0, 4.0, 6.0, 8.0, 10.0});
    EXPECT_EQ(merge_cost({0, 3}, {3, 6}, s), 0.0);
}

TEST(MergeCostTest, KinkIsPositive) {
    const TimeSeries s({0.0, 1.0, 0.0, -1.0});
    EXPECT_GT(merge_cost({0, 2}, {2, 4}, TimeSeries({0.0, 1.0, 1.0, 0.0})), 0.0);
    EXPECT_GT(merge_cost({0, 2}, {2, 4}, s), 0.0);
}

TEST(MergeCostTest, HandFourPoints) {
    // x = 0..3, y = (0,1,0,1): Sxy = 1, Sxx = 5, Syy = 1 -> SSE = 1 - 1/5.
    EXPECT_NEAR(merge_cost({0, 2}, {2, 4}, TimeSeries({0.0, 1.0, 0.0, 1.0})), 0.8, 1e-15);
}

TEST(MergeCostTest, RejectsNonAdjacent) {
    const TimeSeries s({0.0, 1.0, 2.0, 3.0, 4.0});
    EXPECT_THROW(merge_cost({0, 2}, {3, 5}, s), DomainError);
}

TEST(BottomUpTest, ExactLineIsOneSegment) {
    std::vector<double> y(100);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = 0.7 * static_cast<double>(i) - 3.0;
    const TrendSequence t = segment_bottom_up(TimeSeries(y), {1e-9, 2});
    ASSERT_EQ(t.size(), 1u);
    EXPECT_EQ(t[0].duration, 100u);
    EXPECT_NEAR(t[0].slope_deg, slope_to_angle(0.7), 1e-9);
}

TEST(BottomUpTest, TwoPiecesSplitAtBruteForceOptimum) {
    std::vector<double> y;
    for (int i = 0; i < 50; ++i) y.push_back(i);
    for (int i = 0; i < 50; ++i) y.push_back(48.0 - i);
    // The corner point lies on both lines, so two splits tie at zero SSE.
    double best_sse = std::numeric_limits<double>::infinity();
    std::vector<double> total(y.size(), 0.0);
    for (std::size_t b = 2; b + 2 <= y.size(); ++b) {
        total[b] = oracle_sse(y, 0, b) + oracle_sse(y, b, y.size());
        best_sse = std::min(best_sse, total[b]);
    }
    std::vector<std::size_t> optima;
    for (std::size_t b = 2; b + 2 <= y.size(); ++b) {
        if (total[b] <= best_sse + 1e-9) optima.push_back(b);
    }
    ASSERT_EQ(optima, (std::vector<std::size_t>{49, 50}));
    const TrendSequence t = segment_bottom_up(TimeSeries(y), {1e-6, 2});
    ASSERT_EQ(t.size(), 2u);
    EXPECT_TRUE(t.start_of(1) == 49 || t.start_of(1) == 50) << t.start_of(1);
    EXPECT_NEAR(t[0].slope_deg, 45.0, 1e-9);
    EXPECT_NEAR(t[1].slope_deg, -45.0, 1e-9);
}

TEST(BottomUpTest, InfiniteCeilingMergesEverything) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> y(60);
    for (double& v : y) v = n(rng);
    EXPECT_EQ(segment_bottom_up(TimeSeries(y), {}).size(), 1u);
}

TEST(BottomUpTest, Preconditions) {
    const TimeSeries s({0.0, 1.0, 2.0});
    EXPECT_THROW(segment_bottom_up(s, {0.0, 2}), DomainError);
    EXPECT_THROW(segment_bottom_up(s, {1.0, 1}), DomainError);
    EXPECT_THROW(segment_bottom_up(s, {1.0, 2}), DomainError);  // 3 < 2 * 2
}

TEST(BottomUpTest, MinDurationIsHonoured) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> y(200);
    for (double& v : y) v = n(rng);
    const TrendSequence t = segment_bottom_up(TimeSeries(y), {0.5, 6});
    for (const auto& seg : t.segments()) EXPECT_GE(seg.duration, 6u);
}

TEST(BottomUpProperty, PartitionAndCeiling) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        SyntheticSpec spec;
        spec.n_pieces = 3 + seed % 5;
        spec.noise_std = 0.3;
        spec.seed = seed;
        const auto syn = generate_synthetic(spec);
        const std::vector<double> y(syn.series.values().begin(), syn.series.values().end());
        const double ceiling = 0.2 + 0.1 * static_cast<double>(seed % 7);
        const TrendSequence t = segment_bottom_up(syn.series, {ceiling, 2});
        std::size_t total = 0;
        for (std::size_t k = 0; k < t.size(); ++k) {
            total += t[k].duration;
            EXPECT_LE(oracle_sse(y, t.start_of(k), t.end_of(k) + 1), ceiling * (1 + 1e-9)) << "seed " << seed;
            EXPECT_NEAR(t[k].slope_deg, slope_to_angle(fit_line(syn.series, {t.start_of(k), t.end_of(k) + 1}).slope_m),
                        1e-12);
        }
        EXPECT_EQ(total, y.size());
        std::vector<std::size_t> durations;
        for (const auto& seg : t.segments()) durations.push_back(seg.duration);
        EXPECT_EQ(t.durations_from_breakpoints(), durations);
        EXPECT_EQ(segment_bottom_up(syn.series, {ceiling, 2}), t);
    }
}

TEST(BottomUpProperty, NoiseFreeRecoversPieceCount) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        SyntheticSpec spec;
        spec.n_pieces = 2 + seed % 6;
        spec.min_slope_deg = 10.0;
        spec.max_slope_deg = 70.0;
        spec.alternate_sign = true;
        spec.seed = seed;
        const auto syn = generate_synthetic(spec);
        const TrendSequence t = segment_bottom_up(syn.series, {1e-6, 2});
        EXPECT_EQ(t.size(), spec.n_pieces) << "seed " << seed;
    }
}

TEST(DefaultMaxErrorTest, ScalesPopulationVariance) {
    const TimeSeries s({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(default_max_error(s), 0.5 * 1.25);
    EXPECT_DOUBLE_EQ(default_max_error(s, 2.0), 2.5);
}

} // namespace
} // namespace trendsearch
