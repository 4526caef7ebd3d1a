#pragma once

#include "trendsearch/trend.hpp"

#include <cstddef>
#include <limits>
#include <span>

namespace trendsearch {

struct LineFit {
    double slope_m{0.0};
    double intercept{0.0};
    double sse{0.0};
};

struct SegmentationParams {
    /// Ceiling on the SSE of any merged segment.
    double max_error{std::numeric_limits<double>::infinity()};
    std::size_t min_duration{2};
};

/// Half-open index range [begin, end) into a series.
struct PointRange {
    std::size_t begin{0};
    std::size_t end{0};

    std::size_t size() const { return end - begin; }
};

/// Ordinary least squares of `values` against `indices`.
LineFit fit_line(std::span<const double> indices, std::span<const double> values);

/// OLS over the consecutive points series[range] with x = sample index.
LineFit fit_line(const TimeSeries& series, PointRange range);

/// SSE of one line fitted through the union of two adjacent ranges.
double merge_cost(PointRange left, PointRange right, const TimeSeries& series);

/// Greedy bottom-up piecewise linear approximation. Segments are merged in
/// order of increasing merged-segment SSE (ties to the leftmost pair) while
/// that SSE stays within `params.max_error`.
TrendSequence segment_bottom_up(const TimeSeries& series, const SegmentationParams& params);

/// c * population variance of the series; the default CLI threshold.
double default_max_error(const TimeSeries& series, double scale = 0.5);

} // namespace trendsearch
