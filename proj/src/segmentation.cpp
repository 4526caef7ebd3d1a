#include "trendsearch/segmentation.hpp"

#include "trendsearch/error.hpp"

#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace trendsearch {
namespace {

// Residual energy below this fraction of sum(y^2) is rounding noise from
// exactly collinear points.
constexpr double kCollinearTolerance = 1e-20;

template <typename IndexAt>
LineFit fit_points(std::size_t n, IndexAt x_at, std::span<const double> y) {
    if (n < 2) {
        throw DomainError("fit_line needs at least 2 points, got " + std::to_string(n));
    }
    double x_mean = 0.0;
    double y_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        x_mean += x_at(i);
        y_mean += y[i];
    }
    x_mean /= static_cast<double>(n);
    y_mean /= static_cast<double>(n);

    double sxx = 0.0;
    double sxy = 0.0;
    double syy_raw = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x_at(i) - x_mean;
        sxx += dx * dx;
        sxy += dx * (y[i] - y_mean);
        syy_raw += y[i] * y[i];
    }
    if (!(sxx > 0.0)) {
        throw DomainError("fit_line needs distinct indices");
    }

    LineFit fit;
    fit.slope_m = sxy / sxx;
    fit.intercept = y_mean - fit.slope_m * x_mean;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = (y[i] - y_mean) - fit.slope_m * (x_at(i) - x_mean);
        sse += r * r;
    }
    fit.sse = sse <= kCollinearTolerance * syy_raw ? 0.0 : sse;
    return fit;
}

} // namespace

LineFit fit_line(std::span<const double> indices, std::span<const double> values) {
    if (indices.size() != values.size()) {
        throw DomainError("fit_line: " + std::to_string(indices.size()) + " indices but " +
                          std::to_string(values.size()) + " values");
    }
    return fit_points(values.size(), [&](std::size_t i) { return indices[i]; }, values);
}

LineFit fit_line(const TimeSeries& series, PointRange range) {
    if (range.end > series.size() || range.begin > range.end) {
        throw DomainError("fit_line: range [" + std::to_string(range.begin) + ", " +
                          std::to_string(range.end) + ") outside series of length " +
                          std::to_string(series.size()));
    }
    const auto values = series.values().subspan(range.begin, range.size());
    const double origin = static_cast<double>(range.begin);
    return fit_points(range.size(), [origin](std::size_t i) { return origin + static_cast<double>(i); },
                      values);
}

double merge_cost(PointRange left, PointRange right, const TimeSeries& series) {
    if (left.end != right.begin || left.size() == 0 || right.size() == 0) {
        throw DomainError("merge_cost: ranges [" + std::to_string(left.begin) + ", " +
                          std::to_string(left.end) + ") and [" + std::to_string(right.begin) +
                          ", " + std::to_string(right.end) + ") are not adjacent");
    }
    return fit_line(series, PointRange{left.begin, right.end}).sse;
}

double default_max_error(const TimeSeries& series, double scale) {
    const auto v = series.values();
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    return scale * var;
}

TrendSequence segment_bottom_up(const TimeSeries& series, const SegmentationParams& params) {
    const std::size_t n = series.size();
    if (!(params.max_error > 0.0)) {
        throw DomainError("segmentation max_error must be > 0");
    }
    if (params.min_duration < 2) {
        throw DomainError("segmentation min_duration must be >= 2");
    }
    if (n < 2 * params.min_duration) {
        throw DomainError("series of length " + std::to_string(n) + " is shorter than 2 * min_duration = " +
                          std::to_string(2 * params.min_duration));
    }

    // Segments are keyed by their first index. Singletons merge at cost 0, so on
    // generic data the first round reproduces the usual adjacent-pair start while
    // collinear runs can still grow from any offset.
    constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    std::vector<std::size_t> seg_end(n);
    std::vector<std::size_t> next(n, kNone);
    std::vector<std::size_t> prev(n, kNone);
    std::vector<double> cost(n, 0.0);
    std::set<std::pair<double, std::size_t>> queue;

    for (std::size_t i = 0; i < n; ++i) {
        seg_end[i] = i + 1;
        if (i + 1 < n) next[i] = i + 1;
        if (i > 0) prev[i] = i - 1;
    }
    auto pair_cost = [&](std::size_t a) {
        const std::size_t b = next[a];
        return merge_cost(PointRange{a, seg_end[a]}, PointRange{b, seg_end[b]}, series);
    };
    auto enqueue = [&](std::size_t a) {
        if (a == kNone || next[a] == kNone) return;
        if (seg_end[a] - a == 1 && seg_end[next[a]] - next[a] == 1) {
            cost[a] = 0.0;
        } else {
            cost[a] = pair_cost(a);
        }
        queue.emplace(cost[a], a);
    };
    auto dequeue = [&](std::size_t a) {
        if (a == kNone || next[a] == kNone) return;
        queue.erase({cost[a], a});
    };
    auto merge = [&](std::size_t a) {
        const std::size_t b = next[a];
        dequeue(prev[a]);
        dequeue(a);
        dequeue(b);
        seg_end[a] = seg_end[b];
        next[a] = next[b];
        if (next[b] != kNone) prev[next[b]] = a;
        enqueue(prev[a]);
        enqueue(a);
    };

    for (std::size_t i = 0; i + 1 < n; ++i) enqueue(i);

    while (!queue.empty()) {
        const auto [c, a] = *queue.begin();
        if (c > params.max_error) break;
        merge(a);
    }

    // Undersized leftovers (odd tail, or min_duration > 2) join their cheaper neighbour.
    for (;;) {
        std::size_t target = kNone;
        for (std::size_t s = 0; s != kNone; s = next[s]) {
            if (seg_end[s] - s < params.min_duration) {
                target = s;
                break;
            }
        }
        if (target == kNone || (prev[target] == kNone && next[target] == kNone)) break;
        if (prev[target] == kNone) {
            merge(target);
        } else if (next[target] == kNone) {
            merge(prev[target]);
        } else {
            const double left = cost[prev[target]];
            const double right = cost[target];
            merge(left <= right ? prev[target] : target);
        }
    }

    std::vector<TrendSegment> segments;
    for (std::size_t s = 0; s != kNone; s = next[s]) {
        const PointRange range{s, seg_end[s]};
        const LineFit fit = fit_line(series, range);
        segments.push_back(TrendSegment{slope_to_angle(fit.slope_m), range.size()});
    }
    return TrendSequence(std::move(segments));
}

} // namespace trendsearch
