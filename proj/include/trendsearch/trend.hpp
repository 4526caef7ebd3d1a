#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace trendsearch {

/// Univariate series sampled at unit index spacing.
class TimeSeries {
public:
    /// Throws DomainError if fewer than two points or any value is non-finite.
    explicit TimeSeries(std::vector<double> values);

    std::span<const double> values() const { return values_; }
    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }

    bool operator==(const TimeSeries&) const = default;

private:
    std::vector<double> values_;
};

struct TrendSegment {
    double slope_deg{0.0};
    std::size_t duration{0};

    bool operator==(const TrendSegment&) const = default;
};

/// Contiguous, non-overlapping trends covering a whole series. Breakpoint k
/// is the index of the last point of segment k (the boundary point belongs to
/// the left segment), so the final breakpoint is always `series_length - 1`.
class TrendSequence {
public:
    TrendSequence() = default;

    /// Builds from segments laid end to end starting at index 0.
    explicit TrendSequence(std::vector<TrendSegment> segments);

    std::span<const TrendSegment> segments() const { return segments_; }
    std::span<const std::size_t> breakpoints() const { return breakpoints_; }
    std::size_t size() const { return segments_.size(); }
    const TrendSegment& operator[](std::size_t k) const { return segments_[k]; }

    std::size_t start_of(std::size_t k) const { return k == 0 ? 0 : breakpoints_[k - 1] + 1; }
    std::size_t end_of(std::size_t k) const { return breakpoints_[k]; }
    std::size_t covered_length() const { return breakpoints_.empty() ? 0 : breakpoints_.back() + 1; }

    /// Point counts recomputed from breakpoints alone.
    std::vector<std::size_t> durations_from_breakpoints() const;

    bool operator==(const TrendSequence&) const = default;

private:
    std::vector<TrendSegment> segments_;
    std::vector<std::size_t> breakpoints_;
};

/// Sliding-window input and the trend that follows it.
struct TrendInstance {
    std::vector<double> window;
    double target_slope_deg{0.0};
    double target_duration{0.0};
    /// Source index of the last window point.
    std::size_t anchor{0};
};

struct InstanceSet {
    std::vector<TrendInstance> instances;
    std::size_t window_size{0};

    std::size_t size() const { return instances.size(); }
};

/// atan(m) in degrees, always inside (-90, 90). Throws DomainError for non-finite m.
double slope_to_angle(double m);

} // namespace trendsearch
