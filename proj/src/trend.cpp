#include "trendsearch/trend.hpp"

#include "trendsearch/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace trendsearch {

TimeSeries::TimeSeries(std::vector<double> values) : values_(std::move(values)) {
    if (values_.size() < 2) {
        throw DomainError("time series needs at least 2 points, got " + std::to_string(values_.size()));
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            throw DomainError("time series value at index " + std::to_string(i) + " is not finite");
        }
    }
}

TrendSequence::TrendSequence(std::vector<TrendSegment> segments) : segments_(std::move(segments)) {
    breakpoints_.reserve(segments_.size());
    std::size_t end = 0;
    for (std::size_t k = 0; k < segments_.size(); ++k) {
        const auto& seg = segments_[k];
        if (seg.duration < 2) {
            throw DomainError("trend " + std::to_string(k) + " has duration " +
                              std::to_string(seg.duration) + " (< 2)");
        }
        if (!(seg.slope_deg > -90.0 && seg.slope_deg < 90.0)) {
            throw DomainError("trend " + std::to_string(k) + " slope outside (-90, 90) degrees");
        }
        end += seg.duration;
        breakpoints_.push_back(end - 1);
    }
}

std::vector<std::size_t> TrendSequence::durations_from_breakpoints() const {
    std::vector<std::size_t> out;
    out.reserve(breakpoints_.size());
    std::size_t begin = 0;
    for (auto bp : breakpoints_) {
        out.push_back(bp + 1 - begin);
        begin = bp + 1;
    }
    return out;
}

double slope_to_angle(double m) {
    if (!std::isfinite(m)) {
        throw DomainError("slope_to_angle: regression coefficient is not finite");
    }
    double deg = std::atan(m) * (180.0 / std::numbers::pi);
    // atan saturates to pi/2 in double precision for huge |m|.
    if (deg >= 90.0) deg = std::nextafter(90.0, 0.0);
    if (deg <= -90.0) deg = std::nextafter(-90.0, 0.0);
    return deg;
}

} // namespace trendsearch
