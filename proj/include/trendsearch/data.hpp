#pragma once

#include "trendsearch/trend.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace trendsearch {

/// Column chosen by zero-based position or by header name.
using ColumnSelector = std::variant<std::size_t, std::string>;

/// Reads one numeric column. A first row whose selected cell is not numeric
/// is treated as a header; any later unparseable cell is a ParseError naming
/// its 1-based line number.
TimeSeries load_csv(const std::filesystem::path& path, const ColumnSelector& column = std::size_t{0});

/// Block means over non-overlapping windows of `factor` points; a trailing
/// partial block is dropped.
TimeSeries resample(const TimeSeries& series, std::size_t factor);

struct SyntheticSpec {
    std::size_t n_pieces{5};
    std::size_t min_duration{10};
    std::size_t max_duration{30};
    double min_slope_deg{-60.0};
    double max_slope_deg{60.0};
    double noise_std{0.0};
    /// When set, slopes are drawn from the range and then given alternating
    /// signs (up, down, up, ...), producing a learnable sawtooth.
    bool alternate_sign{false};
    std::uint64_t seed{0};
};

struct SyntheticSeries {
    TimeSeries series;
    TrendSequence truth;
};

/// Concatenated linear pieces. Each piece restarts from the previous piece's
/// last value, so consecutive pieces meet at a corner that belongs to exactly
/// one of them.
SyntheticSeries generate_synthetic(const SyntheticSpec& spec);

/// One instance per consecutive trend pair (k, k+1): the w points ending at
/// the last point of trend k, labelled with trend k+1. w is the duration of
/// the first trend; pairs whose window would start before index 0 are skipped.
InstanceSet build_instances(const TimeSeries& series, const TrendSequence& trends);

/// Half-open instance index range.
struct IndexRange {
    std::size_t begin{0};
    std::size_t end{0};

    std::size_t size() const { return end - begin; }
    bool contains(std::size_t i) const { return i >= begin && i < end; }
    bool operator==(const IndexRange&) const = default;
};

struct Fold {
    IndexRange train;
    IndexRange validation;
    IndexRange test;
};

struct ValidationPolicy {
    enum class Kind { EqualToTest, Fixed };
    Kind kind{Kind::EqualToTest};
    std::size_t size{0};  // used by Fixed
};

struct WalkForwardPlan {
    std::size_t n_instances{0};
    std::size_t partitions{0};
    double test_fraction{0.0};
    std::vector<Fold> folds;
};

/// The last floor(f * n) instances are split into P - 1 consecutive test
/// blocks. Fold i tests on block i, validates on the block just before it and
/// trains on everything earlier, so training windows grow fold by fold.
WalkForwardPlan make_walkforward_plan(std::size_t n_instances, std::size_t partitions,
                                      double test_fraction, ValidationPolicy policy = {});

/// Per-fold z-score statistics of the input windows.
struct WindowScaler {
    double mean{0.0};
    double std{1.0};

    double apply(double x) const { return (x - mean) / std; }
};

} // namespace trendsearch
