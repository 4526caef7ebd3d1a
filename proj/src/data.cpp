#include "trendsearch/data.hpp"

#include "trendsearch/error.hpp"
#include "trendsearch/random.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <string_view>

namespace trendsearch {
namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\"");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\"");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_row(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                               : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

bool parse_real(std::string_view cell, double& out) {
    if (cell.empty()) return false;
    if (cell.front() == '+') cell.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
    return ec == std::errc{} && ptr == cell.data() + cell.size() && std::isfinite(out);
}

} // namespace

TimeSeries load_csv(const std::filesystem::path& path, const ColumnSelector& column) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open CSV file '" + path.string() + "'");
    }

    std::vector<double> values;
    std::string line;
    std::size_t line_no = 0;
    std::size_t col = std::holds_alternative<std::size_t>(column) ? std::get<std::size_t>(column) : 0;
    bool seen_first_row = false;

    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_row(line);

        if (!seen_first_row) {
            seen_first_row = true;
            if (const auto* name = std::get_if<std::string>(&column)) {
                bool found = false;
                for (std::size_t i = 0; i < cells.size(); ++i) {
                    if (cells[i] == *name) {
                        col = i;
                        found = true;
                        break;
                    }
                }
                if (!found) {
                    throw ParseError(path.string() + ": no column named '" + *name + "' in header", line_no);
                }
                continue;
            }
            double probe = 0.0;
            if (col < cells.size() && !parse_real(cells[col], probe)) {
                continue;  // header row
            }
        }

        if (col >= cells.size()) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": row has " +
                                 std::to_string(cells.size()) + " columns, need column " + std::to_string(col),
                             line_no);
        }
        double v = 0.0;
        if (!parse_real(cells[col], v)) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": cannot parse '" +
                                 std::string(cells[col]) + "' as a number",
                             line_no);
        }
        values.push_back(v);
    }

    if (values.empty()) {
        throw ParseError(path.string() + ": no data rows", line_no);
    }
    return TimeSeries(std::move(values));
}

TimeSeries resample(const TimeSeries& series, std::size_t factor) {
    if (factor < 1) {
        throw DomainError("resample factor must be >= 1");
    }
    const auto v = series.values();
    const std::size_t blocks = v.size() / factor;
    std::vector<double> out;
    out.reserve(blocks);
    for (std::size_t b = 0; b < blocks; ++b) {
        double sum = 0.0;
        for (std::size_t j = 0; j < factor; ++j) sum += v[b * factor + j];
        out.push_back(sum / static_cast<double>(factor));
    }
    return TimeSeries(std::move(out));
}

SyntheticSeries generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_pieces < 1) throw DomainError("synthetic spec needs at least one piece");
    if (spec.min_duration < 2 || spec.min_duration > spec.max_duration) {
        throw DomainError("synthetic piece duration range [" + std::to_string(spec.min_duration) + ", " +
                          std::to_string(spec.max_duration) + "] is empty or below 2");
    }
    if (!(spec.min_slope_deg > -90.0 && spec.max_slope_deg < 90.0 && spec.min_slope_deg <= spec.max_slope_deg)) {
        throw DomainError("synthetic slope range must be a non-empty interval inside (-90, 90)");
    }
    if (!(spec.noise_std >= 0.0) || !std::isfinite(spec.noise_std)) {
        throw DomainError("synthetic noise_std must be finite and >= 0");
    }

    Rng rng(spec.seed);
    std::uniform_int_distribution<std::size_t> duration_dist(spec.min_duration, spec.max_duration);
    std::uniform_real_distribution<double> slope_dist(spec.min_slope_deg, spec.max_slope_deg);

    std::vector<TrendSegment> pieces;
    std::vector<double> values;
    double level = 0.0;
    for (std::size_t k = 0; k < spec.n_pieces; ++k) {
        const std::size_t duration = duration_dist(rng);
        double slope = spec.min_slope_deg == spec.max_slope_deg ? spec.min_slope_deg : slope_dist(rng);
        if (spec.alternate_sign && k % 2 == 1) slope = -slope;
        const double m = std::tan(slope * std::numbers::pi / 180.0);
        for (std::size_t j = 0; j < duration; ++j) {
            values.push_back(level + m * static_cast<double>(j));
        }
        level = values.back();
        pieces.push_back(TrendSegment{slope, duration});
    }
    if (spec.noise_std > 0.0) {
        std::normal_distribution<double> noise(0.0, spec.noise_std);
        for (double& v : values) v += noise(rng);
    }
    return SyntheticSeries{TimeSeries(std::move(values)), TrendSequence(std::move(pieces))};
}

InstanceSet build_instances(const TimeSeries& series, const TrendSequence& trends) {
    if (trends.size() < 2) {
        throw DomainError("build_instances needs at least 2 trends, got " + std::to_string(trends.size()));
    }
    if (trends.covered_length() > series.size()) {
        throw DomainError("trend sequence covers " + std::to_string(trends.covered_length()) +
                          " points but the series has " + std::to_string(series.size()));
    }
    const std::size_t w = trends[0].duration;
    if (w > series.size()) {
        throw DomainError("window size " + std::to_string(w) + " exceeds series length");
    }

    InstanceSet set;
    set.window_size = w;
    const auto values = series.values();
    for (std::size_t k = 0; k + 1 < trends.size(); ++k) {
        const std::size_t last = trends.end_of(k);
        if (last + 1 < w) continue;
        const std::size_t first = last + 1 - w;
        TrendInstance inst;
        inst.window.assign(values.begin() + static_cast<std::ptrdiff_t>(first),
                           values.begin() + static_cast<std::ptrdiff_t>(last + 1));
        inst.target_slope_deg = trends[k + 1].slope_deg;
        inst.target_duration = static_cast<double>(trends[k + 1].duration);
        inst.anchor = last;
        set.instances.push_back(std::move(inst));
    }
    return set;
}

WalkForwardPlan make_walkforward_plan(std::size_t n_instances, std::size_t partitions, double test_fraction,
                                      ValidationPolicy policy) {
    if (partitions < 2) {
        throw InvalidPlanError("walk-forward plan needs at least 2 partitions", 0);
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw InvalidPlanError("test fraction must lie in (0, 1)", 0);
    }
    const std::size_t n_folds = partitions - 1;
    // The epsilon keeps e.g. 0.29 * 100 from flooring to 28.
    const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(n_instances) + 1e-9));
    const std::size_t test_begin = n_instances - n_test;
    const std::size_t base = n_test / n_folds;
    const std::size_t extra = n_test % n_folds;

    WalkForwardPlan plan;
    plan.n_instances = n_instances;
    plan.partitions = partitions;
    plan.test_fraction = test_fraction;

    std::size_t cursor = test_begin;
    for (std::size_t i = 0; i < n_folds; ++i) {
        const std::size_t size = base + (i < extra ? 1 : 0);
        Fold fold;
        fold.test = IndexRange{cursor, cursor + size};
        const std::size_t val_size = policy.kind == ValidationPolicy::Kind::Fixed ? policy.size : size;
        if (size == 0) {
            throw InvalidPlanError("fold " + std::to_string(i) + ": empty test range (" + std::to_string(n_test) +
                                       " test instances over " + std::to_string(n_folds) + " folds)",
                                   i);
        }
        if (val_size == 0 || val_size >= cursor) {
            throw InvalidPlanError("fold " + std::to_string(i) + ": not enough instances before the test block for " +
                                       "a validation block of " + std::to_string(val_size) +
                                       " and a non-empty training range",
                                   i);
        }
        fold.validation = IndexRange{cursor - val_size, cursor};
        fold.train = IndexRange{0, cursor - val_size};
        plan.folds.push_back(fold);
        cursor += size;
    }
    return plan;
}

} // namespace trendsearch
