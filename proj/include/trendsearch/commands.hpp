#pragma once

#include "trendsearch/bohb.hpp"
#include "trendsearch/evaluation.hpp"
#include "trendsearch/manifest.hpp"

#include <atomic>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace trendsearch {

struct PreparedData {
    TimeSeries series;
    TrendSequence trends;
    InstanceSet instances;
    WalkForwardPlan plan;
};

TimeSeries load_series(const RunManifest& m);

/// Loads, segments and partitions. Fills in `m.max_error` when it was unset.
PreparedData prepare_data(RunManifest& m);

/// The manifest's space, pinned to one algorithm in single mode.
ConfigurationSpace space_for(const RunManifest& m);

/// Accepts {"values": {...}} (optionally with "id") or a bare values object.
Configuration load_config_file(const std::filesystem::path& path, const ConfigurationSpace& space);

/// Epoch budget for evaluating one configuration under the manifest's mode.
std::size_t default_budget(const RunManifest& m, const Configuration& config);

struct CommandContext {
    RunManifest manifest;
    std::filesystem::path out_dir;
    std::ostream* out{nullptr};  // progress and summaries
};

struct EvalOptions {
    std::filesystem::path config_path;
    std::optional<std::size_t> budget;
    Split split{Split::Validation};
    std::optional<std::filesystem::path> save_models;
    std::optional<std::filesystem::path> load_models;
};

struct SearchOptions {
    const std::atomic<bool>* stop{nullptr};
    bool wall_clock{false};
};

struct StabilityOptions {
    std::filesystem::path config_path;
    std::optional<std::size_t> n_runs;
    std::optional<std::size_t> budget;
};

struct ReportOptions {
    std::vector<std::filesystem::path> logs;
    std::optional<std::filesystem::path> base;
    std::vector<std::filesystem::path> compare;
    std::filesystem::path out_dir;
    std::ostream* out{nullptr};
};

/// Each command writes manifest.resolved.json next to its artifacts.
void cmd_segment(CommandContext& ctx);
void cmd_prepare(CommandContext& ctx);
EvalReport cmd_eval(CommandContext& ctx, const EvalOptions& opts);
SearchResult cmd_search(CommandContext& ctx, const SearchOptions& opts);
StabilityReport cmd_stability(CommandContext& ctx, const StabilityOptions& opts);
void cmd_report(const ReportOptions& opts);

/// Minimal view of one observation-log line.
struct LoggedObservation {
    std::size_t line{0};
    std::string id;
    std::size_t budget{0};
    double loss{0.0};
    bool ok{true};
    std::string algorithm;
};

/// Throws ParseError naming the 1-based line of the first malformed record.
std::vector<LoggedObservation> read_observation_log(const std::filesystem::path& path);

/// Algorithm of the log's incumbent: lowest ok loss at the log's largest budget.
std::string incumbent_algorithm(const std::vector<LoggedObservation>& log);

/// Counts per algorithm, always listing MLP, LSTM and CNN.
std::map<std::string, std::size_t> selection_frequency(const std::vector<std::string>& winners);

/// (base - other) / base * 100; positive when `other` has the lower error.
double percent_delta(double base, double other);

/// Shortest round-trip decimal for CSV output.
std::string format_number(double v);

} // namespace trendsearch
