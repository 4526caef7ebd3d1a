#pragma once

#include "trendsearch/bohb.hpp"
#include "trendsearch/data.hpp"
#include "trendsearch/model.hpp"
#include "trendsearch/segmentation.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>

namespace trendsearch {

inline constexpr int kManifestVersion = 1;

struct CsvSource {
    std::filesystem::path path;
    ColumnSelector column{std::size_t{0}};
    std::size_t resample{1};
};

using DatasetSource = std::variant<CsvSource, SyntheticSpec>;

enum class SearchMode { All, MLP, LSTM, CNN };
std::string to_string(SearchMode m);
SearchMode parse_mode(const std::string& s);

struct StabilitySettings {
    std::size_t n_runs{10};
    std::optional<std::size_t> budget;  // defaults to the mode's max budget
    bool fixed_seed{false};
};

struct RunManifest {
    int version{kManifestVersion};
    DatasetSource dataset{SyntheticSpec{}};
    /// Unset max_error resolves to max_error_scale times the series variance.
    std::optional<double> max_error;
    double max_error_scale{0.5};
    std::size_t min_duration{2};
    std::size_t partitions{5};
    double test_fraction{0.3};
    ValidationPolicy validation;
    std::optional<std::filesystem::path> space_file;  // default space when unset
    std::size_t max_budget{27};
    std::map<std::string, std::size_t> per_algorithm_max_budget;
    EngineParams engine;
    SearchMode mode{SearchMode::All};
    std::uint64_t seed{0};
    StabilitySettings stability;

    /// Ladder maximum for the manifest's mode: per-algorithm value in single
    /// mode when given, the shared one otherwise.
    std::size_t mode_max_budget() const;
    std::size_t max_budget_for(AlgorithmKind a) const;
};

/// Parses a manifest document. Relative paths resolve against `base_dir`.
/// Throws ParseError for malformed JSON and DomainError for bad values.
RunManifest parse_manifest(const std::string& document, const std::filesystem::path& base_dir);
/// Also checks that referenced files exist (IoError otherwise).
RunManifest load_manifest(const std::filesystem::path& path);

/// Every field written out, including defaults; paths are absolute.
nlohmann::json to_json(const RunManifest& m);

/// Default seed: TRENDSEARCH_SEED when set and parseable, else 0.
std::uint64_t env_default_seed();

} // namespace trendsearch
