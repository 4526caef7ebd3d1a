#include "trendsearch/manifest.hpp"

#include "trendsearch/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace trendsearch {
namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!known.contains(it.key())) throw DomainError("manifest: unknown key '" + it.key() + "' in " + where);
    }
}

template <class T>
T get_or(const json& obj, const char* key, T fallback) {
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        throw DomainError(std::string("manifest: bad value for '") + key + "': " + e.what());
    }
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
    return std::filesystem::absolute(p.is_absolute() ? p : base / p).lexically_normal();
}

SyntheticSpec parse_synthetic(const json& j, std::uint64_t default_seed) {
    reject_unknown(j,
                   {"n_pieces", "min_duration", "max_duration", "min_slope_deg", "max_slope_deg", "noise_std",
                    "alternate_sign", "seed"},
                   "dataset.synthetic");
    SyntheticSpec s;
    s.n_pieces = get_or(j, "n_pieces", s.n_pieces);
    s.min_duration = get_or(j, "min_duration", s.min_duration);
    s.max_duration = get_or(j, "max_duration", s.max_duration);
    s.min_slope_deg = get_or(j, "min_slope_deg", s.min_slope_deg);
    s.max_slope_deg = get_or(j, "max_slope_deg", s.max_slope_deg);
    s.noise_std = get_or(j, "noise_std", s.noise_std);
    s.alternate_sign = get_or(j, "alternate_sign", s.alternate_sign);
    s.seed = get_or(j, "seed", default_seed);
    return s;
}

EngineParams parse_engine(const json& j) {
    reject_unknown(j,
                   {"n_iterations", "top_n_percent", "num_samples", "random_fraction", "min_points_in_model",
                    "bandwidth_factor", "min_bandwidth", "promotion_rate", "workers"},
                   "engine");
    EngineParams e;
    e.n_iterations = get_or(j, "n_iterations", e.n_iterations);
    e.top_n_percent = get_or(j, "top_n_percent", e.top_n_percent);
    e.num_samples = get_or(j, "num_samples", e.num_samples);
    e.random_fraction = get_or(j, "random_fraction", e.random_fraction);
    if (j.contains("min_points_in_model") && !j["min_points_in_model"].is_null()) {
        e.min_points_in_model = get_or<std::size_t>(j, "min_points_in_model", 0);
    }
    e.bandwidth_factor = get_or(j, "bandwidth_factor", e.bandwidth_factor);
    e.min_bandwidth = get_or(j, "min_bandwidth", e.min_bandwidth);
    e.promotion_rate = parse_promotion_rate(get_or<std::string>(j, "promotion_rate", "eta"));
    e.workers = get_or(j, "workers", e.workers);
    validate(e);
    return e;
}

} // namespace

std::string to_string(SearchMode m) {
    switch (m) {
    case SearchMode::All: return "all";
    case SearchMode::MLP: return "mlp";
    case SearchMode::LSTM: return "lstm";
    case SearchMode::CNN: return "cnn";
    }
    return "?";
}

SearchMode parse_mode(const std::string& s) {
    std::string lower = s;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "all") return SearchMode::All;
    if (lower == "mlp") return SearchMode::MLP;
    if (lower == "lstm") return SearchMode::LSTM;
    if (lower == "cnn") return SearchMode::CNN;
    throw DomainError("unknown mode '" + s + "' (expected all, mlp, lstm or cnn)");
}

std::size_t RunManifest::max_budget_for(AlgorithmKind a) const {
    const auto it = per_algorithm_max_budget.find(to_string(a));
    return it == per_algorithm_max_budget.end() ? max_budget : it->second;
}

std::size_t RunManifest::mode_max_budget() const {
    switch (mode) {
    case SearchMode::All: return max_budget;
    case SearchMode::MLP: return max_budget_for(AlgorithmKind::MLP);
    case SearchMode::LSTM: return max_budget_for(AlgorithmKind::LSTM);
    case SearchMode::CNN: return max_budget_for(AlgorithmKind::CNN);
    }
    return max_budget;
}

std::uint64_t env_default_seed() {
    const char* v = std::getenv("TRENDSEARCH_SEED");
    if (v == nullptr) return 0;
    std::uint64_t seed = 0;
    const char* end = v + std::char_traits<char>::length(v);
    const auto [ptr, ec] = std::from_chars(v, end, seed);
    if (ec != std::errc{} || ptr != end) return 0;
    return seed;
}

RunManifest parse_manifest(const std::string& document, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(document);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("manifest is not valid JSON: ") + e.what(), 0);
    }
    if (!j.is_object()) throw DomainError("manifest must be a JSON object");
    reject_unknown(j,
                   {"version", "seed", "mode", "dataset", "segmentation", "partitions", "test_fraction", "validation",
                    "space", "ladder", "engine", "stability"},
                   "manifest");
    RunManifest m;
    m.version = get_or(j, "version", kManifestVersion);
    if (m.version != kManifestVersion) {
        throw DomainError("manifest version " + std::to_string(m.version) + " is not supported (expected " +
                          std::to_string(kManifestVersion) + ")");
    }
    m.seed = get_or(j, "seed", env_default_seed());
    m.mode = parse_mode(get_or<std::string>(j, "mode", "all"));

    const json dataset = j.value("dataset", json::object());
    reject_unknown(dataset, {"csv", "synthetic"}, "dataset");
    if (dataset.contains("csv") == dataset.contains("synthetic") && !dataset.empty()) {
        throw DomainError("manifest dataset needs exactly one of 'csv' or 'synthetic'");
    }
    if (dataset.contains("csv")) {
        const json& c = dataset["csv"];
        reject_unknown(c, {"path", "column", "resample"}, "dataset.csv");
        CsvSource src;
        src.path = resolve(c.at("path").get<std::string>(), base_dir);
        if (c.contains("column")) {
            if (c["column"].is_string()) {
                src.column = c["column"].get<std::string>();
            } else {
                src.column = c["column"].get<std::size_t>();
            }
        }
        src.resample = get_or(c, "resample", src.resample);
        if (src.resample < 1) throw DomainError("dataset.csv.resample must be >= 1");
        m.dataset = src;
    } else {
        m.dataset = parse_synthetic(dataset.value("synthetic", json::object()), m.seed);
    }

    const json seg = j.value("segmentation", json::object());
    reject_unknown(seg, {"max_error", "max_error_scale", "min_duration"}, "segmentation");
    if (seg.contains("max_error") && !seg["max_error"].is_null()) m.max_error = seg["max_error"].get<double>();
    m.max_error_scale = get_or(seg, "max_error_scale", m.max_error_scale);
    m.min_duration = get_or(seg, "min_duration", m.min_duration);

    m.partitions = get_or(j, "partitions", m.partitions);
    m.test_fraction = get_or(j, "test_fraction", m.test_fraction);
    const json val = j.value("validation", json::object());
    reject_unknown(val, {"policy", "size"}, "validation");
    const std::string policy = get_or<std::string>(val, "policy", "equal_to_test");
    if (policy == "equal_to_test") {
        m.validation.kind = ValidationPolicy::Kind::EqualToTest;
    } else if (policy == "fixed") {
        m.validation.kind = ValidationPolicy::Kind::Fixed;
        m.validation.size = val.at("size").get<std::size_t>();
    } else {
        throw DomainError("unknown validation policy '" + policy + "'");
    }

    if (j.contains("space") && !j["space"].is_null()) m.space_file = resolve(j["space"].get<std::string>(), base_dir);

    const json ladder = j.value("ladder", json::object());
    reject_unknown(ladder, {"max_budget", "per_algorithm"}, "ladder");
    m.max_budget = get_or(ladder, "max_budget", m.max_budget);
    if (ladder.contains("per_algorithm")) {
        for (auto it = ladder["per_algorithm"].begin(); it != ladder["per_algorithm"].end(); ++it) {
            m.per_algorithm_max_budget[to_string(parse_algorithm(it.key()))] = it->get<std::size_t>();
        }
    }
    m.engine = parse_engine(j.value("engine", json::object()));

    const json stab = j.value("stability", json::object());
    reject_unknown(stab, {"n_runs", "budget", "fixed_seed"}, "stability");
    m.stability.n_runs = get_or(stab, "n_runs", m.stability.n_runs);
    if (stab.contains("budget") && !stab["budget"].is_null()) m.stability.budget = stab["budget"].get<std::size_t>();
    m.stability.fixed_seed = get_or(stab, "fixed_seed", false);
    return m;
}

RunManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    RunManifest m = parse_manifest(ss.str(), std::filesystem::absolute(path).parent_path());
    if (const auto* csv = std::get_if<CsvSource>(&m.dataset); csv && !std::filesystem::exists(csv->path)) {
        throw IoError("dataset file '" + csv->path.string() + "' does not exist");
    }
    if (m.space_file && !std::filesystem::exists(*m.space_file)) {
        throw IoError("space file '" + m.space_file->string() + "' does not exist");
    }
    return m;
}

nlohmann::json to_json(const RunManifest& m) {
    json dataset;
    if (const auto* csv = std::get_if<CsvSource>(&m.dataset)) {
        json column;
        if (const auto* idx = std::get_if<std::size_t>(&csv->column)) {
            column = *idx;
        } else {
            column = std::get<std::string>(csv->column);
        }
        dataset["csv"] = {{"path", csv->path.string()}, {"column", column}, {"resample", csv->resample}};
    } else {
        const auto& s = std::get<SyntheticSpec>(m.dataset);
        dataset["synthetic"] = {{"n_pieces", s.n_pieces},           {"min_duration", s.min_duration},
                                {"max_duration", s.max_duration},   {"min_slope_deg", s.min_slope_deg},
                                {"max_slope_deg", s.max_slope_deg}, {"noise_std", s.noise_std},
                                {"alternate_sign", s.alternate_sign}, {"seed", s.seed}};
    }
    json engine = {{"n_iterations", m.engine.n_iterations},
                   {"top_n_percent", m.engine.top_n_percent},
                   {"num_samples", m.engine.num_samples},
                   {"random_fraction", m.engine.random_fraction},
                   {"min_points_in_model", nullptr},
                   {"bandwidth_factor", m.engine.bandwidth_factor},
                   {"min_bandwidth", m.engine.min_bandwidth},
                   {"promotion_rate", to_string(m.engine.promotion_rate)},
                   {"workers", m.engine.workers}};
    if (m.engine.min_points_in_model) engine["min_points_in_model"] = *m.engine.min_points_in_model;
    json per_alg = json::object();
    for (const auto& [k, v] : m.per_algorithm_max_budget) per_alg[k] = v;
    json validation = {{"policy", m.validation.kind == ValidationPolicy::Kind::EqualToTest ? "equal_to_test" : "fixed"}};
    if (m.validation.kind == ValidationPolicy::Kind::Fixed) validation["size"] = m.validation.size;
    json stability = {{"n_runs", m.stability.n_runs}, {"budget", nullptr}, {"fixed_seed", m.stability.fixed_seed}};
    if (m.stability.budget) stability["budget"] = *m.stability.budget;
    return {{"version", m.version},
            {"seed", m.seed},
            {"mode", to_string(m.mode)},
            {"dataset", dataset},
            {"segmentation",
             {{"max_error", m.max_error ? json(*m.max_error) : json(nullptr)},
              {"max_error_scale", m.max_error_scale},
              {"min_duration", m.min_duration}}},
            {"partitions", m.partitions},
            {"test_fraction", m.test_fraction},
            {"validation", validation},
            {"space", m.space_file ? json(m.space_file->string()) : json(nullptr)},
            {"ladder", {{"max_budget", m.max_budget}, {"per_algorithm", per_alg}}},
            {"engine", engine},
            {"stability", stability}};
}

} // namespace trendsearch
