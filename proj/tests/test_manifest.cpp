#include "trendsearch/error.hpp"
#include "trendsearch/manifest.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

namespace trendsearch {
namespace {

namespace fs = std::filesystem;

class ScopedEnv {
public:
    ScopedEnv(const char* name, const char* value) : name_(name) {
        if (const char* old = std::getenv(name)) old_ = old;
        if (value) {
            ::setenv(name, value, 1);
        } else {
            ::unsetenv(name);
        }
    }
    ~ScopedEnv() {
        if (old_) {
            ::setenv(name_, old_->c_str(), 1);
        } else {
            ::unsetenv(name_);
        }
    }

private:
    const char* name_;
    std::optional<std::string> old_;
};

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("trendsearch_manifest_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

TEST(ManifestTest, Defaults) {
    ScopedEnv env("TRENDSEARCH_SEED", nullptr);
    const auto m = parse_manifest("{}", "/tmp");
    EXPECT_EQ(m.version, kManifestVersion);
    EXPECT_EQ(m.seed, 0u);
    EXPECT_EQ(m.mode, SearchMode::All);
    EXPECT_EQ(m.partitions, 5u);
    EXPECT_DOUBLE_EQ(m.test_fraction, 0.3);
    EXPECT_EQ(m.max_budget, 27u);
    EXPECT_FALSE(m.max_error);
    EXPECT_EQ(m.engine.n_iterations, 30u);
    EXPECT_EQ(m.stability.n_runs, 10u);
    EXPECT_TRUE(std::holds_alternative<SyntheticSpec>(m.dataset));
}

TEST(ManifestTest, SeedPrecedence) {
    {
        ScopedEnv env("TRENDSEARCH_SEED", "77");
        EXPECT_EQ(parse_manifest("{}", "/tmp").seed, 77u);
        EXPECT_EQ(parse_manifest(R"({"seed": 5})", "/tmp").seed, 5u);
        EXPECT_EQ(std::get<SyntheticSpec>(parse_manifest(R"({"seed": 5})", "/tmp").dataset).seed, 5u);
    }
    {
        ScopedEnv env("TRENDSEARCH_SEED", "not-a-number");
        EXPECT_EQ(env_default_seed(), 0u);
    }
}

TEST(ManifestTest, FullDocument) {
    const auto m = parse_manifest(R"({
        "version": 1, "seed": 3, "mode": "lstm",
        "dataset": {"csv": {"path": "data/x.csv", "column": "close", "resample": 4}},
        "segmentation": {"max_error": 2.5, "min_duration": 3},
        "partitions": 4, "test_fraction": 0.25,
        "validation": {"policy": "fixed", "size": 7},
        "ladder": {"max_budget": 500, "per_algorithm": {"LSTM": 81}},
        "engine": {"n_iterations": 6, "promotion_rate": "half", "workers": 2, "min_points_in_model": 4},
        "stability": {"n_runs": 3, "budget": 9, "fixed_seed": true}})",
                                  "/base");
    const auto& csv = std::get<CsvSource>(m.dataset);
    EXPECT_EQ(csv.path, fs::path("/base/data/x.csv"));
    EXPECT_EQ(std::get<std::string>(csv.column), "close");
    EXPECT_EQ(csv.resample, 4u);
    EXPECT_EQ(m.mode, SearchMode::LSTM);
    EXPECT_DOUBLE_EQ(*m.max_error, 2.5);
    EXPECT_EQ(m.min_duration, 3u);
    EXPECT_EQ(m.validation.kind, ValidationPolicy::Kind::Fixed);
    EXPECT_EQ(m.validation.size, 7u);
    EXPECT_EQ(m.max_budget_for(AlgorithmKind::LSTM), 81u);
    EXPECT_EQ(m.max_budget_for(AlgorithmKind::MLP), 500u);
    EXPECT_EQ(m.mode_max_budget(), 81u);
    EXPECT_EQ(m.engine.promotion_rate, PromotionRate::Half);
    EXPECT_EQ(m.engine.workers, 2u);
    EXPECT_EQ(*m.engine.min_points_in_model, 4u);
    EXPECT_EQ(*m.stability.budget, 9u);
    EXPECT_TRUE(m.stability.fixed_seed);
}

TEST(ManifestTest, RejectsBadDocuments) {
    EXPECT_THROW(parse_manifest("{", "/tmp"), ParseError);
    EXPECT_THROW(parse_manifest(R"({"version": 2})", "/tmp"), DomainError);
    EXPECT_THROW(parse_manifest(R"({"seeed": 1})", "/tmp"), DomainError);
    EXPECT_THROW(parse_manifest(R"({"engine": {"iterations": 1}})", "/tmp"), DomainError);
    EXPECT_THROW(parse_manifest(R"({"mode": "svm"})", "/tmp"), DomainError);
    EXPECT_THROW(parse_manifest(R"({"validation": {"policy": "random"}})", "/tmp"), DomainError);
    EXPECT_THROW(parse_manifest(R"({"dataset": {"csv": {"path": "a"}, "synthetic": {}}})", "/tmp"), DomainError);
}

TEST(ManifestTest, ResolvedRoundTrip) {
    const auto m = parse_manifest(R"({"seed": 9, "mode": "cnn", "ladder": {"max_budget": 81},
        "dataset": {"synthetic": {"n_pieces": 12, "noise_std": 0.1}}})",
                                  "/tmp");
    const auto j = to_json(m);
    const auto back = parse_manifest(j.dump(), "/elsewhere");
    EXPECT_EQ(to_json(back), j);
    EXPECT_EQ(std::get<SyntheticSpec>(back.dataset).n_pieces, 12u);
    EXPECT_EQ(std::get<SyntheticSpec>(back.dataset).seed, 9u);
}

TEST(ManifestTest, LoadChecksFiles) {
    const auto dir = scratch("load");
    {
        std::ofstream(dir / "m.json") << R"({"dataset": {"csv": {"path": "missing.csv"}}})";
    }
    try {
        load_manifest(dir / "m.json");
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("missing.csv"), std::string::npos);
    }
    std::ofstream(dir / "missing.csv") << "1\n2\n3\n";
    EXPECT_NO_THROW(load_manifest(dir / "m.json"));
    EXPECT_THROW(load_manifest(dir / "nope.json"), IoError);
}

} // namespace
} // namespace trendsearch
