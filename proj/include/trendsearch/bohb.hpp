#pragma once

#include "trendsearch/configspace.hpp"

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace trendsearch {

/// floor(max_budget / eta^(n_intermediate + 1)). Throws DomainError when the
/// result would be zero.
std::size_t min_budget(std::size_t max_budget, std::size_t eta = 3, std::size_t n_intermediate = 1);

/// Three epoch levels: min = floor(max / 9), mid = floor(max / 3), max.
struct BudgetLadder {
    std::size_t min_budget{0};
    std::size_t mid_budget{0};
    std::size_t max_budget{0};
    std::size_t eta{3};

    static BudgetLadder from_max(std::size_t max_budget);
    /// {min, mid, max}.
    std::vector<std::size_t> levels() const { return {min_budget, mid_budget, max_budget}; }
};

enum class PromotionRate { Eta, Half };
std::string to_string(PromotionRate r);
PromotionRate parse_promotion_rate(const std::string& s);

struct EngineParams {
    std::size_t n_iterations{30};
    double top_n_percent{30.0};
    std::size_t num_samples{32};
    double random_fraction{1.0 / 3.0};
    /// Defaults to the space dimension + 1.
    std::optional<std::size_t> min_points_in_model;
    double bandwidth_factor{3.0};
    double min_bandwidth{1e-3};
    PromotionRate promotion_rate{PromotionRate::Eta};
    std::size_t workers{1};
};

/// Throws DomainError on out-of-range knobs.
void validate(const EngineParams& params);

struct Rung {
    std::size_t budget{0};
    std::size_t n_configs{0};
    std::size_t n_promote{0};  // advancing to the next rung; 0 on the last
};

struct BracketPlan {
    std::size_t iteration{0};
    std::size_t s{0};  // 2, 1 or 0: number of promotions
    std::vector<Rung> rungs;
};

/// Brackets cycle s = 2, 1, 0 with base sizes 9, 6 and 3.
std::vector<BracketPlan> plan_iterations(const BudgetLadder& ladder, const EngineParams& params);

/// Sum of n_configs * budget / max_budget over the rungs.
double full_budget_equivalents(const BracketPlan& bracket, std::size_t max_budget);

enum class ObservationStatus { Ok, Failed };
std::string to_string(ObservationStatus s);

struct Observation {
    std::size_t seq{0};          // completion order
    std::string config_id;       // "b<iteration>-<index>", kept across promotions
    Configuration config;
    std::vector<double> vector;  // vectorize(space, config)
    std::size_t budget{0};
    double loss{0.0};
    ObservationStatus status{ObservationStatus::Ok};
    std::string message;
    std::size_t iteration{0};
    std::size_t bracket{0};  // s of the bracket
    std::size_t rung{0};
    /// True for configurations entering at this rung rather than promoted into it.
    bool is_base{false};
    std::size_t dispatched{0};  // logical dispatch index
    std::optional<double> wall_start;
    std::optional<double> wall_end;
};

nlohmann::json to_json(const Observation& o);

/// Uniform sample with probability random_fraction or when no budget has
/// min_points_in_model + 2 observations; otherwise the best of num_samples
/// draws from the good-side KDE by good/bad density ratio, built on the
/// largest such budget.
Configuration propose(const ConfigurationSpace& space, std::span<const Observation> observations,
                      const EngineParams& params, Rng& rng);

struct ObjectiveOutcome {
    double loss{0.0};
    bool ok{true};
    std::string message;
};

/// Must be safe to call concurrently when workers > 1.
using SearchObjective = std::function<ObjectiveOutcome(const Configuration&, std::size_t budget, std::uint64_t seed)>;

/// Seed the engine passes to the objective for one (configuration, budget) pair.
std::uint64_t evaluation_seed(std::uint64_t search_seed, const Configuration& config, std::size_t budget);

struct IncumbentPoint {
    std::size_t seq{0};
    std::string config_id;
    double loss{0.0};
};

struct SearchAccounting {
    std::size_t unique_configs{0};
    std::size_t total_evaluations{0};
    double full_budget_equivalents{0.0};
    std::size_t failed_evaluations{0};
};

struct SearchResult {
    BudgetLadder ladder;
    std::optional<Observation> incumbent;
    std::vector<Observation> observations;
    std::vector<IncumbentPoint> trajectory;  // max-budget incumbent improvements
    SearchAccounting accounting;
    bool interrupted{false};
};

struct SearchHooks {
    /// Called by the scheduler for every finished evaluation, in log order.
    std::function<void(const Observation&)> on_observation;
    /// Checked before each dispatch; once set no new evaluation starts.
    const std::atomic<bool>* stop{nullptr};
    bool wall_clock{false};
};

SearchResult run_search(const ConfigurationSpace& space, const BudgetLadder& ladder, const EngineParams& params,
                        const SearchObjective& objective, std::uint64_t seed, const SearchHooks& hooks = {});

/// Lowest ok max-budget loss, else lowest ok loss at any budget, else lowest loss.
std::optional<Observation> select_incumbent(std::span<const Observation> observations, std::size_t max_budget);

SearchAccounting account(std::span<const Observation> observations, std::size_t max_budget);

nlohmann::json to_json(const SearchResult& r);

/// Observation log writer: one JSON document per line, flushed per record.
class ObservationLog {
public:
    explicit ObservationLog(std::ostream& out) : out_(out) {}
    void write(const Observation& o);

private:
    std::ostream& out_;
};

} // namespace trendsearch
