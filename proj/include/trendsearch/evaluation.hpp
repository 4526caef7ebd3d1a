#pragma once

#include "trendsearch/configspace.hpp"
#include "trendsearch/data.hpp"
#include "trendsearch/model.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace trendsearch {

/// sqrt(mean((p - t)^2)). Throws DomainError on empty or unequal inputs.
double rmse(std::span<const double> predictions, std::span<const double> targets);

enum class Split { Validation, Test };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct FoldResult {
    std::size_t fold_index{0};
    double slope_rmse{0.0};
    double duration_rmse{0.0};
    bool failed{false};
    std::string message;  // failure reason, empty when ok
};

/// S and D are equal-weight means over the folds that did not fail; A = (S + D) / 2.
/// With every fold failed the three values are NaN.
struct EvalReport {
    Split split{Split::Validation};
    std::vector<FoldResult> folds;
    double s{0.0};
    double d{0.0};
    double a{0.0};
    std::size_t failed_folds{0};

    bool ok() const { return failed_folds == 0; }
};

/// Training data handed to a learner for one fold. Windows are z-scored with
/// statistics of the fold's training windows; targets stay in raw units.
struct FoldData {
    std::size_t fold_index{0};
    std::uint64_t seed{0};
    std::vector<TrendInstance> train;
};

/// One prediction per instance, scaled like the training windows.
using FoldPredictor = std::function<std::vector<TrendPrediction>(std::span<const TrendInstance>)>;

/// Trains on a fold and returns its predictor. Throws TrainingDivergedError or
/// InfeasibleConfigError to fail the fold.
using FoldLearner = std::function<FoldPredictor(const FoldData&)>;

enum class AccessPhase { Normalize, Train, Predict };

struct InstanceAccess {
    std::size_t fold_index{0};
    AccessPhase phase{AccessPhase::Train};
    std::size_t instance_index{0};
};

/// Sees every instance read the harness performs, in order. Evaluation rows
/// are read only after the learner has returned its predictor.
using AccessObserver = std::function<void(const InstanceAccess&)>;

/// Learner that builds, trains and predicts with the model factory.
FoldLearner model_learner(const Configuration& config, std::size_t budget_epochs);

/// Learner that predicts the mean training target for every instance.
FoldLearner mean_learner();

/// One fold of the plan, with seed derive_seed(seed, fold_index). Failures
/// from training are caught and recorded in the result.
FoldResult run_fold(const InstanceSet& instances, const WalkForwardPlan& plan, std::size_t fold_index,
                    const FoldLearner& learner, std::uint64_t seed, Split split, const AccessObserver& observer = {});

/// Fold seeds are derive_seed(seed, fold_index). Folds run in order but share
/// no state, so results do not depend on execution order.
EvalReport run_walkforward(const InstanceSet& instances, const WalkForwardPlan& plan, const FoldLearner& learner,
                           std::uint64_t seed, Split split, const AccessObserver& observer = {});

EvalReport run_walkforward(const Configuration& config, const InstanceSet& instances, const WalkForwardPlan& plan,
                           std::size_t budget_epochs, std::uint64_t seed, Split split);

/// Validation A of the mean-target baseline times 10. Falls back to 1 when the
/// baseline is exact.
double penalty_loss(const InstanceSet& instances, const WalkForwardPlan& plan);

struct ObjectiveResult {
    double loss{0.0};
    bool ok{true};
    std::string message;
    EvalReport report;
};

/// The search objective: validation A, or the penalty loss if any fold failed.
class Evaluator {
public:
    Evaluator(InstanceSet instances, WalkForwardPlan plan);
    Evaluator(InstanceSet instances, WalkForwardPlan plan, double penalty);

    ObjectiveResult evaluate(const Configuration& config, std::size_t budget_epochs, std::uint64_t seed) const;
    double objective(const Configuration& config, std::size_t budget_epochs, std::uint64_t seed) const {
        return evaluate(config, budget_epochs, seed).loss;
    }

    double penalty() const { return penalty_; }
    const InstanceSet& instances() const { return instances_; }
    const WalkForwardPlan& plan() const { return plan_; }

private:
    InstanceSet instances_;
    WalkForwardPlan plan_;
    double penalty_{0.0};
};

struct Triple {
    double s{0.0};
    double d{0.0};
    double a{0.0};
};

/// Run statistics cover runs without failed folds; std uses n - 1 and is NaN
/// with fewer than two such runs.
struct StabilityReport {
    std::size_t n_runs{0};
    std::vector<std::uint64_t> seeds;
    std::vector<EvalReport> runs;
    std::size_t failed_runs{0};
    Triple mean;
    Triple std;
};

/// Sample mean and standard deviation (n - 1 denominator).
std::pair<double, double> mean_and_sample_std(std::span<const double> values);

StabilityReport summarize_runs(std::vector<EvalReport> runs, std::vector<std::uint64_t> seeds);

/// Run i uses derive_seed(seed, i), or `seed` itself for every run when
/// `fixed_seed` is set. Always reports the test split.
StabilityReport run_stability(const InstanceSet& instances, const WalkForwardPlan& plan,
                              const std::function<FoldLearner(std::size_t run)>& learner_for_run,
                              std::size_t n_runs, std::uint64_t seed, bool fixed_seed = false);

StabilityReport run_stability(const Configuration& config, const InstanceSet& instances, const WalkForwardPlan& plan,
                              std::size_t budget_epochs, std::size_t n_runs, std::uint64_t seed,
                              bool fixed_seed = false);

nlohmann::json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StabilityReport& r);

} // namespace trendsearch
