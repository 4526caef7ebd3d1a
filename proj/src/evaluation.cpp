#include "trendsearch/evaluation.hpp"

#include "trendsearch/error.hpp"
#include "trendsearch/random.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace trendsearch {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

nlohmann::json number_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

double number_from(const nlohmann::json& j) {
    return j.is_null() ? kNaN : j.get<double>();
}

TrendInstance scaled(const TrendInstance& inst, const WindowScaler& scaler) {
    TrendInstance out = inst;
    for (double& x : out.window) x = scaler.apply(x);
    return out;
}

} // namespace

double rmse(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.empty()) throw DomainError("rmse of an empty sequence");
    if (predictions.size() != targets.size()) {
        throw DomainError("rmse: " + std::to_string(predictions.size()) + " predictions vs " +
                          std::to_string(targets.size()) + " targets");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double e = predictions[i] - targets[i];
        sum += e * e;
    }
    return std::sqrt(sum / static_cast<double>(predictions.size()));
}

std::string to_string(Split s) { return s == Split::Validation ? "validation" : "test"; }

Split parse_split(const std::string& s) {
    if (s == "validation") return Split::Validation;
    if (s == "test") return Split::Test;
    throw DomainError("unknown split '" + s + "' (expected validation or test)");
}

FoldLearner model_learner(const Configuration& config, std::size_t budget_epochs) {
    return [config, budget_epochs](const FoldData& fold) -> FoldPredictor {
        const ModelPlan plan = build_model(config, fold.train.front().window.size());
        auto model = std::make_shared<const TrainedModel>(
            train(plan, fold.train, settings_from_config(config, budget_epochs, fold.seed)));
        return [model](std::span<const TrendInstance> xs) { return predict(*model, xs); };
    };
}

FoldLearner mean_learner() {
    return [](const FoldData& fold) -> FoldPredictor {
        double slope = 0.0;
        double duration = 0.0;
        for (const auto& inst : fold.train) {
            slope += inst.target_slope_deg;
            duration += inst.target_duration;
        }
        const auto n = static_cast<double>(fold.train.size());
        const TrendPrediction mean{slope / n, duration / n};
        return [mean](std::span<const TrendInstance> xs) { return std::vector<TrendPrediction>(xs.size(), mean); };
    };
}

FoldResult run_fold(const InstanceSet& instances, const WalkForwardPlan& plan, std::size_t f,
                    const FoldLearner& learner, std::uint64_t seed, Split split, const AccessObserver& observer) {
    if (plan.n_instances != instances.size()) {
        throw InvalidPlanError("plan covers " + std::to_string(plan.n_instances) + " instances but the set has " +
                                   std::to_string(instances.size()),
                               f);
    }
    if (f >= plan.folds.size()) throw InvalidPlanError("fold " + std::to_string(f) + " is not in the plan", f);
    auto read = [&](AccessPhase phase, std::size_t i) -> const TrendInstance& {
        if (observer) observer({f, phase, i});
        return instances.instances[i];
    };
    const Fold& fold = plan.folds[f];
    const IndexRange eval_range = split == Split::Validation ? fold.validation : fold.test;

    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = fold.train.begin; i < fold.train.end; ++i) {
        for (double x : read(AccessPhase::Normalize, i).window) {
            sum += x;
            ++count;
        }
    }
    WindowScaler scaler;
    scaler.mean = sum / static_cast<double>(count);
    double var = 0.0;
    for (std::size_t i = fold.train.begin; i < fold.train.end; ++i) {
        for (double x : instances.instances[i].window) var += (x - scaler.mean) * (x - scaler.mean);
    }
    var /= static_cast<double>(count);
    scaler.std = var > 0.0 ? std::sqrt(var) : 1.0;

    FoldData data;
    data.fold_index = f;
    data.seed = derive_seed(seed, f);
    for (std::size_t i = fold.train.begin; i < fold.train.end; ++i) {
        data.train.push_back(scaled(read(AccessPhase::Train, i), scaler));
    }

    FoldResult result;
    result.fold_index = f;
    try {
        const FoldPredictor predictor = learner(data);
        std::vector<TrendInstance> eval;
        for (std::size_t i = eval_range.begin; i < eval_range.end; ++i) {
            eval.push_back(scaled(read(AccessPhase::Predict, i), scaler));
        }
        const auto predictions = predictor(eval);
        if (predictions.size() != eval.size()) {
            throw ShapeError("learner returned " + std::to_string(predictions.size()) + " predictions for " +
                             std::to_string(eval.size()) + " instances");
        }
        std::vector<double> ps, ts, pd, td;
        for (std::size_t k = 0; k < predictions.size(); ++k) {
            ps.push_back(predictions[k].slope_deg);
            pd.push_back(predictions[k].duration);
            ts.push_back(eval[k].target_slope_deg);
            td.push_back(eval[k].target_duration);
        }
        result.slope_rmse = rmse(ps, ts);
        result.duration_rmse = rmse(pd, td);
        if (!std::isfinite(result.slope_rmse) || !std::isfinite(result.duration_rmse)) {
            throw NonFiniteError("fold " + std::to_string(f) + " produced non-finite predictions");
        }
    } catch (const TrainingDivergedError& e) {
        result = {f, 0.0, 0.0, true, e.what()};
    } catch (const InfeasibleConfigError& e) {
        result = {f, 0.0, 0.0, true, e.what()};
    } catch (const NonFiniteError& e) {
        result = {f, 0.0, 0.0, true, e.what()};
    }
    return result;
}

EvalReport run_walkforward(const InstanceSet& instances, const WalkForwardPlan& plan, const FoldLearner& learner,
                           std::uint64_t seed, Split split, const AccessObserver& observer) {
    EvalReport report;
    report.split = split;
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        report.folds.push_back(run_fold(instances, plan, f, learner, seed, split, observer));
    }

    double s = 0.0;
    double d = 0.0;
    std::size_t ok = 0;
    for (const auto& r : report.folds) {
        if (r.failed) {
            ++report.failed_folds;
            continue;
        }
        s += r.slope_rmse;
        d += r.duration_rmse;
        ++ok;
    }
    if (ok == 0) {
        report.s = report.d = report.a = kNaN;
    } else {
        report.s = s / static_cast<double>(ok);
        report.d = d / static_cast<double>(ok);
        report.a = (report.s + report.d) / 2.0;
    }
    return report;
}

EvalReport run_walkforward(const Configuration& config, const InstanceSet& instances, const WalkForwardPlan& plan,
                           std::size_t budget_epochs, std::uint64_t seed, Split split) {
    return run_walkforward(instances, plan, model_learner(config, budget_epochs), seed, split);
}

double penalty_loss(const InstanceSet& instances, const WalkForwardPlan& plan) {
    const EvalReport base = run_walkforward(instances, plan, mean_learner(), 0, Split::Validation);
    return base.a > 0.0 ? 10.0 * base.a : 1.0;
}

Evaluator::Evaluator(InstanceSet instances, WalkForwardPlan plan)
    : instances_(std::move(instances)), plan_(std::move(plan)) {
    penalty_ = penalty_loss(instances_, plan_);
}

Evaluator::Evaluator(InstanceSet instances, WalkForwardPlan plan, double penalty)
    : instances_(std::move(instances)), plan_(std::move(plan)), penalty_(penalty) {
    if (!(penalty_ > 0.0) || !std::isfinite(penalty_)) throw DomainError("penalty loss must be positive and finite");
}

ObjectiveResult Evaluator::evaluate(const Configuration& config, std::size_t budget_epochs, std::uint64_t seed) const {
    ObjectiveResult out;
    out.report = run_walkforward(config, instances_, plan_, budget_epochs, seed, Split::Validation);
    if (out.report.ok()) {
        out.loss = out.report.a;
        return out;
    }
    out.ok = false;
    out.loss = penalty_;
    for (const auto& f : out.report.folds) {
        if (f.failed) {
            out.message = "fold " + std::to_string(f.fold_index) + ": " + f.message;
            break;
        }
    }
    return out;
}

std::pair<double, double> mean_and_sample_std(std::span<const double> values) {
    if (values.empty()) return {kNaN, kNaN};
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    if (values.size() < 2) return {mean, kNaN};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

StabilityReport summarize_runs(std::vector<EvalReport> runs, std::vector<std::uint64_t> seeds) {
    StabilityReport out;
    out.n_runs = runs.size();
    out.seeds = std::move(seeds);
    std::vector<double> s, d, a;
    for (const auto& r : runs) {
        if (!r.ok()) {
            ++out.failed_runs;
            continue;
        }
        s.push_back(r.s);
        d.push_back(r.d);
        a.push_back(r.a);
    }
    std::tie(out.mean.s, out.std.s) = mean_and_sample_std(s);
    std::tie(out.mean.d, out.std.d) = mean_and_sample_std(d);
    std::tie(out.mean.a, out.std.a) = mean_and_sample_std(a);
    out.runs = std::move(runs);
    return out;
}

StabilityReport run_stability(const InstanceSet& instances, const WalkForwardPlan& plan,
                              const std::function<FoldLearner(std::size_t run)>& learner_for_run,
                              std::size_t n_runs, std::uint64_t seed, bool fixed_seed) {
    if (n_runs < 2) throw DomainError("stability needs at least 2 runs");
    std::vector<EvalReport> runs;
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < n_runs; ++i) {
        const std::uint64_t run_seed = fixed_seed ? seed : derive_seed(seed, i);
        seeds.push_back(run_seed);
        runs.push_back(run_walkforward(instances, plan, learner_for_run(i), run_seed, Split::Test));
    }
    return summarize_runs(std::move(runs), std::move(seeds));
}

StabilityReport run_stability(const Configuration& config, const InstanceSet& instances, const WalkForwardPlan& plan,
                              std::size_t budget_epochs, std::size_t n_runs, std::uint64_t seed, bool fixed_seed) {
    return run_stability(
        instances, plan, [&](std::size_t) { return model_learner(config, budget_epochs); }, n_runs, seed, fixed_seed);
}

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : r.folds) {
        nlohmann::json jf = {{"fold", f.fold_index}, {"failed", f.failed}};
        if (f.failed) {
            jf["message"] = f.message;
        } else {
            jf["s"] = f.slope_rmse;
            jf["d"] = f.duration_rmse;
            jf["a"] = (f.slope_rmse + f.duration_rmse) / 2.0;
        }
        folds.push_back(std::move(jf));
    }
    return {{"split", to_string(r.split)},
            {"s", number_or_null(r.s)},
            {"d", number_or_null(r.d)},
            {"a", number_or_null(r.a)},
            {"failed_folds", r.failed_folds},
            {"folds", folds}};
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
    EvalReport r;
    r.split = parse_split(j.at("split").get<std::string>());
    r.s = number_from(j.at("s"));
    r.d = number_from(j.at("d"));
    r.a = number_from(j.at("a"));
    r.failed_folds = j.at("failed_folds").get<std::size_t>();
    for (const auto& jf : j.at("folds")) {
        FoldResult f;
        f.fold_index = jf.at("fold").get<std::size_t>();
        f.failed = jf.at("failed").get<bool>();
        if (f.failed) {
            f.message = jf.value("message", "");
        } else {
            f.slope_rmse = jf.at("s").get<double>();
            f.duration_rmse = jf.at("d").get<double>();
        }
        r.folds.push_back(std::move(f));
    }
    return r;
}

nlohmann::json to_json(const StabilityReport& r) {
    nlohmann::json runs = nlohmann::json::array();
    for (std::size_t i = 0; i < r.runs.size(); ++i) {
        nlohmann::json jr = to_json(r.runs[i]);
        jr["seed"] = r.seeds.at(i);
        runs.push_back(std::move(jr));
    }
    auto triple = [](const Triple& t) {
        return nlohmann::json{{"s", number_or_null(t.s)}, {"d", number_or_null(t.d)}, {"a", number_or_null(t.a)}};
    };
    return {{"n_runs", r.n_runs},
            {"failed_runs", r.failed_runs},
            {"mean", triple(r.mean)},
            {"std", triple(r.std)},
            {"runs", runs}};
}

} // namespace trendsearch
