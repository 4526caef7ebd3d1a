#include "trendsearch/commands.hpp"

#include "trendsearch/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace trendsearch {
namespace {

using nlohmann::json;

std::ostream& out_of(std::ostream* o) { return o != nullptr ? *o : std::cout; }

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    return f;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    auto f = open_output(path);
    f << text;
    if (!f) throw IoError("failed writing '" + path.string() + "'");
}

void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("'" + path.string() + "' is not valid JSON: " + e.what(), 0);
    }
}

void prepare_out_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

void write_resolved(const CommandContext& ctx) {
    RunManifest m = ctx.manifest;
    if (!m.engine.min_points_in_model) m.engine.min_points_in_model = space_for(m).dimension() + 1;
    write_json(ctx.out_dir / "manifest.resolved.json", to_json(m));
}

std::string trends_csv(const TrendSequence& trends) {
    std::string s = "start_index,duration,slope_deg\n";
    for (std::size_t k = 0; k < trends.size(); ++k) {
        s += std::to_string(trends.start_of(k)) + "," + std::to_string(trends[k].duration) + "," +
             format_number(trends[k].slope_deg) + "\n";
    }
    return s;
}

json plan_json(const WalkForwardPlan& plan) {
    json folds = json::array();
    auto range = [](const IndexRange& r) { return json::array({r.begin, r.end}); };
    for (const auto& f : plan.folds) {
        folds.push_back({{"train", range(f.train)}, {"validation", range(f.validation)}, {"test", range(f.test)}});
    }
    return {{"n_instances", plan.n_instances},
            {"partitions", plan.partitions},
            {"test_fraction", plan.test_fraction},
            {"folds", folds}};
}

/// Learner that also stores each fold's model under `dir`.
FoldLearner saving_learner(const Configuration& config, std::size_t budget, std::filesystem::path dir) {
    return [config, budget, dir](const FoldData& fold) -> FoldPredictor {
        const ModelPlan plan = build_model(config, fold.train.front().window.size());
        const TrainSettings settings = settings_from_config(config, budget, fold.seed);
        auto model = std::make_shared<const TrainedModel>(train(plan, fold.train, settings));
        const std::string stem = "fold" + std::to_string(fold.fold_index);
        write_tensor_blob(dir / (stem + ".bin"), model_tensors(*model));
        write_json(dir / (stem + ".json"),
                   {{"plan", to_json(plan)}, {"settings", to_json(settings)}, {"config", to_json(config)}});
        return [model](std::span<const TrendInstance> xs) { return predict(*model, xs); };
    };
}

FoldLearner loading_learner(const Configuration& config, std::filesystem::path dir) {
    return [config, dir](const FoldData& fold) -> FoldPredictor {
        const std::string stem = "fold" + std::to_string(fold.fold_index);
        const json meta = read_json_file(dir / (stem + ".json"));
        const ModelPlan plan = build_model(config, fold.train.front().window.size());
        if (meta.at("plan") != to_json(plan)) {
            throw DomainError("stored model for fold " + std::to_string(fold.fold_index) +
                              " was built from a different configuration or window size");
        }
        auto model = std::make_shared<const TrainedModel>(restore_model(
            plan, train_settings_from_json(meta.at("settings")), read_tensor_blob(dir / (stem + ".bin"))));
        return [model](std::span<const TrendInstance> xs) { return predict(*model, xs); };
    };
}

std::string stability_csv(const StabilityReport& r) {
    auto cell = [](double v) { return std::isfinite(v) ? format_number(v) : std::string(); };
    std::string s = "metric";
    for (std::size_t i = 0; i < r.runs.size(); ++i) s += ",run" + std::to_string(i + 1);
    s += ",mean,std\n";
    auto row = [&](const char* name, auto run_value, double mean, double sd) {
        s += name;
        for (const auto& run : r.runs) s += "," + cell(run_value(run));
        s += "," + cell(mean) + "," + cell(sd) + "\n";
    };
    row("S", [](const EvalReport& e) { return e.s; }, r.mean.s, r.std.s);
    row("D", [](const EvalReport& e) { return e.d; }, r.mean.d, r.std.d);
    row("A", [](const EvalReport& e) { return e.a; }, r.mean.a, r.std.a);
    return s;
}

/// A per run column and in the mean column is the mean of the S and D rows.
void check_a_rows(const StabilityReport& r) {
    auto close = [](double a, double s, double d) {
        return !std::isfinite(a) || std::abs(a - (s + d) / 2.0) <= 1e-12 * std::max(1.0, std::abs(a));
    };
    for (const auto& run : r.runs) {
        if (!close(run.a, run.s, run.d)) throw DomainError("stability report: A differs from (S + D) / 2");
    }
    if (!close(r.mean.a, r.mean.s, r.mean.d)) throw DomainError("stability report: mean A differs from (S + D) / 2");
}

std::string incumbent_table(const SearchResult& r) {
    std::ostringstream s;
    s << "ladder      " << r.ladder.min_budget << " / " << r.ladder.mid_budget << " / " << r.ladder.max_budget << "\n";
    s << "evaluations " << r.accounting.total_evaluations << " (" << r.accounting.unique_configs << " unique, "
      << format_number(r.accounting.full_budget_equivalents) << " full-budget equivalents)\n";
    if (!r.incumbent) {
        s << "incumbent   none\n";
        return s.str();
    }
    const auto& inc = *r.incumbent;
    s << "incumbent   " << inc.config_id << "\n";
    s << "loss        " << format_number(inc.loss) << " (" << to_string(inc.status) << ")\n";
    s << "budget      " << inc.budget << "\n\n";
    std::size_t width = 0;
    for (const auto& [k, v] : inc.config.values) width = std::max(width, k.size());
    for (const auto& [k, v] : inc.config.values) {
        s << k << std::string(width - k.size() + 2, ' ') << to_string(v) << "\n";
    }
    return s.str();
}

Triple read_triple(const std::filesystem::path& path) {
    const json j = read_json_file(path);
    const json& src = j.contains("mean") ? j["mean"] : j;
    auto num = [&](const char* k) {
        if (!src.contains(k) || !src[k].is_number()) {
            throw ParseError("'" + path.string() + "' has no numeric '" + k + "'", 0);
        }
        return src[k].get<double>();
    };
    return {num("s"), num("d"), num("a")};
}

std::string label_of(const std::filesystem::path& p) {
    const auto parent = p.parent_path().filename().string();
    return parent.empty() ? p.stem().string() : parent;
}

} // namespace

std::string format_number(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

TimeSeries load_series(const RunManifest& m) {
    if (const auto* csv = std::get_if<CsvSource>(&m.dataset)) {
        TimeSeries s = load_csv(csv->path, csv->column);
        return csv->resample > 1 ? resample(s, csv->resample) : s;
    }
    return generate_synthetic(std::get<SyntheticSpec>(m.dataset)).series;
}

PreparedData prepare_data(RunManifest& m) {
    TimeSeries series = load_series(m);
    if (!m.max_error) m.max_error = default_max_error(series, m.max_error_scale);
    SegmentationParams params;
    params.max_error = *m.max_error;
    params.min_duration = m.min_duration;
    TrendSequence trends = segment_bottom_up(series, params);
    InstanceSet instances = build_instances(series, trends);
    WalkForwardPlan plan = make_walkforward_plan(instances.size(), m.partitions, m.test_fraction, m.validation);
    return {std::move(series), std::move(trends), std::move(instances), std::move(plan)};
}

ConfigurationSpace space_for(const RunManifest& m) {
    ConfigurationSpace space = m.space_file ? load_space_file(*m.space_file) : default_space();
    switch (m.mode) {
    case SearchMode::All: return space;
    case SearchMode::MLP: return space.pinned("algorithm", std::string("MLP"));
    case SearchMode::LSTM: return space.pinned("algorithm", std::string("LSTM"));
    case SearchMode::CNN: return space.pinned("algorithm", std::string("CNN"));
    }
    return space;
}

Configuration load_config_file(const std::filesystem::path& path, const ConfigurationSpace& space) {
    const json j = read_json_file(path);
    Configuration c = j.contains("values") ? configuration_from_json(j) : configuration_from_json({{"values", j}});
    c.id = content_id(c);
    validate(space, c);
    return c;
}

std::size_t default_budget(const RunManifest& m, const Configuration& config) {
    if (m.mode == SearchMode::All) return m.max_budget;
    return m.max_budget_for(parse_algorithm(config.get_string("algorithm")));
}

void cmd_segment(CommandContext& ctx) {
    prepare_out_dir(ctx.out_dir);
    RunManifest& m = ctx.manifest;
    TimeSeries series = load_series(m);
    if (!m.max_error) m.max_error = default_max_error(series, m.max_error_scale);
    const TrendSequence trends = segment_bottom_up(series, {*m.max_error, m.min_duration});
    write_text(ctx.out_dir / "trends.csv", trends_csv(trends));
    write_json(ctx.out_dir / "segment_summary.json", {{"points", series.size()},
                                                      {"segments", trends.size()},
                                                      {"window_size", trends[0].duration},
                                                      {"max_error", *m.max_error}});
    write_resolved(ctx);
    out_of(ctx.out) << "segments: " << trends.size() << "\nw: " << trends[0].duration << "\n";
}

void cmd_prepare(CommandContext& ctx) {
    prepare_out_dir(ctx.out_dir);
    const PreparedData d = prepare_data(ctx.manifest);
    write_text(ctx.out_dir / "trends.csv", trends_csv(d.trends));
    std::string csv = "index,anchor,target_slope_deg,target_duration";
    for (std::size_t i = 0; i < d.instances.window_size; ++i) csv += ",x" + std::to_string(i);
    csv += "\n";
    for (std::size_t k = 0; k < d.instances.size(); ++k) {
        const auto& inst = d.instances.instances[k];
        csv += std::to_string(k) + "," + std::to_string(inst.anchor) + "," + format_number(inst.target_slope_deg) +
               "," + format_number(inst.target_duration);
        for (double x : inst.window) csv += "," + format_number(x);
        csv += "\n";
    }
    write_text(ctx.out_dir / "instances.csv", csv);
    write_json(ctx.out_dir / "plan.json", plan_json(d.plan));
    write_resolved(ctx);
    out_of(ctx.out) << "segments: " << d.trends.size() << "\nw: " << d.instances.window_size
                    << "\ninstances: " << d.instances.size() << "\nfolds: " << d.plan.folds.size() << "\n";
}

EvalReport cmd_eval(CommandContext& ctx, const EvalOptions& opts) {
    prepare_out_dir(ctx.out_dir);
    const PreparedData d = prepare_data(ctx.manifest);
    const Configuration config = load_config_file(opts.config_path, space_for(ctx.manifest));
    const std::size_t budget = opts.budget.value_or(default_budget(ctx.manifest, config));
    FoldLearner learner;
    if (opts.load_models) {
        learner = loading_learner(config, *opts.load_models);
    } else if (opts.save_models) {
        prepare_out_dir(*opts.save_models);
        learner = saving_learner(config, budget, *opts.save_models);
    } else {
        learner = model_learner(config, budget);
    }
    const EvalReport report = run_walkforward(d.instances, d.plan, learner, ctx.manifest.seed, opts.split);
    json j = to_json(report);
    j["budget"] = budget;
    j["config"] = to_json(config);
    write_json(ctx.out_dir / "eval_report.json", j);
    write_resolved(ctx);
    out_of(ctx.out) << "split: " << to_string(report.split) << "\nS: " << format_number(report.s)
                    << "\nD: " << format_number(report.d) << "\nA: " << format_number(report.a)
                    << "\nfailed folds: " << report.failed_folds << "\n";
    return report;
}

SearchResult cmd_search(CommandContext& ctx, const SearchOptions& opts) {
    prepare_out_dir(ctx.out_dir);
    RunManifest& m = ctx.manifest;
    const PreparedData d = prepare_data(m);
    const ConfigurationSpace space = space_for(m);
    const BudgetLadder ladder = BudgetLadder::from_max(m.mode_max_budget());
    EngineParams params = m.engine;
    if (!params.min_points_in_model) params.min_points_in_model = space.dimension() + 1;
    write_resolved(ctx);

    const Evaluator evaluator(d.instances, d.plan);
    const SearchObjective objective = [&evaluator](const Configuration& c, std::size_t budget, std::uint64_t seed) {
        const ObjectiveResult r = evaluator.evaluate(c, budget, seed);
        return ObjectiveOutcome{r.loss, r.ok, r.message};
    };

    auto log_file = open_output(ctx.out_dir / "observations.jsonl");
    ObservationLog log(log_file);
    SearchHooks hooks;
    hooks.stop = opts.stop;
    hooks.wall_clock = opts.wall_clock;
    hooks.on_observation = [&](const Observation& o) { log.write(o); };

    const SearchResult result = run_search(space, ladder, params, objective, m.seed, hooks);
    json summary = to_json(result);
    summary["mode"] = to_string(m.mode);
    summary["penalty_loss"] = evaluator.penalty();
    summary["instances"] = d.instances.size();
    summary["window_size"] = d.instances.window_size;
    write_json(ctx.out_dir / "search_summary.json", summary);
    write_text(ctx.out_dir / "incumbent.txt", incumbent_table(result));
    if (result.incumbent) write_json(ctx.out_dir / "incumbent_config.json", to_json(result.incumbent->config));
    out_of(ctx.out) << "ladder: " << ladder.min_budget << " " << ladder.mid_budget << " " << ladder.max_budget << "\n"
                    << incumbent_table(result);
    if (result.interrupted) out_of(ctx.out) << "interrupted: partial log kept\n";
    return result;
}

StabilityReport cmd_stability(CommandContext& ctx, const StabilityOptions& opts) {
    prepare_out_dir(ctx.out_dir);
    RunManifest& m = ctx.manifest;
    const PreparedData d = prepare_data(m);
    const Configuration config = load_config_file(opts.config_path, space_for(m));
    const std::size_t budget = opts.budget.value_or(m.stability.budget.value_or(default_budget(m, config)));
    const std::size_t n_runs = opts.n_runs.value_or(m.stability.n_runs);
    const StabilityReport report =
        run_stability(config, d.instances, d.plan, budget, n_runs, m.seed, m.stability.fixed_seed);
    check_a_rows(report);
    json j = to_json(report);
    j["budget"] = budget;
    j["config"] = to_json(config);
    write_json(ctx.out_dir / "stability.json", j);
    write_text(ctx.out_dir / "stability.csv", stability_csv(report));
    write_resolved(ctx);
    out_of(ctx.out) << stability_csv(report);
    return report;
}

std::vector<LoggedObservation> read_observation_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open observation log '" + path.string() + "'");
    std::vector<LoggedObservation> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            LoggedObservation o;
            o.line = n;
            o.id = j.at("id").get<std::string>();
            o.budget = j.at("budget").get<std::size_t>();
            o.loss = j.at("loss").get<double>();
            o.ok = j.at("status").get<std::string>() == "ok";
            o.algorithm = j.at("config").at("algorithm").get<std::string>();
            out.push_back(std::move(o));
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(n) + ": malformed observation: " + e.what(), n);
        }
    }
    if (out.empty()) throw ParseError("observation log '" + path.string() + "' has no records", 0);
    return out;
}

std::string incumbent_algorithm(const std::vector<LoggedObservation>& log) {
    std::size_t max_budget = 0;
    for (const auto& o : log) max_budget = std::max(max_budget, o.budget);
    const LoggedObservation* best = nullptr;
    auto consider = [&](bool need_max) {
        for (const auto& o : log) {
            if (!o.ok || (need_max && o.budget != max_budget)) continue;
            if (best == nullptr || o.loss < best->loss) best = &o;
        }
    };
    consider(true);
    if (best == nullptr) consider(false);
    if (best == nullptr) return log.front().algorithm;
    return best->algorithm;
}

std::map<std::string, std::size_t> selection_frequency(const std::vector<std::string>& winners) {
    std::map<std::string, std::size_t> f{{"MLP", 0}, {"LSTM", 0}, {"CNN", 0}};
    for (const auto& w : winners) ++f[to_string(parse_algorithm(w))];
    return f;
}

double percent_delta(double base, double other) {
    if (base == 0.0) throw DomainError("percent delta against a zero base");
    return (base - other) / base * 100.0;
}

void cmd_report(const ReportOptions& opts) {
    if (opts.logs.empty() && !opts.base) throw DomainError("report needs at least one observation log or --base");
    prepare_out_dir(opts.out_dir);
    std::ostream& out = out_of(opts.out);
    if (!opts.logs.empty()) {
        std::vector<std::string> winners;
        for (const auto& p : opts.logs) winners.push_back(incumbent_algorithm(read_observation_log(p)));
        const auto freq = selection_frequency(winners);
        std::string csv = "algorithm,count\n";
        for (const char* alg : {"MLP", "LSTM", "CNN"}) csv += std::string(alg) + "," + std::to_string(freq.at(alg)) + "\n";
        write_text(opts.out_dir / "frequency.csv", csv);
        out << "selection frequency over " << winners.size() << " runs\n" << csv;
    }
    if (opts.base) {
        if (opts.compare.empty()) throw DomainError("--base needs at least one --compare file");
        const Triple base = read_triple(*opts.base);
        std::vector<std::pair<std::string, Triple>> others;
        for (const auto& p : opts.compare) others.emplace_back(label_of(p), read_triple(p));
        std::string csv = "metric,base";
        for (const auto& [label, t] : others) csv += "," + label + ",delta_pct_" + label;
        csv += "\n";
        auto row = [&](const char* name, double Triple::*field) {
            csv += std::string(name) + "," + format_number(base.*field);
            for (const auto& [label, t] : others) {
                csv += "," + format_number(t.*field) + "," + format_number(percent_delta(base.*field, t.*field));
            }
            csv += "\n";
        };
        row("S", &Triple::s);
        row("D", &Triple::d);
        row("A", &Triple::a);
        write_text(opts.out_dir / "delta.csv", csv);
        out << "delta_pct = (base - other) / base * 100, base = " << label_of(*opts.base)
            << "; positive means lower error than base\n"
            << csv;
    }
}

} // namespace trendsearch
