#include "trendsearch/commands.hpp"
#include "trendsearch/error.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <iostream>

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

struct Common {
    std::string manifest;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::string mode;
    std::string out{"out"};
    std::optional<double> max_error;
    std::optional<double> max_error_scale;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--manifest", c.manifest, "Run manifest (JSON)")->required();
    cmd->add_option("--seed", c.seed, "Top-level seed (overrides manifest and TRENDSEARCH_SEED)");
    cmd->add_option("--workers", c.workers, "Concurrent evaluations (overrides manifest)")->check(CLI::PositiveNumber);
    cmd->add_option("--mode", c.mode, "all|mlp|lstm|cnn (overrides manifest)");
    cmd->add_option("--out", c.out, "Output directory");
    cmd->add_option("--max-error", c.max_error, "Segmentation merge ceiling (SSE)");
    cmd->add_option("--max-error-scale", c.max_error_scale, "Ceiling as a multiple of the series variance");
}

trendsearch::CommandContext make_context(const Common& c) {
    trendsearch::CommandContext ctx;
    ctx.manifest = trendsearch::load_manifest(c.manifest);
    if (c.seed) ctx.manifest.seed = *c.seed;
    if (!c.mode.empty()) ctx.manifest.mode = trendsearch::parse_mode(c.mode);
    if (c.max_error_scale) {
        ctx.manifest.max_error_scale = *c.max_error_scale;
        ctx.manifest.max_error.reset();
    }
    if (c.max_error) ctx.manifest.max_error = *c.max_error;
    if (c.workers) ctx.manifest.engine.workers = *c.workers;
    ctx.out_dir = c.out;
    return ctx;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trend prediction with walk-forward evaluation and BOHB search"};
    app.require_subcommand(1);

    Common common;
    auto* segment = app.add_subcommand("segment", "Segment the series into linear trends");
    add_common(segment, common);
    auto* prepare = app.add_subcommand("prepare", "Build instances and the walk-forward plan");
    add_common(prepare, common);

    auto* eval = app.add_subcommand("eval", "Walk-forward evaluation of one configuration");
    add_common(eval, common);
    trendsearch::EvalOptions eval_opts;
    std::string eval_config, eval_split{"validation"}, save_models, load_models;
    std::optional<std::size_t> eval_budget;
    eval->add_option("--config", eval_config, "Configuration JSON")->required();
    eval->add_option("--budget", eval_budget, "Training epochs");
    eval->add_option("--split", eval_split, "validation|test");
    eval->add_option("--save-models", save_models, "Directory for per-fold model blobs");
    eval->add_option("--load", load_models, "Evaluate stored per-fold models instead of training");

    auto* search = app.add_subcommand("search", "BOHB search over the configuration space");
    add_common(search, common);
    bool wall_clock = false;
    search->add_flag("--wall-clock", wall_clock, "Add wall-clock timestamps to the observation log");

    auto* stability = app.add_subcommand("stability", "Repeat a configuration over seeded runs");
    add_common(stability, common);
    std::string stab_config;
    std::optional<std::size_t> runs, stab_budget;
    stability->add_option("--config", stab_config, "Configuration JSON")->required();
    stability->add_option("--runs", runs, "Number of runs");
    stability->add_option("--budget", stab_budget, "Training epochs");

    auto* report = app.add_subcommand("report", "Selection-frequency and delta tables");
    std::vector<std::string> logs, compare;
    std::string base, report_out{"out"};
    report->add_option("logs", logs, "Observation logs (JSON lines)");
    report->add_option("--base", base, "Baseline stability or eval report (BOHB-All)");
    report->add_option("--compare", compare, "Reports compared against the baseline");
    report->add_option("--out", report_out, "Output directory");

    CLI11_PARSE(app, argc, argv);

    std::signal(SIGINT, on_sigint);
    try {
        if (report->parsed()) {
            trendsearch::ReportOptions opts;
            opts.logs.assign(logs.begin(), logs.end());
            if (!base.empty()) opts.base = base;
            opts.compare.assign(compare.begin(), compare.end());
            opts.out_dir = report_out;
            trendsearch::cmd_report(opts);
            return 0;
        }
        auto ctx = make_context(common);
        if (segment->parsed()) {
            trendsearch::cmd_segment(ctx);
        } else if (prepare->parsed()) {
            trendsearch::cmd_prepare(ctx);
        } else if (eval->parsed()) {
            eval_opts.config_path = eval_config;
            eval_opts.budget = eval_budget;
            eval_opts.split = trendsearch::parse_split(eval_split);
            if (!save_models.empty()) eval_opts.save_models = save_models;
            if (!load_models.empty()) eval_opts.load_models = load_models;
            trendsearch::cmd_eval(ctx, eval_opts);
        } else if (search->parsed()) {
            const auto result = trendsearch::cmd_search(ctx, {&g_stop, wall_clock});
            if (result.interrupted) return 130;
        } else if (stability->parsed()) {
            trendsearch::cmd_stability(ctx, {stab_config, runs, stab_budget});
        }
    } catch (const trendsearch::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
