// Acceptance checks. Each criterion prints one PASS/FAIL line and the process
// exits non-zero when any selected criterion fails.

#include "support/gradcheck.hpp"
#include "trendsearch/bohb.hpp"
#include "trendsearch/commands.hpp"
#include "trendsearch/error.hpp"
#include "trendsearch/evaluation.hpp"
#include "trendsearch/segmentation.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace ts = trendsearch;
namespace nn = trendsearch::nn;
namespace fs = std::filesystem;
using ts::testing::away_from_zero;
using ts::testing::check_layer;
using ts::testing::random_params;
using ts::testing::random_tensor;

namespace {

struct Outcome {
    bool pass{true};
    std::string detail;
};

struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("trendsearch_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// 1 ---------------------------------------------------------------------------

Outcome budget_pairs() {
    // Reference (min, max) budget pairs: rows MLP, LSTM, CNN, All; four datasets each.
    const std::vector<std::pair<std::size_t, std::size_t>> pairs = {
        {55, 500},   {11, 100}, {555, 5000},  {1666, 15000},  // MLP
        {11, 100},   {11, 100}, {111, 1000},  {1666, 15000},  // LSTM
        {11, 100},   {11, 100}, {1555, 15000}, {111, 1000},   // CNN
        {55, 500},   {11, 100}, {333, 3000},  {333, 3000},    // All
    };
    Outcome o;
    std::size_t matched = 0;
    std::string mismatches;
    for (const auto& [min, max] : pairs) {
        const std::size_t got = ts::min_budget(max, 3, 1);
        if (got == min) {
            ++matched;
        } else {
            mismatches += " (" + std::to_string(min) + "," + std::to_string(max) + ")->" + std::to_string(got);
        }
    }
    o.pass = matched == pairs.size();
    o.detail = std::to_string(matched) + "/16 pairs exact";
    if (!mismatches.empty()) o.detail += "; mismatched:" + mismatches;
    return o;
}

// 2 ---------------------------------------------------------------------------

Outcome space_counts() {
    const auto& s = ts::default_space();
    const auto c = s.counts();
    const auto g = s.group_counts();
    auto at = [&](const char* k) { return g.count(k) ? g.at(k) : 0; };
    Outcome o;
    o.pass = c.total == 24 && c.discrete == 22 && c.continuous == 2 && g.size() == 5 && at("algorithm") == 1 &&
             at("MLP") == 6 && at("LSTM") == 4 && at("CNN") == 9 && at("shared") == 4;
    o.detail = "total " + std::to_string(c.total) + ", discrete " + std::to_string(c.discrete) + ", continuous " +
               std::to_string(c.continuous) + ", groups " + std::to_string(at("algorithm")) + "/" +
               std::to_string(at("MLP")) + "/" + std::to_string(at("LSTM")) + "/" + std::to_string(at("CNN")) + "/" +
               std::to_string(at("shared")) + " (exact)";
    return o;
}

// 3 ---------------------------------------------------------------------------

Outcome segmentation_recovery() {
    std::size_t exact = 0;
    double worst_slope = 0.0;
    std::string first_bad;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        ts::SyntheticSpec spec;
        spec.n_pieces = 3 + seed % 6;
        spec.min_duration = 10;
        spec.max_duration = 40;
        spec.min_slope_deg = -60.0;
        spec.max_slope_deg = 60.0;
        spec.seed = 1000 + seed;
        const auto syn = ts::generate_synthetic(spec);
        const auto got = ts::segment_bottom_up(syn.series, {1e-6, 2});
        const auto want = syn.truth.breakpoints();
        const auto have = got.breakpoints();
        bool ok = got.size() == syn.truth.size() && std::equal(want.begin(), want.end(), have.begin(), have.end());
        if (ok) {
            for (std::size_t k = 0; k < got.size(); ++k) {
                const double err = std::abs(got[k].slope_deg - syn.truth[k].slope_deg);
                worst_slope = std::max(worst_slope, err);
                if (err > 1e-9) ok = false;
            }
        }
        if (ok) {
            ++exact;
        } else if (first_bad.empty()) {
            first_bad = "; first failure seed " + std::to_string(spec.seed);
        }
    }
    Outcome o;
    o.pass = exact == 100;
    o.detail = std::to_string(exact) + "/100 exact breakpoints, worst slope error " + fmt(worst_slope) +
               " deg (tol 1e-9)" + first_bad;
    return o;
}

// 4 ---------------------------------------------------------------------------

// Max-pool input whose window maxima lead the runner-up by at least `gap`.
nn::Tensor separated_pool_input(std::size_t b, std::size_t l, std::size_t c, std::size_t size, ts::Rng& rng) {
    nn::Tensor t = random_tensor({b, l, c}, rng);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t w = 0; w + size <= l; w += size) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                double* best = nullptr;
                for (std::size_t k = 0; k < size; ++k) {
                    double& v = t[(i * l + w + k) * c + ch];
                    if (best == nullptr || v > *best) best = &v;
                }
                *best += 0.1;
            }
        }
    }
    return t;
}

Outcome gradients() {
    constexpr double tol = 1e-4;
    ts::Rng rng(2024);
    auto dim = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
    std::map<std::string, double> worst;
    std::map<std::string, std::size_t> count;
    auto note = [&](const std::string& k, double e) {
        worst[k] = std::max(worst[k], e);
        ++count[k];
    };
    for (int trial = 0; trial < 50; ++trial) {
        const auto seed = static_cast<std::uint64_t>(trial);
        {
            const nn::LayerSpec spec{nn::DenseSpec{dim(1, 6), dim(1, 6)}};
            const auto& d = std::get<nn::DenseSpec>(spec.kind);
            note("dense", check_layer(spec, random_params(spec, rng), random_tensor({dim(1, 4), d.in}, rng), seed)
                              .worst());
        }
        {
            const std::size_t k = dim(1, 4);
            const nn::LayerSpec spec{nn::Conv1dSpec{dim(1, 3), dim(1, 4), k}};
            const auto& c = std::get<nn::Conv1dSpec>(spec.kind);
            const nn::Tensor x = random_tensor({dim(1, 3), k + dim(0, 5), c.in_channels}, rng);
            note("conv1d", check_layer(spec, random_params(spec, rng), x, seed).worst());
        }
        {
            const std::size_t s = dim(2, 3);
            const nn::Tensor x = random_tensor({dim(1, 3), s * dim(1, 3) + dim(0, s - 1), dim(1, 3)}, rng);
            note("avg-pool", check_layer({nn::PoolSpec{nn::PoolType::Avg, s}}, {}, x, seed).worst());
        }
        {
            const std::size_t s = dim(2, 3);
            const nn::Tensor x = separated_pool_input(dim(1, 3), s * dim(1, 3), dim(1, 3), s, rng);
            note("max-pool", check_layer({nn::PoolSpec{nn::PoolType::Max, s}}, {}, x, seed).worst());
        }
        {
            const nn::LayerSpec spec{nn::LstmSpec{dim(1, 3), dim(1, 4), trial % 2 == 0}};
            const auto& l = std::get<nn::LstmSpec>(spec.kind);
            const std::size_t batch = dim(1, 3);
            const nn::Tensor x = random_tensor({batch, dim(1, 5), l.in_features}, rng);
            if (trial % 3 == 0) {
                const nn::LstmState s0{random_tensor({batch, l.cells}, rng), random_tensor({batch, l.cells}, rng)};
                note("lstm", check_layer(spec, random_params(spec, rng), x, seed, 1e-5, &s0).worst());
            } else {
                note("lstm", check_layer(spec, random_params(spec, rng), x, seed).worst());
            }
        }
        {
            note("relu", check_layer({nn::ReluSpec{}}, {}, away_from_zero({dim(1, 4), dim(1, 6)}, rng), seed).worst());
        }
        {
            const std::size_t b = dim(1, 8);
            note("loss", ts::testing::check_composite_loss(random_tensor({b, 2}, rng, -5, 5),
                                                           random_tensor({b, 2}, rng, -5, 5)));
        }
    }
    Outcome o;
    for (const auto& [k, e] : worst) {
        if (e > tol) o.pass = false;
        if (!o.detail.empty()) o.detail += ", ";
        o.detail += k + " " + fmt(e) + " (" + std::to_string(count[k]) + ")";
    }
    o.detail = "worst relative error: " + o.detail + "; tol 1e-4";
    return o;
}

// 5 ---------------------------------------------------------------------------

Outcome metrics() {
    constexpr double tol = 1e-12;
    Outcome o;
    auto check = [&](const std::string& what, double got, double want) {
        if (!(std::abs(got - want) <= tol)) {
            o.pass = false;
            o.detail += " " + what + "=" + fmt(got) + " want " + fmt(want) + ";";
        }
    };
    const std::vector<double> zero{0.0, 0.0}, err{3.0, 4.0};
    check("rmse(3,4)", ts::rmse(zero, err), 3.5355339059327378);
    const std::vector<double> a{1.0, 2.0, 3.0}, b{2.0, 2.0, 2.0};
    check("rmse(-1,0,1)", ts::rmse(a, b), std::sqrt(2.0 / 3.0));
    check("rmse(x,x)", ts::rmse(a, a), 0.0);
    const auto loss = nn::composite_loss(nn::Tensor({1, 2}, {3.0, 4.0}), nn::Tensor({1, 2}, {0.0, 0.0}));
    check("loss", loss.loss.total, 12.5);
    check("slope_mse", loss.loss.slope_mse, 9.0);
    check("duration_mse", loss.loss.duration_mse, 16.0);
    const auto two = nn::composite_loss(nn::Tensor({2, 2}, {1.0, 2.0, 3.0, 4.0}), nn::Tensor({2, 2}, {0.0, 0.0, 0.0, 0.0}));
    check("loss2", two.loss.total, ((1.0 + 9.0) / 2.0 + (4.0 + 16.0) / 2.0) / 2.0);
    o.detail = o.pass ? "rmse and composite loss hand values within 1e-12" : "mismatch:" + o.detail;
    return o;
}

// 6 ---------------------------------------------------------------------------

std::size_t expected_active(const std::string& alg, std::size_t layers) {
    if (alg == "CNN") return 1 + 1 + 2 * layers + 2 + 4;
    return 1 + 1 + layers + 4;
}

Outcome config_fuzz() {
    const auto& space = ts::default_space();
    ts::Rng rng(77);
    std::size_t valid = 0, active_ok = 0, active_total = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto c = ts::sample(space, rng);
        if (ts::is_valid(space, c)) ++valid;
    }
    for (const std::string alg : {"MLP", "LSTM", "CNN"}) {
        const auto pinned = space.pinned("algorithm", alg);
        const std::string count_name = alg == "MLP" ? "mlp_layers" : alg == "LSTM" ? "lstm_layers" : "cnn_layers";
        const std::size_t max_layers = alg == "MLP" ? 5 : 3;
        for (std::size_t n = 1; n <= max_layers; ++n) {
            const auto sub = pinned.pinned(count_name, static_cast<std::int64_t>(n));
            for (int k = 0; k < 20; ++k) {
                const auto c = ts::sample(sub, rng);
                ++active_total;
                if (ts::is_valid(space, c) && ts::active_params(space, c).size() == expected_active(alg, n) &&
                    c.values.size() == expected_active(alg, n)) {
                    ++active_ok;
                }
            }
        }
    }
    Outcome o;
    o.pass = valid == 10000 && active_ok == active_total;
    o.detail = std::to_string(valid) + "/10000 valid, active counts " + std::to_string(active_ok) + "/" +
               std::to_string(active_total) + " match the enumeration (exact)";
    return o;
}

// 7 ---------------------------------------------------------------------------

Outcome scheduler_accounting() {
    Outcome o;
    auto fail = [&](const std::string& why) {
        o.pass = false;
        o.detail += " " + why + ";";
    };
    const auto ladder = ts::BudgetLadder::from_max(27);
    const std::size_t levels[3] = {ladder.min_budget, ladder.mid_budget, ladder.max_budget};
    for (auto rate : {ts::PromotionRate::Eta, ts::PromotionRate::Half}) {
        ts::EngineParams p;
        p.n_iterations = 30;
        p.promotion_rate = rate;
        const std::size_t keep = rate == ts::PromotionRate::Eta ? 3 : 2;
        const auto plan = ts::plan_iterations(ladder, p);
        for (const auto& b : plan) {
            const std::size_t s = 2 - b.iteration % 3;
            // n = ceil((s_max + 1) / (s + 1)) * eta^s, then n / keep per rung.
            std::size_t n = static_cast<std::size_t>(std::ceil(3.0 / static_cast<double>(s + 1))) *
                            static_cast<std::size_t>(std::pow(3.0, static_cast<double>(s)));
            if (b.s != s || b.rungs.size() != s + 1) fail("bracket shape at iteration " + std::to_string(b.iteration));
            for (std::size_t r = 0; r < b.rungs.size(); ++r) {
                if (b.rungs[r].n_configs != n || b.rungs[r].budget != levels[2 - s + r]) {
                    fail(ts::to_string(rate) + " rung " + std::to_string(r) + " of iteration " +
                         std::to_string(b.iteration));
                }
                n /= keep;
            }
        }
        const double s2 = ts::full_budget_equivalents(plan[0], ladder.max_budget);
        if (rate == ts::PromotionRate::Eta && s2 != 3.0) fail("s=2 cost " + fmt(s2));
    }

    ts::EngineParams p;
    p.n_iterations = 30;
    p.random_fraction = 1.0;
    const auto space = ts::load_space(R"({"version": 1, "params": [{"name": "x", "kind": "continuous", "domain": [0, 1]}]})");
    const auto result = ts::run_search(
        space, ladder, p,
        [](const ts::Configuration& c, std::size_t b, std::uint64_t) {
            return ts::ObjectiveOutcome{c.get_real("x") + 1.0 / static_cast<double>(b), true, ""};
        },
        1);
    // Ten cycles of (9 + 3 + 1) + (6 + 2) + 3 evaluations over (9 + 6 + 3) configurations;
    // cost per cycle 3 + (6 * 9 + 2 * 27) / 27 + 3 = 10.
    const auto& acc = result.accounting;
    if (acc.unique_configs != 180) fail("unique " + std::to_string(acc.unique_configs));
    if (acc.total_evaluations != 240) fail("evaluations " + std::to_string(acc.total_evaluations));
    if (acc.full_budget_equivalents != 100.0) fail("full-budget equivalents " + fmt(acc.full_budget_equivalents));
    o.detail = o.pass ? "rung sizes match closed form for eta and half, s=2 cost 3, 30 iterations: 180 configs / "
                        "240 evaluations / 100 full-budget equivalents (exact)"
                      : "mismatch:" + o.detail;
    return o;
}

// 8 ---------------------------------------------------------------------------

// Quadratic bowl with its unique minimum at (0.3, 0.7); lower budgets add a
// constant fidelity offset.
ts::ObjectiveOutcome bowl_objective(const ts::Configuration& c, std::size_t budget, std::uint64_t) {
    const double x = c.get_real("x"), y = c.get_real("y");
    return {(x - 0.3) * (x - 0.3) + (y - 0.7) * (y - 0.7) + 0.1 / static_cast<double>(budget), true, ""};
}

Outcome model_based_gain() {
    const auto space = ts::load_space(R"({"version": 1, "params": [
        {"name": "x", "kind": "continuous", "domain": [0, 1]},
        {"name": "y", "kind": "continuous", "domain": [0, 1]}]})");
    const auto ladder = ts::BudgetLadder::from_max(9);
    ts::EngineParams p;
    p.n_iterations = 10;
    std::size_t wins = 0, cost_wins = 0;
    std::string pairs;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto r = ts::run_search(space, ladder, p, bowl_objective, seed);
        const double bohb = r.incumbent->loss;
        // Random search over the same number of evaluations, all at the maximum budget.
        ts::Rng rng(ts::derive_seed(seed, 99));
        const auto cost = static_cast<std::size_t>(std::round(r.accounting.full_budget_equivalents));
        double random_best = std::numeric_limits<double>::infinity();
        double random_cost_best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < r.accounting.total_evaluations; ++i) {
            const auto c = ts::sample(space, rng);
            const double loss = bowl_objective(c, ladder.max_budget, ts::evaluation_seed(seed, c, 9)).loss;
            random_best = std::min(random_best, loss);
            if (i < cost) random_cost_best = std::min(random_cost_best, loss);
        }
        if (bohb <= random_best) ++wins;
        if (bohb <= random_cost_best) ++cost_wins;
        pairs += " " + fmt(bohb) + (bohb <= random_best ? "<=" : ">") + fmt(random_best);
    }
    Outcome o;
    o.pass = wins >= 8;
    o.detail = std::to_string(wins) + "/10 seeds with incumbent <= random search at equal evaluation count "
               "(need >= 8);" + pairs + "; informational: " + std::to_string(cost_wins) +
               "/10 against random search at equal full-budget cost";
    return o;
}

// 9 ---------------------------------------------------------------------------

const char* kDeskManifest = R"({
  "seed": 7, "mode": "all", "partitions": 5, "test_fraction": 0.3,
  "dataset": {"synthetic": {"n_pieces": 165, "min_duration": 8, "max_duration": 16,
                            "min_slope_deg": 20, "max_slope_deg": 60, "alternate_sign": true,
                            "noise_std": 0.05}},
  "ladder": {"max_budget": 27},
  "engine": {"n_iterations": 6, "workers": 1},
  "stability": {"n_runs": 10}
})";

Outcome end_to_end() {
    const fs::path dir = scratch("c9");
    std::ofstream(dir / "manifest.json") << kDeskManifest;
    std::ostringstream sink;
    ts::CommandContext ctx;
    ctx.manifest = ts::load_manifest(dir / "manifest.json");
    ctx.out_dir = dir / "search";
    ctx.out = &sink;

    const auto t0 = std::chrono::steady_clock::now();
    const auto result = ts::cmd_search(ctx, {});
    const double search_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    auto m = ctx.manifest;
    const auto data = ts::prepare_data(m);
    const std::size_t points = data.series.size();
    const auto baseline = ts::run_walkforward(data.instances, data.plan, ts::mean_learner(), m.seed,
                                              ts::Split::Validation);
    const bool have_incumbent = result.incumbent && result.incumbent->status == ts::ObservationStatus::Ok;
    const double inc = have_incumbent ? result.incumbent->loss : std::numeric_limits<double>::infinity();

    ts::CommandContext sctx = ctx;
    sctx.out_dir = dir / "stability";
    ts::StabilityOptions sopts;
    sopts.config_path = dir / "search" / "incumbent_config.json";
    const auto t1 = std::chrono::steady_clock::now();
    const auto st = ts::cmd_stability(sctx, sopts);
    const double stab_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();

    // Hand sample std of the per-run A values.
    std::vector<double> a;
    for (const auto& run : st.runs) {
        if (run.ok()) a.push_back(run.a);
    }
    double mean = 0.0;
    for (double v : a) mean += v;
    mean /= static_cast<double>(a.size());
    double ss = 0.0;
    for (double v : a) ss += (v - mean) * (v - mean);
    const double hand_std = a.size() > 1 ? std::sqrt(ss / static_cast<double>(a.size() - 1)) : 0.0;
    const bool std_ok = st.runs.size() == 10 && a.size() > 1 && std::abs(st.std.a - hand_std) <= 1e-12 &&
                        std::abs(st.mean.a - mean) <= 1e-12;

    Outcome o;
    o.pass = search_s < 600.0 && have_incumbent && inc <= baseline.a && std_ok;
    o.detail = std::to_string(points) + " points, " + std::to_string(data.instances.size()) + " instances; search " +
               fmt(search_s) + " s (limit 600), " + std::to_string(result.accounting.total_evaluations) +
               " evaluations; incumbent A " + fmt(inc) + " vs mean baseline A " + fmt(baseline.a) +
               "; stability " + fmt(stab_s) + " s, A " + fmt(st.mean.a) + " +- " + fmt(st.std.a) + " (hand std " +
               fmt(hand_std) + ", tol 1e-12)";
    return o;
}

// 10 --------------------------------------------------------------------------

const char* kReproManifest = R"({
  "seed": 31, "partitions": 4, "test_fraction": 0.3,
  "dataset": {"synthetic": {"n_pieces": 40, "min_duration": 6, "max_duration": 12,
                            "min_slope_deg": 15, "max_slope_deg": 60, "alternate_sign": true,
                            "noise_std": 0.1}},
  "ladder": {"max_budget": 9},
  "engine": {"n_iterations": 4},
  "stability": {"n_runs": 3, "budget": 3}
})";

void run_pipeline(const fs::path& manifest, const fs::path& out) {
    std::ostringstream sink;
    auto ctx_for = [&](const char* sub) {
        ts::CommandContext ctx;
        ctx.manifest = ts::load_manifest(manifest);
        ctx.out_dir = out / sub;
        ctx.out = &sink;
        return ctx;
    };
    auto seg = ctx_for("segment");
    ts::cmd_segment(seg);
    auto prep = ctx_for("prepare");
    ts::cmd_prepare(prep);
    auto search = ctx_for("search");
    ts::cmd_search(search, {});
    auto eval = ctx_for("eval");
    ts::EvalOptions eopts;
    eopts.config_path = out / "search" / "incumbent_config.json";
    eopts.split = ts::Split::Test;
    ts::cmd_eval(eval, eopts);
    auto stab = ctx_for("stability");
    ts::StabilityOptions sopts;
    sopts.config_path = out / "search" / "incumbent_config.json";
    ts::cmd_stability(stab, sopts);
}

Outcome reproducibility() {
    const fs::path dir = scratch("c10");
    std::ofstream(dir / "manifest.json") << kReproManifest;
    run_pipeline(dir / "manifest.json", dir / "first");
    run_pipeline(dir / "first" / "search" / "manifest.resolved.json", dir / "second");

    std::size_t files = 0, identical = 0;
    std::string differing;
    for (const auto& entry : fs::recursive_directory_iterator(dir / "first")) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), dir / "first");
        ++files;
        if (fs::exists(dir / "second" / rel) && slurp(entry.path()) == slurp(dir / "second" / rel)) {
            ++identical;
        } else {
            differing += " " + rel.string();
        }
    }
    Outcome o;
    o.pass = files > 0 && identical == files;
    o.detail = std::to_string(identical) + "/" + std::to_string(files) +
               " artifacts byte-identical after re-running from the resolved manifest (W=1)";
    if (!differing.empty()) o.detail += "; differ:" + differing;
    return o;
}

// 11 --------------------------------------------------------------------------

Outcome leakage() {
    ts::SyntheticSpec spec;
    spec.n_pieces = 80;
    spec.min_duration = 6;
    spec.max_duration = 12;
    spec.noise_std = 0.1;
    spec.seed = 5;
    const auto syn = ts::generate_synthetic(spec);
    const auto set = ts::build_instances(syn.series, syn.truth);
    const auto plan = ts::make_walkforward_plan(set.size(), 5, 0.3);

    ts::Configuration c;
    c.values = {{"algorithm", std::string("MLP")}, {"mlp_layers", std::int64_t{1}}, {"mlp_units_1", std::int64_t{16}},
                {"batch_size", std::int64_t{16}}, {"learning_rate", 1e-2},          {"dropout", 0.0},
                {"weight_decay", 0.0}};
    std::size_t reads = 0, early_test_reads = 0, foreign_reads = 0;
    for (ts::Split split : {ts::Split::Validation, ts::Split::Test}) {
        std::vector<bool> predicting(plan.folds.size(), false);
        const auto inner = ts::model_learner(c, 3);
        ts::FoldLearner learner = [&](const ts::FoldData& d) {
            auto p = inner(d);
            predicting[d.fold_index] = true;  // the predictor exists: prediction time begins
            return p;
        };
        ts::run_walkforward(set, plan, learner, 1, split, [&](const ts::InstanceAccess& a) {
            ++reads;
            const auto& fold = plan.folds[a.fold_index];
            if (fold.test.contains(a.instance_index) && !predicting[a.fold_index]) ++early_test_reads;
            const auto& eval = split == ts::Split::Validation ? fold.validation : fold.test;
            const bool allowed = a.phase == ts::AccessPhase::Predict ? eval.contains(a.instance_index)
                                                                     : fold.train.contains(a.instance_index);
            if (!allowed) ++foreign_reads;
        });
    }
    Outcome o;
    o.pass = reads > 0 && early_test_reads == 0 && foreign_reads == 0;
    o.detail = std::to_string(plan.folds.size()) + " folds x 2 splits, " + std::to_string(reads) + " reads, " +
               std::to_string(early_test_reads) + " test-range reads before prediction, " +
               std::to_string(foreign_reads) + " reads outside the phase's range (need 0)";
    return o;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance checks"};
    std::vector<int> selected;
    app.add_option("--criterion", selected, "Criterion numbers to run (default: all)");
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> all = {
        {1, "budget formula", 1.0, budget_pairs},
        {2, "space counts", 1.0, space_counts},
        {3, "segmentation recovery", 30.0, segmentation_recovery},
        {4, "gradient correctness", 60.0, gradients},
        {5, "metric exactness", 1.0, metrics},
        {6, "configuration fuzz", 30.0, config_fuzz},
        {7, "scheduler accounting", 1.0, scheduler_accounting},
        {8, "model-based gain", 120.0, model_based_gain},
        {9, "end-to-end desk scale", 1200.0, end_to_end},
        {10, "reproducibility", 300.0, reproducibility},
        {11, "leakage guard", 60.0, leakage},
    };
    bool ok = true;
    for (const auto& c : all) {
        if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = s < c.limit_seconds;
        const bool pass = out.pass && in_time;
        ok = ok && pass;
        std::cout << "criterion " << c.id << " [" << c.name << "]: " << (pass ? "PASS" : "FAIL") << " - "
                  << out.detail << " [" << fmt(s) << " s, limit " << fmt(c.limit_seconds) << " s"
                  << (in_time ? "" : ", over time") << "]\n";
    }
    return ok ? 0 : 1;
}
