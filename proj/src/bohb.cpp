#include "trendsearch/bohb.hpp"

#include "trendsearch/error.hpp"
#include "trendsearch/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <thread>

namespace trendsearch {
namespace {

struct Candidate {
    std::string config_id;
    Configuration config;
};

/// Diagonal Gaussian KDE over slot vectors.
struct Kde {
    std::vector<const std::vector<double>*> points;
    std::vector<double> bandwidth;

    double log_density(const std::vector<double>& x) const {
        static const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
        double norm = 0.0;
        for (double b : bandwidth) norm += std::log(b) + kHalfLog2Pi;
        std::vector<double> terms;
        terms.reserve(points.size());
        double best = -std::numeric_limits<double>::infinity();
        for (const auto* p : points) {
            double t = -norm;
            for (std::size_t j = 0; j < x.size(); ++j) {
                const double z = (x[j] - (*p)[j]) / bandwidth[j];
                t -= 0.5 * z * z;
            }
            terms.push_back(t);
            best = std::max(best, t);
        }
        double sum = 0.0;
        for (double t : terms) sum += std::exp(t - best);
        return best + std::log(sum) - std::log(static_cast<double>(points.size()));
    }
};

Kde fit_kde(std::vector<const std::vector<double>*> points, std::size_t d, double min_bw, double factor) {
    Kde kde;
    kde.points = std::move(points);
    const auto n = static_cast<double>(kde.points.size());
    const double scott = std::pow(n, -1.0 / (static_cast<double>(d) + 4.0));
    kde.bandwidth.assign(d, min_bw);
    for (std::size_t j = 0; j < d; ++j) {
        double sd = 0.0;
        if (kde.points.size() > 1) {
            double mean = 0.0;
            for (const auto* p : kde.points) mean += (*p)[j];
            mean /= n;
            double ss = 0.0;
            for (const auto* p : kde.points) ss += ((*p)[j] - mean) * ((*p)[j] - mean);
            sd = std::sqrt(ss / (n - 1.0));
        }
        kde.bandwidth[j] = std::max(min_bw, sd * scott) * factor;
    }
    return kde;
}

bool before(const Observation& a, const Observation& b) {
    if (a.loss != b.loss) return a.loss < b.loss;
    return a.seq < b.seq;
}

double wall_seconds() {
    using namespace std::chrono;
    return duration<double>(system_clock::now().time_since_epoch()).count();
}

} // namespace

std::size_t min_budget(std::size_t max_budget, std::size_t eta, std::size_t n_intermediate) {
    if (eta < 2) throw DomainError("eta must be >= 2");
    std::size_t divisor = 1;
    for (std::size_t i = 0; i <= n_intermediate; ++i) divisor *= eta;
    if (max_budget < divisor) {
        throw DomainError("max budget " + std::to_string(max_budget) + " is below eta^(N+1) = " +
                          std::to_string(divisor));
    }
    return max_budget / divisor;
}

BudgetLadder BudgetLadder::from_max(std::size_t max_budget) {
    BudgetLadder l;
    l.min_budget = trendsearch::min_budget(max_budget, 3, 1);
    l.mid_budget = max_budget / 3;
    l.max_budget = max_budget;
    return l;
}

std::string to_string(PromotionRate r) { return r == PromotionRate::Eta ? "eta" : "half"; }

PromotionRate parse_promotion_rate(const std::string& s) {
    if (s == "eta") return PromotionRate::Eta;
    if (s == "half") return PromotionRate::Half;
    throw DomainError("unknown promotion rate '" + s + "' (expected eta or half)");
}

void validate(const EngineParams& p) {
    if (p.n_iterations < 1) throw DomainError("n_iterations must be >= 1");
    if (!(p.top_n_percent > 0.0 && p.top_n_percent < 100.0)) throw DomainError("top_n_percent must be in (0, 100)");
    if (p.num_samples < 1) throw DomainError("num_samples must be >= 1");
    if (!(p.random_fraction >= 0.0 && p.random_fraction <= 1.0)) throw DomainError("random_fraction must be in [0, 1]");
    if (p.min_points_in_model && *p.min_points_in_model < 1) throw DomainError("min_points_in_model must be >= 1");
    if (!(p.bandwidth_factor > 0.0)) throw DomainError("bandwidth_factor must be positive");
    if (!(p.min_bandwidth > 0.0)) throw DomainError("min_bandwidth must be positive");
    if (p.workers < 1) throw DomainError("workers must be >= 1");
}

std::vector<BracketPlan> plan_iterations(const BudgetLadder& ladder, const EngineParams& params) {
    if (!(ladder.min_budget >= 1 && ladder.min_budget <= ladder.mid_budget && ladder.mid_budget <= ladder.max_budget)) {
        throw DomainError("budget ladder must satisfy 1 <= min <= mid <= max");
    }
    const std::size_t levels[3] = {ladder.min_budget, ladder.mid_budget, ladder.max_budget};
    constexpr std::size_t s_max = 2;
    const std::size_t eta = 3;
    std::vector<BracketPlan> out;
    for (std::size_t it = 0; it < params.n_iterations; ++it) {
        BracketPlan b;
        b.iteration = it;
        b.s = s_max - it % (s_max + 1);
        std::size_t eta_s = 1;
        for (std::size_t k = 0; k < b.s; ++k) eta_s *= eta;
        // ceil((s_max + 1) / (s + 1)) * eta^s
        std::size_t n = (s_max + 1 + b.s) / (b.s + 1) * eta_s;
        for (std::size_t r = 0; r <= b.s; ++r) {
            Rung rung;
            rung.budget = levels[s_max - b.s + r];
            rung.n_configs = n;
            if (r < b.s) rung.n_promote = params.promotion_rate == PromotionRate::Eta ? n / eta : n / 2;
            b.rungs.push_back(rung);
            n = rung.n_promote;
        }
        out.push_back(std::move(b));
    }
    return out;
}

double full_budget_equivalents(const BracketPlan& bracket, std::size_t max_budget) {
    std::size_t total = 0;
    for (const auto& r : bracket.rungs) total += r.n_configs * r.budget;
    return static_cast<double>(total) / static_cast<double>(max_budget);
}

std::string to_string(ObservationStatus s) { return s == ObservationStatus::Ok ? "ok" : "failed"; }

nlohmann::json to_json(const Observation& o) {
    nlohmann::json j = {{"seq", o.seq},
                        {"id", o.config_id},
                        {"iteration", o.iteration},
                        {"bracket", o.bracket},
                        {"rung", o.rung},
                        {"is_base", o.is_base},
                        {"budget", o.budget},
                        {"loss", o.loss},
                        {"status", to_string(o.status)},
                        {"config_hash", o.config.id},
                        {"config", to_json(o.config).at("values")},
                        {"t_dispatch", o.dispatched},
                        {"t_complete", o.seq}};
    if (!o.message.empty()) j["message"] = o.message;
    if (o.wall_start) j["wall_start"] = *o.wall_start;
    if (o.wall_end) j["wall_end"] = *o.wall_end;
    return j;
}

Configuration propose(const ConfigurationSpace& space, std::span<const Observation> observations,
                      const EngineParams& params, Rng& rng) {
    if (params.random_fraction >= 1.0) return sample(space, rng);
    if (params.random_fraction > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < params.random_fraction) {
        return sample(space, rng);
    }
    const std::size_t d = space.dimension();
    const std::size_t min_points = params.min_points_in_model.value_or(d + 1);

    std::map<std::size_t, std::vector<const Observation*>> by_budget;
    for (const auto& o : observations) by_budget[o.budget].push_back(&o);
    const std::vector<const Observation*>* chosen = nullptr;
    for (auto it = by_budget.rbegin(); it != by_budget.rend(); ++it) {
        if (it->second.size() >= min_points + 2) {
            chosen = &it->second;
            break;
        }
    }
    if (chosen == nullptr) return sample(space, rng);

    std::vector<const Observation*> ranked = *chosen;
    std::sort(ranked.begin(), ranked.end(), [](const Observation* a, const Observation* b) { return before(*a, *b); });
    const std::size_t n = ranked.size();
    std::size_t n_good = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(params.top_n_percent * static_cast<double>(n) / 100.0)));
    n_good = std::min(n_good, n - 1);

    std::vector<const std::vector<double>*> good, bad;
    for (std::size_t i = 0; i < n; ++i) (i < n_good ? good : bad).push_back(&ranked[i]->vector);
    const bool degenerate = std::all_of(good.begin(), good.end(), [&](const auto* v) { return *v == *good.front(); });
    if (degenerate) return sample(space, rng);

    const Kde good_kde = fit_kde(good, d, params.min_bandwidth, 1.0);
    const Kde bad_kde = fit_kde(bad, d, params.min_bandwidth, params.bandwidth_factor);

    std::uniform_int_distribution<std::size_t> pick(0, good.size() - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < params.num_samples; ++k) {
        const auto& centre = *good[pick(rng)];
        std::vector<double> x(d);
        for (std::size_t j = 0; j < d; ++j) {
            x[j] = std::clamp(centre[j] + good_kde.bandwidth[j] * normal(rng), 0.0, 1.0);
        }
        const double score = good_kde.log_density(x) - bad_kde.log_density(x);
        if (best.empty() || score > best_score) {
            best_score = score;
            best = std::move(x);
        }
    }
    Configuration c = devectorize(space, best);
    validate(space, c);
    return c;
}

std::uint64_t evaluation_seed(std::uint64_t search_seed, const Configuration& config, std::size_t budget) {
    return derive_seed(search_seed, {fnv1a(content_id(config)), static_cast<std::uint64_t>(budget)});
}

std::optional<Observation> select_incumbent(std::span<const Observation> observations, std::size_t max_budget) {
    const Observation* best_max = nullptr;
    const Observation* best_any = nullptr;
    const Observation* best_failed = nullptr;
    for (const auto& o : observations) {
        if (o.status != ObservationStatus::Ok) {
            if (best_failed == nullptr || before(o, *best_failed)) best_failed = &o;
            continue;
        }
        if (best_any == nullptr || before(o, *best_any)) best_any = &o;
        if (o.budget == max_budget && (best_max == nullptr || before(o, *best_max))) best_max = &o;
    }
    if (best_max) return *best_max;
    if (best_any) return *best_any;
    if (best_failed) return *best_failed;
    return std::nullopt;
}

SearchAccounting account(std::span<const Observation> observations, std::size_t max_budget) {
    SearchAccounting a;
    std::vector<std::string> ids;
    std::size_t budget_sum = 0;
    for (const auto& o : observations) {
        ids.push_back(o.config_id);
        budget_sum += o.budget;
        if (o.status != ObservationStatus::Ok) ++a.failed_evaluations;
    }
    std::sort(ids.begin(), ids.end());
    a.unique_configs = static_cast<std::size_t>(std::unique(ids.begin(), ids.end()) - ids.begin());
    a.total_evaluations = observations.size();
    a.full_budget_equivalents = static_cast<double>(budget_sum) / static_cast<double>(max_budget);
    return a;
}

SearchResult run_search(const ConfigurationSpace& space, const BudgetLadder& ladder, const EngineParams& params,
                        const SearchObjective& objective, std::uint64_t seed, const SearchHooks& hooks) {
    validate(params);
    const auto brackets = plan_iterations(ladder, params);
    Rng rng(seed);
    SearchResult result;
    result.ladder = ladder;
    std::vector<Observation>& log = result.observations;
    std::size_t dispatched = 0;
    double best_max = std::numeric_limits<double>::infinity();

    auto stopped = [&] { return hooks.stop != nullptr && hooks.stop->load(); };

    auto make_observation = [&](const BracketPlan& b, std::size_t rung, bool is_base, const Candidate& c) {
        Observation o;
        o.config_id = c.config_id;
        o.config = c.config;
        o.vector = vectorize(space, c.config);
        o.budget = b.rungs[rung].budget;
        o.iteration = b.iteration;
        o.bracket = b.s;
        o.rung = rung;
        o.is_base = is_base;
        o.dispatched = dispatched++;
        return o;
    };

    auto run_one = [&](Observation& o) {
        if (hooks.wall_clock) o.wall_start = wall_seconds();
        const ObjectiveOutcome out = objective(o.config, o.budget, evaluation_seed(seed, o.config, o.budget));
        if (hooks.wall_clock) o.wall_end = wall_seconds();
        if (!std::isfinite(out.loss)) {
            throw DomainError("objective returned a non-finite loss for " + o.config_id);
        }
        o.loss = out.loss;
        o.status = out.ok ? ObservationStatus::Ok : ObservationStatus::Failed;
        o.message = out.message;
    };

    auto record = [&](Observation o) {
        o.seq = log.size();
        if (o.budget == ladder.max_budget && o.status == ObservationStatus::Ok && o.loss < best_max) {
            best_max = o.loss;
            result.trajectory.push_back({o.seq, o.config_id, o.loss});
        }
        log.push_back(std::move(o));
        if (hooks.on_observation) hooks.on_observation(log.back());
    };

    // Evaluates a batch with up to `workers` threads; results land in batch order.
    auto run_batch = [&](std::vector<Observation>& batch) {
        const std::size_t threads = std::min(params.workers, batch.size());
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(batch.size());
        auto worker = [&] {
            for (std::size_t i = next++; i < batch.size(); i = next++) {
                try {
                    run_one(batch[i]);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        };
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    };

    for (const auto& bracket : brackets) {
        if (result.interrupted) break;
        std::vector<Candidate> current;
        std::vector<std::size_t> rung_log_index;

        const std::size_t n0 = bracket.rungs[0].n_configs;
        if (params.workers == 1) {
            for (std::size_t i = 0; i < n0; ++i) {
                if (stopped()) {
                    result.interrupted = true;
                    break;
                }
                Candidate c{"b" + std::to_string(bracket.iteration) + "-" + std::to_string(i),
                            propose(space, log, params, rng)};
                Observation o = make_observation(bracket, 0, true, c);
                run_one(o);
                current.push_back(std::move(c));
                rung_log_index.push_back(log.size());
                record(std::move(o));
            }
        } else {
            std::vector<Observation> batch;
            for (std::size_t i = 0; i < n0; ++i) {
                Candidate c{"b" + std::to_string(bracket.iteration) + "-" + std::to_string(i),
                            propose(space, log, params, rng)};
                current.push_back(c);
                batch.push_back(make_observation(bracket, 0, true, c));
            }
            if (stopped()) {
                result.interrupted = true;
                current.clear();
            } else {
                run_batch(batch);
                for (auto& o : batch) {
                    rung_log_index.push_back(log.size());
                    record(std::move(o));
                }
            }
        }
        if (result.interrupted) break;

        for (std::size_t r = 0; r + 1 < bracket.rungs.size(); ++r) {
            // Ok observations always rank ahead of failures.
            std::vector<std::size_t> order(current.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                const Observation& oa = log[rung_log_index[a]];
                const Observation& ob = log[rung_log_index[b]];
                const bool fa = oa.status != ObservationStatus::Ok;
                const bool fb = ob.status != ObservationStatus::Ok;
                if (fa != fb) return !fa;
                return oa.loss < ob.loss;
            });
            std::vector<Candidate> promoted;
            for (std::size_t k = 0; k < bracket.rungs[r].n_promote && k < order.size(); ++k) {
                promoted.push_back(current[order[k]]);
            }
            current = std::move(promoted);
            rung_log_index.clear();
            std::vector<Observation> batch;
            for (const auto& c : current) batch.push_back(make_observation(bracket, r + 1, false, c));
            if (params.workers == 1) {
                for (auto& o : batch) {
                    if (stopped()) {
                        result.interrupted = true;
                        break;
                    }
                    run_one(o);
                    rung_log_index.push_back(log.size());
                    record(std::move(o));
                }
            } else if (stopped()) {
                result.interrupted = true;
            } else {
                run_batch(batch);
                for (auto& o : batch) {
                    rung_log_index.push_back(log.size());
                    record(std::move(o));
                }
            }
            if (result.interrupted) break;
        }
    }

    result.incumbent = select_incumbent(log, ladder.max_budget);
    result.accounting = account(log, ladder.max_budget);
    return result;
}

nlohmann::json to_json(const SearchResult& r) {
    nlohmann::json trajectory = nlohmann::json::array();
    for (const auto& p : r.trajectory) trajectory.push_back({{"seq", p.seq}, {"id", p.config_id}, {"loss", p.loss}});
    nlohmann::json inc = nullptr;
    if (r.incumbent) {
        inc = {{"id", r.incumbent->config_id},
               {"budget", r.incumbent->budget},
               {"loss", r.incumbent->loss},
               {"status", to_string(r.incumbent->status)},
               {"config", to_json(r.incumbent->config)}};
    }
    return {{"ladder",
             {{"min", r.ladder.min_budget}, {"mid", r.ladder.mid_budget}, {"max", r.ladder.max_budget},
              {"eta", r.ladder.eta}}},
            {"incumbent", inc},
            {"accounting",
             {{"unique_configs", r.accounting.unique_configs},
              {"total_evaluations", r.accounting.total_evaluations},
              {"full_budget_equivalents", r.accounting.full_budget_equivalents},
              {"failed_evaluations", r.accounting.failed_evaluations}}},
            {"trajectory", trajectory},
            {"interrupted", r.interrupted}};
}

void ObservationLog::write(const Observation& o) {
    out_ << to_json(o).dump() << '\n';
    out_.flush();
}

} // namespace trendsearch
