#include "trendsearch/model.hpp"

#include "trendsearch/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>

namespace trendsearch {
namespace {

using nn::LayerSpec;
using nn::Tensor;

bool is_lstm(const LayerSpec& l) { return std::holds_alternative<nn::LstmSpec>(l.kind); }

Tensor make_input(const ModelPlan& plan, std::span<const TrendInstance> batch) {
    const std::size_t w = plan.window_size;
    std::vector<double> data;
    data.reserve(batch.size() * w);
    for (const auto& inst : batch) {
        if (inst.window.size() != w) {
            throw ShapeError("instance window has " + std::to_string(inst.window.size()) +
                             " points, model expects " + std::to_string(w));
        }
        data.insert(data.end(), inst.window.begin(), inst.window.end());
    }
    if (plan.algorithm == AlgorithmKind::MLP) return Tensor({batch.size(), w}, std::move(data));
    return Tensor({batch.size(), w, 1}, std::move(data));
}

Tensor make_target(std::span<const TrendInstance> batch) {
    Tensor t({batch.size(), 2});
    for (std::size_t b = 0; b < batch.size(); ++b) {
        t[2 * b] = batch[b].target_slope_deg;
        t[2 * b + 1] = batch[b].target_duration;
    }
    return t;
}

nn::LstmState slice_rows(const nn::LstmState& s, std::size_t rows) {
    const std::size_t H = s.h.dim(1);
    auto take = [&](const Tensor& t) {
        return Tensor({rows, H}, std::vector<double>(t.ptr(), t.ptr() + rows * H));
    };
    return {take(s.h), take(s.c)};
}

void store_rows(nn::LstmState& dst, const nn::LstmState& src) {
    std::copy(src.h.data().begin(), src.h.data().end(), dst.h.data().begin());
    std::copy(src.c.data().begin(), src.c.data().end(), dst.c.data().begin());
}

/// Runs the stack once; caches are kept only when `caches` is non-null.
Tensor run_forward(const ModelPlan& plan, const std::vector<std::vector<Tensor>>& params,
                   std::vector<nn::LstmState>& states, const Tensor& input, nn::Mode mode, Rng& rng,
                   std::vector<nn::LayerCache>* caches) {
    Tensor x = input;
    std::size_t lstm_index = 0;
    const std::size_t batch = input.dim(0);
    for (std::size_t i = 0; i < plan.layers.size(); ++i) {
        const LayerSpec& spec = plan.layers[i];
        nn::ForwardResult r;
        if (is_lstm(spec)) {
            auto& state = states[lstm_index++];
            const nn::LstmState init = slice_rows(state, batch);
            r = nn::layer_forward(spec, params[i], x, mode, rng, &init);
            store_rows(state, *r.final_state);
        } else {
            r = nn::layer_forward(spec, params[i], x, mode, rng);
        }
        x = std::move(r.output);
        if (caches != nullptr) caches->push_back(std::move(r.cache));
    }
    return x;
}

std::vector<nn::LstmState> zero_states(const ModelPlan& plan, std::size_t rows) {
    std::vector<nn::LstmState> states;
    for (const auto& l : plan.layers) {
        if (const auto* s = std::get_if<nn::LstmSpec>(&l.kind)) {
            states.push_back({Tensor({rows, s->cells}), Tensor({rows, s->cells})});
        }
    }
    return states;
}

std::int64_t required_int(const Configuration& c, const std::string& name) {
    const auto v = c.get_int(name);
    if (v < 1) throw InfeasibleConfigError("configuration value '" + name + "' must be >= 1");
    return v;
}

void put_u64(std::ostream& out, std::uint64_t v) {
    std::array<char, 8> b{};
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b.data(), 8);
}

std::uint64_t get_u64(std::istream& in) {
    std::array<unsigned char, 8> b{};
    in.read(reinterpret_cast<char*>(b.data()), 8);
    if (!in) throw ParseError("model blob truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

} // namespace

std::string to_string(AlgorithmKind a) {
    switch (a) {
    case AlgorithmKind::MLP: return "MLP";
    case AlgorithmKind::LSTM: return "LSTM";
    case AlgorithmKind::CNN: return "CNN";
    }
    return "?";
}

AlgorithmKind parse_algorithm(const std::string& s) {
    std::string upper = s;
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    if (upper == "MLP") return AlgorithmKind::MLP;
    if (upper == "LSTM") return AlgorithmKind::LSTM;
    if (upper == "CNN") return AlgorithmKind::CNN;
    throw DomainError("unknown algorithm '" + s + "' (expected MLP, LSTM or CNN)");
}

TrainSettings settings_from_config(const Configuration& config, std::size_t epochs, std::uint64_t seed) {
    if (epochs < 1) throw DomainError("training needs at least 1 epoch");
    TrainSettings s;
    s.epochs = epochs;
    s.batch_size = static_cast<std::size_t>(required_int(config, "batch_size"));
    s.learning_rate = config.get_real("learning_rate");
    s.dropout_rate = config.get_real("dropout");
    s.weight_decay = config.get_real("weight_decay");
    s.seed = seed;
    return s;
}

ModelPlan build_model(const Configuration& config, std::size_t window_size) {
    if (window_size < 1) throw InfeasibleConfigError("window size must be >= 1");
    ModelPlan plan;
    plan.algorithm = parse_algorithm(config.get_string("algorithm"));
    plan.window_size = window_size;
    const double rate = config.get_real("dropout");
    auto& L = plan.layers;
    auto dropout = [&] { L.push_back({nn::DropoutSpec{rate}}); };

    switch (plan.algorithm) {
    case AlgorithmKind::MLP: {
        const auto n = required_int(config, "mlp_layers");
        std::size_t in = window_size;
        for (std::int64_t i = 1; i <= n; ++i) {
            const auto units = static_cast<std::size_t>(required_int(config, "mlp_units_" + std::to_string(i)));
            L.push_back({nn::DenseSpec{in, units}});
            L.push_back({nn::ReluSpec{}});
            if (i % 2 == 1 && i != n) dropout();
            in = units;
        }
        L.push_back({nn::DenseSpec{in, 2}});
        break;
    }
    case AlgorithmKind::LSTM: {
        const auto n = required_int(config, "lstm_layers");
        std::size_t in = 1;
        for (std::int64_t i = 1; i <= n; ++i) {
            const auto cells = static_cast<std::size_t>(required_int(config, "lstm_cells_" + std::to_string(i)));
            L.push_back({nn::LstmSpec{in, cells, i != n}});
            L.push_back({nn::ReluSpec{}});
            dropout();
            in = cells;
        }
        L.push_back({nn::DenseSpec{in, 2}});
        break;
    }
    case AlgorithmKind::CNN: {
        const auto n = required_int(config, "cnn_layers");
        const std::string pool_type = config.get_string("cnn_pool_type");
        if (pool_type != "max" && pool_type != "avg") {
            throw InfeasibleConfigError("unknown pooling type '" + pool_type + "'");
        }
        const auto pool_size = static_cast<std::size_t>(required_int(config, "cnn_pool_size"));
        std::size_t length = window_size;
        std::size_t channels = 1;
        for (std::int64_t i = 1; i <= n; ++i) {
            const auto filters = static_cast<std::size_t>(required_int(config, "cnn_filters_" + std::to_string(i)));
            const auto kernel = static_cast<std::size_t>(required_int(config, "cnn_kernel_" + std::to_string(i)));
            if (kernel > length) {
                throw InfeasibleConfigError("CNN layer " + std::to_string(i) + ": kernel " + std::to_string(kernel) +
                                            " exceeds input length " + std::to_string(length));
            }
            length = length - kernel + 1;
            L.push_back({nn::Conv1dSpec{channels, filters, kernel}});
            L.push_back({nn::ReluSpec{}});
            if (pool_size > length) {
                throw InfeasibleConfigError("CNN layer " + std::to_string(i) + ": pool size " +
                                            std::to_string(pool_size) + " exceeds length " + std::to_string(length));
            }
            length /= pool_size;
            L.push_back({nn::PoolSpec{pool_type == "max" ? nn::PoolType::Max : nn::PoolType::Avg, pool_size}});
            dropout();
            channels = filters;
        }
        L.push_back({nn::FlattenSpec{}});
        L.push_back({nn::DenseSpec{length * channels, 2}});
        break;
    }
    }
    for (const auto& l : L) nn::validate(l);
    return plan;
}

TrainedModel train(const ModelPlan& plan, std::span<const TrendInstance> instances, const TrainSettings& settings) {
    if (instances.empty()) throw DomainError("train: empty training set");
    if (settings.epochs < 1 || settings.batch_size < 1) throw DomainError("train: epochs and batch size must be >= 1");

    TrainedModel model;
    model.plan = plan;
    model.settings = settings;

    Rng init_rng(derive_seed(settings.seed, 1));
    Rng dropout_rng(derive_seed(settings.seed, 2));
    std::vector<Tensor*> flat;
    std::vector<std::string> names;
    model.params.resize(plan.layers.size());
    for (std::size_t i = 0; i < plan.layers.size(); ++i) {
        const auto shapes = nn::param_shapes(plan.layers[i]);
        for (std::size_t k = 0; k < shapes.size(); ++k) {
            const std::size_t fan_in = nn::param_fan_in(plan.layers[i], k);
            model.params[i].push_back(fan_in > 0 ? nn::he_init(shapes[k], fan_in, init_rng) : Tensor(shapes[k]));
        }
    }
    for (std::size_t i = 0; i < plan.layers.size(); ++i) {
        for (std::size_t k = 0; k < model.params[i].size(); ++k) {
            flat.push_back(&model.params[i][k]);
            names.push_back("layer" + std::to_string(i) + "." + plan.layers[i].name() + "[" + std::to_string(k) + "]");
        }
    }
    nn::AdamState adam = nn::AdamState::for_params(flat);
    const std::size_t rows = std::min(settings.batch_size, instances.size());
    model.states = zero_states(plan, rows);

    std::vector<Tensor> grads;
    for (std::size_t epoch = 1; epoch <= settings.epochs; ++epoch) {
        double loss_sum = 0.0;
        try {
            for (std::size_t start = 0; start < instances.size(); start += settings.batch_size) {
                const auto batch = instances.subspan(start, std::min(settings.batch_size, instances.size() - start));
                const Tensor input = make_input(plan, batch);
                std::vector<nn::LayerCache> caches;
                caches.reserve(plan.layers.size());
                const Tensor out =
                    run_forward(plan, model.params, model.states, input, nn::Mode::Train, dropout_rng, &caches);
                const nn::LossResult loss = nn::composite_loss(out, make_target(batch));
                if (!std::isfinite(loss.loss.total)) {
                    throw TrainingDivergedError("training loss became non-finite at epoch " + std::to_string(epoch),
                                                epoch);
                }
                loss_sum += loss.loss.total * static_cast<double>(batch.size());

                grads.clear();
                std::vector<std::vector<Tensor>> layer_grads(plan.layers.size());
                Tensor upstream = loss.grad;
                for (std::size_t i = plan.layers.size(); i-- > 0;) {
                    nn::BackwardResult br = nn::layer_backward(plan.layers[i], model.params[i], caches[i], upstream);
                    upstream = std::move(br.input_grad);
                    layer_grads[i] = std::move(br.param_grads);
                }
                for (auto& lg : layer_grads) {
                    for (auto& g : lg) grads.push_back(std::move(g));
                }
                nn::adam_step(flat, grads, adam, settings.learning_rate, settings.weight_decay, names);
            }
        } catch (const NonFiniteError& e) {
            throw TrainingDivergedError(std::string("training diverged at epoch ") + std::to_string(epoch) + ": " +
                                            e.what(),
                                        epoch);
        }
        const double epoch_loss = loss_sum / static_cast<double>(instances.size());
        if (!std::isfinite(epoch_loss)) {
            throw TrainingDivergedError("training loss became non-finite at epoch " + std::to_string(epoch), epoch);
        }
        model.loss_history.push_back(epoch_loss);
    }
    return model;
}

std::vector<TrendPrediction> predict(const TrainedModel& model, std::span<const TrendInstance> instances) {
    std::vector<TrendPrediction> out;
    out.reserve(instances.size());
    if (instances.empty()) return out;
    std::vector<nn::LstmState> states = model.states;
    const std::size_t rows = states.empty() ? model.settings.batch_size : states.front().h.dim(0);
    Rng unused(0);
    for (std::size_t start = 0; start < instances.size(); start += rows) {
        const auto batch = instances.subspan(start, std::min(rows, instances.size() - start));
        const Tensor y =
            run_forward(model.plan, model.params, states, make_input(model.plan, batch), nn::Mode::Eval, unused, nullptr);
        for (std::size_t b = 0; b < batch.size(); ++b) out.push_back({y[2 * b], y[2 * b + 1]});
    }
    return out;
}

std::vector<Tensor> model_tensors(const TrainedModel& model) {
    std::vector<Tensor> out;
    for (const auto& layer : model.params) out.insert(out.end(), layer.begin(), layer.end());
    for (const auto& s : model.states) {
        out.push_back(s.h);
        out.push_back(s.c);
    }
    return out;
}

TrainedModel restore_model(const ModelPlan& plan, const TrainSettings& settings, std::vector<Tensor> tensors) {
    TrainedModel model;
    model.plan = plan;
    model.settings = settings;
    std::size_t next = 0;
    auto take = [&](const std::vector<std::size_t>& shape) {
        if (next >= tensors.size()) throw ShapeError("model blob has too few tensors for the plan");
        if (tensors[next].shape() != shape) {
            throw ShapeError("model blob tensor " + std::to_string(next) + " has shape " +
                             tensors[next].shape_string() + ", plan expects " + nn::shape_string(shape));
        }
        return std::move(tensors[next++]);
    };
    model.params.resize(plan.layers.size());
    for (std::size_t i = 0; i < plan.layers.size(); ++i) {
        for (const auto& shape : nn::param_shapes(plan.layers[i])) model.params[i].push_back(take(shape));
    }
    for (const auto& l : plan.layers) {
        if (const auto* s = std::get_if<nn::LstmSpec>(&l.kind)) {
            if (next >= tensors.size()) throw ShapeError("model blob is missing LSTM state");
            const std::vector<std::size_t> shape{tensors[next].dim(0), s->cells};
            Tensor h = take(shape);
            Tensor c = take(shape);
            model.states.push_back({std::move(h), std::move(c)});
        }
    }
    if (next != tensors.size()) throw ShapeError("model blob has " + std::to_string(tensors.size() - next) + " extra tensors");
    return model;
}

void write_tensor_blob(const std::filesystem::path& path, std::span<const Tensor> tensors) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write model blob '" + path.string() + "'");
    put_u64(out, tensors.size());
    for (const auto& t : tensors) {
        put_u64(out, t.rank());
        for (auto d : t.shape()) put_u64(out, d);
    }
    for (const auto& t : tensors) {
        for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    if (!out) throw IoError("failed writing model blob '" + path.string() + "'");
}

std::vector<Tensor> read_tensor_blob(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model blob '" + path.string() + "'");
    const std::uint64_t count = get_u64(in);
    if (count > (1u << 20)) throw ParseError("model blob claims " + std::to_string(count) + " tensors");
    std::vector<std::vector<std::size_t>> shapes(count);
    for (auto& shape : shapes) {
        const std::uint64_t rank = get_u64(in);
        if (rank > 8) throw ParseError("model blob tensor rank " + std::to_string(rank) + " is implausible");
        for (std::uint64_t r = 0; r < rank; ++r) shape.push_back(get_u64(in));
    }
    std::vector<Tensor> out;
    for (auto& shape : shapes) {
        Tensor t(shape);
        for (double& v : t.data()) v = std::bit_cast<double>(get_u64(in));
        out.push_back(std::move(t));
    }
    return out;
}

nlohmann::json to_json(const ModelPlan& plan) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : plan.layers) layers.push_back(l.name());
    return {{"algorithm", to_string(plan.algorithm)}, {"window_size", plan.window_size}, {"layers", layers}};
}

nlohmann::json to_json(const TrainSettings& s) {
    return {{"epochs", s.epochs},   {"batch_size", s.batch_size},     {"learning_rate", s.learning_rate},
            {"dropout", s.dropout_rate}, {"weight_decay", s.weight_decay}, {"seed", s.seed}};
}

TrainSettings train_settings_from_json(const nlohmann::json& j) {
    TrainSettings s;
    s.epochs = j.at("epochs").get<std::size_t>();
    s.batch_size = j.at("batch_size").get<std::size_t>();
    s.learning_rate = j.at("learning_rate").get<double>();
    s.dropout_rate = j.at("dropout").get<double>();
    s.weight_decay = j.at("weight_decay").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

} // namespace trendsearch
