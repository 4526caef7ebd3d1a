#pragma once

#include "trendsearch/configspace.hpp"
#include "trendsearch/nn.hpp"
#include "trendsearch/trend.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace trendsearch {

enum class AlgorithmKind { MLP, LSTM, CNN };

std::string to_string(AlgorithmKind a);
/// Accepts "MLP"/"LSTM"/"CNN" in any letter case.
AlgorithmKind parse_algorithm(const std::string& s);

struct ModelPlan {
    AlgorithmKind algorithm{AlgorithmKind::MLP};
    std::size_t window_size{0};
    /// Ends with a dense head producing (slope_deg, duration).
    std::vector<nn::LayerSpec> layers;

    bool operator==(const ModelPlan&) const = default;
};

struct TrainSettings {
    std::size_t epochs{1};
    std::size_t batch_size{32};
    double learning_rate{1e-3};
    double dropout_rate{0.0};
    double weight_decay{0.0};
    std::uint64_t seed{0};
};

/// Reads batch size, learning rate, dropout and weight decay from `config`.
TrainSettings settings_from_config(const Configuration& config, std::size_t epochs, std::uint64_t seed);

/// MLP: N x (dense, relu[, dropout after odd non-final blocks]) -> dense(2)
/// LSTM: N x (lstm, relu, dropout) -> dense(2), only the last LSTM emits a single step
/// CNN: N x (conv1d, relu, pool, dropout) -> flatten -> dense(2)
/// Throws InfeasibleConfigError when convolution and pooling would shrink the
/// window below one step.
ModelPlan build_model(const Configuration& config, std::size_t window_size);

struct TrendPrediction {
    double slope_deg{0.0};
    double duration{0.0};
};

/// Parameters are immutable after training. For LSTM plans `states` holds the
/// recurrent state (batch_size rows) left by the last training batch; it seeds
/// prediction so eval-mode output is a pure function of the model and inputs.
struct TrainedModel {
    ModelPlan plan;
    TrainSettings settings;
    std::vector<std::vector<nn::Tensor>> params;  // per layer
    std::vector<nn::LstmState> states;            // per LSTM layer, in stack order
    std::vector<double> loss_history;             // one entry per epoch
};

/// He-initialised mini-batch Adam over chronologically ordered batches. LSTM
/// state carries across batches and epochs, detached between batches.
/// Throws TrainingDivergedError carrying the 1-based epoch on non-finite loss.
TrainedModel train(const ModelPlan& plan, std::span<const TrendInstance> instances, const TrainSettings& settings);

/// Eval mode (dropout off); durations are not rounded.
std::vector<TrendPrediction> predict(const TrainedModel& model, std::span<const TrendInstance> instances);

/// Every parameter tensor followed by every LSTM state tensor (h then c).
std::vector<nn::Tensor> model_tensors(const TrainedModel& model);
TrainedModel restore_model(const ModelPlan& plan, const TrainSettings& settings, std::vector<nn::Tensor> tensors);

/// Blob layout, all little-endian: u64 tensor count; per tensor u64 rank and
/// rank x u64 dims; then every tensor's data as f64 in the same order.
void write_tensor_blob(const std::filesystem::path& path, std::span<const nn::Tensor> tensors);
std::vector<nn::Tensor> read_tensor_blob(const std::filesystem::path& path);

nlohmann::json to_json(const ModelPlan& plan);
nlohmann::json to_json(const TrainSettings& settings);
TrainSettings train_settings_from_json(const nlohmann::json& j);

} // namespace trendsearch
