#pragma once

#include "trendsearch/random.hpp"
#include "trendsearch/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace trendsearch::nn {

// Layer vocabulary. Batched shapes:
//   dense    (B, in)        -> (B, out)
//   conv1d   (B, L, C)      -> (B, L - K + 1, F)   valid, stride 1
//   pool     (B, L, C)      -> (B, L / S, C)       non-overlapping, tail dropped
//   lstm     (B, T, in)     -> (B, T, H) or (B, H) for the last step only
//   flatten  (B, ...)       -> (B, prod(...))
//   relu, dropout: any shape

struct DenseSpec {
    std::size_t in{1};
    std::size_t out{1};
};
struct ReluSpec {};
struct DropoutSpec {
    double rate{0.0};
};
struct Conv1dSpec {
    std::size_t in_channels{1};
    std::size_t filters{1};
    std::size_t kernel_size{1};
};
enum class PoolType { Max, Avg };
struct PoolSpec {
    PoolType type{PoolType::Max};
    std::size_t size{2};
};
struct LstmSpec {
    std::size_t in_features{1};
    std::size_t cells{1};
    bool return_sequences{false};
};
struct FlattenSpec {};

struct LayerSpec {
    std::variant<DenseSpec, ReluSpec, DropoutSpec, Conv1dSpec, PoolSpec, LstmSpec, FlattenSpec> kind;

    std::string name() const;
};

bool operator==(const LayerSpec& a, const LayerSpec& b);

/// Throws DomainError when a size is zero or a dropout rate is outside [0, 1).
void validate(const LayerSpec& spec);

/// Parameter tensor shapes in a fixed order (dense/conv: W, b; lstm: Wx, Wh, b).
std::vector<std::vector<std::size_t>> param_shapes(const LayerSpec& spec);

/// Fan-in used for He initialisation of parameter tensor `index`; 0 for biases.
std::size_t param_fan_in(const LayerSpec& spec, std::size_t index);

enum class Mode { Train, Eval };

/// Recurrent state carried between calls: (B, H) each.
struct LstmState {
    Tensor h;
    Tensor c;
};

struct LayerCache {
    Tensor input;
    Tensor mask;                       // dropout
    std::vector<std::size_t> argmax;   // max pool
    std::vector<double> gates;         // lstm: (T, B, 4H) post-activation
    std::vector<double> cells;         // lstm: (T, B, H)
    std::vector<double> hidden;        // lstm: (T, B, H)
    Tensor h0;
    Tensor c0;
};

struct ForwardResult {
    Tensor output;
    LayerCache cache;
    std::optional<LstmState> final_state;  // lstm only
};

struct BackwardResult {
    Tensor input_grad;
    std::vector<Tensor> param_grads;
};

/// `rng` is only consumed by dropout in training mode. `initial` seeds an LSTM
/// layer's recurrent state (zeros when absent); gradients do not flow into it.
ForwardResult layer_forward(const LayerSpec& spec, std::span<const Tensor> params, const Tensor& input, Mode mode,
                            Rng& rng, const LstmState* initial = nullptr);

BackwardResult layer_backward(const LayerSpec& spec, std::span<const Tensor> params, const LayerCache& cache,
                              const Tensor& upstream);

/// i.i.d. Normal(0, sqrt(2 / fan_in)).
Tensor he_init(const std::vector<std::size_t>& shape, std::size_t fan_in, Rng& rng);
Tensor he_init(const std::vector<std::size_t>& shape, std::size_t fan_in, std::uint64_t seed);

struct CompositeLoss {
    double slope_mse{0.0};
    double duration_mse{0.0};
    double total{0.0};
};

struct LossResult {
    CompositeLoss loss;
    Tensor grad;  // d total / d pred, shape (B, 2)
};

/// Equal-weight mean of slope and duration MSE; column 0 is slope, column 1 duration.
LossResult composite_loss(const Tensor& pred, const Tensor& target);

struct AdamState {
    double beta1{0.9};
    double beta2{0.999};
    double epsilon{1e-8};
    std::uint64_t step{0};
    std::vector<Tensor> m;
    std::vector<Tensor> v;

    static AdamState for_params(std::span<Tensor* const> params);
};

/// Bias-corrected Adam with coupled L2 (g += weight_decay * theta). `names`
/// (optional, parallel to params) labels tensors in error messages.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               double learning_rate, double weight_decay, std::span<const std::string> names = {});

} // namespace trendsearch::nn
