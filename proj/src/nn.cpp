#include "trendsearch/nn.hpp"

#include "trendsearch/error.hpp"

#include <Eigen/Core>

#include <cmath>
#include <random>

namespace trendsearch::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using ConstStridedMat = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using StridedMat = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstMapRow = Eigen::Map<const Eigen::RowVectorXd>;
using MapRow = Eigen::Map<Eigen::RowVectorXd>;

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

[[noreturn]] void shape_mismatch(const LayerSpec& spec, const std::string& expected, const Tensor& got) {
    throw ShapeError("layer " + spec.name() + ": expected input " + expected + ", got " + got.shape_string());
}

void require_params(const LayerSpec& spec, std::span<const Tensor> params) {
    const auto shapes = param_shapes(spec);
    if (params.size() != shapes.size()) {
        throw ShapeError("layer " + spec.name() + ": expected " + std::to_string(shapes.size()) +
                         " parameter tensors, got " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (params[i].shape() != shapes[i]) {
            throw ShapeError("layer " + spec.name() + ": parameter " + std::to_string(i) + " has shape " +
                             params[i].shape_string() + ", expected " + shape_string(shapes[i]));
        }
    }
}

void require_finite(const LayerSpec& spec, const Tensor& t, const char* what) {
    if (!t.all_finite()) {
        throw NonFiniteError("layer " + spec.name() + ": non-finite value in " + what);
    }
}

// ---- forward kernels -------------------------------------------------------

Tensor dense_forward(const DenseSpec& d, const LayerSpec& spec, std::span<const Tensor> p, const Tensor& x) {
    if (x.rank() != 2 || x.dim(1) != d.in) shape_mismatch(spec, "(B, " + std::to_string(d.in) + ")", x);
    const std::size_t batch = x.dim(0);
    Tensor y({batch, d.out});
    MapMat Y(y.ptr(), batch, d.out);
    Y.noalias() = ConstMapMat(x.ptr(), batch, d.in) * ConstMapMat(p[0].ptr(), d.out, d.in).transpose();
    Y.rowwise() += ConstMapRow(p[1].ptr(), d.out);
    return y;
}

Tensor conv_forward(const Conv1dSpec& c, const LayerSpec& spec, std::span<const Tensor> p, const Tensor& x) {
    if (x.rank() != 3 || x.dim(2) != c.in_channels || x.dim(1) < c.kernel_size) {
        shape_mismatch(spec, "(B, L >= " + std::to_string(c.kernel_size) + ", " + std::to_string(c.in_channels) + ")",
                       x);
    }
    const std::size_t batch = x.dim(0);
    const std::size_t len = x.dim(1);
    const std::size_t out_len = len - c.kernel_size + 1;
    const std::size_t patch = c.kernel_size * c.in_channels;
    Tensor y({batch, out_len, c.filters});
    ConstMapMat W(p[0].ptr(), c.filters, patch);
    ConstMapRow bias(p[1].ptr(), c.filters);
    for (std::size_t b = 0; b < batch; ++b) {
        // Row t of the patch matrix is the contiguous slice x[b, t:t+K, :].
        ConstStridedMat P(x.ptr() + b * len * c.in_channels, out_len, patch, Eigen::OuterStride<>(c.in_channels));
        MapMat Y(y.ptr() + b * out_len * c.filters, out_len, c.filters);
        Y.noalias() = P * W.transpose();
        Y.rowwise() += bias;
    }
    return y;
}

Tensor pool_forward(const PoolSpec& ps, const LayerSpec& spec, const Tensor& x, std::vector<std::size_t>& argmax) {
    if (x.rank() != 3 || x.dim(1) < ps.size) {
        shape_mismatch(spec, "(B, L >= " + std::to_string(ps.size) + ", C)", x);
    }
    const std::size_t batch = x.dim(0);
    const std::size_t len = x.dim(1);
    const std::size_t ch = x.dim(2);
    const std::size_t out_len = len / ps.size;
    Tensor y({batch, out_len, ch});
    if (ps.type == PoolType::Max) argmax.assign(y.size(), 0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < out_len; ++t) {
            for (std::size_t k = 0; k < ch; ++k) {
                const std::size_t out_idx = (b * out_len + t) * ch + k;
                if (ps.type == PoolType::Max) {
                    std::size_t best = (b * len + t * ps.size) * ch + k;
                    for (std::size_t s = 1; s < ps.size; ++s) {
                        const std::size_t idx = (b * len + t * ps.size + s) * ch + k;
                        if (x[idx] > x[best]) best = idx;
                    }
                    y[out_idx] = x[best];
                    argmax[out_idx] = best;
                } else {
                    double sum = 0.0;
                    for (std::size_t s = 0; s < ps.size; ++s) sum += x[(b * len + t * ps.size + s) * ch + k];
                    y[out_idx] = sum / static_cast<double>(ps.size);
                }
            }
        }
    }
    return y;
}

ForwardResult lstm_forward(const LstmSpec& l, const LayerSpec& spec, std::span<const Tensor> p, const Tensor& x,
                           const LstmState* initial) {
    if (x.rank() != 3 || x.dim(2) != l.in_features) {
        shape_mismatch(spec, "(B, T, " + std::to_string(l.in_features) + ")", x);
    }
    const std::size_t batch = x.dim(0);
    const std::size_t steps = x.dim(1);
    const std::size_t in = l.in_features;
    const std::size_t H = l.cells;

    ForwardResult r;
    LayerCache& cache = r.cache;
    cache.h0 = Tensor({batch, H});
    cache.c0 = Tensor({batch, H});
    if (initial != nullptr) {
        const std::vector<std::size_t> want{batch, H};
        if (initial->h.shape() != want || initial->c.shape() != want) {
            throw ShapeError("layer " + spec.name() + ": initial state has shape " + initial->h.shape_string() +
                             ", expected " + shape_string(want));
        }
        cache.h0 = initial->h;
        cache.c0 = initial->c;
    }
    cache.gates.assign(steps * batch * 4 * H, 0.0);
    cache.cells.assign(steps * batch * H, 0.0);
    cache.hidden.assign(steps * batch * H, 0.0);

    ConstMapMat Wx(p[0].ptr(), 4 * H, in);
    ConstMapMat Wh(p[1].ptr(), 4 * H, H);
    ConstMapRow bias(p[2].ptr(), 4 * H);

    for (std::size_t t = 0; t < steps; ++t) {
        ConstStridedMat Xt(x.ptr() + t * in, batch, in, Eigen::OuterStride<>(steps * in));
        const double* h_prev = t == 0 ? cache.h0.ptr() : cache.hidden.data() + (t - 1) * batch * H;
        const double* c_prev = t == 0 ? cache.c0.ptr() : cache.cells.data() + (t - 1) * batch * H;
        MapMat Z(cache.gates.data() + t * batch * 4 * H, batch, 4 * H);
        Z.noalias() = Xt * Wx.transpose();
        Z.noalias() += ConstMapMat(h_prev, batch, H) * Wh.transpose();
        Z.rowwise() += bias;
        double* c_t = cache.cells.data() + t * batch * H;
        double* h_t = cache.hidden.data() + t * batch * H;
        for (std::size_t b = 0; b < batch; ++b) {
            double* z = Z.data() + b * 4 * H;
            for (std::size_t j = 0; j < H; ++j) {
                const double ig = sigmoid(z[j]);
                const double fg = sigmoid(z[H + j]);
                const double gg = std::tanh(z[2 * H + j]);
                const double og = sigmoid(z[3 * H + j]);
                z[j] = ig;
                z[H + j] = fg;
                z[2 * H + j] = gg;
                z[3 * H + j] = og;
                const double c = fg * c_prev[b * H + j] + ig * gg;
                c_t[b * H + j] = c;
                h_t[b * H + j] = og * std::tanh(c);
            }
        }
    }

    const double* h_last = cache.hidden.data() + (steps - 1) * batch * H;
    const double* c_last = cache.cells.data() + (steps - 1) * batch * H;
    if (l.return_sequences) {
        r.output = Tensor({batch, steps, H});
        for (std::size_t t = 0; t < steps; ++t) {
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t j = 0; j < H; ++j) {
                    r.output[(b * steps + t) * H + j] = cache.hidden[(t * batch + b) * H + j];
                }
            }
        }
    } else {
        r.output = Tensor({batch, H}, std::vector<double>(h_last, h_last + batch * H));
    }
    r.final_state = LstmState{Tensor({batch, H}, std::vector<double>(h_last, h_last + batch * H)),
                              Tensor({batch, H}, std::vector<double>(c_last, c_last + batch * H))};
    return r;
}

// ---- backward kernels ------------------------------------------------------

BackwardResult dense_backward(const DenseSpec& d, std::span<const Tensor> p, const LayerCache& cache,
                              const Tensor& g) {
    const std::size_t batch = cache.input.dim(0);
    BackwardResult r;
    r.input_grad = Tensor({batch, d.in});
    r.param_grads = {Tensor({d.out, d.in}), Tensor({d.out})};
    ConstMapMat G(g.ptr(), batch, d.out);
    ConstMapMat X(cache.input.ptr(), batch, d.in);
    MapMat(r.param_grads[0].ptr(), d.out, d.in).noalias() = G.transpose() * X;
    MapRow(r.param_grads[1].ptr(), d.out) = G.colwise().sum();
    MapMat(r.input_grad.ptr(), batch, d.in).noalias() = G * ConstMapMat(p[0].ptr(), d.out, d.in);
    return r;
}

BackwardResult conv_backward(const Conv1dSpec& c, std::span<const Tensor> p, const LayerCache& cache,
                             const Tensor& g) {
    const Tensor& x = cache.input;
    const std::size_t batch = x.dim(0);
    const std::size_t len = x.dim(1);
    const std::size_t out_len = len - c.kernel_size + 1;
    const std::size_t patch = c.kernel_size * c.in_channels;
    BackwardResult r;
    r.input_grad = Tensor(x.shape());
    r.param_grads = {Tensor({c.filters, c.kernel_size, c.in_channels}), Tensor({c.filters})};
    MapMat dW(r.param_grads[0].ptr(), c.filters, patch);
    MapRow db(r.param_grads[1].ptr(), c.filters);
    ConstMapMat W(p[0].ptr(), c.filters, patch);
    RowMat dP(out_len, patch);
    for (std::size_t b = 0; b < batch; ++b) {
        ConstStridedMat P(x.ptr() + b * len * c.in_channels, out_len, patch, Eigen::OuterStride<>(c.in_channels));
        ConstMapMat G(g.ptr() + b * out_len * c.filters, out_len, c.filters);
        dW.noalias() += G.transpose() * P;
        db += G.colwise().sum();
        dP.noalias() = G * W;
        double* dx = r.input_grad.ptr() + b * len * c.in_channels;
        for (std::size_t t = 0; t < out_len; ++t) {
            for (std::size_t j = 0; j < patch; ++j) dx[t * c.in_channels + j] += dP(t, j);
        }
    }
    return r;
}

BackwardResult pool_backward(const PoolSpec& ps, const LayerCache& cache, const Tensor& g) {
    const Tensor& x = cache.input;
    BackwardResult r;
    r.input_grad = Tensor(x.shape());
    if (ps.type == PoolType::Max) {
        for (std::size_t i = 0; i < g.size(); ++i) r.input_grad[cache.argmax[i]] += g[i];
        return r;
    }
    const std::size_t batch = x.dim(0);
    const std::size_t len = x.dim(1);
    const std::size_t ch = x.dim(2);
    const std::size_t out_len = len / ps.size;
    const double scale = 1.0 / static_cast<double>(ps.size);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < out_len; ++t) {
            for (std::size_t k = 0; k < ch; ++k) {
                const double gv = g[(b * out_len + t) * ch + k] * scale;
                for (std::size_t s = 0; s < ps.size; ++s) r.input_grad[(b * len + t * ps.size + s) * ch + k] += gv;
            }
        }
    }
    return r;
}

BackwardResult lstm_backward(const LstmSpec& l, std::span<const Tensor> p, const LayerCache& cache,
                             const Tensor& g) {
    const Tensor& x = cache.input;
    const std::size_t batch = x.dim(0);
    const std::size_t steps = x.dim(1);
    const std::size_t in = l.in_features;
    const std::size_t H = l.cells;

    BackwardResult r;
    r.input_grad = Tensor(x.shape());
    r.param_grads = {Tensor({4 * H, in}), Tensor({4 * H, H}), Tensor({4 * H})};
    MapMat dWx(r.param_grads[0].ptr(), 4 * H, in);
    MapMat dWh(r.param_grads[1].ptr(), 4 * H, H);
    MapRow db(r.param_grads[2].ptr(), 4 * H);
    ConstMapMat Wx(p[0].ptr(), 4 * H, in);
    ConstMapMat Wh(p[1].ptr(), 4 * H, H);

    RowMat dh_next = RowMat::Zero(batch, H);
    RowMat dc_next = RowMat::Zero(batch, H);
    RowMat dZ(batch, 4 * H);
    for (std::size_t step = steps; step-- > 0;) {
        const double* gates = cache.gates.data() + step * batch * 4 * H;
        const double* c_t = cache.cells.data() + step * batch * H;
        const double* c_prev = step == 0 ? cache.c0.ptr() : cache.cells.data() + (step - 1) * batch * H;
        const double* h_prev = step == 0 ? cache.h0.ptr() : cache.hidden.data() + (step - 1) * batch * H;
        for (std::size_t b = 0; b < batch; ++b) {
            const double* z = gates + b * 4 * H;
            for (std::size_t j = 0; j < H; ++j) {
                double dh = dh_next(b, j);
                if (l.return_sequences) {
                    dh += g[(b * steps + step) * H + j];
                } else if (step + 1 == steps) {
                    dh += g[b * H + j];
                }
                const double ig = z[j];
                const double fg = z[H + j];
                const double gg = z[2 * H + j];
                const double og = z[3 * H + j];
                const double tc = std::tanh(c_t[b * H + j]);
                const double dc = dh * og * (1.0 - tc * tc) + dc_next(b, j);
                dZ(b, j) = dc * gg * ig * (1.0 - ig);
                dZ(b, H + j) = dc * c_prev[b * H + j] * fg * (1.0 - fg);
                dZ(b, 2 * H + j) = dc * ig * (1.0 - gg * gg);
                dZ(b, 3 * H + j) = dh * tc * og * (1.0 - og);
                dc_next(b, j) = dc * fg;
            }
        }
        ConstStridedMat Xt(x.ptr() + step * in, batch, in, Eigen::OuterStride<>(steps * in));
        dWx.noalias() += dZ.transpose() * Xt;
        dWh.noalias() += dZ.transpose() * ConstMapMat(h_prev, batch, H);
        db += dZ.colwise().sum();
        StridedMat(r.input_grad.ptr() + step * in, batch, in, Eigen::OuterStride<>(steps * in)).noalias() = dZ * Wx;
        dh_next.noalias() = dZ * Wh;
    }
    return r;
}

} // namespace

std::string LayerSpec::name() const {
    return std::visit(Overloaded{
                          [](const DenseSpec& d) { return "dense(" + std::to_string(d.in) + "->" + std::to_string(d.out) + ")"; },
                          [](const ReluSpec&) { return std::string("relu"); },
                          [](const DropoutSpec& d) { return "dropout(" + std::to_string(d.rate) + ")"; },
                          [](const Conv1dSpec& c) {
                              return "conv1d(" + std::to_string(c.in_channels) + "->" + std::to_string(c.filters) +
                                     ", k=" + std::to_string(c.kernel_size) + ")";
                          },
                          [](const PoolSpec& p) {
                              return std::string(p.type == PoolType::Max ? "maxpool(" : "avgpool(") +
                                     std::to_string(p.size) + ")";
                          },
                          [](const LstmSpec& l) {
                              return "lstm(" + std::to_string(l.in_features) + "->" + std::to_string(l.cells) +
                                     (l.return_sequences ? ", seq)" : ")");
                          },
                          [](const FlattenSpec&) { return std::string("flatten"); },
                      },
                      kind);
}

bool operator==(const LayerSpec& a, const LayerSpec& b) {
    if (a.kind.index() != b.kind.index()) return false;
    return std::visit(Overloaded{
                          [&](const DenseSpec& x) {
                              const auto& y = std::get<DenseSpec>(b.kind);
                              return x.in == y.in && x.out == y.out;
                          },
                          [](const ReluSpec&) { return true; },
                          [&](const DropoutSpec& x) { return x.rate == std::get<DropoutSpec>(b.kind).rate; },
                          [&](const Conv1dSpec& x) {
                              const auto& y = std::get<Conv1dSpec>(b.kind);
                              return x.in_channels == y.in_channels && x.filters == y.filters &&
                                     x.kernel_size == y.kernel_size;
                          },
                          [&](const PoolSpec& x) {
                              const auto& y = std::get<PoolSpec>(b.kind);
                              return x.type == y.type && x.size == y.size;
                          },
                          [&](const LstmSpec& x) {
                              const auto& y = std::get<LstmSpec>(b.kind);
                              return x.in_features == y.in_features && x.cells == y.cells &&
                                     x.return_sequences == y.return_sequences;
                          },
                          [](const FlattenSpec&) { return true; },
                      },
                      a.kind);
}

void validate(const LayerSpec& spec) {
    auto positive = [&](std::size_t v, const char* field) {
        if (v < 1) throw DomainError("layer " + spec.name() + ": " + field + " must be >= 1");
    };
    std::visit(Overloaded{
                   [&](const DenseSpec& d) {
                       positive(d.in, "in");
                       positive(d.out, "out");
                   },
                   [](const ReluSpec&) {},
                   [&](const DropoutSpec& d) {
                       if (!(d.rate >= 0.0 && d.rate < 1.0)) {
                           throw DomainError("layer " + spec.name() + ": dropout rate must lie in [0, 1)");
                       }
                   },
                   [&](const Conv1dSpec& c) {
                       positive(c.in_channels, "in_channels");
                       positive(c.filters, "filters");
                       positive(c.kernel_size, "kernel_size");
                   },
                   [&](const PoolSpec& p) { positive(p.size, "size"); },
                   [&](const LstmSpec& l) {
                       positive(l.in_features, "in_features");
                       positive(l.cells, "cells");
                   },
                   [](const FlattenSpec&) {},
               },
               spec.kind);
}

std::vector<std::vector<std::size_t>> param_shapes(const LayerSpec& spec) {
    using Shapes = std::vector<std::vector<std::size_t>>;
    return std::visit(Overloaded{
                          [](const DenseSpec& d) { return Shapes{{d.out, d.in}, {d.out}}; },
                          [](const Conv1dSpec& c) {
                              return Shapes{{c.filters, c.kernel_size, c.in_channels}, {c.filters}};
                          },
                          [](const LstmSpec& l) {
                              return Shapes{{4 * l.cells, l.in_features}, {4 * l.cells, l.cells}, {4 * l.cells}};
                          },
                          [](const auto&) { return Shapes{}; },
                      },
                      spec.kind);
}

std::size_t param_fan_in(const LayerSpec& spec, std::size_t index) {
    return std::visit(Overloaded{
                          [&](const DenseSpec& d) -> std::size_t { return index == 0 ? d.in : 0; },
                          [&](const Conv1dSpec& c) -> std::size_t {
                              return index == 0 ? c.kernel_size * c.in_channels : 0;
                          },
                          [&](const LstmSpec& l) -> std::size_t {
                              return index == 0 ? l.in_features : index == 1 ? l.cells : 0;
                          },
                          [](const auto&) -> std::size_t { return 0; },
                      },
                      spec.kind);
}

ForwardResult layer_forward(const LayerSpec& spec, std::span<const Tensor> params, const Tensor& input, Mode mode,
                            Rng& rng, const LstmState* initial) {
    require_params(spec, params);
    require_finite(spec, input, "input");
    ForwardResult r;
    std::visit(Overloaded{
                   [&](const DenseSpec& d) { r.output = dense_forward(d, spec, params, input); },
                   [&](const ReluSpec&) {
                       r.output = input;
                       for (double& v : r.output.data()) v = v > 0.0 ? v : 0.0;
                   },
                   [&](const DropoutSpec& d) {
                       r.output = input;
                       if (mode == Mode::Train && d.rate > 0.0) {
                           r.cache.mask = Tensor(input.shape());
                           std::uniform_real_distribution<double> u(0.0, 1.0);
                           const double keep_scale = 1.0 / (1.0 - d.rate);
                           for (std::size_t i = 0; i < input.size(); ++i) {
                               r.cache.mask[i] = u(rng) < d.rate ? 0.0 : keep_scale;
                               r.output[i] *= r.cache.mask[i];
                           }
                       }
                   },
                   [&](const Conv1dSpec& c) { r.output = conv_forward(c, spec, params, input); },
                   [&](const PoolSpec& p) { r.output = pool_forward(p, spec, input, r.cache.argmax); },
                   [&](const LstmSpec& l) {
                       auto lr = lstm_forward(l, spec, params, input, initial);
                       r.output = std::move(lr.output);
                       r.final_state = std::move(lr.final_state);
                       r.cache = std::move(lr.cache);
                   },
                   [&](const FlattenSpec&) {
                       if (input.rank() < 2) shape_mismatch(spec, "(B, ...)", input);
                       r.output = input.reshaped({input.dim(0), input.size() / input.dim(0)});
                   },
               },
               spec.kind);
    r.cache.input = input;
    require_finite(spec, r.output, "output");
    return r;
}

BackwardResult layer_backward(const LayerSpec& spec, std::span<const Tensor> params, const LayerCache& cache,
                              const Tensor& upstream) {
    require_params(spec, params);
    require_finite(spec, upstream, "upstream gradient");
    BackwardResult r;
    std::visit(Overloaded{
                   [&](const DenseSpec& d) {
                       if (upstream.shape() != std::vector<std::size_t>{cache.input.dim(0), d.out}) {
                           throw ShapeError("layer " + spec.name() + ": upstream gradient " + upstream.shape_string() +
                                            " does not match output");
                       }
                       r = dense_backward(d, params, cache, upstream);
                   },
                   [&](const ReluSpec&) {
                       if (upstream.size() != cache.input.size()) {
                           throw ShapeError("layer relu: upstream gradient " + upstream.shape_string() +
                                            " does not match input " + cache.input.shape_string());
                       }
                       r.input_grad = Tensor(cache.input.shape());
                       for (std::size_t i = 0; i < upstream.size(); ++i) {
                           r.input_grad[i] = cache.input[i] > 0.0 ? upstream[i] : 0.0;
                       }
                   },
                   [&](const DropoutSpec&) {
                       if (upstream.size() != cache.input.size()) {
                           throw ShapeError("layer dropout: upstream gradient " + upstream.shape_string() +
                                            " does not match input " + cache.input.shape_string());
                       }
                       r.input_grad = upstream.reshaped(cache.input.shape());
                       if (cache.mask.size() == upstream.size()) {
                           for (std::size_t i = 0; i < upstream.size(); ++i) r.input_grad[i] *= cache.mask[i];
                       }
                   },
                   [&](const Conv1dSpec& c) {
                       const std::vector<std::size_t> want{cache.input.dim(0), cache.input.dim(1) - c.kernel_size + 1,
                                                           c.filters};
                       if (upstream.shape() != want) {
                           throw ShapeError("layer " + spec.name() + ": upstream gradient " + upstream.shape_string() +
                                            ", expected " + shape_string(want));
                       }
                       r = conv_backward(c, params, cache, upstream);
                   },
                   [&](const PoolSpec& p) {
                       const std::vector<std::size_t> want{cache.input.dim(0), cache.input.dim(1) / p.size,
                                                           cache.input.dim(2)};
                       if (upstream.shape() != want) {
                           throw ShapeError("layer " + spec.name() + ": upstream gradient " + upstream.shape_string() +
                                            ", expected " + shape_string(want));
                       }
                       r = pool_backward(p, cache, upstream);
                   },
                   [&](const LstmSpec& l) {
                       const std::size_t batch = cache.input.dim(0);
                       const std::vector<std::size_t> want =
                           l.return_sequences ? std::vector<std::size_t>{batch, cache.input.dim(1), l.cells}
                                              : std::vector<std::size_t>{batch, l.cells};
                       if (upstream.shape() != want) {
                           throw ShapeError("layer " + spec.name() + ": upstream gradient " + upstream.shape_string() +
                                            ", expected " + shape_string(want));
                       }
                       r = lstm_backward(l, params, cache, upstream);
                   },
                   [&](const FlattenSpec&) {
                       if (upstream.size() != cache.input.size()) {
                           throw ShapeError("layer flatten: upstream gradient " + upstream.shape_string() +
                                            " does not match input " + cache.input.shape_string());
                       }
                       r.input_grad = upstream.reshaped(cache.input.shape());
                   },
               },
               spec.kind);
    require_finite(spec, r.input_grad, "input gradient");
    return r;
}

Tensor he_init(const std::vector<std::size_t>& shape, std::size_t fan_in, Rng& rng) {
    if (fan_in < 1) {
        throw DomainError("he_init: fan_in must be >= 1");
    }
    Tensor t(shape);
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (double& v : t.data()) v = normal(rng);
    return t;
}

Tensor he_init(const std::vector<std::size_t>& shape, std::size_t fan_in, std::uint64_t seed) {
    Rng rng(seed);
    return he_init(shape, fan_in, rng);
}

LossResult composite_loss(const Tensor& pred, const Tensor& target) {
    if (pred.rank() != 2 || pred.dim(1) != 2) {
        throw ShapeError("composite_loss: predictions must have shape (B, 2), got " + pred.shape_string());
    }
    if (pred.shape() != target.shape()) {
        throw ShapeError("composite_loss: prediction shape " + pred.shape_string() + " != target shape " +
                         target.shape_string());
    }
    const std::size_t batch = pred.dim(0);
    LossResult r;
    r.grad = Tensor(pred.shape());
    const double inv = 1.0 / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        const double es = pred[2 * b] - target[2 * b];
        const double ed = pred[2 * b + 1] - target[2 * b + 1];
        r.loss.slope_mse += es * es;
        r.loss.duration_mse += ed * ed;
        r.grad[2 * b] = es * inv;
        r.grad[2 * b + 1] = ed * inv;
    }
    r.loss.slope_mse *= inv;
    r.loss.duration_mse *= inv;
    r.loss.total = 0.5 * (r.loss.slope_mse + r.loss.duration_mse);
    return r;
}

AdamState AdamState::for_params(std::span<Tensor* const> params) {
    AdamState s;
    for (const Tensor* p : params) {
        s.m.emplace_back(p->shape());
        s.v.emplace_back(p->shape());
    }
    return s;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               double learning_rate, double weight_decay, std::span<const std::string> names) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients, " + std::to_string(state.m.size()) +
                         " moment slots");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        const std::string label = k < names.size() ? names[k] : "#" + std::to_string(k);
        if (params[k]->shape() != grads[k].shape() || state.m[k].shape() != grads[k].shape()) {
            throw ShapeError("adam_step: parameter " + label + " has shape " + params[k]->shape_string() +
                             " but gradient " + grads[k].shape_string());
        }
        if (!grads[k].all_finite()) {
            throw NonFiniteError("adam_step: non-finite gradient for parameter " + label);
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        Tensor& m = state.m[k];
        Tensor& v = state.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double g = grads[k][i] + weight_decay * p[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            p[i] -= learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.epsilon);
        }
    }
}

} // namespace trendsearch::nn
