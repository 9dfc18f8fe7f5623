#include "msseg/blocks.hpp"

#include <cmath>
#include <stdexcept>

namespace msseg::nn {

Tensor apply(const Conv& conv, const Tensor& x) {
    return ops::conv2d(x, conv.weight, conv.bias, conv.stride, conv.pad);
}

Tensor apply(const BatchNorm& bn, const Tensor& x, const Context& ctx) {
    return ops::batchnorm2d(x, bn.gamma, bn.beta, bn.stats.get(), ctx.mode);
}

namespace {

Tensor dropout(const Tensor& x, double p, const Context& ctx) {
    if (ctx.mode == Mode::Eval || p == 0.0) return x;
    if (!ctx.rng) throw std::logic_error("dropout in train mode needs a random generator in the context");
    return ops::dropout2d(x, p, ctx.mode, *ctx.rng);
}

void expect_channels(const Tensor& x, std::size_t expected, const char* block) {
    if (x.rank() != 4 || x.dim(1) != expected) {
        throw ShapeError(std::string(block) + ": expected " + std::to_string(expected) + " input channels, got " +
                         to_string(x.shape()));
    }
}

}  // namespace

Tensor dense_layer(const Tensor& x, const DenseLayerParams& p, const Context& ctx) {
    expect_channels(x, p.conv.in_channels(), "dense_layer");
    Tensor y = apply(p.bn, x, ctx);
    y = ops::relu(y);
    y = apply(p.conv, y);
    return dropout(y, p.dropout_p, ctx);
}

std::size_t dense_block_growth(const DenseBlockParams& p) {
    if (p.layers.empty()) throw std::invalid_argument("dense block has no layers");
    return p.layers.front().conv.out_channels();
}

void validate_dense_block(const DenseBlockParams& p, std::size_t in_channels) {
    const std::size_t growth = dense_block_growth(p);
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        const auto& conv = p.layers[i].conv;
        const std::size_t want = in_channels + i * growth;
        if (conv.in_channels() != want || conv.out_channels() != growth) {
            throw std::invalid_argument("dense block layer " + std::to_string(i) + " maps " +
                                        std::to_string(conv.in_channels()) + " -> " +
                                        std::to_string(conv.out_channels()) + " channels, expected " +
                                        std::to_string(want) + " -> " + std::to_string(growth));
        }
    }
}

Tensor dense_block(const Tensor& x, const DenseBlockParams& p, const Context& ctx) {
    validate_dense_block(p, x.dim(1));
    std::vector<Tensor> features{x};
    std::vector<Tensor> produced;
    produced.reserve(p.layers.size());
    for (const auto& layer : p.layers) {
        const Tensor input = ops::concat_channels(features);
        Tensor out = dense_layer(input, layer, ctx);
        features.push_back(out);
        produced.push_back(std::move(out));
    }
    return ops::concat_channels(produced);
}

Tensor transition_down(const Tensor& x, const TransitionDownParams& p, const Context& ctx) {
    expect_channels(x, p.conv.in_channels(), "transition_down");
    if (x.dim(2) < 2 || x.dim(3) < 2) {
        throw ShapeError("transition_down: spatial extent below 2 in " + to_string(x.shape()));
    }
    Tensor y = apply(p.bn, x, ctx);
    y = ops::relu(y);
    y = apply(p.conv, y);
    y = dropout(y, p.dropout_p, ctx);
    return ops::maxpool2d(y, 2, 2);
}

Tensor transition_up(const Tensor& x, const TransitionUpParams& p) {
    Tensor y = ops::conv_transpose2d(x, p.weight, p.bias, 2);
    const std::size_t th = 2 * x.dim(2);
    const std::size_t tw = 2 * x.dim(3);
    return ops::crop2d(y, (y.dim(2) - th) / 2, (y.dim(3) - tw) / 2, th, tw);
}

Tensor conv_block(const Tensor& x, const ConvBlockParams& p, const Context& ctx) {
    expect_channels(x, p.conv1.in_channels(), "conv_block");
    Tensor y = ops::relu(apply(p.bn1, apply(p.conv1, x), ctx));
    return ops::relu(apply(p.bn2, apply(p.conv2, y), ctx));
}

Tensor sa_block(const Tensor& x, const SABlockParams& p, const Context& ctx) {
    if (p.pool_k != p.up_factor) throw std::invalid_argument("sa_block: pool size and upsample factor differ");
    if (x.rank() != 4 || x.dim(2) % p.pool_k != 0 || x.dim(3) % p.pool_k != 0) {
        throw ShapeError("sa_block: spatial extent of " + to_string(x.shape()) + " not divisible by " +
                         std::to_string(p.pool_k));
    }
    expect_channels(x, p.attn1.conv1.in_channels(), "sa_block");
    Tensor a = ops::avgpool2d(x, p.pool_k, p.pool_k);
    a = conv_block(a, p.attn1, ctx);
    a = conv_block(a, p.attn2, ctx);
    a = ops::upsample_nearest(a, p.up_factor);
    return ops::add(ops::mul(x, a), a);
}

LSTMState convlstm_step(const Tensor& x, const LSTMState& prev, const ConvLSTMParams& p) {
    if (x.rank() != 4 || prev.h.shape() != prev.c.shape() || x.dim(0) != prev.h.dim(0) ||
        x.dim(2) != prev.h.dim(2) || x.dim(3) != prev.h.dim(3) || prev.h.dim(1) != p.hidden()) {
        throw ShapeError("convlstm_step: input " + to_string(x.shape()) + " incompatible with state " +
                         to_string(prev.h.shape()) + "/" + to_string(prev.c.shape()));
    }
    const Tensor parts[] = {x, prev.h};
    const Tensor z = ops::concat_channels(parts);
    const Tensor i = ops::sigmoid(apply(p.input_gate, z));
    const Tensor f = ops::sigmoid(apply(p.forget_gate, z));
    const Tensor g = ops::tanh(apply(p.cell_gate, z));
    const Tensor o = ops::sigmoid(apply(p.output_gate, z));
    Tensor c = ops::add(ops::mul(f, prev.c), ops::mul(i, g));
    Tensor h = ops::mul(o, ops::tanh(c));
    return {std::move(h), std::move(c)};
}

Tensor convlstm_forward(std::span<const Tensor> seq, const ConvLSTMParams& p) {
    if (seq.empty()) throw std::invalid_argument("convlstm_forward: empty sequence");
    const Tensor& first = seq.front();
    if (first.rank() != 4) throw ShapeError("convlstm_forward: expected (N,C,H,W) steps");
    const Shape state_shape{first.dim(0), p.hidden(), first.dim(2), first.dim(3)};
    LSTMState state{Tensor::zeros(state_shape), Tensor::zeros(state_shape)};
    for (const auto& x : seq) state = convlstm_step(x, state, p);
    return state.h;
}

ParamRegistry::ParamRegistry(std::uint64_t seed) : rng_(seed) {}

Tensor ParamRegistry::add(const std::string& name, Tensor t) {
    t.set_name(name).set_requires_grad(true);
    params_.emplace_back(name, t);
    ++counter_;
    return t;
}

Tensor ParamRegistry::he_uniform(const std::string& name, Shape shape, std::size_t fan_in) {
    Tensor t(std::move(shape));
    Rng r = rng_.split(counter_);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : t.data()) v = r.uniform(-bound, bound);
    return add(name, t);
}

Conv ParamRegistry::conv(const std::string& prefix, std::size_t in, std::size_t out, std::size_t k, std::size_t pad,
                         bool bias) {
    Conv c;
    c.weight = he_uniform(prefix + ".weight", {out, in, k, k}, in * k * k);
    if (bias) c.bias = add(prefix + ".bias", Tensor::zeros({out}));
    c.pad = pad;
    return c;
}

BatchNorm ParamRegistry::batchnorm(const std::string& prefix, std::size_t channels) {
    BatchNorm bn;
    bn.gamma = add(prefix + ".weight", Tensor({channels}, 1.0));
    bn.beta = add(prefix + ".bias", Tensor::zeros({channels}));
    bn.stats = std::make_shared<ops::RunningStats>(ops::RunningStats::identity(channels));
    stats_.emplace_back(prefix, bn.stats);
    return bn;
}

DenseLayerParams ParamRegistry::dense_layer(const std::string& prefix, std::size_t in, std::size_t growth,
                                            double dropout_p) {
    DenseLayerParams p;
    p.bn = batchnorm(prefix + ".norm", in);
    p.conv = conv(prefix + ".conv", in, growth, 3, 1);
    p.dropout_p = dropout_p;
    return p;
}

DenseBlockParams ParamRegistry::dense_block(const std::string& prefix, std::size_t in, std::size_t growth,
                                            std::size_t layers, double dropout_p) {
    DenseBlockParams p;
    for (std::size_t i = 0; i < layers; ++i) {
        p.layers.push_back(dense_layer(prefix + ".layer" + std::to_string(i), in + i * growth, growth, dropout_p));
    }
    return p;
}

TransitionDownParams ParamRegistry::transition_down(const std::string& prefix, std::size_t channels,
                                                    double dropout_p) {
    TransitionDownParams p;
    p.bn = batchnorm(prefix + ".norm", channels);
    p.conv = conv(prefix + ".conv", channels, channels, 1, 0);
    p.dropout_p = dropout_p;
    return p;
}

TransitionUpParams ParamRegistry::transition_up(const std::string& prefix, std::size_t channels) {
    TransitionUpParams p;
    // Transposed-conv fan-in follows the (out_channels * k * k) convention.
    p.weight = he_uniform(prefix + ".weight", {channels, channels, 3, 3}, channels * 9);
    p.bias = add(prefix + ".bias", Tensor::zeros({channels}));
    return p;
}

ConvBlockParams ParamRegistry::conv_block(const std::string& prefix, std::size_t in, std::size_t out) {
    ConvBlockParams p;
    p.conv1 = conv(prefix + ".conv1", in, out, 3, 1);
    p.bn1 = batchnorm(prefix + ".norm1", out);
    p.conv2 = conv(prefix + ".conv2", out, out, 3, 1);
    p.bn2 = batchnorm(prefix + ".norm2", out);
    return p;
}

SABlockParams ParamRegistry::sa_block(const std::string& prefix, std::size_t channels) {
    SABlockParams p;
    p.attn1 = conv_block(prefix + ".attn1", channels, channels);
    p.attn2 = conv_block(prefix + ".attn2", channels, channels);
    return p;
}

ConvLSTMParams ParamRegistry::convlstm(const std::string& prefix, std::size_t in, std::size_t hidden,
                                       double forget_bias) {
    ConvLSTMParams p;
    p.input_gate = conv(prefix + ".input_gate", in + hidden, hidden, 3, 1);
    p.forget_gate = conv(prefix + ".forget_gate", in + hidden, hidden, 3, 1);
    p.cell_gate = conv(prefix + ".cell_gate", in + hidden, hidden, 3, 1);
    p.output_gate = conv(prefix + ".output_gate", in + hidden, hidden, 3, 1);
    for (auto& b : p.forget_gate.bias.data()) b = forget_bias;
    return p;
}

}  // namespace msseg::nn
