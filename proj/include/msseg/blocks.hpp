#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "msseg/ops.hpp"
#include "msseg/rng.hpp"
#include "msseg/tensor.hpp"

// Composite layers of the segmentation network. Parameter structs are cheap
// handle bundles; block functions never mutate weights (batch-norm running
// statistics are updated in train mode).
namespace msseg::nn {

struct Context {
    Mode mode = Mode::Eval;
    Rng* rng = nullptr;  // required by dropout in train mode
};

struct Conv {
    Tensor weight;  // (out, in, k, k)
    Tensor bias;    // (out)
    std::size_t stride = 1;
    std::size_t pad = 0;

    std::size_t in_channels() const { return weight.dim(1); }
    std::size_t out_channels() const { return weight.dim(0); }
};

struct BatchNorm {
    Tensor gamma;
    Tensor beta;
    std::shared_ptr<ops::RunningStats> stats;
};

struct DenseLayerParams {
    BatchNorm bn;
    Conv conv;  // 3x3, pad 1, in -> growth
    double dropout_p = 0.0;
};

struct DenseBlockParams {
    std::vector<DenseLayerParams> layers;
};

struct TransitionDownParams {
    BatchNorm bn;
    Conv conv;  // 1x1, channel preserving
    double dropout_p = 0.0;
};

struct TransitionUpParams {
    Tensor weight;  // (C, C, 3, 3), stride 2
    Tensor bias;
};

struct ConvBlockParams {
    Conv conv1;
    BatchNorm bn1;
    Conv conv2;
    BatchNorm bn2;
};

struct SABlockParams {
    ConvBlockParams attn1;
    ConvBlockParams attn2;
    std::size_t pool_k = 2;
    std::size_t up_factor = 2;
};

struct ConvLSTMParams {
    // Each gate maps (in + hidden) -> hidden with a 3x3, pad-1 kernel.
    Conv input_gate;
    Conv forget_gate;
    Conv cell_gate;
    Conv output_gate;

    std::size_t hidden() const { return input_gate.out_channels(); }
};

struct LSTMState {
    Tensor h;
    Tensor c;
};

Tensor apply(const Conv& conv, const Tensor& x);
Tensor apply(const BatchNorm& bn, const Tensor& x, const Context& ctx);

Tensor dense_layer(const Tensor& x, const DenseLayerParams& p, const Context& ctx);
/// Output is the concatenation of the layer outputs only (layers * growth channels).
Tensor dense_block(const Tensor& x, const DenseBlockParams& p, const Context& ctx);
/// Throws std::invalid_argument unless layer i consumes in_channels + i * growth.
void validate_dense_block(const DenseBlockParams& p, std::size_t in_channels);
std::size_t dense_block_growth(const DenseBlockParams& p);

Tensor transition_down(const Tensor& x, const TransitionDownParams& p, const Context& ctx);
/// Stride-2 transposed conv, cropped symmetrically to exactly twice the input extent.
Tensor transition_up(const Tensor& x, const TransitionUpParams& p);
Tensor conv_block(const Tensor& x, const ConvBlockParams& p, const Context& ctx);
/// a = upsample(conv_block2(conv_block1(avgpool(x)))); returns x * a + a.
Tensor sa_block(const Tensor& x, const SABlockParams& p, const Context& ctx);

LSTMState convlstm_step(const Tensor& x, const LSTMState& prev, const ConvLSTMParams& p);
/// Runs the cell over `seq` in order from a zero state; returns the final hidden state.
Tensor convlstm_forward(std::span<const Tensor> seq, const ConvLSTMParams& p);

/// Named parameter storage used while building a model. Trainable tensors
/// are drawn deterministically from the seed in creation order.
class ParamRegistry {
public:
    explicit ParamRegistry(std::uint64_t seed);

    /// He-uniform (bound sqrt(6 / fan_in)) weight plus zero bias.
    Conv conv(const std::string& prefix, std::size_t in, std::size_t out, std::size_t k, std::size_t pad,
              bool bias = true);
    BatchNorm batchnorm(const std::string& prefix, std::size_t channels);

    DenseLayerParams dense_layer(const std::string& prefix, std::size_t in, std::size_t growth, double dropout_p);
    DenseBlockParams dense_block(const std::string& prefix, std::size_t in, std::size_t growth, std::size_t layers,
                                 double dropout_p);
    TransitionDownParams transition_down(const std::string& prefix, std::size_t channels, double dropout_p);
    TransitionUpParams transition_up(const std::string& prefix, std::size_t channels);
    ConvBlockParams conv_block(const std::string& prefix, std::size_t in, std::size_t out);
    SABlockParams sa_block(const std::string& prefix, std::size_t channels);
    /// Forget-gate bias starts at `forget_bias`, every other bias at zero.
    ConvLSTMParams convlstm(const std::string& prefix, std::size_t in, std::size_t hidden, double forget_bias = 1.0);

    Tensor add(const std::string& name, Tensor t);

    std::vector<std::pair<std::string, Tensor>>& params() { return params_; }
    std::vector<std::pair<std::string, std::shared_ptr<ops::RunningStats>>>& stats() { return stats_; }

private:
    Tensor he_uniform(const std::string& name, Shape shape, std::size_t fan_in);

    Rng rng_;
    std::uint64_t counter_ = 0;
    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<std::pair<std::string, std::shared_ptr<ops::RunningStats>>> stats_;
};

}  // namespace msseg::nn
