#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "msseg/blocks.hpp"

namespace msseg {

/// Published total of trainable parameters for the full network.
inline constexpr std::size_t kPublishedParamCount = 13'242'782;

struct ModelConfig {
    std::size_t num_scales = 5;
    std::size_t layers_per_block = 5;
    // growth/first/hidden: closest integer fit to the published parameter
    // total, see `calibrate_param_count`.
    std::size_t growth_rate = 12;
    std::size_t first_conv_filters = 46;
    std::size_t convlstm_hidden = 29;
    double dropout_p = 0.2;
    std::size_t num_classes = 2;
    bool use_sa = true;
    bool use_clstm = true;
    std::uint64_t seed = 0;
    std::size_t input_size = 160;
    std::size_t sequence_length = 3;

    /// Throws std::invalid_argument describing the first violated invariant.
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct EncoderStage {
    nn::DenseBlockParams dense;
    std::optional<nn::SABlockParams> sa;
    nn::TransitionDownParams down;
};

struct DecoderStage {
    nn::TransitionUpParams up;
    nn::DenseBlockParams dense;
    std::optional<nn::SABlockParams> sa;
};

using NamedTensor = std::pair<std::string, Tensor>;
using NamedStats = std::pair<std::string, std::shared_ptr<ops::RunningStats>>;

struct ModelParams {
    ModelConfig config;
    nn::Conv stem;
    std::vector<EncoderStage> encoder;
    nn::DenseBlockParams bottleneck;
    std::optional<nn::ConvLSTMParams> lstm;
    std::vector<DecoderStage> decoder;  // deepest stage first
    nn::Conv head;

    std::vector<NamedTensor> named;   // trainable tensors in creation order
    std::vector<NamedStats> buffers;  // batch-norm running statistics

    std::vector<Tensor> trainable() const;
    /// Undefined tensor when absent.
    Tensor find(const std::string& name) const;
};

/// Value copy of every trainable tensor and running statistic.
struct ParamSnapshot {
    std::vector<std::vector<double>> values;
    std::vector<ops::RunningStats> stats;
};

ParamSnapshot snapshot(const ModelParams& params);
void restore(ModelParams& params, const ParamSnapshot& snap);

/// Builds the parameter tree: stem conv, per-scale encoder
/// (dense block, optional SA, transition down), bottleneck dense block and
/// optional ConvLSTM, mirrored decoder (transition up, skip concat, dense
/// block, optional SA) and a 1x1 classifier.
ModelParams build_model(const ModelConfig& cfg);

/// input: (3B, 1, H, W) with the B previous slices first, then the B centre
/// slices, then the B next slices. Returns per-pixel class probabilities
/// (B, num_classes, H, W) for the centre slices.
Tensor forward(const ModelParams& params, const Tensor& input, const nn::Context& ctx);

/// Sum of trainable element counts (running statistics excluded).
std::size_t param_count(const ModelParams& params);
std::size_t param_count(std::span<const NamedTensor> params);

/// Closed-form count for a configuration without allocating it.
std::size_t expected_param_count(const ModelConfig& cfg);

struct ParamGroup {
    std::string position;  // Downsampling / Bottleneck / Upsampling / Exit
    std::string layer;
    std::size_t count = 0;
};
/// Per-position breakdown in network order.
std::vector<ParamGroup> param_breakdown(const ModelParams& params);

struct AblationVariant {
    std::string name;
    ModelConfig config;
};
/// FC-DenseNet, + C-LSTM, + SA, + SA + C-LSTM (in that order).
std::vector<AblationVariant> ablation_variants(const ModelConfig& base);

struct CalibrationCandidate {
    std::size_t growth_rate;
    std::size_t first_conv_filters;
    std::size_t convlstm_hidden;
    std::size_t count;
    long long residual;  // count - target
};

struct CalibrationRanges {
    std::size_t growth_min = 4, growth_max = 48;
    std::size_t first_min = 8, first_max = 96;
    std::size_t hidden_min = 1, hidden_max = 512;
};

/// Grid search over growth/first/hidden (other fields from `base`) for the
/// configurations closest to `target`, best first.
std::vector<CalibrationCandidate> calibrate_param_count(const ModelConfig& base, std::size_t target,
                                                        const CalibrationRanges& ranges, std::size_t keep = 10);

}  // namespace msseg
