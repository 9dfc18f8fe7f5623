#include "msseg/model.hpp"

#include <algorithm>
#include <cstdlib>
#include <stdexcept>

namespace msseg {

void ModelConfig::validate() const {
    if (num_scales < 1) throw std::invalid_argument("num_scales must be at least 1");
    if (layers_per_block < 1) throw std::invalid_argument("layers_per_block must be at least 1");
    if (growth_rate < 1 || first_conv_filters < 1) throw std::invalid_argument("channel counts must be positive");
    if (use_clstm && convlstm_hidden < 1) throw std::invalid_argument("convlstm_hidden must be positive");
    if (num_classes < 2) throw std::invalid_argument("num_classes must be at least 2");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw std::invalid_argument("dropout_p must lie in [0, 1)");
    if (sequence_length < 1) throw std::invalid_argument("sequence_length must be positive");
    // SA blocks pool by 2 at every encoder/decoder resolution, which the
    // 2^num_scales divisibility already implies.
    const std::size_t factor = std::size_t{1} << num_scales;
    if (input_size == 0 || input_size % factor != 0) {
        throw std::invalid_argument("input_size " + std::to_string(input_size) + " is not divisible by 2^" +
                                    std::to_string(num_scales) + " = " + std::to_string(factor));
    }
}

std::vector<Tensor> ModelParams::trainable() const {
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (const auto& [name, t] : named) out.push_back(t);
    return out;
}

Tensor ModelParams::find(const std::string& name) const {
    for (const auto& [n, t] : named) {
        if (n == name) return t;
    }
    return {};
}

ParamSnapshot snapshot(const ModelParams& params) {
    ParamSnapshot s;
    for (const auto& [name, t] : params.named) s.values.emplace_back(t.data().begin(), t.data().end());
    for (const auto& [name, st] : params.buffers) s.stats.push_back(*st);
    return s;
}

void restore(ModelParams& params, const ParamSnapshot& snap) {
    if (snap.values.size() != params.named.size() || snap.stats.size() != params.buffers.size()) {
        throw std::invalid_argument("snapshot does not match the parameter tree");
    }
    for (std::size_t i = 0; i < snap.values.size(); ++i) {
        auto d = params.named[i].second.data();
        if (d.size() != snap.values[i].size()) throw std::invalid_argument("snapshot size mismatch");
        std::copy(snap.values[i].begin(), snap.values[i].end(), d.begin());
    }
    for (std::size_t i = 0; i < snap.stats.size(); ++i) *params.buffers[i].second = snap.stats[i];
}

ModelParams build_model(const ModelConfig& cfg) {
    cfg.validate();
    nn::ParamRegistry reg(cfg.seed);
    ModelParams m;
    m.config = cfg;
    const std::size_t g = cfg.growth_rate;
    const std::size_t block_out = cfg.layers_per_block * g;

    m.stem = reg.conv("stem.conv", 1, cfg.first_conv_filters, 3, 1);
    std::size_t channels = cfg.first_conv_filters;
    std::vector<std::size_t> skip_channels;
    for (std::size_t i = 0; i < cfg.num_scales; ++i) {
        const std::string prefix = "downsampling." + std::to_string(i);
        EncoderStage stage;
        stage.dense = reg.dense_block(prefix + ".dense", channels, g, cfg.layers_per_block, cfg.dropout_p);
        channels += block_out;
        skip_channels.push_back(channels);
        if (cfg.use_sa) stage.sa = reg.sa_block(prefix + ".sa", channels);
        stage.down = reg.transition_down(prefix + ".transition", channels, cfg.dropout_p);
        m.encoder.push_back(std::move(stage));
    }

    m.bottleneck = reg.dense_block("bottleneck.dense", channels, g, cfg.layers_per_block, cfg.dropout_p);
    channels = block_out;
    if (cfg.use_clstm) {
        m.lstm = reg.convlstm("bottleneck.lstm", channels, cfg.convlstm_hidden);
        channels = cfg.convlstm_hidden;
    }

    for (std::size_t i = 0; i < cfg.num_scales; ++i) {
        const std::string prefix = "upsampling." + std::to_string(i);
        DecoderStage stage;
        stage.up = reg.transition_up(prefix + ".transition", channels);
        channels += skip_channels[cfg.num_scales - 1 - i];
        stage.dense = reg.dense_block(prefix + ".dense", channels, g, cfg.layers_per_block, cfg.dropout_p);
        channels = block_out;
        if (cfg.use_sa) stage.sa = reg.sa_block(prefix + ".sa", channels);
        m.decoder.push_back(std::move(stage));
    }

    m.head = reg.conv("head.conv", channels, cfg.num_classes, 1, 0);
    m.named = std::move(reg.params());
    m.buffers = std::move(reg.stats());
    return m;
}

Tensor forward(const ModelParams& params, const Tensor& input, const nn::Context& ctx) {
    const ModelConfig& cfg = params.config;
    const std::size_t steps = cfg.sequence_length;
    if (input.rank() != 4 || input.dim(1) != 1) {
        throw ShapeError("forward: expected (T*B, 1, H, W) input, got " + to_string(input.shape()));
    }
    if (input.dim(0) % steps != 0) {
        throw ShapeError("forward: batch " + std::to_string(input.dim(0)) + " is not a whole number of " +
                         std::to_string(steps) + "-slice sequences");
    }
    const std::size_t factor = std::size_t{1} << cfg.num_scales;
    if (input.dim(2) % factor != 0 || input.dim(3) % factor != 0) {
        throw ShapeError("forward: spatial size " + to_string(input.shape()) + " not divisible by " +
                         std::to_string(factor));
    }
    const std::size_t batch = input.dim(0) / steps;
    const std::size_t centre_begin = (steps / 2) * batch;
    auto centre = [&](const Tensor& t) { return ops::slice_batch(t, centre_begin, centre_begin + batch); };

    // Encoder and bottleneck dense block run on every slice with shared weights.
    Tensor x = nn::apply(params.stem, input);
    std::vector<Tensor> skips;
    for (const auto& stage : params.encoder) {
        const Tensor parts[] = {x, nn::dense_block(x, stage.dense, ctx)};
        Tensor skip = ops::concat_channels(parts);
        const Tensor attended = stage.sa ? nn::sa_block(skip, *stage.sa, ctx) : skip;
        skips.push_back(centre(skip));
        x = nn::transition_down(attended, stage.down, ctx);
    }
    const Tensor encoded = nn::dense_block(x, params.bottleneck, ctx);

    Tensor u;
    if (params.lstm) {
        std::vector<Tensor> seq;
        for (std::size_t t = 0; t < steps; ++t) seq.push_back(ops::slice_batch(encoded, t * batch, (t + 1) * batch));
        u = nn::convlstm_forward(seq, *params.lstm);
    } else {
        u = centre(encoded);
    }

    for (std::size_t i = 0; i < params.decoder.size(); ++i) {
        const auto& stage = params.decoder[i];
        const Tensor parts[] = {nn::transition_up(u, stage.up), skips[skips.size() - 1 - i]};
        u = nn::dense_block(ops::concat_channels(parts), stage.dense, ctx);
        if (stage.sa) u = nn::sa_block(u, *stage.sa, ctx);
    }
    return ops::softmax_channels(nn::apply(params.head, u));
}

std::size_t param_count(std::span<const NamedTensor> params) {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
}

std::size_t param_count(const ModelParams& params) { return param_count(params.named); }

namespace {

std::size_t conv_count(std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; }
std::size_t bn_count(std::size_t c) { return 2 * c; }

std::size_t dense_block_count(std::size_t in, std::size_t growth, std::size_t layers) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < layers; ++i) n += bn_count(in + i * growth) + conv_count(in + i * growth, growth, 3);
    return n;
}

std::size_t sa_count(std::size_t c) { return 4 * (conv_count(c, c, 3) + bn_count(c)); }

}  // namespace

std::size_t expected_param_count(const ModelConfig& cfg) {
    const std::size_t g = cfg.growth_rate;
    const std::size_t block_out = cfg.layers_per_block * g;
    std::size_t n = conv_count(1, cfg.first_conv_filters, 3);
    std::size_t c = cfg.first_conv_filters;
    std::vector<std::size_t> skips;
    for (std::size_t i = 0; i < cfg.num_scales; ++i) {
        n += dense_block_count(c, g, cfg.layers_per_block);
        c += block_out;
        skips.push_back(c);
        if (cfg.use_sa) n += sa_count(c);
        n += bn_count(c) + conv_count(c, c, 1);
    }
    n += dense_block_count(c, g, cfg.layers_per_block);
    c = block_out;
    if (cfg.use_clstm) {
        n += 4 * conv_count(c + cfg.convlstm_hidden, cfg.convlstm_hidden, 3);
        c = cfg.convlstm_hidden;
    }
    for (std::size_t i = 0; i < cfg.num_scales; ++i) {
        n += conv_count(c, c, 3);
        n += dense_block_count(c + skips[cfg.num_scales - 1 - i], g, cfg.layers_per_block);
        c = block_out;
        if (cfg.use_sa) n += sa_count(c);
    }
    return n + conv_count(c, cfg.num_classes, 1);
}

std::vector<ParamGroup> param_breakdown(const ModelParams& params) {
    std::vector<ParamGroup> groups;
    auto bump = [&](const std::string& position, const std::string& layer, std::size_t count) {
        for (auto& g : groups) {
            if (g.position == position && g.layer == layer) {
                g.count += count;
                return;
            }
        }
        groups.push_back({position, layer, count});
    };
    auto has = [](const std::string& s, const char* part) { return s.find(part) != std::string::npos; };
    for (const auto& [name, t] : params.named) {
        std::string position, layer;
        if (name.starts_with("stem.")) {
            position = "Downsampling", layer = "Conv2d";
        } else if (name.starts_with("head.")) {
            position = "Upsampling", layer = "Conv2d";
        } else if (name.starts_with("bottleneck.")) {
            position = "Bottleneck";
            layer = has(name, ".lstm.") ? "ConvLSTM" : "DenseBlock";
        } else {
            position = name.starts_with("downsampling.") ? "Downsampling" : "Upsampling";
            if (has(name, ".dense.")) {
                layer = "DenseBlock";
            } else if (has(name, ".sa.")) {
                layer = "SqueezeAttentionBlock";
            } else {
                layer = position == "Downsampling" ? "TransitionDown" : "TransitionUp";
            }
        }
        bump(position, layer, t.numel());
    }
    groups.push_back({"Exit", "Softmax", 0});
    return groups;
}

std::vector<AblationVariant> ablation_variants(const ModelConfig& base) {
    std::vector<AblationVariant> out;
    const std::pair<bool, bool> flags[] = {{false, false}, {false, true}, {true, false}, {true, true}};
    const char* names[] = {"FC-DenseNet", "FC-DenseNet + C-LSTM", "FC-DenseNet + SA", "FC-DenseNet + SA + C-LSTM"};
    for (std::size_t i = 0; i < 4; ++i) {
        ModelConfig cfg = base;
        cfg.use_sa = flags[i].first;
        cfg.use_clstm = flags[i].second;
        out.push_back({names[i], cfg});
    }
    return out;
}

std::vector<CalibrationCandidate> calibrate_param_count(const ModelConfig& base, std::size_t target,
                                                        const CalibrationRanges& ranges, std::size_t keep) {
    std::vector<CalibrationCandidate> found;
    auto consider = [&](std::size_t g, std::size_t f, std::size_t h) {
        ModelConfig cfg = base;
        cfg.growth_rate = g;
        cfg.first_conv_filters = f;
        cfg.convlstm_hidden = h;
        const std::size_t n = expected_param_count(cfg);
        found.push_back({g, f, h, n, static_cast<long long>(n) - static_cast<long long>(target)});
    };
    for (std::size_t g = ranges.growth_min; g <= ranges.growth_max; ++g) {
        for (std::size_t f = ranges.first_min; f <= ranges.first_max; ++f) {
            if (!base.use_clstm) {
                consider(g, f, base.convlstm_hidden);
                continue;
            }
            // The count is strictly increasing in the hidden width: bisect for
            // the first width reaching the target and keep both neighbours.
            std::size_t lo = ranges.hidden_min, hi = ranges.hidden_max;
            ModelConfig cfg = base;
            cfg.growth_rate = g;
            cfg.first_conv_filters = f;
            while (lo < hi) {
                cfg.convlstm_hidden = lo + (hi - lo) / 2;
                if (expected_param_count(cfg) < target) {
                    lo = cfg.convlstm_hidden + 1;
                } else {
                    hi = cfg.convlstm_hidden;
                }
            }
            consider(g, f, lo);
            if (lo > ranges.hidden_min) consider(g, f, lo - 1);
        }
    }
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
        const auto ra = std::llabs(a.residual), rb = std::llabs(b.residual);
        if (ra != rb) return ra < rb;
        return std::tie(a.growth_rate, a.first_conv_filters, a.convlstm_hidden) <
               std::tie(b.growth_rate, b.first_conv_filters, b.convlstm_hidden);
    });
    if (found.size() > keep) found.resize(keep);
    return found;
}

}  // namespace msseg
