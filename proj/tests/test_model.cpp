#include <gtest/gtest.h>

#include <set>

#include "msseg/model.hpp"
#include "support/hand_counts.hpp"
#include "support/suites.hpp"

using namespace msseg;

namespace {

using hand_counts::tiny;
using hand_counts::kTinyCount;

TEST(ParamCount, MiniatureMatchesHandArithmetic) {
    EXPECT_EQ(kTinyCount, 50794u);
    EXPECT_EQ(param_count(build_model(tiny())), kTinyCount);
    EXPECT_EQ(expected_param_count(tiny()), kTinyCount);
}

TEST(ParamCount, AblationFlagsRemoveExactlyTheirBlocks) {
    ModelConfig c = tiny();
    c.use_clstm = false;
    EXPECT_EQ(param_count(build_model(c)), kTinyCount - 4640);
    c.use_sa = false;
    EXPECT_EQ(param_count(build_model(c)), kTinyCount - 4640 - 9408 - 21024 - 2400 - 2400);
    // Without the ConvLSTM the decoder starts from the 8-channel dense output,
    // which for tiny() equals the hidden width, so no other block changes.
}

TEST(ParamCount, DefaultConfigIsTheCalibratedFit) {
    const ModelConfig full;
    const std::size_t n = param_count(build_model(full));
    EXPECT_EQ(n, expected_param_count(full));
    EXPECT_EQ(n, 13'242'772u);
    const double rel = std::abs(static_cast<double>(n) - static_cast<double>(kPublishedParamCount)) /
                       static_cast<double>(kPublishedParamCount);
    EXPECT_LT(rel, 0.02);
}

TEST(ParamCount, ClosedFormMatchesBuiltModelAcrossConfigs) {
    Rng rng(17);
    for (int i = 0; i < 25; ++i) {
        ModelConfig c;
        c.num_scales = 1 + rng.below(3);
        c.layers_per_block = 1 + rng.below(3);
        c.growth_rate = 1 + rng.below(6);
        c.first_conv_filters = 1 + rng.below(10);
        c.convlstm_hidden = 1 + rng.below(6);
        c.use_sa = rng.below(2);
        c.use_clstm = rng.below(2);
        c.num_classes = 2 + rng.below(2);
        c.input_size = 32;
        EXPECT_EQ(param_count(build_model(c)), expected_param_count(c)) << i;
    }
}

TEST(ParamCount, BreakdownSumsToTotalWithTablePositions) {
    const ModelParams m = build_model(tiny());
    const auto groups = param_breakdown(m);
    std::size_t sum = 0;
    std::set<std::string> positions;
    for (const auto& g : groups) {
        sum += g.count;
        positions.insert(g.position);
    }
    EXPECT_EQ(sum, param_count(m));
    EXPECT_EQ(positions, (std::set<std::string>{"Downsampling", "Bottleneck", "Upsampling", "Exit"}));
}

TEST(Calibration, BestCandidateIsTheShippedDefault) {
    const auto best = calibrate_param_count(ModelConfig{}, kPublishedParamCount, CalibrationRanges{}, 5);
    ASSERT_FALSE(best.empty());
    EXPECT_EQ(std::llabs(best.front().residual), 10);
    EXPECT_EQ(best.front().growth_rate, 12u);
    EXPECT_EQ(best.front().first_conv_filters, 46u);
    EXPECT_EQ(best.front().convlstm_hidden, 29u);
    // No exact fit exists in the searched ranges.
    for (const auto& c : best) EXPECT_NE(c.residual, 0);
}

TEST(Model, NamesAreUniqueAndFollowTheTree) {
    const ModelParams m = build_model(tiny());
    std::set<std::string> names;
    for (const auto& [name, t] : m.named) EXPECT_TRUE(names.insert(name).second) << name;
    for (const char* want : {"stem.conv.weight", "downsampling.0.dense.layer0.norm.weight",
                             "downsampling.1.sa.attn2.conv1.weight", "downsampling.1.transition.conv.weight",
                             "bottleneck.lstm.forget_gate.bias", "upsampling.0.transition.weight",
                             "upsampling.1.dense.layer1.conv.weight", "head.conv.weight"}) {
        EXPECT_TRUE(names.count(want)) << want;
    }
    EXPECT_TRUE(m.find("stem.conv.weight").defined());
    EXPECT_FALSE(m.find("nope").defined());
}

TEST(Model, ForgetGateBiasStartsAtOne) {
    const ModelParams m = build_model(tiny());
    for (double v : m.find("bottleneck.lstm.forget_gate.bias").data()) EXPECT_EQ(v, 1.0);
    for (double v : m.find("bottleneck.lstm.input_gate.bias").data()) EXPECT_EQ(v, 0.0);
}

TEST(Model, SeedControlsInitialisation) {
    ModelConfig a = tiny(), b = tiny();
    b.seed = 1;
    const auto ma = build_model(a), ma2 = build_model(a), mb = build_model(b);
    const auto wa = ma.find("stem.conv.weight").data(), wa2 = ma2.find("stem.conv.weight").data(),
               wb = mb.find("stem.conv.weight").data();
    EXPECT_TRUE(std::equal(wa.begin(), wa.end(), wa2.begin()));
    EXPECT_FALSE(std::equal(wa.begin(), wa.end(), wb.begin()));
    const double bound = std::sqrt(6.0 / 9.0);
    for (double v : wa) EXPECT_LE(std::abs(v), bound);
}

TEST(Model, ForwardGivesPerPixelDistributions) {
    for (bool sa : {false, true})
        for (bool lstm : {false, true}) {
            ModelConfig c = tiny();
            c.use_sa = sa;
            c.use_clstm = lstm;
            const ModelParams m = build_model(c);
            Rng rng(2);
            const Tensor x = gradcheck::random_tensor({6, 1, 32, 32}, rng, 0.0, 1.0);
            Rng drop(1);
            for (Mode mode : {Mode::Train, Mode::Eval}) {
                const Tensor y = forward(m, x, {mode, &drop});
                ASSERT_EQ(y.shape(), (Shape{2, 2, 32, 32}));
                for (std::size_t n = 0; n < 2; ++n)
                    for (std::size_t i = 0; i < 32 * 32; ++i) {
                        const double s = y.data()[(n * 2) * 1024 + i] + y.data()[(n * 2 + 1) * 1024 + i];
                        ASSERT_NEAR(s, 1.0, 1e-12);
                    }
            }
        }
}

TEST(Model, ForwardRejectsBadGeometry) {
    const ModelParams m = build_model(tiny());
    const nn::Context ctx{Mode::Eval, nullptr};
    EXPECT_THROW(forward(m, Tensor({4, 1, 32, 32}), ctx), ShapeError);  // not 3 slices per sample
    EXPECT_THROW(forward(m, Tensor({3, 1, 30, 30}), ctx), ShapeError);  // not divisible by 4
    EXPECT_THROW(forward(m, Tensor({3, 2, 32, 32}), ctx), ShapeError);  // two channels
}

TEST(Model, ConfigValidation) {
    ModelConfig c = tiny();
    c.input_size = 30;
    EXPECT_THROW(build_model(c), std::invalid_argument);
    c = tiny();
    c.dropout_p = 1.0;
    EXPECT_THROW(build_model(c), std::invalid_argument);
    c = tiny();
    c.num_scales = 0;
    EXPECT_THROW(build_model(c), std::invalid_argument);
}

TEST(Model, SnapshotRestoreRoundTrip) {
    ModelParams m = build_model(tiny());
    const auto snap = snapshot(m);
    m.find("head.conv.weight").data()[0] += 1.0;
    m.buffers.front().second->mean[0] = 5.0;
    restore(m, snap);
    const auto w = m.find("head.conv.weight").data();
    EXPECT_TRUE(std::equal(w.begin(), w.end(), snap.values[snap.values.size() - 2].begin()));
    EXPECT_EQ(m.buffers.front().second->mean[0], 0.0);
    const auto again = snapshot(m);
    EXPECT_EQ(again.values, snap.values);
}

TEST(Ablation, VariantsFollowTableOrder) {
    const auto v = ablation_variants(tiny());
    ASSERT_EQ(v.size(), 4u);
    EXPECT_EQ(v[0].name, "FC-DenseNet");
    EXPECT_EQ(v[1].name, "FC-DenseNet + C-LSTM");
    EXPECT_EQ(v[2].name, "FC-DenseNet + SA");
    EXPECT_EQ(v[3].name, "FC-DenseNet + SA + C-LSTM");
    const bool sa[] = {false, false, true, true}, lstm[] = {false, true, false, true};
    for (int i = 0; i < 4; ++i) {
        EXPECT_EQ(v[i].config.use_sa, sa[i]);
        EXPECT_EQ(v[i].config.use_clstm, lstm[i]);
        EXPECT_EQ(v[i].config.growth_rate, tiny().growth_rate);
    }
}

}  // namespace
