#include <gtest/gtest.h>

#include "support/suites.hpp"

namespace {

constexpr int kInstances = 20;
constexpr double kOpTolerance = 1e-4;

class OpGradient : public ::testing::TestWithParam<suites::GradCase> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
    msseg::Rng rng(std::hash<std::string>{}(GetParam().name) & 0xFFFF);
    for (int i = 0; i < kInstances; ++i) {
        const auto r = GetParam().run(rng);
        EXPECT_GT(r.checked, 0u);
        EXPECT_LT(r.max_rel, kOpTolerance) << "instance " << i;
    }
}

std::string case_name(const ::testing::TestParamInfo<suites::GradCase>& info) { return info.param.name; }

INSTANTIATE_TEST_SUITE_P(Ops, OpGradient, ::testing::ValuesIn(suites::op_grad_cases()), case_name);
INSTANTIATE_TEST_SUITE_P(Blocks, OpGradient, ::testing::ValuesIn(suites::block_grad_cases()), case_name);

TEST(ModelGradient, MiniatureNetworkOnSampledParameters) {
    const auto r = suites::model_grad_check(3, 30);
    EXPECT_EQ(r.checked, 30u);
    EXPECT_LT(r.max_rel, 1e-3);
}

TEST(Graph, BackwardWithoutHistoryThrows) {
    msseg::Graph g;
    const msseg::Tensor t = msseg::Tensor::scalar(1.0);
    EXPECT_THROW(g.backward(t), std::logic_error);
}

TEST(Graph, NonScalarLossThrows) {
    msseg::Graph g;
    msseg::Tensor x({2}, 1.0);
    x.set_requires_grad(true);
    const auto y = msseg::ops::mul(x, x);
    EXPECT_THROW(g.backward(y), msseg::ShapeError);
}

TEST(Graph, NothingRecordedWithoutGraph) {
    msseg::Tensor x({2}, 3.0);
    x.set_requires_grad(true);
    const auto y = msseg::ops::mul(x, x);
    EXPECT_FALSE(y.requires_grad());
}

TEST(Graph, SharedInputAccumulatesBothPaths) {
    msseg::Tensor x({1}, 3.0);
    x.set_requires_grad(true);
    {
        msseg::Graph g;
        g.backward(msseg::ops::sum(msseg::ops::add(msseg::ops::mul(x, x), x)));
    }
    EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}

}  // namespace
