#include <gtest/gtest.h>

#include <cstring>
#include <vector>

#include "msseg/kernels.hpp"
#include "msseg/model.hpp"
#include "msseg/rng.hpp"

using namespace msseg;

namespace {

std::vector<const kernels::KernelTable*> simd_tables() {
    std::vector<const kernels::KernelTable*> out;
    if (kernels::avx2_table() && kernels::cpu_supports_avx2()) out.push_back(kernels::avx2_table());
    if (kernels::neon_table()) out.push_back(kernels::neon_table());
    return out;
}

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-10.0, 10.0);
    return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Restores automatic selection after each test.
class Kernels : public ::testing::Test {
protected:
    void TearDown() override { kernels::select("auto"); }
};

TEST_F(Kernels, SimdVariantsAreBitIdenticalToScalar) {
    const auto tables = simd_tables();
    if (tables.empty()) GTEST_SKIP() << "no SIMD variant on this build/CPU";
    const auto& ref = kernels::scalar_table();
    Rng rng(11);
    for (const auto* t : tables) {
        for (std::size_t n = 0; n < 70; ++n) {
            const auto x = random_vec(n, rng), y = random_vec(n, rng);
            const double a = rng.uniform(-2.0, 2.0);
            auto y1 = y, y2 = y;
            ref.axpy(n, a, x.data(), y1.data());
            t->axpy(n, a, x.data(), y2.data());
            EXPECT_TRUE(bit_equal(y1, y2)) << t->name << " axpy n=" << n;
            y1 = y, y2 = y;
            ref.accumulate(n, x.data(), y1.data());
            t->accumulate(n, x.data(), y2.data());
            EXPECT_TRUE(bit_equal(y1, y2)) << t->name << " accumulate n=" << n;
            const double d1 = ref.dot(n, x.data(), y.data()), d2 = t->dot(n, x.data(), y.data());
            EXPECT_EQ(std::memcmp(&d1, &d2, sizeof d1), 0) << t->name << " dot n=" << n;
            std::vector<double> o1(n), o2(n);
            ref.add(n, x.data(), y.data(), o1.data());
            t->add(n, x.data(), y.data(), o2.data());
            EXPECT_TRUE(bit_equal(o1, o2)) << t->name << " add n=" << n;
            ref.mul(n, x.data(), y.data(), o1.data());
            t->mul(n, x.data(), y.data(), o2.data());
            EXPECT_TRUE(bit_equal(o1, o2)) << t->name << " mul n=" << n;
            ref.scale(n, a, x.data(), o1.data());
            t->scale(n, a, x.data(), o2.data());
            EXPECT_TRUE(bit_equal(o1, o2)) << t->name << " scale n=" << n;
            ref.relu(n, x.data(), o1.data());
            t->relu(n, x.data(), o2.data());
            EXPECT_TRUE(bit_equal(o1, o2)) << t->name << " relu n=" << n;
        }
    }
}

TEST_F(Kernels, DotFollowsDocumentedLaneOrder) {
    const std::vector<double> x = {1e16, 1.0, -1e16, 1.0, 3.0};
    const std::vector<double> y = {1.0, 1.0, 1.0, 1.0, 1.0};
    // ((1e16 + 1) + (-1e16 + 1)) + 3: both inner sums round away the 1.
    const double want = ((1e16 + 1.0) + (-1e16 + 1.0)) + 3.0;
    EXPECT_EQ(kernels::scalar_table().dot(x.size(), x.data(), y.data()), want);
}

TEST_F(Kernels, GemmVariantsMatchNaiveProducts) {
    Rng rng(5);
    const std::size_t m = 5, n = 7, k = 6;
    const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng), bt = random_vec(n * k, rng),
               at = random_vec(k * m, rng);
    std::vector<double> c1(m * n, 0.0), c2(m * n, 0.0), c3(m * n, 0.0);
    kernels::gemm_nn(m, n, k, a.data(), b.data(), c1.data());
    kernels::gemm_nt(m, n, k, a.data(), bt.data(), c2.data());
    kernels::gemm_tn(m, n, k, at.data(), b.data(), c3.data());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s1 = 0, s2 = 0, s3 = 0;
            for (std::size_t p = 0; p < k; ++p) {
                s1 += a[i * k + p] * b[p * n + j];
                s2 += a[i * k + p] * bt[j * k + p];
                s3 += at[p * m + i] * b[p * n + j];
            }
            EXPECT_NEAR(c1[i * n + j], s1, 1e-12);
            EXPECT_NEAR(c2[i * n + j], s2, 1e-12);
            EXPECT_NEAR(c3[i * n + j], s3, 1e-12);
        }
}

TEST_F(Kernels, SelectRejectsUnknownNames) {
    EXPECT_FALSE(kernels::select("sse9"));
    EXPECT_TRUE(kernels::select("scalar"));
    EXPECT_STREQ(kernels::active().name, "scalar");
}

TEST_F(Kernels, ModelForwardIsBitIdenticalAcrossVariants) {
    const auto tables = simd_tables();
    if (tables.empty()) GTEST_SKIP() << "no SIMD variant on this build/CPU";
    ModelConfig cfg;
    cfg.num_scales = 2;
    cfg.layers_per_block = 2;
    cfg.growth_rate = 4;
    cfg.first_conv_filters = 8;
    cfg.convlstm_hidden = 4;
    cfg.input_size = 16;
    const ModelParams params = build_model(cfg);
    Tensor x({6, 1, 16, 16});
    Rng rng(3);
    for (auto& v : x.data()) v = rng.uniform();
    ASSERT_TRUE(kernels::select("scalar"));
    const Tensor ref = forward(params, x, {Mode::Eval, nullptr});
    for (const auto* t : tables) {
        ASSERT_TRUE(kernels::select(t->name));
        const Tensor got = forward(params, x, {Mode::Eval, nullptr});
        ASSERT_EQ(got.numel(), ref.numel());
        EXPECT_EQ(std::memcmp(got.data().data(), ref.data().data(), ref.numel() * sizeof(double)), 0) << t->name;
    }
}

}  // namespace
