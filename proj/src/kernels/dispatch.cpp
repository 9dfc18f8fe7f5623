#include <atomic>
#include <cstdlib>
#include <string>

#include "msseg/kernels.hpp"

namespace msseg::kernels {

#ifndef MSSEG_WITH_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif
#ifndef MSSEG_WITH_NEON
const KernelTable* neon_table() { return nullptr; }
#endif

bool cpu_supports_avx2() {
#if defined(MSSEG_WITH_AVX2) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

namespace {

const KernelTable* resolve(std::string_view name) {
    if (name == "scalar") return &scalar_table();
    if (name == "avx2") return cpu_supports_avx2() ? avx2_table() : nullptr;
    if (name == "neon") return neon_table();
    if (name == "auto" || name.empty()) {
        if (cpu_supports_avx2()) return avx2_table();
        if (const KernelTable* t = neon_table()) return t;
        return &scalar_table();
    }
    return nullptr;
}

std::atomic<const KernelTable*>& slot() {
    static std::atomic<const KernelTable*> current{[] {
        const char* env = std::getenv("MSSEG_KERNELS");
        const KernelTable* t = resolve(env ? std::string_view(env) : std::string_view("auto"));
        return t ? t : resolve("auto");
    }()};
    return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

bool select(std::string_view name) {
    const KernelTable* t = resolve(name);
    if (!t) return false;
    slot().store(t, std::memory_order_relaxed);
    return true;
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    const auto axpy = active().axpy;
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double s = a[i * k + p];
            if (s != 0.0) axpy(n, s, b + p * n, crow);
        }
    }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    const auto dot = active().dot;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot(k, a + i * k, b + j * k);
    }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    const auto axpy = active().axpy;
    for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t i = 0; i < m; ++i) {
            const double s = a[p * m + i];
            if (s != 0.0) axpy(n, s, b + p * n, c + i * n);
        }
    }
}

}  // namespace msseg::kernels
