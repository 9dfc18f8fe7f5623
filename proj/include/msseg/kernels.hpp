#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Inner-loop arithmetic used by every tensor op.
//
// Each kernel has a scalar reference and optional SIMD variants. Variants
// vectorize across independent outputs, and reductions (`dot`) use a fixed
// four-lane accumulation order that the scalar reference reproduces exactly,
// so all variants are bit-identical. Build with -ffp-contract=off.
namespace msseg::kernels {

struct KernelTable {
    const char* name;
    /// y += a * x
    void (*axpy)(std::size_t n, double a, const double* x, double* y);
    /// y += x
    void (*accumulate)(std::size_t n, const double* x, double* y);
    /// sum x*y, lanes i%4 accumulated separately then combined ((l0+l1)+(l2+l3)) + tail
    double (*dot)(std::size_t n, const double* x, const double* y);
    /// out = x + y
    void (*add)(std::size_t n, const double* x, const double* y, double* out);
    /// out = x * y
    void (*mul)(std::size_t n, const double* x, const double* y, double* out);
    /// out = a * x
    void (*scale)(std::size_t n, double a, const double* x, double* out);
    /// out = max(x, 0)
    void (*relu)(std::size_t n, const double* x, double* out);
};

const KernelTable& scalar_table();
/// nullptr when the variant was not compiled in.
const KernelTable* avx2_table();
const KernelTable* neon_table();

bool cpu_supports_avx2();

/// Kernel table used by the tensor ops. Chosen once at first use: the best
/// compiled variant the CPU supports, unless MSSEG_KERNELS=scalar|avx2|neon.
const KernelTable& active();
/// Overrides the selection ("scalar", "avx2", "neon", "auto"). Returns false
/// if the requested variant is unavailable on this build or CPU.
bool select(std::string_view name);

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
    active().axpy(x.size(), a, x.data(), y.data());
}
inline void accumulate(std::span<const double> x, std::span<double> y) {
    active().accumulate(x.size(), x.data(), y.data());
}
inline double dot(std::span<const double> x, std::span<const double> y) {
    return active().dot(x.size(), x.data(), y.data());
}

// Row-major GEMM accumulators. Dimensions: C is m x n.
/// C += A(m x k) * B(k x n)
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
/// C += A(m x k) * B(n x k)^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
/// C += A(k x m)^T * B(k x n)
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);

}  // namespace msseg::kernels
