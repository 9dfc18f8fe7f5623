#include "msseg/kernels.hpp"

namespace msseg::kernels {

namespace {

void axpy_scalar(std::size_t n, double a, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void accumulate_scalar(std::size_t n, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

double dot_scalar(std::size_t n, const double* x, const double* y) {
    double lane[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        lane[0] += x[i] * y[i];
        lane[1] += x[i + 1] * y[i + 1];
        lane[2] += x[i + 2] * y[i + 2];
        lane[3] += x[i + 3] * y[i + 3];
    }
    double s = (lane[0] + lane[1]) + (lane[2] + lane[3]);
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

void add_scalar(std::size_t n, const double* x, const double* y, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void mul_scalar(std::size_t n, const double* x, const double* y, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void scale_scalar(std::size_t n, double a, const double* x, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

void relu_scalar(std::size_t n, const double* x, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{"scalar",   axpy_scalar, accumulate_scalar, dot_scalar,
                                   add_scalar, mul_scalar,  scale_scalar,      relu_scalar};
    return table;
}

}  // namespace msseg::kernels
