#pragma once

// Brute-force reference implementations written directly from the
// definitions, sharing no code with the library kernels.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "msseg/metrics.hpp"
#include "msseg/tensor.hpp"

namespace oracle {

using msseg::Tensor;

inline double get(const Tensor& t, std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    const auto& s = t.shape();
    return t.data()[((n * s[1] + c) * s[2] + y) * s[3] + x];
}

inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, std::size_t stride, std::size_t pad) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t f = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
    Tensor out({n, f, oh, ow});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < f; ++o)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    double s = bias ? bias->data()[o] : 0.0;
                    for (std::size_t i = 0; i < c; ++i)
                        for (std::size_t a = 0; a < kh; ++a)
                            for (std::size_t bb = 0; bb < kw; ++bb) {
                                const long iy = static_cast<long>(y * stride + a) - static_cast<long>(pad);
                                const long ix = static_cast<long>(xx * stride + bb) - static_cast<long>(pad);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd))
                                    continue;
                                s += get(x, b, i, iy, ix) * get(w, o, i, a, bb);
                            }
                    out.at(b, o, y, xx) = s;
                }
    return out;
}

// Scatter form: every input pixel stamps its weighted kernel.
inline Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor* bias, std::size_t stride) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t f = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    Tensor out({n, f, (h - 1) * stride + kh, (wd - 1) * stride + kw});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < f; ++o)
            for (std::size_t y = 0; y < out.dim(2); ++y)
                for (std::size_t xx = 0; xx < out.dim(3); ++xx) out.at(b, o, y, xx) = bias ? bias->data()[o] : 0.0;
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < wd; ++xx)
                    for (std::size_t o = 0; o < f; ++o)
                        for (std::size_t a = 0; a < kh; ++a)
                            for (std::size_t bb = 0; bb < kw; ++bb)
                                out.at(b, o, y * stride + a, xx * stride + bb) += get(x, b, i, y, xx) * get(w, i, o, a, bb);
    return out;
}

inline Tensor maxpool2d(const Tensor& x, std::size_t k, std::size_t stride) {
    const std::size_t oh = (x.dim(2) - k) / stride + 1, ow = (x.dim(3) - k) / stride + 1;
    Tensor out({x.dim(0), x.dim(1), oh, ow});
    for (std::size_t n = 0; n < x.dim(0); ++n)
        for (std::size_t c = 0; c < x.dim(1); ++c)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    double m = -std::numeric_limits<double>::infinity();
                    for (std::size_t a = 0; a < k; ++a)
                        for (std::size_t b = 0; b < k; ++b) m = std::max(m, get(x, n, c, y * stride + a, xx * stride + b));
                    out.at(n, c, y, xx) = m;
                }
    return out;
}

inline Tensor avgpool2d(const Tensor& x, std::size_t k, std::size_t stride) {
    const std::size_t oh = (x.dim(2) - k) / stride + 1, ow = (x.dim(3) - k) / stride + 1;
    Tensor out({x.dim(0), x.dim(1), oh, ow});
    for (std::size_t n = 0; n < x.dim(0); ++n)
        for (std::size_t c = 0; c < x.dim(1); ++c)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    double s = 0.0;
                    for (std::size_t a = 0; a < k; ++a)
                        for (std::size_t b = 0; b < k; ++b) s += get(x, n, c, y * stride + a, xx * stride + b);
                    out.at(n, c, y, xx) = s / static_cast<double>(k * k);
                }
    return out;
}

// Train-mode batch normalisation with biased batch variance.
inline Tensor batchnorm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    Tensor out(x.shape());
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const double m = static_cast<double>(n * h * w);
    for (std::size_t ch = 0; ch < c; ++ch) {
        double mean = 0.0;
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx) mean += get(x, b, ch, y, xx);
        mean /= m;
        double var = 0.0;
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx) var += (get(x, b, ch, y, xx) - mean) * (get(x, b, ch, y, xx) - mean);
        var /= m;
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx)
                    out.at(b, ch, y, xx) =
                        gamma.data()[ch] * (get(x, b, ch, y, xx) - mean) / std::sqrt(var + eps) + beta.data()[ch];
    }
    return out;
}

inline Tensor batchnorm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta, const std::vector<double>& mean,
                             const std::vector<double>& var, double eps) {
    Tensor out(x.shape());
    for (std::size_t b = 0; b < x.dim(0); ++b)
        for (std::size_t ch = 0; ch < x.dim(1); ++ch)
            for (std::size_t y = 0; y < x.dim(2); ++y)
                for (std::size_t xx = 0; xx < x.dim(3); ++xx)
                    out.at(b, ch, y, xx) = gamma.data()[ch] * (get(x, b, ch, y, xx) - mean[ch]) /
                                               std::sqrt(var[ch] + eps) +
                                           beta.data()[ch];
    return out;
}

inline msseg::ConfusionCounts confusion(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt) {
    msseg::ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == 1 && gt[i] == 1) ++c.tp;
        else if (pred[i] == 1 && gt[i] == 0) ++c.fp;
        else if (pred[i] == 0 && gt[i] == 1) ++c.fn;
        else ++c.tn;
    }
    return c;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace oracle
