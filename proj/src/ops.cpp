#include "msseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "msseg/kernels.hpp"

namespace msseg::ops {

namespace {

struct Dims4 {
    std::size_t n, c, h, w;
};

Dims4 dims4(const Tensor& x, const char* op) {
    if (x.rank() != 4) {
        throw ShapeError(std::string(op) + ": expected rank-4 (N,C,H,W) tensor, got " + to_string(x.shape()));
    }
    const auto& s = x.shape();
    return {s[0], s[1], s[2], s[3]};
}

template <typename Backward>
void attach(Tensor& out, bool track, Backward&& bw) {
    if (!track) return;
    out.set_requires_grad(true);
    Graph::current()->record(out, std::forward<Backward>(bw));
}

// Unfolds one image (C, H, W) into columns (C*kh*kw, oh*ow).
void im2col(const double* img, std::size_t c, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            std::size_t stride, std::size_t pad, std::size_t oh, std::size_t ow, double* col) {
    const std::size_t plane = oh * ow;
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t ki = 0; ki < kh; ++ki) {
            for (std::size_t kj = 0; kj < kw; ++kj) {
                double* row = col + ((ci * kh + ki) * kw + kj) * plane;
                for (std::size_t y = 0; y < oh; ++y) {
                    const auto iy = static_cast<std::ptrdiff_t>(y * stride + ki) - static_cast<std::ptrdiff_t>(pad);
                    double* dst = row + y * ow;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                        std::fill(dst, dst + ow, 0.0);
                        continue;
                    }
                    const double* src = img + (ci * h + static_cast<std::size_t>(iy)) * w;
                    for (std::size_t x = 0; x < ow; ++x) {
                        const auto ix =
                            static_cast<std::ptrdiff_t>(x * stride + kj) - static_cast<std::ptrdiff_t>(pad);
                        dst[x] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? 0.0 : src[ix];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters columns back into an image, accumulating.
void col2im(const double* col, std::size_t c, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            std::size_t stride, std::size_t pad, std::size_t oh, std::size_t ow, double* img) {
    const std::size_t plane = oh * ow;
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t ki = 0; ki < kh; ++ki) {
            for (std::size_t kj = 0; kj < kw; ++kj) {
                const double* row = col + ((ci * kh + ki) * kw + kj) * plane;
                for (std::size_t y = 0; y < oh; ++y) {
                    const auto iy = static_cast<std::ptrdiff_t>(y * stride + ki) - static_cast<std::ptrdiff_t>(pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    double* dst = img + (ci * h + static_cast<std::size_t>(iy)) * w;
                    const double* src = row + y * ow;
                    for (std::size_t x = 0; x < ow; ++x) {
                        const auto ix =
                            static_cast<std::ptrdiff_t>(x * stride + kj) - static_cast<std::ptrdiff_t>(pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ix] += src[x];
                    }
                }
            }
        }
    }
}

bool is_pointwise(std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad) {
    return kh == 1 && kw == 1 && stride == 1 && pad == 0;
}

void check_bias(const Tensor& bias, std::size_t channels, const char* op) {
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != channels)) {
        throw ShapeError(std::string(op) + ": bias shape " + to_string(bias.shape()) + " does not match " +
                         std::to_string(channels) + " output channels");
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride, std::size_t pad) {
    const auto [n, c, h, w] = dims4(x, "conv2d");
    const auto [f, wc, kh, kw] = dims4(weight, "conv2d");
    if (wc != c) {
        throw ShapeError("conv2d: input has " + std::to_string(c) + " channels but weight " +
                         to_string(weight.shape()) + " expects " + std::to_string(wc));
    }
    if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
    if (kh > h + 2 * pad || kw > w + 2 * pad) {
        throw ShapeError("conv2d: kernel " + to_string(weight.shape()) + " larger than padded input " +
                         to_string(x.shape()));
    }
    check_bias(bias, f, "conv2d");
    const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
    const std::size_t ow = (w + 2 * pad - kw) / stride + 1;
    const std::size_t k = c * kh * kw;
    const std::size_t plane = oh * ow;
    const bool pointwise = is_pointwise(kh, kw, stride, pad);

    Tensor out({n, f, oh, ow});
    auto od = out.data();
    const auto xd = x.data();
    const auto wd = weight.data();
    std::vector<double> col(pointwise ? 0 : k * plane);
    for (std::size_t b = 0; b < n; ++b) {
        const double* xb = xd.data() + b * c * h * w;
        double* ob = od.data() + b * f * plane;
        if (bias.defined()) {
            const auto bd = bias.data();
            for (std::size_t fi = 0; fi < f; ++fi) std::fill(ob + fi * plane, ob + (fi + 1) * plane, bd[fi]);
        }
        const double* cols = xb;
        if (!pointwise) {
            im2col(xb, c, h, w, kh, kw, stride, pad, oh, ow, col.data());
            cols = col.data();
        }
        kernels::gemm_nn(f, plane, k, wd.data(), cols, ob);
    }

    attach(out, needs_grad({&x, &weight, &bias}), [=]() mutable {
        const auto gy = out.grad();
        const auto xd = x.data();
        const auto wd = weight.data();
        std::vector<double> col(pointwise ? 0 : k * plane);
        std::vector<double> dcol(k * plane);
        for (std::size_t b = 0; b < n; ++b) {
            const double* xb = xd.data() + b * c * h * w;
            const double* gb = gy.data() + b * f * plane;
            if (bias.defined() && bias.requires_grad()) {
                auto gbias = bias.ensure_grad();
                for (std::size_t fi = 0; fi < f; ++fi) {
                    double s = 0.0;
                    for (std::size_t p = 0; p < plane; ++p) s += gb[fi * plane + p];
                    gbias[fi] += s;
                }
            }
            if (weight.requires_grad()) {
                const double* cols = xb;
                if (!pointwise) {
                    im2col(xb, c, h, w, kh, kw, stride, pad, oh, ow, col.data());
                    cols = col.data();
                }
                kernels::gemm_nt(f, k, plane, gb, cols, weight.ensure_grad().data());
            }
            if (x.requires_grad()) {
                double* gx = x.ensure_grad().data() + b * c * h * w;
                if (pointwise) {
                    kernels::gemm_tn(k, plane, f, wd.data(), gb, gx);
                } else {
                    std::fill(dcol.begin(), dcol.end(), 0.0);
                    kernels::gemm_tn(k, plane, f, wd.data(), gb, dcol.data());
                    col2im(dcol.data(), c, h, w, kh, kw, stride, pad, oh, ow, gx);
                }
            }
        }
    });
    return out;
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride) {
    const auto [n, c, h, w] = dims4(x, "conv_transpose2d");
    const auto [wc, f, kh, kw] = dims4(weight, "conv_transpose2d");
    if (wc != c) {
        throw ShapeError("conv_transpose2d: input has " + std::to_string(c) + " channels but weight " +
                         to_string(weight.shape()) + " expects " + std::to_string(wc));
    }
    if (stride == 0) throw std::invalid_argument("conv_transpose2d: stride must be positive");
    check_bias(bias, f, "conv_transpose2d");
    const std::size_t oh = (h - 1) * stride + kh;
    const std::size_t ow = (w - 1) * stride + kw;
    const std::size_t fk = f * kh * kw;
    const std::size_t plane = h * w;
    const std::size_t oplane = oh * ow;

    Tensor out({n, f, oh, ow});
    auto od = out.data();
    const auto xd = x.data();
    const auto wd = weight.data();
    std::vector<double> col(fk * plane);
    for (std::size_t b = 0; b < n; ++b) {
        double* ob = od.data() + b * f * oplane;
        std::fill(col.begin(), col.end(), 0.0);
        kernels::gemm_tn(fk, plane, c, wd.data(), xd.data() + b * c * plane, col.data());
        col2im(col.data(), f, oh, ow, kh, kw, stride, 0, h, w, ob);
        if (bias.defined()) {
            const auto bd = bias.data();
            for (std::size_t fi = 0; fi < f; ++fi) {
                for (std::size_t p = 0; p < oplane; ++p) ob[fi * oplane + p] += bd[fi];
            }
        }
    }

    attach(out, needs_grad({&x, &weight, &bias}), [=]() mutable {
        const auto gy = out.grad();
        const auto xd = x.data();
        const auto wd = weight.data();
        std::vector<double> dcol(fk * plane);
        for (std::size_t b = 0; b < n; ++b) {
            const double* gb = gy.data() + b * f * oplane;
            if (bias.defined() && bias.requires_grad()) {
                auto gbias = bias.ensure_grad();
                for (std::size_t fi = 0; fi < f; ++fi) {
                    double s = 0.0;
                    for (std::size_t p = 0; p < oplane; ++p) s += gb[fi * oplane + p];
                    gbias[fi] += s;
                }
            }
            im2col(gb, f, oh, ow, kh, kw, stride, 0, h, w, dcol.data());
            if (weight.requires_grad()) {
                kernels::gemm_nt(c, fk, plane, xd.data() + b * c * plane, dcol.data(), weight.ensure_grad().data());
            }
            if (x.requires_grad()) {
                kernels::gemm_nn(c, plane, fk, wd.data(), dcol.data(), x.ensure_grad().data() + b * c * plane);
            }
        }
    });
    return out;
}

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, RunningStats* stats, Mode mode,
                   double eps, double momentum) {
    const auto [n, c, h, w] = dims4(x, "batchnorm2d");
    if (gamma.numel() != c || beta.numel() != c) {
        throw ShapeError("batchnorm2d: gamma/beta sizes " + to_string(gamma.shape()) + "/" + to_string(beta.shape()) +
                         " do not match " + std::to_string(c) + " channels");
    }
    const std::size_t plane = h * w;
    const std::size_t m = n * plane;
    const auto xd = x.data();
    const auto gd = gamma.data();
    const auto bd = beta.data();

    std::vector<double> mean(c), invstd(c);
    if (mode == Mode::Train) {
        if (m < 2) throw ShapeError("batchnorm2d: train mode needs at least 2 values per channel");
        for (std::size_t ci = 0; ci < c; ++ci) {
            double s = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                const double* p = xd.data() + (b * c + ci) * plane;
                for (std::size_t i = 0; i < plane; ++i) s += p[i];
            }
            const double mu = s / static_cast<double>(m);
            double sq = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                const double* p = xd.data() + (b * c + ci) * plane;
                for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mu) * (p[i] - mu);
            }
            const double var = sq / static_cast<double>(m);
            mean[ci] = mu;
            invstd[ci] = 1.0 / std::sqrt(var + eps);
            if (stats) {
                if (!stats->initialized()) *stats = RunningStats::identity(c);
                const double unbiased = sq / static_cast<double>(m - 1);
                stats->mean[ci] = (1.0 - momentum) * stats->mean[ci] + momentum * mu;
                stats->var[ci] = (1.0 - momentum) * stats->var[ci] + momentum * unbiased;
            }
        }
    } else {
        if (!stats || !stats->initialized()) {
            throw std::logic_error(
                "batchnorm2d: eval mode needs running statistics; initialise them to mean 0 / variance 1 "
                "(RunningStats::identity) or run a train-mode pass first");
        }
        if (stats->mean.size() != c) throw ShapeError("batchnorm2d: running statistics channel mismatch");
        for (std::size_t ci = 0; ci < c; ++ci) {
            mean[ci] = stats->mean[ci];
            invstd[ci] = 1.0 / std::sqrt(stats->var[ci] + eps);
        }
    }

    Tensor out(x.shape());
    auto od = out.data();
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ci = 0; ci < c; ++ci) {
            const double* p = xd.data() + (b * c + ci) * plane;
            double* q = od.data() + (b * c + ci) * plane;
            for (std::size_t i = 0; i < plane; ++i) q[i] = gd[ci] * ((p[i] - mean[ci]) * invstd[ci]) + bd[ci];
        }
    }

    attach(out, needs_grad({&x, &gamma, &beta}), [=]() mutable {
        const auto gy = out.grad();
        const auto xd = x.data();
        const auto gd = gamma.data();
        for (std::size_t ci = 0; ci < c; ++ci) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                const std::size_t off = (b * c + ci) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double xhat = (xd[off + i] - mean[ci]) * invstd[ci];
                    sum_dy += gy[off + i];
                    sum_dy_xhat += gy[off + i] * xhat;
                }
            }
            if (gamma.requires_grad()) gamma.ensure_grad()[ci] += sum_dy_xhat;
            if (beta.requires_grad()) beta.ensure_grad()[ci] += sum_dy;
            if (!x.requires_grad()) continue;
            auto gx = x.ensure_grad();
            const double md = static_cast<double>(m);
            for (std::size_t b = 0; b < n; ++b) {
                const std::size_t off = (b * c + ci) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    if (mode == Mode::Train) {
                        const double xhat = (xd[off + i] - mean[ci]) * invstd[ci];
                        gx[off + i] +=
                            gd[ci] * invstd[ci] / md * (md * gy[off + i] - sum_dy - xhat * sum_dy_xhat);
                    } else {
                        gx[off + i] += gy[off + i] * gd[ci] * invstd[ci];
                    }
                }
            }
        }
    });
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out(x.shape());
    kernels::active().relu(x.numel(), x.data().data(), out.data().data());
    attach(out, needs_grad({&x}), [=]() mutable {
        const auto gy = out.grad();
        const auto xd = x.data();
        auto gx = x.ensure_grad();
        for (std::size_t i = 0; i < gx.size(); ++i) {
            if (xd[i] > 0.0) gx[i] += gy[i];
        }
    });
    return out;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out(x.shape());
    const auto xd = x.data();
    auto od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i) {
        const double v = xd[i];
        if (v >= 0.0) {
            od[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            od[i] = e / (1.0 + e);
        }
    }
    attach(out, needs_grad({&x}), [=]() mutable {
        const auto gy = out.grad();
        const auto yd = out.data();
        auto gx = x.ensure_grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * yd[i] * (1.0 - yd[i]);
    });
    return out;
}

Tensor tanh(const Tensor& x) {
    Tensor out(x.shape());
    const auto xd = x.data();
    auto od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = std::tanh(xd[i]);
    attach(out, needs_grad({&x}), [=]() mutable {
        const auto gy = out.grad();
        const auto yd = out.data();
        auto gx = x.ensure_grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * (1.0 - yd[i] * yd[i]);
    });
    return out;
}

Tensor softmax_channels(const Tensor& x) {
    const auto [n, k, h, w] = dims4(x, "softmax_channels");
    if (k < 2) throw ShapeError("softmax_channels: need at least 2 channels, got " + to_string(x.shape()));
    const std::size_t plane = h * w;
    Tensor out(x.shape());
    const auto xd = x.data();
    auto od = out.data();
    for (std::size_t b = 0; b < n; ++b) {
        const std::size_t base = b * k * plane;
        for (std::size_t p = 0; p < plane; ++p) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, xd[base + j * plane + p]);
            double z = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                const double e = std::exp(xd[base + j * plane + p] - mx);
                od[base + j * plane + p] = e;
                z += e;
            }
            for (std::size_t j = 0; j < k; ++j) od[base + j * plane + p] /= z;
        }
    }
    attach(out, needs_grad({&x}), [=]() mutable {
        const auto gy = out.grad();
        const auto yd = out.data();
        auto gx = x.ensure_grad();
        for (std::size_t b = 0; b < n; ++b) {
            const std::size_t base = b * k * plane;
            for (std::size_t p = 0; p < plane; ++p) {
                double s = 0.0;
                for (std::size_t j = 0; j < k; ++j) s += gy[base + j * plane + p] * yd[base + j * plane + p];
                for (std::size_t j = 0; j < k; ++j) {
                    const std::size_t i = base + j * plane + p;
                    gx[i] += yd[i] * (gy[i] - s);
                }
            }
        }
    });
    return out;
}

namespace {

std::pair<std::size_t, std::size_t> pool_extent(const Tensor& x, std::size_t k, std::size_t stride, const char* op) {
    const auto [n, c, h, w] = dims4(x, op);
    if (k == 0 || stride == 0) throw std::invalid_argument(std::string(op) + ": window and stride must be positive");
    if (k > h || k > w) {
        throw ShapeError(std::string(op) + ": window " + std::to_string(k) + " exceeds spatial extent of " +
                         to_string(x.shape()));
    }
    return {(h - k) / stride + 1, (w - k) / stride + 1};
}

}  // namespace

Tensor maxpool2d(const Tensor& x, std::size_t k, std::size_t stride) {
    const auto [oh, ow] = pool_extent(x, k, stride, "maxpool2d");
    const auto [n, c, h, w] = dims4(x, "maxpool2d");
    Tensor out({n, c, oh, ow});
    std::vector<std::size_t> argmax(out.numel());
    const auto xd = x.data();
    auto od = out.data();
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const std::size_t base = plane * h * w;
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xo = 0; xo < ow; ++xo, ++o) {
                std::size_t best = base + (y * stride) * w + xo * stride;
                for (std::size_t i = 0; i < k; ++i) {
                    for (std::size_t j = 0; j < k; ++j) {
                        const std::size_t idx = base + (y * stride + i) * w + xo * stride + j;
                        if (xd[idx] > xd[best]) best = idx;
                    }
                }
                argmax[o] = best;
                od[o] = xd[best];
            }
        }
    }
    attach(out, needs_grad({&x}), [=, argmax = std::move(argmax)]() mutable {
        const auto gy = out.grad();
        auto gx = x.ensure_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) gx[argmax[i]] += gy[i];
    });
    return out;
}

Tensor avgpool2d(const Tensor& x, std::size_t k, std::size_t stride) {
    const auto [oh, ow] = pool_extent(x, k, stride, "avgpool2d");
    const auto [n, c, h, w] = dims4(x, "avgpool2d");
    const double inv = 1.0 / static_cast<double>(k * k);
    Tensor out({n, c, oh, ow});
    const auto xd = x.data();
    auto od = out.data();
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const std::size_t base = plane * h * w;
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xo = 0; xo < ow; ++xo, ++o) {
                double s = 0.0;
                for (std::size_t i = 0; i < k; ++i) {
                    for (std::size_t j = 0; j < k; ++j) s += xd[base + (y * stride + i) * w + xo * stride + j];
                }
                od[o] = s * inv;
            }
        }
    }
    attach(out, needs_grad({&x}), [=]() mutable {
        const auto gy = out.grad();
        auto gx = x.ensure_grad();
        std::size_t o = 0;
        for (std::size_t plane = 0; plane < n * c; ++plane) {
            const std::size_t base = plane * h * w;
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t xo = 0; xo < ow; ++xo, ++o) {
                    const double g = gy[o] * inv;
                    for (std::size_t i = 0; i < k; ++i) {
                        for (std::size_t j = 0; j < k; ++j) gx[base + (y * stride + i) * w + xo * stride + j] += g;
                    }
                }
            }
        }
    });
    return out;
}

Tensor dropout2d(const Tensor& x, double p, Mode mode, Rng& rng) {
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout2d: p must lie in [0, 1), got " + std::to_string(p));
    if (mode == Mode::Eval || p == 0.0) return x;
    const auto [n, c, h, w] = dims4(x, "dropout2d");
    const std::size_t plane = h * w;
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> scale(n * c);
    for (auto& s : scale) s = rng.uniform() < p ? 0.0 : keep_scale;

    Tensor out(x.shape());
    const auto xd = x.data();
    auto od = out.data();
    for (std::size_t i = 0; i < n * c; ++i) {
        kernels::active().scale(plane, scale[i], xd.data() + i * plane, od.data() + i * plane);
    }
    attach(out, needs_grad({&x}), [=, scale = std::move(scale)]() mutable {
        const auto gy = out.grad();
        auto gx = x.ensure_grad();
        for (std::size_t i = 0; i < scale.size(); ++i) {
            if (scale[i] != 0.0) kernels::active().axpy(plane, scale[i], gy.data() + i * plane, gx.data() + i * plane);
        }
    });
    return out;
}

Tensor concat_channels(std::span<const Tensor> xs) {
    if (xs.empty()) throw ShapeError("concat_channels: no inputs");
    if (xs.size() == 1) return xs[0];
    const auto [n, c0, h, w] = dims4(xs[0], "concat_channels");
    std::size_t total = 0;
    for (const auto& t : xs) {
        const auto d = dims4(t, "concat_channels");
        if (d.n != n || d.h != h || d.w != w) {
            throw ShapeError("concat_channels: " + to_string(t.shape()) + " incompatible with " +
                             to_string(xs[0].shape()));
        }
        total += d.c;
    }
    const std::size_t plane = h * w;
    Tensor out({n, total, h, w});
    auto od = out.data();
    std::vector<Tensor> inputs(xs.begin(), xs.end());
    for (std::size_t b = 0; b < n; ++b) {
        double* dst = od.data() + b * total * plane;
        for (const auto& t : inputs) {
            const std::size_t len = t.dim(1) * plane;
            const double* src = t.data().data() + b * len;
            std::copy(src, src + len, dst);
            dst += len;
        }
    }
    attach(out, needs_grad(xs), [=]() mutable {
        const auto gy = out.grad();
        for (std::size_t b = 0; b < n; ++b) {
            const double* src = gy.data() + b * total * plane;
            for (auto& t : inputs) {
                const std::size_t len = t.dim(1) * plane;
                if (t.requires_grad()) kernels::active().accumulate(len, src, t.ensure_grad().data() + b * len);
                src += len;
            }
        }
    });
    return out;
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end) {
    const auto [n, c, h, w] = dims4(x, "slice_channels");
    if (begin >= end || end > c) {
        throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + to_string(x.shape()));
    }
    const std::size_t plane = h * w;
    const std::size_t oc = end - begin;
    Tensor out({n, oc, h, w});
    const auto xd = x.data();
    auto od = out.data();
    for (std::size_t b = 0; b < n; ++b) {
        const double* src = xd.data() + (b * c + begin) * plane;
        std::copy(src, src + oc * plane, od.data() + b * oc * plane);
    }
    attach(out, needs_grad({&x}), [=]() mutable {
        const auto gy = out.grad();
        auto gx = x.ensure_grad();
        for (std::size_t b = 0; b < n; ++b) {
            kernels::active().accumulate(oc * plane, gy.data() + b * oc * plane, gx.data() + (b * c + begin) * plane);
        }
    });
    return out;
}

Tensor concat_batch(std::span<const Tensor> xs) {
    if (xs.empty()) throw ShapeError("concat_batch: no inputs");
    if (xs.size() == 1) return xs[0];
    Shape shape = xs[0].shape();
    std::size_t total = 0;
    for (const auto& t : xs) {
        if (t.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), t.shape().begin() + 1)) {
            throw ShapeError("concat_batch: " + to_string(t.shape()) + " incompatible with " + to_string(shape));
        }
        total += t.dim(0);
    }
    shape[0] = total;
    Tensor out(shape);
    auto od = out.data();
    std::vector<Tensor> inputs(xs.begin(), xs.end());
    std::size_t off = 0;
    for (const auto& t : inputs) {
        std::copy(t.data().begin(), t.data().end(), od.begin() + static_cast<std::ptrdiff_t>(off));
        off += t.numel();
    }
    attach(out, needs_grad(xs), [=]() mutable {
        const auto gy = out.grad();
        std::size_t off = 0;
        for (auto& t : inputs) {
            if (t.requires_grad()) kernels::active().accumulate(t.numel(), gy.data() + off, t.ensure_grad().data());
            off += t.numel();
        }
    });
    return out;
}

Tensor slice_batch(const Tensor& x, std::size_t begin, std::size_t end) {
    const Shape& s = x.shape();
    if (s.empty() || begin >= end || end > s[0]) {
        throw ShapeError("slice_batch: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + to_string(s));
    }
    if (begin == 0 && end == s[0]) return x;
    const std::size_t item = x.numel() / s[0];
    Shape shape = s;
    shape[0] = end - begin;
    Tensor out(shape);
    const auto xd = x.data();
    std::copy(xd.begin() + static_cast<std::ptrdiff_t>(begin * item),
              xd.begin() + static_cast<std::ptrdiff_t>(end * item), out.data().begin());
    attach(out, needs_grad({&x}), [=]() mutable {
        kernels::active().accumulate(out.numel(), out.grad().data(), x.ensure_grad().data() + begin * item);
    });
    return out;
}

Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
    if (factor == 0) throw std::invalid_argument("upsample_nearest: factor must be positive");
    if (factor == 1) return x;
    const auto [n, c, h, w] = dims4(x, "upsample_nearest");
    const std::size_t oh = h * factor, ow = w * factor;
    Tensor out({n, c, oh, ow});
    const auto xd = x.data();
    auto od = out.data();
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        for (std::size_t y = 0; y < oh; ++y) {
            const double* src = xd.data() + (plane * h + y / factor) * w;
            double* dst = od.data() + (plane * oh + y) * ow;
            for (std::size_t xo = 0; xo < ow; ++xo) dst[xo] = src[xo / factor];
        }
    }
    attach(out, needs_grad({&x}), [=]() mutable {
        const auto gy = out.grad();
        auto gx = x.ensure_grad();
        for (std::size_t plane = 0; plane < n * c; ++plane) {
            for (std::size_t y = 0; y < oh; ++y) {
                const double* src = gy.data() + (plane * oh + y) * ow;
                double* dst = gx.data() + (plane * h + y / factor) * w;
                for (std::size_t xo = 0; xo < ow; ++xo) dst[xo / factor] += src[xo];
            }
        }
    });
    return out;
}

Tensor crop2d(const Tensor& x, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
    const auto [n, c, h, w] = dims4(x, "crop2d");
    if (top + height > h || left + width > w || height == 0 || width == 0) {
        throw ShapeError("crop2d: window exceeds " + to_string(x.shape()));
    }
    if (top == 0 && left == 0 && height == h && width == w) return x;
    Tensor out({n, c, height, width});
    const auto xd = x.data();
    auto od = out.data();
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        for (std::size_t y = 0; y < height; ++y) {
            const double* src = xd.data() + (plane * h + top + y) * w + left;
            std::copy(src, src + width, od.data() + (plane * height + y) * width);
        }
    }
    attach(out, needs_grad({&x}), [=]() mutable {
        const auto gy = out.grad();
        auto gx = x.ensure_grad();
        for (std::size_t plane = 0; plane < n * c; ++plane) {
            for (std::size_t y = 0; y < height; ++y) {
                kernels::active().accumulate(width, gy.data() + (plane * height + y) * width,
                                             gx.data() + (plane * h + top + y) * w + left);
            }
        }
    });
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("add: shape " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
    Tensor out(a.shape());
    kernels::active().add(a.numel(), a.data().data(), b.data().data(), out.data().data());
    attach(out, needs_grad({&a, &b}), [=]() mutable {
        const auto gy = out.grad();
        if (a.requires_grad()) kernels::accumulate(gy, a.ensure_grad());
        if (b.requires_grad()) kernels::accumulate(gy, b.ensure_grad());
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("mul: shape " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
    Tensor out(a.shape());
    kernels::active().mul(a.numel(), a.data().data(), b.data().data(), out.data().data());
    attach(out, needs_grad({&a, &b}), [=]() mutable {
        const auto gy = out.grad();
        std::vector<double> tmp(gy.size());
        if (a.requires_grad()) {
            kernels::active().mul(tmp.size(), gy.data(), b.data().data(), tmp.data());
            kernels::accumulate(tmp, a.ensure_grad());
        }
        if (b.requires_grad()) {
            kernels::active().mul(tmp.size(), gy.data(), a.data().data(), tmp.data());
            kernels::accumulate(tmp, b.ensure_grad());
        }
    });
    return out;
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    Tensor out = Tensor::scalar(s);
    attach(out, needs_grad({&x}), [=]() mutable {
        const double g = out.grad()[0];
        for (auto& gx : x.ensure_grad()) gx += g;
    });
    return out;
}

void sgd_step(std::span<Tensor> params, double lr, double weight_decay) {
    for (const auto& p : params) {
        if (!p.has_grad()) {
            throw std::logic_error("sgd_step: parameter '" + (p.name().empty() ? std::string("<unnamed>") : p.name()) +
                                   "' has no gradient");
        }
    }
    for (auto& p : params) {
        auto v = p.data();
        auto g = p.grad();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = v[i] - lr * (g[i] + weight_decay * v[i]);
        std::fill(g.begin(), g.end(), 0.0);
    }
}

}  // namespace msseg::ops
