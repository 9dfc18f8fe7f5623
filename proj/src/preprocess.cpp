#include <algorithm>
#include <stdexcept>

#include "msseg/data.hpp"

namespace msseg {

namespace {

void require_same_dims(const Volume& v, const MaskVolume& m, const char* op) {
    if (!(v.dims == m.dims)) {
        throw std::invalid_argument(std::string(op) + ": volume dims " + to_string(v.dims) + " differ from mask dims " +
                                    to_string(m.dims));
    }
}

}  // namespace

std::pair<Volume, MaskVolume> remove_black_slices(const Volume& v, const MaskVolume& m) {
    require_same_dims(v, m, "remove_black_slices");
    Volume out_v;
    MaskVolume out_m;
    out_v.meta = v.meta;
    std::uint32_t kept = 0;
    for (std::size_t s = 0; s < v.dims.slices; ++s) {
        const auto img = v.slice(s);
        if (std::all_of(img.begin(), img.end(), [](float f) { return f == 0.0f; })) continue;
        out_v.voxels.insert(out_v.voxels.end(), img.begin(), img.end());
        const auto lab = m.slice(s);
        out_m.labels.insert(out_m.labels.end(), lab.begin(), lab.end());
        ++kept;
    }
    if (kept == 0) throw std::invalid_argument("remove_black_slices: every slice is black");
    out_v.dims = {kept, v.dims.height, v.dims.width};
    out_m.dims = out_v.dims;
    return {std::move(out_v), std::move(out_m)};
}

ContentBox content_box(const Volume& v) {
    ContentBox box;
    box.top = v.dims.height;
    box.left = v.dims.width;
    for (std::size_t s = 0; s < v.dims.slices; ++s) {
        for (std::size_t y = 0; y < v.dims.height; ++y) {
            for (std::size_t x = 0; x < v.dims.width; ++x) {
                if (v.at(s, y, x) == 0.0f) continue;
                box.empty = false;
                box.top = std::min(box.top, y);
                box.bottom = std::max(box.bottom, y);
                box.left = std::min(box.left, x);
                box.right = std::max(box.right, x);
            }
        }
    }
    if (box.empty) box = ContentBox{};
    return box;
}

CropWindow roi_window(const Volume& v, std::size_t target_h, std::size_t target_w) {
    const std::size_t h = v.dims.height, w = v.dims.width;
    if (h < target_h || w < target_w) {
        throw std::invalid_argument("crop_to_roi: volume " + to_string(v.dims) + " smaller than target " +
                                    std::to_string(target_h) + "x" + std::to_string(target_w));
    }
    CropWindow win;
    win.height = target_h;
    win.width = target_w;
    win.content = content_box(v);
    const ContentBox& b = win.content;
    if (b.empty) {
        win.top = (h - target_h) / 2;
        win.left = (w - target_w) / 2;
        return win;
    }
    if (b.bottom - b.top + 1 > target_h || b.right - b.left + 1 > target_w) {
        throw std::invalid_argument("crop_to_roi: content box rows " + std::to_string(b.top) + ".." +
                                    std::to_string(b.bottom) + ", cols " + std::to_string(b.left) + ".." +
                                    std::to_string(b.right) + " does not fit in " + std::to_string(target_h) + "x" +
                                    std::to_string(target_w));
    }
    // Centre the window on the box, then clamp.
    auto place = [](std::size_t lo, std::size_t hi, std::size_t target, std::size_t extent) {
        const long long start = (static_cast<long long>(lo + hi + 1) - static_cast<long long>(target)) / 2;
        return static_cast<std::size_t>(std::clamp<long long>(start, 0, static_cast<long long>(extent - target)));
    };
    win.top = place(b.top, b.bottom, target_h, h);
    win.left = place(b.left, b.right, target_w, w);
    return win;
}

std::pair<Volume, MaskVolume> crop_to_roi(const Volume& v, const MaskVolume& m, std::size_t target_h,
                                          std::size_t target_w) {
    require_same_dims(v, m, "crop_to_roi");
    const CropWindow win = roi_window(v, target_h, target_w);
    const VolumeDims d{v.dims.slices, static_cast<std::uint32_t>(target_h), static_cast<std::uint32_t>(target_w)};
    Volume out_v = make_volume(d);
    out_v.meta = v.meta;
    MaskVolume out_m = make_mask(d);
    for (std::size_t s = 0; s < d.slices; ++s) {
        for (std::size_t y = 0; y < target_h; ++y) {
            const std::size_t src = (s * v.dims.height + win.top + y) * v.dims.width + win.left;
            const std::size_t dst = (s * target_h + y) * target_w;
            std::copy_n(v.voxels.begin() + static_cast<std::ptrdiff_t>(src), target_w,
                        out_v.voxels.begin() + static_cast<std::ptrdiff_t>(dst));
            std::copy_n(m.labels.begin() + static_cast<std::ptrdiff_t>(src), target_w,
                        out_m.labels.begin() + static_cast<std::ptrdiff_t>(dst));
        }
    }
    return {std::move(out_v), std::move(out_m)};
}

Volume normalize_intensity(const Volume& v) {
    if (v.voxels.empty()) throw std::invalid_argument("normalize_intensity: empty volume");
    const auto [mn, mx] = std::minmax_element(v.voxels.begin(), v.voxels.end());
    const double lo = *mn, hi = *mx;
    if (!(hi > lo)) throw std::invalid_argument("normalize_intensity: constant volume");
    Volume out = v;
    const double range = hi - lo;
    for (auto& f : out.voxels) f = static_cast<float>((static_cast<double>(f) - lo) / range);
    return out;
}

PreprocessResult preprocess(const Volume& v, const MaskVolume& m, std::size_t target) {
    PreprocessResult r;
    r.slices_in = v.dims.slices;
    auto [kept_v, kept_m] = remove_black_slices(v, m);
    r.slices_dropped = r.slices_in - kept_v.dims.slices;
    auto [crop_v, crop_m] = crop_to_roi(kept_v, kept_m, target, target);
    r.volume = normalize_intensity(crop_v);
    r.mask = std::move(crop_m);
    return r;
}

std::vector<Triplet> make_triplets(const Volume& v, const MaskVolume& m) {
    require_same_dims(v, m, "make_triplets");
    std::vector<Triplet> out;
    const std::size_t n = v.dims.slices;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({{i == 0 ? 0 : i - 1, i, i + 1 < n ? i + 1 : n - 1}});
    }
    return out;
}

Tensor pack_inputs(std::span<const SampleRef> samples) {
    if (samples.empty()) throw std::invalid_argument("pack_inputs: no samples");
    const VolumeDims d = samples.front().volume->dims;
    const std::size_t b = samples.size();
    const std::size_t plane = d.slice_size();
    Tensor t({3 * b, 1, d.height, d.width});
    auto out = t.data();
    for (std::size_t step = 0; step < 3; ++step) {
        for (std::size_t i = 0; i < b; ++i) {
            const auto& s = samples[i];
            if (s.volume->dims.height != d.height || s.volume->dims.width != d.width) {
                throw ShapeError("pack_inputs: mixed slice geometry in one batch");
            }
            const auto src = s.volume->slice(s.triplet.slices[step]);
            std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>((step * b + i) * plane));
        }
    }
    return t;
}

Tensor pack_targets(std::span<const SampleRef> samples) {
    if (samples.empty()) throw std::invalid_argument("pack_targets: no samples");
    const VolumeDims d = samples.front().mask->dims;
    const std::size_t plane = d.slice_size();
    Tensor t({samples.size(), 1, d.height, d.width});
    auto out = t.data();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto src = samples[i].mask->slice(samples[i].triplet.centre());
        std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(i * plane));
    }
    return t;
}

}  // namespace msseg
