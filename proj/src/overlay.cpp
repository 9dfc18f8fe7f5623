#include "msseg/overlay.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <stdexcept>

namespace msseg {

RgbImage overlay_slice(const Volume& v, const MaskVolume& pred, const MaskVolume* gt, std::size_t slice) {
    if (!(v.dims == pred.dims) || (gt && !(gt->dims == v.dims))) {
        throw std::invalid_argument("overlay_slice: volume and mask dims differ");
    }
    if (slice >= v.dims.slices) throw std::out_of_range("overlay_slice: slice " + std::to_string(slice));
    RgbImage img{v.dims.height, v.dims.width, {}};
    img.pixels.resize(v.dims.slice_size());
    const auto base = v.slice(slice);
    const auto p = pred.slice(slice);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const auto g = static_cast<std::uint8_t>(std::lround(std::clamp(base[i], 0.0f, 1.0f) * 255.0f));
        const std::uint8_t truth = gt ? gt->slice(slice)[i] : 0;
        if (p[i] && !truth) {
            img.pixels[i] = kFalsePositive;
        } else if (!p[i] && truth) {
            img.pixels[i] = kFalseNegative;
        } else {
            img.pixels[i] = {g, g, g};
        }
    }
    return img;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& img) {
    const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + 3 * img.pixels.size());
    for (const auto& px : img.pixels) {
        out.push_back(px.r);
        out.push_back(px.g);
        out.push_back(px.b);
    }
    return out;
}

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
        std::string t;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
        return t;
    };
    if (token() != "P6") throw std::invalid_argument("decode_ppm: not a binary PPM");
    RgbImage img;
    img.width = std::stoul(token());
    img.height = std::stoul(token());
    if (token() != "255") throw std::invalid_argument("decode_ppm: maxval must be 255");
    ++pos;  // single whitespace before the raster
    if (bytes.size() - std::min(pos, bytes.size()) != 3 * img.width * img.height) {
        throw std::invalid_argument("decode_ppm: raster size mismatch");
    }
    img.pixels.resize(img.width * img.height);
    for (auto& px : img.pixels) {
        px = {bytes[pos], bytes[pos + 1], bytes[pos + 2]};
        pos += 3;
    }
    return img;
}

void write_ppm(const RgbImage& img, const std::filesystem::path& path) { write_file_atomic(path, encode_ppm(img)); }

}  // namespace msseg
