#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "msseg/data.hpp"

namespace msseg {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

inline constexpr Rgb kFalsePositive{255, 0, 0};
inline constexpr Rgb kFalseNegative{0, 255, 0};

struct RgbImage {
    std::size_t height = 0, width = 0;
    std::vector<Rgb> pixels;  // row-major
};

/// Grayscale slice (intensity clamped to [0, 1]) with false positives in red
/// and false negatives in green. Without a reference mask, predicted lesion
/// pixels are drawn as false positives.
RgbImage overlay_slice(const Volume& v, const MaskVolume& pred, const MaskVolume* gt, std::size_t slice);

/// Binary PPM (P6, maxval 255).
std::vector<std::uint8_t> encode_ppm(const RgbImage& img);
RgbImage decode_ppm(std::span<const std::uint8_t> bytes);
void write_ppm(const RgbImage& img, const std::filesystem::path& path);

}  // namespace msseg
