#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "msseg/data.hpp"
#include "msseg/rng.hpp"

namespace msseg {

namespace {

constexpr std::size_t kPlacementAttempts = 2000;

struct Ellipsoid {
    double cz, cy, cx, az, ay, ax;

    // Normalised squared radius; < 1 inside.
    double rho(double z, double y, double x) const {
        const double dz = (z - cz) / az, dy = (y - cy) / ay, dx = (x - cx) / ax;
        return dz * dz + dy * dy + dx * dx;
    }
};

struct Sphere {
    double z, y, x, r;
};

}  // namespace

std::pair<Volume, MaskVolume> generate_phantom(const PhantomSpec& spec) {
    const VolumeDims d = spec.dims;
    if (d.slices == 0 || d.height == 0 || d.width == 0) throw std::invalid_argument("phantom dims must be positive");
    if (spec.radius_min <= 0.0 || spec.radius_max < spec.radius_min) {
        throw std::invalid_argument("phantom lesion radius range is invalid");
    }
    if (spec.lesions_max < spec.lesions_min) throw std::invalid_argument("phantom lesion count range is invalid");
    if (2 * spec.blank_slices >= d.slices) throw std::invalid_argument("phantom blank slices leave no brain");
    const double diameter = 2.0 * spec.radius_max;
    if (d.height < diameter || d.width < diameter) {
        throw std::invalid_argument("phantom dims smaller than the lesion diameter");
    }
    const double half_band = 0.5 * (kBrainBandHigh - kBrainBandLow);
    if (spec.texture_amplitude < 0.0 || spec.texture_amplitude > half_band) {
        throw std::invalid_argument("phantom texture amplitude must lie in [0, " + std::to_string(half_band) + "]");
    }

    Rng rng(spec.seed);
    Rng texture_rng = rng.split(1);
    Rng lesion_rng = rng.split(2);

    // The brain spans exactly the non-blank slices.
    const double brain_slices = static_cast<double>(d.slices - 2 * spec.blank_slices);
    const Ellipsoid brain{(d.slices - 1) / 2.0, (d.height - 1) / 2.0, (d.width - 1) / 2.0,
                          brain_slices / 2.0 + 0.5, 0.42 * d.height, 0.42 * d.width};

    Volume vol = make_volume(d);
    MaskVolume mask = make_mask(d);

    // Smooth texture: a few random plane waves.
    struct Wave {
        double kz, ky, kx, phase, weight;
    };
    std::vector<Wave> waves(4);
    for (auto& w : waves) {
        w = {texture_rng.uniform(0.1, 0.6), texture_rng.uniform(0.1, 0.6), texture_rng.uniform(0.1, 0.6),
             texture_rng.uniform(0.0, 2.0 * std::numbers::pi), texture_rng.uniform(0.5, 1.0)};
    }
    double weight_sum = 0.0;
    for (const auto& w : waves) weight_sum += w.weight;
    const double mid = 0.5 * (kBrainBandLow + kBrainBandHigh);

    auto index = [&](std::size_t z, std::size_t y, std::size_t x) { return (z * d.height + y) * d.width + x; };
    for (std::size_t z = 0; z < d.slices; ++z) {
        for (std::size_t y = 0; y < d.height; ++y) {
            for (std::size_t x = 0; x < d.width; ++x) {
                if (brain.rho(z, y, x) >= 1.0) continue;
                double t = 0.0;
                for (const auto& w : waves) t += w.weight * std::sin(w.kz * z + w.ky * y + w.kx * x + w.phase);
                vol.voxels[index(z, y, x)] = static_cast<float>(mid + spec.texture_amplitude * t / weight_sum);
            }
        }
    }

    const std::size_t n_lesions =
        spec.lesions_min + static_cast<std::size_t>(lesion_rng.below(spec.lesions_max - spec.lesions_min + 1));
    std::vector<Sphere> lesions;
    for (std::size_t l = 0; l < n_lesions; ++l) {
        bool placed = false;
        for (std::size_t attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
            const Sphere s{lesion_rng.uniform(0.0, d.slices - 1.0), lesion_rng.uniform(0.0, d.height - 1.0),
                           lesion_rng.uniform(0.0, d.width - 1.0), lesion_rng.uniform(spec.radius_min, spec.radius_max)};
            // Every lesion voxel must be brain.
            const double reach = s.r;
            bool inside = true;
            bool any_voxel = false;
            const auto lo = [](double c, double r) { return static_cast<long long>(std::floor(c - r)); };
            const auto hi = [](double c, double r) { return static_cast<long long>(std::ceil(c + r)); };
            for (long long z = lo(s.z, reach); z <= hi(s.z, reach) && inside; ++z) {
                for (long long y = lo(s.y, reach); y <= hi(s.y, reach) && inside; ++y) {
                    for (long long x = lo(s.x, reach); x <= hi(s.x, reach) && inside; ++x) {
                        const double dz = z - s.z, dy = y - s.y, dx = x - s.x;
                        const double r2 = dz * dz + dy * dy + dx * dx;
                        if (r2 > reach * reach) continue;
                        if (z < 0 || y < 0 || x < 0 || z >= d.slices || y >= d.height || x >= d.width ||
                            brain.rho(static_cast<double>(z), static_cast<double>(y), static_cast<double>(x)) >= 1.0) {
                            inside = false;
                        }
                        any_voxel = true;
                    }
                }
            }
            if (inside && any_voxel) {
                lesions.push_back(s);
                placed = true;
            }
        }
        if (!placed) {
            throw std::runtime_error("generate_phantom: could not place lesion " + std::to_string(l + 1) + " of " +
                                     std::to_string(n_lesions) + " after " + std::to_string(kPlacementAttempts) +
                                     " attempts; reduce the count or radius");
        }
    }

    for (const auto& s : lesions) {
        const auto z0 = static_cast<std::size_t>(std::max(0.0, std::floor(s.z - s.r)));
        const auto y0 = static_cast<std::size_t>(std::max(0.0, std::floor(s.y - s.r)));
        const auto x0 = static_cast<std::size_t>(std::max(0.0, std::floor(s.x - s.r)));
        for (std::size_t z = z0; z < d.slices && z <= s.z + s.r; ++z) {
            for (std::size_t y = y0; y < d.height && y <= s.y + s.r; ++y) {
                for (std::size_t x = x0; x < d.width && x <= s.x + s.r; ++x) {
                    const double dz = z - s.z, dy = y - s.y, dx = x - s.x;
                    const double r2 = dz * dz + dy * dy + dx * dx;
                    if (r2 > s.r * s.r) continue;
                    // Brightest at the centre, fading to the band floor at the rim.
                    const double t = 1.0 - std::sqrt(r2) / s.r;
                    vol.voxels[index(z, y, x)] =
                        static_cast<float>(kLesionBandLow + 0.25 * (kLesionBandHigh - kLesionBandLow) +
                                           0.75 * (kLesionBandHigh - kLesionBandLow) * t);
                    mask.labels[index(z, y, x)] = 1;
                }
            }
        }
    }
    return {std::move(vol), std::move(mask)};
}

}  // namespace msseg
