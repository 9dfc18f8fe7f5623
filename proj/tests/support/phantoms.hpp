#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "msseg/data.hpp"
#include "msseg/trainer.hpp"

namespace phantoms {

/// Square phantoms without blank slices, ready for a model of input size `size`.
inline msseg::PhantomSpec spec(std::uint64_t seed, std::size_t slices, std::size_t size) {
    msseg::PhantomSpec s;
    s.seed = seed;
    s.dims = {static_cast<std::uint32_t>(slices), static_cast<std::uint32_t>(size), static_cast<std::uint32_t>(size)};
    s.blank_slices = 0;
    s.radius_min = size >= 32 ? 1.5 : 1.0;
    s.radius_max = size >= 32 ? 3.0 : 1.5;
    return s;
}

inline msseg::Dataset dataset(std::size_t count, std::uint64_t seed, std::size_t slices, std::size_t size) {
    msseg::Dataset d;
    for (std::size_t i = 0; i < count; ++i) {
        auto [v, m] = msseg::generate_phantom(spec(seed + i, slices, size));
        d.add("ph" + std::to_string(i), msseg::normalize_intensity(v), std::move(m));
    }
    return d;
}

/// Writes `patients` x `timepoints` phantoms and their manifest into `dir`.
inline std::vector<msseg::ManifestEntry> write_manifest(const std::filesystem::path& dir, std::size_t patients,
                                                        std::size_t timepoints, std::size_t slices,
                                                        std::size_t size, std::uint64_t seed = 100) {
    std::vector<msseg::ManifestEntry> out;
    std::uint64_t s = seed;
    for (std::size_t p = 1; p <= patients; ++p) {
        for (std::size_t t = 1; t <= timepoints; ++t) {
            const std::string id = "p" + std::to_string(p) + "_t" + std::to_string(t);
            auto [v, m] = msseg::generate_phantom(spec(s++, slices, size));
            msseg::save_volume(msseg::normalize_intensity(v), dir / (id + ".vol"));
            msseg::save_mask(m, dir / (id + ".msk"));
            out.push_back({id, "p" + std::to_string(p), static_cast<int>(t), dir / (id + ".vol"), dir / (id + ".msk")});
        }
    }
    msseg::save_manifest(out, dir / "manifest.tsv");
    return out;
}

}  // namespace phantoms
