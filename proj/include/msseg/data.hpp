#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "msseg/tensor.hpp"

namespace msseg {

struct VolumeDims {
    std::uint32_t slices = 0;
    std::uint32_t height = 0;
    std::uint32_t width = 0;

    std::size_t slice_size() const { return std::size_t{height} * width; }
    std::size_t voxels() const { return std::size_t{slices} * slice_size(); }
    bool operator==(const VolumeDims&) const = default;
};

std::string to_string(const VolumeDims& d);

/// Grey-level stack, slice-major then row-major.
struct Volume {
    VolumeDims dims;
    std::vector<float> voxels;
    std::map<std::string, std::string> meta;

    std::span<const float> slice(std::size_t s) const {
        return std::span<const float>(voxels).subspan(s * dims.slice_size(), dims.slice_size());
    }
    float at(std::size_t s, std::size_t y, std::size_t x) const {
        return voxels[(s * dims.height + y) * dims.width + x];
    }
};

/// Binary lesion labels matching a Volume.
struct MaskVolume {
    VolumeDims dims;
    std::vector<std::uint8_t> labels;

    std::span<const std::uint8_t> slice(std::size_t s) const {
        return std::span<const std::uint8_t>(labels).subspan(s * dims.slice_size(), dims.slice_size());
    }
    std::uint8_t at(std::size_t s, std::size_t y, std::size_t x) const {
        return labels[(s * dims.height + y) * dims.width + x];
    }
};

Volume make_volume(VolumeDims dims, float fill = 0.0f);
MaskVolume make_mask(VolumeDims dims);

// ---------------------------------------------------------------------------
// Binary files
//
//   magic (6 bytes: "MSVOL1" / "MSMSK1") | version u8 = 1 |
//   slices u32 LE | height u32 LE | width u32 LE | payload
//
// Volume payload is little-endian IEEE-754 binary32, mask payload is one byte
// per voxel in {0, 1}. Writes go to a sibling temp file that is renamed over
// the destination.

inline constexpr std::uint8_t kVolumeFormatVersion = 1;
inline constexpr std::size_t kVolumeHeaderBytes = 6 + 1 + 3 * 4;
inline constexpr std::size_t kMaxVoxels = std::size_t{1} << 31;

enum class FormatErrc {
    io_error = 1,
    bad_magic,
    unsupported_version,
    truncated,
    dim_overflow,
    invalid_payload,
    trailing_data,
};

const char* to_string(FormatErrc code);

class FormatError : public std::runtime_error {
public:
    FormatError(FormatErrc code, const std::string& what);
    FormatErrc code() const noexcept { return code_; }

private:
    FormatErrc code_;
};

Volume load_volume(const std::filesystem::path& path);
void save_volume(const Volume& v, const std::filesystem::path& path);
MaskVolume load_mask(const std::filesystem::path& path);
void save_mask(const MaskVolume& m, const std::filesystem::path& path);

/// Writes `bytes` to `path` via write-temp-then-rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Preprocessing

/// Drops every slice whose image voxels are all zero (mask in lockstep).
std::pair<Volume, MaskVolume> remove_black_slices(const Volume& v, const MaskVolume& m);

struct ContentBox {
    std::size_t top = 0, left = 0, bottom = 0, right = 0;  // inclusive
    bool empty = true;
};

struct CropWindow {
    std::size_t top = 0, left = 0, height = 0, width = 0;
    ContentBox content;
};

/// Bounding box of nonzero voxels over all slices.
ContentBox content_box(const Volume& v);
/// Window of the target size centred on the content box, clamped to the volume.
CropWindow roi_window(const Volume& v, std::size_t target_h, std::size_t target_w);
std::pair<Volume, MaskVolume> crop_to_roi(const Volume& v, const MaskVolume& m, std::size_t target_h,
                                          std::size_t target_w);

/// Per-volume min-max rescale to [0, 1].
Volume normalize_intensity(const Volume& v);

struct PreprocessResult {
    Volume volume;
    MaskVolume mask;
    std::size_t slices_in = 0;
    std::size_t slices_dropped = 0;
};

/// remove_black_slices -> crop_to_roi -> normalize_intensity.
PreprocessResult preprocess(const Volume& v, const MaskVolume& m, std::size_t target);

// ---------------------------------------------------------------------------
// Samples

/// Slice indices of one training sample: (previous, centre, next). Edge
/// slices reuse themselves as the missing neighbour.
struct Triplet {
    std::array<std::size_t, 3> slices;
    std::size_t centre() const { return slices[1]; }
};

std::vector<Triplet> make_triplets(const Volume& v, const MaskVolume& m);

struct SampleRef {
    const Volume* volume;
    const MaskVolume* mask;
    Triplet triplet;
};

/// Packs samples into a (3B, 1, H, W) model input: all previous slices,
/// then all centre slices, then all next slices.
Tensor pack_inputs(std::span<const SampleRef> samples);
/// Centre-slice labels of the samples as (B, 1, H, W) doubles.
Tensor pack_targets(std::span<const SampleRef> samples);

// ---------------------------------------------------------------------------
// Manifest and folds

struct ManifestEntry {
    std::string id;
    std::string patient;
    int timepoint = 0;
    std::filesystem::path image;
    std::filesystem::path mask;
};

/// Tab-separated `id patient timepoint image_path mask_path` lines. Relative
/// paths resolve against the manifest's directory. '#' starts a comment.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

struct FoldSpec {
    int fold_id = 0;  // 1-based
    std::vector<std::string> train, val, test;
    std::size_t n_train = 0, n_val = 0, n_test = 0;  // slice totals when known
};

inline constexpr std::size_t kValidationScans = 3;
inline constexpr int kTestTimepoint = 4;

/// One fold per patient (patients in order of first appearance). Fold k tests
/// patient k at time point 4 (its last one if it has fewer); validation takes
/// the latest remaining scan of the next patients in cyclic order until three
/// are chosen; everything else trains. `slice_count` fills the audit totals.
std::vector<FoldSpec> make_folds(const std::vector<ManifestEntry>& manifest,
                                 const std::function<std::size_t(const ManifestEntry&)>& slice_count = nullptr);

// ---------------------------------------------------------------------------
// Synthetic phantoms

struct PhantomSpec {
    std::uint64_t seed = 0;
    VolumeDims dims{8, 32, 32};
    std::size_t lesions_min = 1;
    std::size_t lesions_max = 3;
    double radius_min = 1.5;
    double radius_max = 3.0;
    double texture_amplitude = 0.08;
    std::size_t blank_slices = 1;  // all-zero slices at each end
};

inline constexpr float kBrainBandLow = 0.25f;
inline constexpr float kBrainBandHigh = 0.55f;
inline constexpr float kLesionBandLow = 0.75f;
inline constexpr float kLesionBandHigh = 0.95f;

/// Ellipsoidal "brain" of mid intensity on a zero background with spherical
/// hyperintense lesions fully inside it; mask = lesion voxels.
std::pair<Volume, MaskVolume> generate_phantom(const PhantomSpec& spec);

}  // namespace msseg
