#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string_view>

#include "msseg/data.hpp"

namespace msseg {

namespace {

constexpr std::string_view kVolumeMagic = "MSVOL1";
constexpr std::string_view kMaskMagic = "MSMSK1";

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
}

std::vector<std::uint8_t> encode_header(std::string_view magic, const VolumeDims& d) {
    std::vector<std::uint8_t> out(magic.begin(), magic.end());
    out.push_back(kVolumeFormatVersion);
    put_u32(out, d.slices);
    put_u32(out, d.height);
    put_u32(out, d.width);
    return out;
}

void check_dims(const VolumeDims& d, const std::string& where) {
    if (d.slices == 0 || d.height == 0 || d.width == 0) {
        throw FormatError(FormatErrc::dim_overflow, where + ": zero extent in dims " + to_string(d));
    }
    const std::uint64_t n = std::uint64_t{d.slices} * d.height;
    if (n > kMaxVoxels || n * d.width > kMaxVoxels) {
        throw FormatError(FormatErrc::dim_overflow, where + ": dims " + to_string(d) + " exceed the voxel limit");
    }
}

// Validates the header and returns the dims plus the payload view.
std::pair<VolumeDims, std::span<const std::uint8_t>> decode(std::span<const std::uint8_t> bytes,
                                                            std::string_view magic, std::size_t elem_size,
                                                            const std::string& where) {
    if (bytes.size() < magic.size() || std::memcmp(bytes.data(), magic.data(), magic.size()) != 0) {
        throw FormatError(FormatErrc::bad_magic, where + ": bad magic (expected \"" + std::string(magic) + "\")");
    }
    if (bytes.size() < kVolumeHeaderBytes) throw FormatError(FormatErrc::truncated, where + ": truncated header");
    if (bytes[6] != kVolumeFormatVersion) {
        throw FormatError(FormatErrc::unsupported_version,
                          where + ": unsupported version " + std::to_string(int{bytes[6]}));
    }
    const VolumeDims d{get_u32(bytes.data() + 7), get_u32(bytes.data() + 11), get_u32(bytes.data() + 15)};
    check_dims(d, where);
    const std::size_t payload = d.voxels() * elem_size;
    const std::size_t available = bytes.size() - kVolumeHeaderBytes;
    if (available < payload) {
        throw FormatError(FormatErrc::truncated, where + ": truncated payload (" + std::to_string(available) + " of " +
                                                     std::to_string(payload) + " bytes)");
    }
    if (available > payload) throw FormatError(FormatErrc::trailing_data, where + ": trailing bytes after payload");
    return {d, bytes.subspan(kVolumeHeaderBytes, payload)};
}

}  // namespace

std::string to_string(const VolumeDims& d) {
    return std::to_string(d.slices) + "x" + std::to_string(d.height) + "x" + std::to_string(d.width);
}

Volume make_volume(VolumeDims dims, float fill) {
    Volume v;
    v.dims = dims;
    v.voxels.assign(dims.voxels(), fill);
    return v;
}

MaskVolume make_mask(VolumeDims dims) {
    MaskVolume m;
    m.dims = dims;
    m.labels.assign(dims.voxels(), 0);
    return m;
}

const char* to_string(FormatErrc code) {
    switch (code) {
        case FormatErrc::io_error: return "io error";
        case FormatErrc::bad_magic: return "bad magic";
        case FormatErrc::unsupported_version: return "unsupported version";
        case FormatErrc::truncated: return "truncated";
        case FormatErrc::dim_overflow: return "dim overflow";
        case FormatErrc::invalid_payload: return "invalid payload";
        case FormatErrc::trailing_data: return "trailing data";
    }
    return "unknown";
}

FormatError::FormatError(FormatErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatErrc::io_error, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw FormatError(FormatErrc::io_error, "read failed for " + path.string());
    return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError(FormatErrc::io_error, "cannot create " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw FormatError(FormatErrc::io_error, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw FormatError(FormatErrc::io_error, "cannot rename into " + path.string());
    }
}

void save_volume(const Volume& v, const std::filesystem::path& path) {
    check_dims(v.dims, path.string());
    if (v.voxels.size() != v.dims.voxels()) {
        throw FormatError(FormatErrc::invalid_payload, "volume voxel count does not match dims " + to_string(v.dims));
    }
    auto bytes = encode_header(kVolumeMagic, v.dims);
    bytes.reserve(bytes.size() + 4 * v.voxels.size());
    for (float f : v.voxels) {
        if (!std::isfinite(f) || f < 0.0f) {
            throw FormatError(FormatErrc::invalid_payload, "volume voxels must be finite and nonnegative");
        }
        put_u32(bytes, std::bit_cast<std::uint32_t>(f));
    }
    write_file_atomic(path, bytes);
}

Volume load_volume(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    const auto [dims, payload] = decode(bytes, kVolumeMagic, 4, path.string());
    Volume v;
    v.dims = dims;
    v.voxels.resize(dims.voxels());
    for (std::size_t i = 0; i < v.voxels.size(); ++i) {
        const float f = std::bit_cast<float>(get_u32(payload.data() + 4 * i));
        if (!std::isfinite(f) || f < 0.0f) {
            throw FormatError(FormatErrc::invalid_payload, path.string() + ": non-finite or negative voxel");
        }
        v.voxels[i] = f;
    }
    return v;
}

void save_mask(const MaskVolume& m, const std::filesystem::path& path) {
    check_dims(m.dims, path.string());
    if (m.labels.size() != m.dims.voxels()) {
        throw FormatError(FormatErrc::invalid_payload, "mask label count does not match dims " + to_string(m.dims));
    }
    auto bytes = encode_header(kMaskMagic, m.dims);
    for (auto l : m.labels) {
        if (l > 1) throw FormatError(FormatErrc::invalid_payload, "mask labels must be 0 or 1");
    }
    bytes.insert(bytes.end(), m.labels.begin(), m.labels.end());
    write_file_atomic(path, bytes);
}

MaskVolume load_mask(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    const auto [dims, payload] = decode(bytes, kMaskMagic, 1, path.string());
    MaskVolume m;
    m.dims = dims;
    m.labels.assign(payload.begin(), payload.end());
    for (auto l : m.labels) {
        if (l > 1) throw FormatError(FormatErrc::invalid_payload, path.string() + ": non-binary mask label");
    }
    return m;
}

}  // namespace msseg
