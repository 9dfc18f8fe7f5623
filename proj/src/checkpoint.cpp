#include "msseg/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <map>
#include <string_view>

#include "msseg/data.hpp"

namespace msseg {

namespace {

constexpr std::string_view kMagic = "MSCKPT1";

class Writer {
public:
    void u8(std::uint8_t v) { bytes.push_back(v); }
    void u16(std::uint16_t v) { le(v, 2); }
    void u32(std::uint32_t v) { le(v, 4); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
    void raw(std::string_view s) { bytes.insert(bytes.end(), s.begin(), s.end()); }

    std::vector<std::uint8_t> bytes;

private:
    void le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
};

class Reader {
public:
    Reader(std::span<const std::uint8_t> b, const std::string& where) : b_(b), where_(where) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    double f64() { return std::bit_cast<double>(le(8)); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw CheckpointError(where_ + ": truncated at byte " + std::to_string(pos_));
    }
    std::uint64_t le(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= std::uint64_t{b_[pos_ + static_cast<std::size_t>(i)]} << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::span<const std::uint8_t> b_;
    const std::string& where_;
    std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    std::size_t off = 0;
    while (off < bytes.size()) {
        const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
        crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
        off += n;
    }
    return static_cast<std::uint32_t>(crc);
}

void write_record(Writer& w, const std::string& name, const Shape& shape, std::span<const double> values) {
    if (name.size() > 0xFFFF) throw CheckpointError("record name too long: " + name);
    if (shape.size() > 0xFF) throw CheckpointError("record rank too large: " + name);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name);
    w.u8(static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) w.u32(static_cast<std::uint32_t>(d));
    for (double v : values) w.f64(v);
}

std::string cursor_document(const TrainCursor& c) {
    return "cursor.epoch = " + std::to_string(c.epoch) + "\ncursor.step = " + std::to_string(c.step) +
           "\ncursor.rng_seed = " + std::to_string(c.rng.seed) + "\ncursor.rng_stream = " +
           std::to_string(c.rng.stream) + "\ncursor.rng_index = " + std::to_string(c.rng.index) +
           "\ncursor.rng_lane = " + std::to_string(c.rng.lane) + "\ncursor.best_val_dice = " +
           format_double(c.best_val_dice) + "\n";
}

template <typename T>
T parse_field(const KeyValue& kv, const std::string& where) {
    T v{};
    const auto* end = kv.value.data() + kv.value.size();
    const auto [ptr, ec] = std::from_chars(kv.value.data(), end, v);
    if (ec != std::errc{} || ptr != end) throw ConfigError(where, kv.line, kv.key, "bad value '" + kv.value + "'");
    return v;
}

}  // namespace

ModelParams clone_params(const ModelParams& src) {
    ModelParams out = build_model(src.config);
    restore(out, snapshot(src));
    return out;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.raw(kMagic);
    w.u8(kCheckpointVersion);
    const std::string doc = format_config(ckpt.config) + cursor_document(ckpt.cursor);
    w.u32(static_cast<std::uint32_t>(doc.size()));
    w.raw(doc);
    for (const auto& [name, t] : ckpt.params.named) write_record(w, name, t.shape(), t.data());
    for (const auto& [prefix, st] : ckpt.params.buffers) {
        const Shape s{st->mean.size()};
        write_record(w, prefix + ".running_mean", s, st->mean);
        write_record(w, prefix + ".running_var", s, st->var);
    }
    const std::uint32_t crc = crc32_of(w.bytes);
    w.u32(crc);
    return std::move(w.bytes);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& where) {
    if (bytes.size() < kMagic.size() || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
        throw CheckpointError(where + ": not a checkpoint (bad magic)");
    }
    if (bytes.size() < kMagic.size() + 1 + 4 + 4) throw CheckpointError(where + ": truncated");
    const auto body = bytes.first(bytes.size() - 4);
    const auto tail = bytes.last(4);
    const std::uint32_t stored = std::uint32_t{tail[0]} | (std::uint32_t{tail[1]} << 8) |
                                 (std::uint32_t{tail[2]} << 16) | (std::uint32_t{tail[3]} << 24);
    if (crc32_of(body) != stored) throw CheckpointError(where + ": CRC mismatch (file corrupted)");

    Reader r(body, where);
    r.str(kMagic.size());
    if (const auto v = r.u8(); v != kCheckpointVersion) {
        throw CheckpointError(where + ": unsupported checkpoint version " + std::to_string(v));
    }
    const std::string doc = r.str(r.u32());

    Checkpoint ckpt;
    std::map<std::string, bool> seen;
    for (const auto& kv : parse_key_values(doc, where)) {
        if (seen[kv.key]) throw ConfigError(where, kv.line, kv.key, "duplicate key");
        seen[kv.key] = true;
        auto& c = ckpt.cursor;
        if (kv.key == "cursor.epoch") c.epoch = parse_field<std::size_t>(kv, where);
        else if (kv.key == "cursor.step") c.step = parse_field<std::size_t>(kv, where);
        else if (kv.key == "cursor.rng_seed") c.rng.seed = parse_field<std::uint64_t>(kv, where);
        else if (kv.key == "cursor.rng_stream") c.rng.stream = parse_field<std::uint64_t>(kv, where);
        else if (kv.key == "cursor.rng_index") c.rng.index = parse_field<std::uint64_t>(kv, where);
        else if (kv.key == "cursor.rng_lane") c.rng.lane = parse_field<std::uint32_t>(kv, where);
        else if (kv.key == "cursor.best_val_dice") c.best_val_dice = parse_field<double>(kv, where);
        else if (!apply_key(ckpt.config, kv, where)) throw ConfigError(where, kv.line, kv.key, "unknown key");
    }
    ckpt.config.model.validate();
    ckpt.params = build_model(ckpt.config.model);

    std::map<std::string, std::span<double>> slots;
    std::map<std::string, Shape> shapes;
    for (auto& [name, t] : ckpt.params.named) {
        slots[name] = t.data();
        shapes[name] = t.shape();
    }
    for (auto& [prefix, st] : ckpt.params.buffers) {
        slots[prefix + ".running_mean"] = st->mean;
        slots[prefix + ".running_var"] = st->var;
        shapes[prefix + ".running_mean"] = shapes[prefix + ".running_var"] = Shape{st->mean.size()};
    }
    std::map<std::string, bool> filled;
    while (!r.done()) {
        const std::string name = r.str(r.u16());
        const std::size_t rank = r.u8();
        Shape shape(rank);
        for (auto& d : shape) d = r.u32();
        auto it = slots.find(name);
        if (it == slots.end()) throw CheckpointError(where + ": record '" + name + "' is not part of the model");
        if (shape != shapes[name]) {
            throw CheckpointError(where + ": record '" + name + "' has shape " + to_string(shape) +
                                  ", model expects " + to_string(shapes[name]));
        }
        if (filled[name]) throw CheckpointError(where + ": duplicate record '" + name + "'");
        filled[name] = true;
        for (auto& v : it->second) v = r.f64();
    }
    for (const auto& [name, slot] : slots) {
        if (!filled[name]) throw CheckpointError(where + ": missing record '" + name + "'");
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file(path);
    } catch (const FormatError& e) {
        throw CheckpointError(e.what());
    }
    return decode_checkpoint(bytes, path.string());
}

}  // namespace msseg
