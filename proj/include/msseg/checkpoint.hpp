#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "msseg/config.hpp"
#include "msseg/model.hpp"
#include "msseg/rng.hpp"

namespace msseg {

struct TrainCursor {
    std::size_t epoch = 0;
    std::size_t step = 0;
    Rng::State rng{};
    double best_val_dice = 0.0;  // NaN when no validation ran

    bool operator==(const TrainCursor&) const = default;
};

struct Checkpoint {
    RunConfig config;
    TrainCursor cursor;
    ModelParams params;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint8_t kCheckpointVersion = 1;

/// "MSCKPT1", version byte, u32-length config document, tensor records
/// (u16 name length, name, u8 rank, u32 dims, f64 payload) and a CRC32 of
/// everything before it. All integers little-endian. Running statistics are
/// stored as `<norm>.running_mean` / `<norm>.running_var` records.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& where = "<checkpoint>");

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Deep copy: the result shares no storage with `src`.
ModelParams clone_params(const ModelParams& src);

}  // namespace msseg
