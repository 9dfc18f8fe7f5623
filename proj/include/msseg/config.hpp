#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "msseg/model.hpp"

namespace msseg {

struct TrainConfig {
    std::size_t epochs = 200;
    double lr = 1e-4;
    double weight_decay = 1e-4;
    std::size_t batch_size = 4;
    std::uint64_t seed = 0;
    double eps_dice = 1e-6;
    std::size_t max_steps = 0;  // 0 = no cap

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;

    bool operator==(const RunConfig&) const = default;
};

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& source, std::size_t line, std::string key, const std::string& message);
    const std::string& key() const { return key_; }
    std::size_t line() const { return line_; }

private:
    std::string key_;
    std::size_t line_;
};

struct KeyValue {
    std::string key;
    std::string value;
    std::size_t line = 0;
};

/// `key = value` lines; blank lines and '#' comments are skipped.
std::vector<KeyValue> parse_key_values(std::string_view text, const std::string& source);

/// Keys are `model.<field>` and `train.<field>`. Returns false for an unknown
/// key; throws ConfigError for a malformed value.
bool apply_key(RunConfig& cfg, const KeyValue& kv, const std::string& source);

/// Unknown keys and duplicates are errors. Fields not mentioned keep the
/// values of `base`.
RunConfig parse_config(std::string_view text, const std::string& source = "<config>", RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Every key, one per line; parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& cfg);

/// Name of the first differing model key, or empty when equal.
std::string first_difference(const ModelConfig& a, const ModelConfig& b);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace msseg
