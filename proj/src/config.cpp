#include "msseg/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace msseg {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Field {
    const char* key;
    std::function<void(RunConfig&, std::string_view)> set;  // throws std::invalid_argument
    std::function<std::string(const RunConfig&)> get;
};

template <typename T>
T parse_number(std::string_view text) {
    T v{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        throw std::invalid_argument("expected a number, got '" + std::string(text) + "'");
    }
    return v;
}

bool parse_bool(std::string_view text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw std::invalid_argument("expected true or false, got '" + std::string(text) + "'");
}

template <typename Section, typename T>
Field field(const char* key, Section RunConfig::*section, T Section::*member) {
    return Field{key,
                 [=](RunConfig& c, std::string_view text) {
                     if constexpr (std::is_same_v<T, bool>) {
                         (c.*section).*member = parse_bool(text);
                     } else {
                         (c.*section).*member = parse_number<T>(text);
                     }
                 },
                 [=](const RunConfig& c) -> std::string {
                     const T v = (c.*section).*member;
                     if constexpr (std::is_same_v<T, bool>) {
                         return v ? "true" : "false";
                     } else if constexpr (std::is_floating_point_v<T>) {
                         return format_double(v);
                     } else {
                         return std::to_string(v);
                     }
                 }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> all = {
        field("model.num_scales", &RunConfig::model, &ModelConfig::num_scales),
        field("model.layers_per_block", &RunConfig::model, &ModelConfig::layers_per_block),
        field("model.growth_rate", &RunConfig::model, &ModelConfig::growth_rate),
        field("model.first_conv_filters", &RunConfig::model, &ModelConfig::first_conv_filters),
        field("model.convlstm_hidden", &RunConfig::model, &ModelConfig::convlstm_hidden),
        field("model.dropout_p", &RunConfig::model, &ModelConfig::dropout_p),
        field("model.num_classes", &RunConfig::model, &ModelConfig::num_classes),
        field("model.use_sa", &RunConfig::model, &ModelConfig::use_sa),
        field("model.use_clstm", &RunConfig::model, &ModelConfig::use_clstm),
        field("model.seed", &RunConfig::model, &ModelConfig::seed),
        field("model.input_size", &RunConfig::model, &ModelConfig::input_size),
        field("model.sequence_length", &RunConfig::model, &ModelConfig::sequence_length),
        field("train.epochs", &RunConfig::train, &TrainConfig::epochs),
        field("train.lr", &RunConfig::train, &TrainConfig::lr),
        field("train.weight_decay", &RunConfig::train, &TrainConfig::weight_decay),
        field("train.batch_size", &RunConfig::train, &TrainConfig::batch_size),
        field("train.seed", &RunConfig::train, &TrainConfig::seed),
        field("train.eps_dice", &RunConfig::train, &TrainConfig::eps_dice),
        field("train.max_steps", &RunConfig::train, &TrainConfig::max_steps),
    };
    return all;
}

}  // namespace

void TrainConfig::validate() const {
    if (!(lr >= 0.0)) throw std::invalid_argument("train.lr must be nonnegative");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("train.weight_decay must be nonnegative");
    if (batch_size == 0) throw std::invalid_argument("train.batch_size must be at least 1");
    if (!(eps_dice > 0.0)) throw std::invalid_argument("train.eps_dice must be positive");
}

ConfigError::ConfigError(const std::string& source, std::size_t line, std::string key, const std::string& message)
    : std::runtime_error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " +
                         (key.empty() ? "" : "key '" + key + "': ") + message),
      key_(std::move(key)),
      line_(line) {}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::vector<KeyValue> parse_key_values(std::string_view text, const std::string& source) {
    std::vector<KeyValue> out;
    std::size_t line = 0;
    while (!text.empty()) {
        ++line;
        const auto nl = text.find('\n');
        std::string_view raw = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
        raw = trim(raw);
        if (raw.empty()) continue;
        const auto eq = raw.find('=');
        if (eq == std::string_view::npos) throw ConfigError(source, line, "", "expected 'key = value'");
        KeyValue kv{std::string(trim(raw.substr(0, eq))), std::string(trim(raw.substr(eq + 1))), line};
        if (kv.key.empty()) throw ConfigError(source, line, "", "missing key before '='");
        out.push_back(std::move(kv));
    }
    return out;
}

bool apply_key(RunConfig& cfg, const KeyValue& kv, const std::string& source) {
    for (const auto& f : fields()) {
        if (kv.key != f.key) continue;
        try {
            f.set(cfg, kv.value);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(source, kv.line, kv.key, e.what());
        }
        return true;
    }
    return false;
}

RunConfig parse_config(std::string_view text, const std::string& source, RunConfig base) {
    std::set<std::string> seen;
    for (const auto& kv : parse_key_values(text, source)) {
        if (!seen.insert(kv.key).second) throw ConfigError(source, kv.line, kv.key, "duplicate key");
        if (!apply_key(base, kv, source)) throw ConfigError(source, kv.line, kv.key, "unknown key");
    }
    try {
        base.model.validate();
        base.train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(source, 0, "", e.what());
    }
    return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string(), std::move(base));
}

std::string format_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
    return out;
}

std::string first_difference(const ModelConfig& a, const ModelConfig& b) {
    RunConfig ra, rb;
    ra.model = a;
    rb.model = b;
    for (const auto& f : fields()) {
        if (std::string_view(f.key).starts_with("model.") && f.get(ra) != f.get(rb)) return f.key;
    }
    return {};
}

}  // namespace msseg
