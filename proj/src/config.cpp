#include "spoofloc/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>

#include "spoofloc/common.hpp"

namespace spoofloc {
namespace {

struct FieldDesc {
    const char* name;
    const char* type; // int | uint | real | bool
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

long long parse_int(const std::string& key, const std::string& raw) {
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
    if (ec != std::errc() || ptr != raw.data() + raw.size()) {
        fail_validation("config key '", key, "' expects an integer, got '", raw, "'");
    }
    return value;
}

std::uint64_t parse_uint(const std::string& key, const std::string& raw) {
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
    if (ec != std::errc() || ptr != raw.data() + raw.size()) {
        fail_validation("config key '", key, "' expects a non-negative integer, got '", raw,
                        "'");
    }
    return value;
}

double parse_real(const std::string& key, const std::string& raw) {
    try {
        std::size_t pos = 0;
        const double value = std::stod(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument(raw);
        return value;
    } catch (const std::exception&) {
        fail_validation("config key '", key, "' expects a real number, got '", raw, "'");
    }
}

bool parse_bool(const std::string& key, const std::string& raw) {
    if (raw == "true" || raw == "1") return true;
    if (raw == "false" || raw == "0") return false;
    fail_validation("config key '", key, "' expects true or false, got '", raw, "'");
}

#define INT_FIELD(key, expr)                                                       \
    {key, "int", [](const RunConfig& c) { return std::to_string(c.expr); },        \
     [](RunConfig& c, const std::string& raw) {                                    \
         c.expr = static_cast<int>(parse_int(key, raw));                           \
     }}
#define UINT_FIELD(key, expr)                                                      \
    {key, "uint", [](const RunConfig& c) { return std::to_string(c.expr); },       \
     [](RunConfig& c, const std::string& raw) { c.expr = parse_uint(key, raw); }}
#define REAL_FIELD(key, expr)                                                      \
    {key, "real", [](const RunConfig& c) { return fmt_real(c.expr); },             \
     [](RunConfig& c, const std::string& raw) { c.expr = parse_real(key, raw); }}
#define BOOL_FIELD(key, expr)                                                      \
    {key, "bool", [](const RunConfig& c) { return c.expr ? "true" : "false"; },    \
     [](RunConfig& c, const std::string& raw) { c.expr = parse_bool(key, raw); }}

const std::vector<FieldDesc>& registry() {
    static const std::vector<FieldDesc> fields = {
        // features
        INT_FIELD("mel.fft_window", mel.fft_window),
        INT_FIELD("mel.hop", mel.hop),
        INT_FIELD("mel.n_mels", mel.n_mels),
        INT_FIELD("mel.sample_rate", mel.sample_rate),
        REAL_FIELD("mel.fmin", mel.fmin),
        REAL_FIELD("mel.fmax", mel.fmax),
        // model
        INT_FIELD("model.input_dim", model.backbone.input_dim),
        INT_FIELD("model.n_res_blocks", model.backbone.n_res_blocks),
        INT_FIELD("model.conv_channels", model.backbone.conv_channels),
        INT_FIELD("model.conv_kernel", model.backbone.conv_kernel),
        INT_FIELD("model.blstm_units_total", model.backbone.blstm_units_total),
        INT_FIELD("model.n_classes", model.backbone.n_classes),
        INT_FIELD("model.mfd_channels", model.mfd.channels),
        INT_FIELD("model.mfd_stride1", model.mfd.strides.first),
        INT_FIELD("model.mfd_stride2", model.mfd.strides.second),
        INT_FIELD("model.mfd_kernel1", model.mfd.kernels.first),
        INT_FIELD("model.mfd_kernel2", model.mfd.kernels.second),
        INT_FIELD("model.mfd_downsample", model.mfd.downsample_factor),
        // loss
        REAL_FIELD("loss.alpha", loss.alpha),
        INT_FIELD("loss.ifp_max_span", loss.ifp_max_span),
        // trainer
        INT_FIELD("train.batch_size", train.batch_size),
        INT_FIELD("train.epochs", train.epochs),
        REAL_FIELD("train.learning_rate", train.learning_rate),
        REAL_FIELD("train.weight_decay", train.weight_decay),
        UINT_FIELD("train.seed", train.seed),
        BOOL_FIELD("train.use_mfd", train.toggles.use_mfd),
        BOOL_FIELD("train.use_ifp", train.toggles.use_ifp),
        BOOL_FIELD("train.use_befaug", train.toggles.use_befaug),
        BOOL_FIELD("train.use_inaug", train.toggles.use_inaug),
        INT_FIELD("train.befaug_copies", train.befaug_copies),
        // augmentation
        REAL_FIELD("augment.in_training_rate", augment.in_training_rate),
        REAL_FIELD("augment.gaussian_snr_max_db", augment.gaussian_snr_max_db),
        REAL_FIELD("augment.pitch_shift_max_semitones", augment.pitch_shift_max_semitones),
        BOOL_FIELD("augment.mark_insertion_boundaries_fake",
                   augment.mark_insertion_boundaries_fake),
        REAL_FIELD("augment.insertion_boundary_s", augment.insertion_boundary_s),
    };
    return fields;
}

#undef INT_FIELD
#undef UINT_FIELD
#undef REAL_FIELD
#undef BOOL_FIELD

const FieldDesc& find_field(const std::string& key) {
    for (const FieldDesc& f : registry()) {
        if (key == f.name) return f;
    }
    fail_validation("unknown config key '", key, "'");
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

void apply_assignment(RunConfig& cfg, const std::string& key, const std::string& value,
                      const std::string& source) {
    const FieldDesc& field = find_field(key);
    field.set(cfg, value);
    cfg.provenance[key] = source;
}

void validate_all(const RunConfig& cfg) {
    cfg.mel.validate();
    cfg.model.validate();
    cfg.loss.validate();
    cfg.train.validate();
    cfg.augment.validate();
    if (cfg.model.backbone.input_dim != cfg.mel.n_mels) {
        fail_validation("model.input_dim (", cfg.model.backbone.input_dim,
                        ") must match mel.n_mels (", cfg.mel.n_mels, ")");
    }
}

} // namespace

bool RunConfig::same_values(const RunConfig& other) const {
    for (const FieldDesc& f : registry()) {
        if (f.get(*this) != f.get(other)) return false;
    }
    return true;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const FieldDesc& f : registry()) keys.emplace_back(f.name);
    return keys;
}

RunConfig parse_run_config(const std::string& config_path,
                           const std::vector<std::string>& flag_overrides) {
    RunConfig cfg;
    for (const FieldDesc& f : registry()) cfg.provenance[f.name] = "default";

    if (!config_path.empty()) {
        std::ifstream is(config_path);
        if (!is) fail_runtime("cannot open config file: ", config_path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            const std::string text = trim(line);
            if (text.empty()) continue;
            const auto eq = text.find('=');
            if (eq == std::string::npos) {
                fail_validation(config_path, ":", line_no,
                                ": expected 'key = value', got '", text, "'");
            }
            const std::string key = trim(text.substr(0, eq));
            const std::string value = trim(text.substr(eq + 1));
            try {
                apply_assignment(cfg, key, value, "file");
            } catch (const ValidationError& e) {
                fail_validation(config_path, ":", line_no, ": ", e.what());
            }
        }
    }

    for (const std::string& override_text : flag_overrides) {
        const auto eq = override_text.find('=');
        if (eq == std::string::npos) {
            fail_validation("flag override '", override_text, "' must look like key=value");
        }
        apply_assignment(cfg, trim(override_text.substr(0, eq)),
                         trim(override_text.substr(eq + 1)), "flag");
    }

    validate_all(cfg);
    return cfg;
}

std::string print_run_config(const RunConfig& cfg) {
    std::ostringstream os;
    for (const FieldDesc& f : registry()) {
        const auto it = cfg.provenance.find(f.name);
        const std::string source = it == cfg.provenance.end() ? "default" : it->second;
        os << f.name << " = " << f.get(cfg) << "  # " << f.type << ", " << source << "\n";
    }
    return os.str();
}

} // namespace spoofloc
