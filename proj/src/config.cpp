#include "cratersr/config.hpp"

#include <cstdio>

#include "cratersr/errors.hpp"
#include "cratersr/io_util.hpp"

namespace cratersr::config {

nlohmann::json load_config_file(const std::string& path) {
    try {
        return nlohmann::json::parse(io::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("config: " + path + ": " + e.what());
    }
}

std::string config_hash(const nlohmann::json& cfg) {
    const std::string s = cfg.dump(); // nlohmann keeps keys sorted
    std::uint64_t h = 1469598103934665603ull;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string provenance_comment(const std::string& command, const nlohmann::json& cfg,
                               std::uint64_t seed) {
    return provenance_comment(command, cfg) + "\nseed: " + std::to_string(seed);
}

std::string provenance_comment(const std::string& command, const nlohmann::json& cfg) {
    return "cratersr " + std::string(kVersion) + "\ncommand: " + command +
           "\nconfig: " + config_hash(cfg);
}

std::string provenance_line(const std::string& command, const nlohmann::json& cfg) {
    return "cratersr " + std::string(kVersion) + " " + command + " config=" + config_hash(cfg);
}

namespace {

template <typename T>
T get_field(const nlohmann::json& j, const char* key, const T& fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw FormatError(std::string("config: bad value for '") + key + "'");
    }
}

template <typename T>
T get_required(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw FormatError(std::string("config: missing key '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw FormatError(std::string("config: bad value for '") + key + "'");
    }
}

} // namespace

TrainConfig parse_train_config(const nlohmann::json& cfg) {
    TrainConfig c;
    c.images = get_required<std::vector<std::string>>(cfg, "images");
    c.depth = get_field(cfg, "depth", c.depth);
    c.blocks = get_field(cfg, "blocks", c.blocks);
    c.hidden_width = get_field(cfg, "hidden_width", c.hidden_width);
    c.base_patch = get_field(cfg, "base_patch", c.base_patch);
    c.steps = get_field(cfg, "steps", c.steps);
    c.batch = get_field(cfg, "batch", c.batch);
    c.lr = get_field(cfg, "lr", c.lr);
    c.lr_decay_step = get_field(cfg, "lr_decay_step", c.lr_decay_step);
    c.scale_min = get_field(cfg, "scale_min", c.scale_min);
    c.scale_max = get_field(cfg, "scale_max", c.scale_max);
    c.log_every = get_field(cfg, "log_every", c.log_every);

    if (c.images.empty()) throw FormatError("config: 'images' must not be empty");
    if (c.depth < 1 || c.blocks < 0) throw FormatError("config: bad depth/blocks");
    if (c.hidden_width < 1) throw FormatError("config: bad hidden_width");
    if (c.base_patch < 2) throw FormatError("config: base_patch too small");
    if (c.steps < 1 || c.batch < 1) throw FormatError("config: bad steps/batch");
    if (!(c.lr > 0.0)) throw FormatError("config: lr must be positive");
    if (c.lr_decay_step < 0) throw FormatError("config: bad lr_decay_step");
    if (!(c.scale_min >= 1.0 && c.scale_max >= c.scale_min))
        throw FormatError("config: bad scale range");
    if (c.log_every < 1) throw FormatError("config: bad log_every");
    return c;
}

SynthConfig parse_synth_config(const nlohmann::json& cfg) {
    SynthConfig c;
    c.mosaic_width = get_field(cfg, "mosaic_width", c.mosaic_width);
    c.mosaic_height = get_field(cfg, "mosaic_height", c.mosaic_height);
    c.patch_size = get_field(cfg, "patch_size", c.patch_size);
    c.overlap_fraction = get_field(cfg, "overlap_fraction", c.overlap_fraction);
    c.count = get_field(cfg, "count", c.count);
    c.min_diameter_px = get_field(cfg, "min_diameter_px", c.min_diameter_px);
    c.max_diameter_px = get_field(cfg, "max_diameter_px", c.max_diameter_px);
    c.cell_px = get_field(cfg, "cell_px", c.cell_px);
    c.margin_px = get_field(cfg, "margin_px", c.margin_px);
    c.dropout = get_field(cfg, "dropout", c.dropout);
    c.false_positives = get_field(cfg, "false_positives", c.false_positives);
    c.center_jitter_px = get_field(cfg, "center_jitter_px", c.center_jitter_px);
    c.size_jitter_frac = get_field(cfg, "size_jitter_frac", c.size_jitter_frac);

    const nlohmann::json g = get_required<nlohmann::json>(cfg, "georef");
    c.georef.lon_origin = get_required<double>(g, "lon_origin");
    c.georef.lat_origin = get_required<double>(g, "lat_origin");
    c.georef.meters_per_pixel = get_required<double>(g, "meters_per_pixel");
    c.georef.body_radius_m = get_required<double>(g, "body_radius_m");

    if (c.mosaic_width < 1 || c.mosaic_height < 1)
        throw FormatError("config: bad mosaic size");
    if (c.patch_size < 1 || c.patch_size > c.mosaic_width || c.patch_size > c.mosaic_height)
        throw FormatError("config: bad patch_size");
    if (!(c.overlap_fraction >= 0.0 && c.overlap_fraction < 1.0))
        throw FormatError("config: bad overlap_fraction");
    if (!(c.georef.meters_per_pixel > 0.0) || !(c.georef.body_radius_m > 0.0))
        throw FormatError("config: georef scales must be positive");
    if (c.false_positives < 0) throw FormatError("config: bad false_positives");
    return c;
}

} // namespace cratersr::config
