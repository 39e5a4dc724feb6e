#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cratersr/detect.hpp"

namespace cratersr::config {

inline constexpr const char* kVersion = "0.1.0";

// Parses the JSON file; json errors surface as FormatError.
nlohmann::json load_config_file(const std::string& path);

// FNV-1a hex digest of the canonical (sorted-key) dump. Stable across runs
// and platforms, used to stamp derived artifacts.
std::string config_hash(const nlohmann::json& cfg);

// Standard provenance block written as '#' comments into CSV outputs: tool
// version, command summary, config hash, seed (when the command is seeded).
std::string provenance_comment(const std::string& command, const nlohmann::json& cfg,
                               std::uint64_t seed);
std::string provenance_comment(const std::string& command, const nlohmann::json& cfg);

// Single-line variant for PGM headers.
std::string provenance_line(const std::string& command, const nlohmann::json& cfg);

struct TrainConfig {
    std::vector<std::string> images; // training PGMs
    int depth = 16;
    int blocks = 2;
    std::size_t hidden_width = 256;
    int base_patch = 48;
    long steps = 1000;
    int batch = 1;          // sampled pairs averaged per optimizer step
    double lr = 1e-4;
    long lr_decay_step = 0; // halve the rate once at this step; 0 = never
    double scale_min = 1.0;
    double scale_max = 4.0;
    long log_every = 100;
};
TrainConfig parse_train_config(const nlohmann::json& cfg);

struct SynthConfig {
    int mosaic_width = 1024;
    int mosaic_height = 1024;
    int patch_size = 256;
    double overlap_fraction = 0.5;
    detect::GeoRef georef;
    std::size_t count = 200;
    double min_diameter_px = 10.0;
    double max_diameter_px = 24.0;
    double cell_px = 32.0;
    double margin_px = 16.0;
    double dropout = 0.0;
    int false_positives = 0;
    double center_jitter_px = 0.0;
    double size_jitter_frac = 0.0;
};
SynthConfig parse_synth_config(const nlohmann::json& cfg);

} // namespace cratersr::config
