#pragma once

#include <string>
#include <vector>

#include "cratersr/errors.hpp"

namespace cratersr::raster {

// Single-channel raster with intensities normalized to [0,1]. The bit depth
// the data came from (8 or 16) is kept so writers can round-trip provenance.
struct ImageGrid {
    int height = 0;
    int width = 0;
    std::vector<double> values; // row-major, height*width entries
    int source_bit_depth = 16;

    ImageGrid() = default;
    ImageGrid(int h, int w, double fill = 0.0, int bit_depth = 16);

    double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
    double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }

    std::size_t pixel_count() const { return values.size(); }
};

// Throws ArgumentError when size or range invariants are violated.
void validate(const ImageGrid& img);

struct Patch {
    ImageGrid image;
    int offset_x = 0;
    int offset_y = 0;
    int parent_width = 0;
    int parent_height = 0;
};

// Patch geometry without pixels, as serialized in patch-list CSVs.
struct PatchRect {
    int id = 0;
    int offset_x = 0;
    int offset_y = 0;
    int width = 0;
    int height = 0;
};

struct AugmentSpec {
    bool hflip = false;
    bool vflip = false;
    int rot90_steps = 0; // 0..3
    double brightness_scale = 1.0;
    double contrast_scale = 1.0;
};

// Binary PGM ("P5"), maxval 255 or 65535, 16-bit samples big-endian.
// Intensities are divided by maxval on load.
ImageGrid load_pgm16(const std::string& path);

// Writes 16-bit binary PGM (maxval 65535, big-endian), round(v * 65535).
// An optional comment is emitted as a '#' header line. The write is atomic
// (temp file + rename).
void save_pgm16(const ImageGrid& img, const std::string& path,
                const std::string& comment = "");

// Cubic-convolution resampling (Keys kernel, a = -0.5), half-pixel center
// alignment, replicate edges, output clamped to [0,1].
ImageGrid bicubic_resize(const ImageGrid& img, int out_h, int out_w);

// Patch geometry for a width x height mosaic: patch_size squares at stride
// round(patch_size * (1 - overlap_fraction)); a final clamped offset covers
// the remainder so every pixel lands in at least one patch. Ids count
// row-major.
std::vector<PatchRect> tile_rects(int width, int height, int patch_size,
                                  double overlap_fraction);

// Same geometry, with pixels copied out of the image.
std::vector<Patch> tile_overlapping(const ImageGrid& img, int patch_size,
                                    double overlap_fraction);

// Geometric ops in order hflip -> vflip -> rot90, then contrast about the
// image mean, then brightness, each clamped to [0,1].
ImageGrid augment_sr(const ImageGrid& img, const AugmentSpec& spec);

// Patch-list CSV: header `patch_id,offset_x,offset_y,width,height`.
// Lines beginning with '#' are treated as comments.
void save_patch_list(const std::vector<Patch>& patches, const std::string& path,
                     const std::string& comment = "");
void save_patch_list(const std::vector<PatchRect>& rects, const std::string& path,
                     const std::string& comment = "");
std::vector<PatchRect> load_patch_list(const std::string& path);

} // namespace cratersr::raster
