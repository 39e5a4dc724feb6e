#include "cratersr/raster.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cratersr/io_util.hpp"

namespace cratersr::io {

void atomic_write(const std::string& path, const std::string& contents) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw IoError("rename failed for " + target.string() + ": " + ec.message());
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    auto push = [&] {
        std::size_t b = cur.find_first_not_of(" \t\r");
        std::size_t e = cur.find_last_not_of(" \t\r");
        fields.push_back(b == std::string::npos ? "" : cur.substr(b, e - b + 1));
        cur.clear();
    };
    for (char c : line) {
        if (c == ',')
            push();
        else
            cur.push_back(c);
    }
    push();
    return fields;
}

double parse_double(const std::string& s, const std::string& context) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw FormatError(context + ": not a number: '" + s + "'");
    return v;
}

long parse_long(const std::string& s, const std::string& context) {
    long v = 0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw FormatError(context + ": not an integer: '" + s + "'");
    return v;
}

std::string fmt_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw NumericError("fmt_double: conversion failed");
    return std::string(buf, ptr);
}

std::string comment_block(const std::string& comment) {
    if (comment.empty()) return {};
    std::string out;
    std::istringstream in(comment);
    std::string line;
    while (std::getline(in, line)) out += "# " + line + "\n";
    return out;
}

std::vector<std::vector<std::string>> load_csv_rows(const std::string& path,
                                                    const std::string& expected_header) {
    std::istringstream in(read_file(path));
    const std::size_t n_fields = split_csv_line(expected_header).size();
    std::vector<std::vector<std::string>> rows;
    std::string line;
    bool header_seen = false;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line != expected_header)
                throw FormatError(path + ": expected header '" + expected_header +
                                  "', got '" + line + "'");
            header_seen = true;
            continue;
        }
        auto fields = split_csv_line(line);
        if (fields.size() != n_fields)
            throw FormatError(path + " line " + std::to_string(line_no) + ": expected " +
                              std::to_string(n_fields) + " fields");
        rows.push_back(std::move(fields));
    }
    if (!header_seen) throw FormatError(path + ": missing header '" + expected_header + "'");
    return rows;
}

} // namespace cratersr::io

namespace cratersr::raster {

ImageGrid::ImageGrid(int h, int w, double fill, int bit_depth)
    : height(h), width(w), source_bit_depth(bit_depth) {
    if (h < 0 || w < 0) throw ArgumentError("ImageGrid: negative dimensions");
    values.assign(static_cast<std::size_t>(h) * w, fill);
}

void validate(const ImageGrid& img) {
    if (img.height < 0 || img.width < 0)
        throw ArgumentError("ImageGrid: negative dimensions");
    if (img.values.size() != static_cast<std::size_t>(img.height) * img.width)
        throw ArgumentError("ImageGrid: value count does not match dimensions");
    for (double v : img.values)
        if (!(v >= 0.0 && v <= 1.0))
            throw ArgumentError("ImageGrid: intensity outside [0,1]");
    if (img.source_bit_depth != 8 && img.source_bit_depth != 16)
        throw ArgumentError("ImageGrid: unsupported bit depth");
}

// ---------------------------------------------------------------------------
// PGM I/O

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_pgm_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
        } else if (!std::isspace(c)) {
            tok.push_back(static_cast<char>(c));
            while ((c = in.get()) != EOF && !std::isspace(c) && c != '#')
                tok.push_back(static_cast<char>(c));
            if (c == '#') in.unget();
            return tok;
        }
    }
    throw FormatError("PGM: unexpected end of header");
}

int parse_header_int(std::istream& in, const char* what) {
    const std::string tok = next_pgm_token(in);
    try {
        std::size_t pos = 0;
        const int v = std::stoi(tok, &pos);
        if (pos != tok.size() || v < 0) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw FormatError(std::string("PGM: bad ") + what + " field: '" + tok + "'");
    }
}

} // namespace

ImageGrid load_pgm16(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);

    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '5')
        throw FormatError("PGM: expected binary 'P5' magic in " + path);

    const int width = parse_header_int(in, "width");
    const int height = parse_header_int(in, "height");
    const int maxval = parse_header_int(in, "maxval");
    if (width < 1 || height < 1)
        throw FormatError("PGM: non-positive dimensions in " + path);
    if (maxval != 255 && maxval != 65535)
        throw FormatError("PGM: maxval must be 255 or 65535, got " +
                          std::to_string(maxval));
    // next_pgm_token already consumed the single whitespace after maxval, so
    // the stream now sits on the first payload byte.
    const std::size_t n = static_cast<std::size_t>(width) * height;
    const std::size_t bytes = maxval == 255 ? n : 2 * n;
    std::vector<unsigned char> raw(bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes)
        throw IoError("PGM: truncated payload in " + path);

    ImageGrid img(height, width, 0.0, maxval == 255 ? 8 : 16);
    if (maxval == 255) {
        for (std::size_t i = 0; i < n; ++i)
            img.values[i] = raw[i] / 255.0;
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const unsigned v = (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1];
            img.values[i] = v / 65535.0;
        }
    }
    return img;
}

void save_pgm16(const ImageGrid& img, const std::string& path,
                const std::string& comment) {
    validate(img);
    if (img.height < 1 || img.width < 1)
        throw ArgumentError("save_pgm16: empty image");

    std::string out;
    out.reserve(32 + comment.size() + img.pixel_count() * 2);
    out += "P5\n";
    if (!comment.empty()) {
        out += "# ";
        out += comment;
        out += "\n";
    }
    out += std::to_string(img.width) + " " + std::to_string(img.height) + "\n65535\n";
    for (double v : img.values) {
        const long q = std::lround(v * 65535.0);
        out.push_back(static_cast<char>((q >> 8) & 0xff));
        out.push_back(static_cast<char>(q & 0xff));
    }
    io::atomic_write(path, out);
}

// ---------------------------------------------------------------------------
// Bicubic resampling

namespace {

// Keys cubic-convolution kernel with a = -0.5.
double keys_cubic(double x) {
    x = std::fabs(x);
    if (x <= 1.0) return (1.5 * x - 2.5) * x * x + 1.0;
    if (x < 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0;
    return 0.0;
}

// One separable pass along x: samples each output column at
// src = (dst + 0.5) * in/out - 0.5 with clamped 4-tap support.
std::vector<double> resample_rows(const std::vector<double>& src, int h, int w_in,
                                  int w_out) {
    std::vector<double> dst(static_cast<std::size_t>(h) * w_out);
    const double scale = static_cast<double>(w_in) / w_out;
    for (int ox = 0; ox < w_out; ++ox) {
        const double sx = (ox + 0.5) * scale - 0.5;
        const int base = static_cast<int>(std::floor(sx)) - 1;
        double wgt[4];
        int tap[4];
        for (int k = 0; k < 4; ++k) {
            wgt[k] = keys_cubic(sx - (base + k));
            tap[k] = std::clamp(base + k, 0, w_in - 1);
        }
        for (int y = 0; y < h; ++y) {
            const double* row = src.data() + static_cast<std::size_t>(y) * w_in;
            dst[static_cast<std::size_t>(y) * w_out + ox] =
                wgt[0] * row[tap[0]] + wgt[1] * row[tap[1]] +
                wgt[2] * row[tap[2]] + wgt[3] * row[tap[3]];
        }
    }
    return dst;
}

std::vector<double> transpose(const std::vector<double>& src, int h, int w) {
    std::vector<double> dst(src.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            dst[static_cast<std::size_t>(x) * h + y] =
                src[static_cast<std::size_t>(y) * w + x];
    return dst;
}

} // namespace

ImageGrid bicubic_resize(const ImageGrid& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1)
        throw ArgumentError("bicubic_resize: output sizes must be >= 1");
    if (img.height < 1 || img.width < 1)
        throw ArgumentError("bicubic_resize: empty input");

    // x pass, then transpose twice around the y pass so both passes run on
    // contiguous rows.
    std::vector<double> hpass = resample_rows(img.values, img.height, img.width, out_w);
    std::vector<double> t = transpose(hpass, img.height, out_w);
    std::vector<double> vpass = resample_rows(t, out_w, img.height, out_h);
    std::vector<double> result = transpose(vpass, out_w, out_h);

    ImageGrid out(out_h, out_w, 0.0, img.source_bit_depth);
    for (std::size_t i = 0; i < result.size(); ++i)
        out.values[i] = std::clamp(result[i], 0.0, 1.0);
    return out;
}

// ---------------------------------------------------------------------------
// Tiling

namespace {

std::vector<int> tile_offsets(int dim, int patch, int stride) {
    std::vector<int> offs;
    for (int o = 0; o + patch <= dim; o += stride) offs.push_back(o);
    if (offs.back() != dim - patch) offs.push_back(dim - patch);
    return offs;
}

} // namespace

std::vector<PatchRect> tile_rects(int width, int height, int patch_size,
                                  double overlap_fraction) {
    if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0))
        throw ArgumentError("tile_rects: overlap_fraction must be in [0,1)");
    if (patch_size < 1 || patch_size > height || patch_size > width)
        throw ArgumentError("tile_rects: patch_size exceeds mosaic dimensions");

    const int stride = static_cast<int>(
        std::max(1L, std::lround(patch_size * (1.0 - overlap_fraction))));
    const std::vector<int> ys = tile_offsets(height, patch_size, stride);
    const std::vector<int> xs = tile_offsets(width, patch_size, stride);

    std::vector<PatchRect> rects;
    rects.reserve(ys.size() * xs.size());
    int id = 0;
    for (int oy : ys)
        for (int ox : xs) rects.push_back({id++, ox, oy, patch_size, patch_size});
    return rects;
}

std::vector<Patch> tile_overlapping(const ImageGrid& img, int patch_size,
                                    double overlap_fraction) {
    const std::vector<PatchRect> rects =
        tile_rects(img.width, img.height, patch_size, overlap_fraction);

    std::vector<Patch> patches;
    patches.reserve(rects.size());
    for (const PatchRect& r : rects) {
        Patch p;
        p.offset_x = r.offset_x;
        p.offset_y = r.offset_y;
        p.parent_width = img.width;
        p.parent_height = img.height;
        p.image = ImageGrid(patch_size, patch_size, 0.0, img.source_bit_depth);
        for (int y = 0; y < patch_size; ++y)
            for (int x = 0; x < patch_size; ++x)
                p.image.at(y, x) = img.at(r.offset_y + y, r.offset_x + x);
        patches.push_back(std::move(p));
    }
    return patches;
}

// ---------------------------------------------------------------------------
// Augmentation

namespace {

ImageGrid flip_h(const ImageGrid& in) {
    ImageGrid out(in.height, in.width, 0.0, in.source_bit_depth);
    for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x)
            out.at(y, x) = in.at(y, in.width - 1 - x);
    return out;
}

ImageGrid flip_v(const ImageGrid& in) {
    ImageGrid out(in.height, in.width, 0.0, in.source_bit_depth);
    for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x)
            out.at(y, x) = in.at(in.height - 1 - y, x);
    return out;
}

// One 90-degree step: out(i,j) = in(H-1-j, i), output is W x H.
ImageGrid rot90_once(const ImageGrid& in) {
    ImageGrid out(in.width, in.height, 0.0, in.source_bit_depth);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            out.at(y, x) = in.at(in.height - 1 - x, y);
    return out;
}

} // namespace

ImageGrid augment_sr(const ImageGrid& img, const AugmentSpec& spec) {
    if (spec.rot90_steps < 0 || spec.rot90_steps > 3)
        throw ArgumentError("augment_sr: rot90_steps must be in 0..3");
    if (spec.brightness_scale <= 0.0 || spec.contrast_scale <= 0.0)
        throw ArgumentError("augment_sr: scales must be positive");

    ImageGrid out = img;
    if (spec.hflip) out = flip_h(out);
    if (spec.vflip) out = flip_v(out);
    for (int i = 0; i < spec.rot90_steps; ++i) out = rot90_once(out);

    if (spec.contrast_scale != 1.0) {
        double mean = 0.0;
        for (double v : out.values) mean += v;
        mean /= static_cast<double>(out.pixel_count());
        for (double& v : out.values)
            v = std::clamp(spec.contrast_scale * (v - mean) + mean, 0.0, 1.0);
    }
    if (spec.brightness_scale != 1.0) {
        for (double& v : out.values)
            v = std::clamp(spec.brightness_scale * v, 0.0, 1.0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Patch-list CSV

void save_patch_list(const std::vector<Patch>& patches, const std::string& path,
                     const std::string& comment) {
    std::vector<PatchRect> rects;
    rects.reserve(patches.size());
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const Patch& p = patches[i];
        rects.push_back({static_cast<int>(i), p.offset_x, p.offset_y, p.image.width,
                         p.image.height});
    }
    save_patch_list(rects, path, comment);
}

void save_patch_list(const std::vector<PatchRect>& rects, const std::string& path,
                     const std::string& comment) {
    std::string out = io::comment_block(comment);
    out += "patch_id,offset_x,offset_y,width,height\n";
    for (const PatchRect& r : rects) {
        out += std::to_string(r.id) + "," + std::to_string(r.offset_x) + "," +
               std::to_string(r.offset_y) + "," + std::to_string(r.width) + "," +
               std::to_string(r.height) + "\n";
    }
    io::atomic_write(path, out);
}

std::vector<PatchRect> load_patch_list(const std::string& path) {
    std::istringstream in(io::read_file(path));
    std::string line;
    std::vector<PatchRect> rects;
    bool header_seen = false;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            const auto fields = io::split_csv_line(line);
            if (fields.size() != 5 || fields[0] != "patch_id")
                throw FormatError(path + ": expected patch-list header, got '" + line + "'");
            header_seen = true;
            continue;
        }
        const auto f = io::split_csv_line(line);
        const std::string ctx = path + " line " + std::to_string(line_no);
        if (f.size() != 5) throw FormatError(ctx + ": expected 5 fields");
        PatchRect r;
        r.id = static_cast<int>(io::parse_long(f[0], ctx));
        r.offset_x = static_cast<int>(io::parse_long(f[1], ctx));
        r.offset_y = static_cast<int>(io::parse_long(f[2], ctx));
        r.width = static_cast<int>(io::parse_long(f[3], ctx));
        r.height = static_cast<int>(io::parse_long(f[4], ctx));
        if (r.width < 1 || r.height < 1)
            throw FormatError(ctx + ": non-positive patch size");
        rects.push_back(r);
    }
    if (!header_seen) throw FormatError(path + ": missing patch-list header");
    return rects;
}

} // namespace cratersr::raster
