#include "cratersr/detect.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "cratersr/errors.hpp"
#include "cratersr/io_util.hpp"

namespace cratersr::detect {

double box_iou(const Box& a, const Box& b) {
    const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    const double inter = std::max(0.0, iw) * std::max(0.0, ih);
    const double area_a =
        std::max(0.0, a.x_max - a.x_min) * std::max(0.0, a.y_max - a.y_min);
    const double area_b =
        std::max(0.0, b.x_max - b.x_min) * std::max(0.0, b.y_max - b.y_min);
    const double uni = area_a + area_b - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

GeoRef load_georef(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(io::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("load_georef: " + path + ": " + e.what());
    }
    GeoRef g;
    try {
        g.lon_origin = j.at("lon_origin").get<double>();
        g.lat_origin = j.at("lat_origin").get<double>();
        g.meters_per_pixel = j.at("meters_per_pixel").get<double>();
        g.body_radius_m = j.at("body_radius_m").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("load_georef: " + path + ": " + e.what());
    }
    if (!(g.meters_per_pixel > 0.0) || !(g.body_radius_m > 0.0))
        throw FormatError("load_georef: meters_per_pixel and body_radius_m must be positive");
    return g;
}

void save_georef(const GeoRef& g, const std::string& path) {
    nlohmann::json j;
    j["lon_origin"] = g.lon_origin;
    j["lat_origin"] = g.lat_origin;
    j["meters_per_pixel"] = g.meters_per_pixel;
    j["body_radius_m"] = g.body_radius_m;
    io::atomic_write(path, j.dump(2) + "\n");
}

std::vector<DetectionPx> remove_boundary(const std::vector<DetectionPx>& dets,
                                         int patch_size, int margin) {
    if (patch_size <= 0) throw ArgumentError("remove_boundary: patch_size must be positive");
    if (margin < 0) throw ArgumentError("remove_boundary: negative margin");
    const double lo = margin;
    const double hi = patch_size - margin;
    std::vector<DetectionPx> out;
    for (const DetectionPx& d : dets)
        if (d.x_min >= lo && d.y_min >= lo && d.x_max <= hi && d.y_max <= hi)
            out.push_back(d);
    return out;
}

std::vector<DetectionPx> filter_score(const std::vector<DetectionPx>& dets,
                                      double score_min) {
    std::vector<DetectionPx> out;
    for (const DetectionPx& d : dets)
        if (d.score >= score_min) out.push_back(d);
    return out;
}

namespace {

// Shared greedy NMS: highest score first (ties by box x_min, then y_min),
// keep unless IoU with something already kept exceeds iou_max.
template <typename T, typename BoxFn>
std::vector<T> greedy_nms(const std::vector<T>& dets, double iou_max, BoxFn box_of) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
        const Box ba = box_of(dets[a]);
        const Box bb = box_of(dets[b]);
        if (ba.x_min != bb.x_min) return ba.x_min < bb.x_min;
        return ba.y_min < bb.y_min;
    });
    std::vector<T> kept;
    std::vector<Box> kept_boxes;
    for (const std::size_t idx : order) {
        const Box b = box_of(dets[idx]);
        bool suppressed = false;
        for (const Box& kb : kept_boxes) {
            if (box_iou(kb, b) > iou_max) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) {
            kept.push_back(dets[idx]);
            kept_boxes.push_back(b);
        }
    }
    return kept;
}

} // namespace

std::vector<DetectionPx> nms_px(const std::vector<DetectionPx>& dets, double iou_max) {
    return greedy_nms(dets, iou_max, px_box);
}

std::vector<DetectionGeo> nms_geo(const std::vector<DetectionGeo>& dets,
                                  double body_radius_m, double iou_max) {
    return greedy_nms(dets, iou_max,
                      [body_radius_m](const DetectionGeo& d) { return geo_box(d, body_radius_m); });
}

std::vector<DetectionPx> postprocess(const std::vector<DetectionPx>& dets,
                                     int patch_size, const PostprocParams& p) {
    const auto filtered =
        filter_score(remove_boundary(dets, patch_size, p.boundary_margin), p.score_min);
    std::map<int, std::vector<DetectionPx>> by_patch;
    for (const DetectionPx& d : filtered) by_patch[d.patch_id].push_back(d);
    std::vector<DetectionPx> out;
    for (auto& [id, group] : by_patch) {
        (void)id;
        const auto kept = nms_px(group, p.iou_max);
        out.insert(out.end(), kept.begin(), kept.end());
    }
    return out;
}

double meters_per_degree(double body_radius_m) {
    if (!(body_radius_m > 0.0))
        throw ArgumentError("meters_per_degree: radius must be positive");
    return 2.0 * std::numbers::pi * body_radius_m / 360.0;
}

DetectionGeo px_to_geo(const DetectionPx& d, const GeoRef& g) {
    const double mpd = meters_per_degree(g.body_radius_m);
    const double cx = d.offset_x + 0.5 * (d.x_min + d.x_max);
    const double cy = d.offset_y + 0.5 * (d.y_min + d.y_max);
    DetectionGeo out;
    out.lon_deg = g.lon_origin + cx * g.meters_per_pixel / mpd;
    out.lat_deg = g.lat_origin - cy * g.meters_per_pixel / mpd;
    out.diameter_km =
        0.5 * ((d.x_max - d.x_min) + (d.y_max - d.y_min)) * g.meters_per_pixel / 1000.0;
    out.score = d.score;
    return out;
}

std::pair<double, double> geo_to_px_center(double lon_deg, double lat_deg, const GeoRef& g) {
    const double mpd = meters_per_degree(g.body_radius_m);
    return {(lon_deg - g.lon_origin) * mpd / g.meters_per_pixel,
            (g.lat_origin - lat_deg) * mpd / g.meters_per_pixel};
}

Box geo_box(const DetectionGeo& d, double body_radius_m) {
    const double side = d.diameter_km * 1000.0 / meters_per_degree(body_radius_m);
    return {d.lon_deg - side / 2.0, d.lat_deg - side / 2.0, d.lon_deg + side / 2.0,
            d.lat_deg + side / 2.0};
}

std::vector<DetectionGeo> merge_patches(const std::vector<DetectionPx>& dets,
                                        const GeoRef& g, double iou_max) {
    std::vector<DetectionGeo> geo;
    geo.reserve(dets.size());
    for (const DetectionPx& d : dets) geo.push_back(px_to_geo(d, g));
    return nms_geo(geo, g.body_radius_m, iou_max);
}

std::vector<DetectionGeo> combine_models(const std::vector<std::vector<DetectionGeo>>& per_model,
                                         double body_radius_m, double iou_max) {
    std::vector<DetectionGeo> all;
    for (const auto& dets : per_model) all.insert(all.end(), dets.begin(), dets.end());
    return nms_geo(all, body_radius_m, iou_max);
}

// ---------------------------------------------------------------------------
// CSV I/O

namespace {
const std::string kPxHeader = "patch_id,offset_x,offset_y,x_min,y_min,x_max,y_max,score";
const std::string kGeoHeader = "lon_deg,lat_deg,diameter_km,score";
} // namespace

void save_detections_px(const std::vector<DetectionPx>& dets, const std::string& path,
                        const std::string& comment) {
    std::string out = io::comment_block(comment);
    out += kPxHeader + "\n";
    for (const DetectionPx& d : dets) {
        out += std::to_string(d.patch_id) + "," + std::to_string(d.offset_x) + "," +
               std::to_string(d.offset_y) + "," + io::fmt_double(d.x_min) + "," +
               io::fmt_double(d.y_min) + "," + io::fmt_double(d.x_max) + "," +
               io::fmt_double(d.y_max) + "," + io::fmt_double(d.score) + "\n";
    }
    io::atomic_write(path, out);
}

std::vector<DetectionPx> load_detections_px(const std::string& path) {
    std::vector<DetectionPx> out;
    for (const auto& f : io::load_csv_rows(path, kPxHeader)) {
        DetectionPx d;
        d.patch_id = static_cast<int>(io::parse_long(f[0], path));
        d.offset_x = static_cast<int>(io::parse_long(f[1], path));
        d.offset_y = static_cast<int>(io::parse_long(f[2], path));
        d.x_min = io::parse_double(f[3], path);
        d.y_min = io::parse_double(f[4], path);
        d.x_max = io::parse_double(f[5], path);
        d.y_max = io::parse_double(f[6], path);
        d.score = io::parse_double(f[7], path);
        if (d.x_max < d.x_min || d.y_max < d.y_min)
            throw FormatError(path + ": inverted box extents");
        out.push_back(d);
    }
    return out;
}

void save_detections_geo(const std::vector<DetectionGeo>& dets, const std::string& path,
                         const std::string& comment) {
    std::string out = io::comment_block(comment);
    out += kGeoHeader + "\n";
    for (const DetectionGeo& d : dets) {
        out += io::fmt_double(d.lon_deg) + "," + io::fmt_double(d.lat_deg) + "," +
               io::fmt_double(d.diameter_km) + "," + io::fmt_double(d.score) + "\n";
    }
    io::atomic_write(path, out);
}

std::vector<DetectionGeo> load_detections_geo(const std::string& path) {
    std::vector<DetectionGeo> out;
    for (const auto& f : io::load_csv_rows(path, kGeoHeader)) {
        DetectionGeo d;
        d.lon_deg = io::parse_double(f[0], path);
        d.lat_deg = io::parse_double(f[1], path);
        d.diameter_km = io::parse_double(f[2], path);
        d.score = io::parse_double(f[3], path);
        if (d.diameter_km < 0.0) throw FormatError(path + ": negative diameter");
        out.push_back(d);
    }
    return out;
}

} // namespace cratersr::detect
