#pragma once

#include <string>
#include <vector>

#include "cratersr/raster.hpp"

namespace cratersr::detect {

// Axis-aligned box, continuous coordinates, x_max/y_max exclusive of area
// computation only in the sense width = x_max - x_min.
struct Box {
    double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;
};

// Intersection-over-union; degenerate (zero-area) inputs give 0.
double box_iou(const Box& a, const Box& b);

// Raw detector output in patch-local pixel coordinates. The patch offset is
// carried along so detections stay meaningful after concatenation.
struct DetectionPx {
    int patch_id = 0;
    int offset_x = 0;
    int offset_y = 0;
    double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;
    double score = 0.0;
};

struct DetectionGeo {
    double lon_deg = 0.0;
    double lat_deg = 0.0;
    double diameter_km = 0.0;
    double score = 0.0;
};

// Equirectangular georeference: pixel (0,0) center maps to
// (lon_origin, lat_origin), longitude grows with +x, latitude shrinks
// with +y (north-up raster).
struct GeoRef {
    double lon_origin = 0.0;
    double lat_origin = 0.0;
    double meters_per_pixel = 0.0;
    double body_radius_m = 0.0;
};

GeoRef load_georef(const std::string& path);
void save_georef(const GeoRef& g, const std::string& path);

// Post-processing knobs, in pipeline order: boundary margin (px), minimum
// score (inclusive), NMS IoU threshold (suppress above, keep at).
struct PostprocParams {
    int boundary_margin = 0;
    double score_min = 0.0;
    double iou_max = 1.0;
};

inline Box px_box(const DetectionPx& d) {
    return {d.x_min, d.y_min, d.x_max, d.y_max};
}

// Keeps detections fully inside the closed rectangle
// [margin, patch - margin] on both axes.
std::vector<DetectionPx> remove_boundary(const std::vector<DetectionPx>& dets,
                                         int patch_size, int margin);

// Keeps detections with score >= score_min.
std::vector<DetectionPx> filter_score(const std::vector<DetectionPx>& dets,
                                      double score_min);

// Greedy non-maximum suppression: process by score descending (ties by
// x_min, then y_min), suppress anything with IoU strictly above iou_max
// against an already-kept box. iou_max = 1 therefore keeps everything.
std::vector<DetectionPx> nms_px(const std::vector<DetectionPx>& dets, double iou_max);
std::vector<DetectionGeo> nms_geo(const std::vector<DetectionGeo>& dets,
                                  double body_radius_m, double iou_max);

// Full per-patch pipeline: boundary removal, score filter, NMS. Detections
// are grouped by patch_id; NMS runs within each patch.
std::vector<DetectionPx> postprocess(const std::vector<DetectionPx>& dets,
                                     int patch_size, const PostprocParams& p);

// Arc length of one degree at the equator of a sphere: 2*pi*R / 360.
double meters_per_degree(double body_radius_m);

DetectionGeo px_to_geo(const DetectionPx& d, const GeoRef& g);

// Inverse of the center mapping: mosaic pixel coordinates of a geo point.
std::pair<double, double> geo_to_px_center(double lon_deg, double lat_deg, const GeoRef& g);

// Square degree-space box of side diameter_deg centered on the crater;
// shared by geo NMS and evaluation matching.
Box geo_box(const DetectionGeo& d, double body_radius_m);

// Converts patch-local detections to geo coordinates and merges duplicates
// from overlapping patches with geo NMS.
std::vector<DetectionGeo> merge_patches(const std::vector<DetectionPx>& dets,
                                        const GeoRef& g, double iou_max);

// Union of several detectors' geo outputs, deduplicated with geo NMS.
std::vector<DetectionGeo> combine_models(const std::vector<std::vector<DetectionGeo>>& per_model,
                                         double body_radius_m, double iou_max);

// CSVs. Comment lines start with '#'; both loaders skip them and validate
// the header row.
void save_detections_px(const std::vector<DetectionPx>& dets, const std::string& path,
                        const std::string& comment = "");
std::vector<DetectionPx> load_detections_px(const std::string& path);

void save_detections_geo(const std::vector<DetectionGeo>& dets, const std::string& path,
                         const std::string& comment = "");
std::vector<DetectionGeo> load_detections_geo(const std::string& path);

} // namespace cratersr::detect
