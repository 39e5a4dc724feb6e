#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cratersr/detect.hpp"
#include "cratersr/raster.hpp"
#include "cratersr/rng.hpp"

namespace cratersr::eval {

struct CatalogEntry {
    long id = 0;
    double lat_deg = 0.0;
    double lon_deg = 0.0;
    double diameter_km = 0.0;
    double arc_img = 0.0; // visible-rim fraction in imagery, 0..1
};

// CSV: `id,lat_deg,lon_deg,diameter_km,arc_img`, '#' comments allowed.
std::vector<CatalogEntry> load_catalog(const std::string& path);
void save_catalog(const std::vector<CatalogEntry>& entries, const std::string& path,
                  const std::string& comment = "");

// Half-open diameter interval [min_km, max_km).
struct DiameterBand {
    double min_km = 0.0;
    double max_km = 0.0;
};

std::vector<CatalogEntry> filter_band(const std::vector<CatalogEntry>& entries,
                                      const DiameterBand& band);
std::vector<detect::DetectionGeo> filter_band(const std::vector<detect::DetectionGeo>& dets,
                                              const DiameterBand& band);

// Pixel band -> km band at a given resolution (km = px * mpp / 1000).
DiameterBand diameter_band_for_scale(double min_px, double max_px,
                                     double meters_per_pixel);

// One-to-one greedy matching: detections by score descending (ties by lon,
// then lat), each takes the unmatched catalog entry of highest IoU provided
// it reaches iou_min. Boxes are degree-space squares of side diameter_deg.
struct MatchResult {
    std::vector<std::pair<std::size_t, std::size_t>> pairs; // (det index, cat index)
    std::vector<double> pair_iou;                           // aligned with pairs
    std::size_t num_detections = 0;
    std::size_t num_catalog = 0;
};

MatchResult match_detections(const std::vector<detect::DetectionGeo>& dets,
                             const std::vector<CatalogEntry>& catalog,
                             double body_radius_m, double iou_min = 0.5);

// Percentages; empty denominators give 0.
struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

double f1_score(double precision_pct, double recall_pct);
Metrics compute_metrics(std::size_t true_positives, std::size_t num_detections,
                        std::size_t num_catalog);

// Mean and population standard deviation of matched-pair IoU, in percent.
struct LocalizationStats {
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t count = 0;
};
LocalizationStats localization_stats(std::span<const double> iou_values);

// Strict two-circle intersection: (r_a - r_b)^2 < d^2 < (r_a + r_b)^2.
// Tangency and containment both count as non-overlapping.
bool circles_overlap(double xa, double ya, double ra, double xb, double yb, double rb);

// Indices (ascending) of catalog entries whose degree-space circle strictly
// overlaps at least one other entry's. Uses spatial binning; equivalent to
// the all-pairs scan.
std::vector<std::size_t> overlapping_subset(const std::vector<CatalogEntry>& entries,
                                            double body_radius_m);

// Recall (percent) within arc_img bins [0.95, inf), [0.75, 0.95), [0.5, 0.75).
inline constexpr std::array<std::pair<double, double>, 3> kArcImgBins = {{
    {0.95, std::numeric_limits<double>::infinity()},
    {0.75, 0.95},
    {0.50, 0.75},
}};
std::array<double, 3> arcimg_binned_recall(const MatchResult& match,
                                           const std::vector<CatalogEntry>& catalog);

// ---------------------------------------------------------------------------
// Post-processing parameter sweep

struct GridSpec {
    std::vector<int> margins;       // boundary margin m
    std::vector<double> score_mins; // score threshold s
    std::vector<double> taus;       // NMS IoU threshold
};

struct GridRow {
    detect::PostprocParams params;
    Metrics metrics;
};

// Runs the full pipeline (per-patch boundary/score/NMS, geo merge with the
// same tau, match against the catalog) for every (m, s, tau), m-major
// order. CSV: `m,s,tau,precision,recall,f1` with two-decimal percentages.
std::vector<GridRow> grid_search(const std::vector<detect::DetectionPx>& raw,
                                 int patch_size, const detect::GeoRef& georef,
                                 const std::vector<CatalogEntry>& catalog,
                                 const GridSpec& grid, double iou_min = 0.5);

// Index of the winning row: best F1, ties broken by higher precision, then
// smaller tau, then smaller s, then smaller m.
std::size_t best_grid_row(const std::vector<GridRow>& rows);

void save_grid_rows(const std::vector<GridRow>& rows, const std::string& path,
                    const std::string& comment = "");
std::vector<GridRow> load_grid_rows(const std::string& path);

// ---------------------------------------------------------------------------
// Synthetic fixtures: a catalog laid out on a jittered grid (boxes never
// overlap), plus detections derived from it through the inverse geo mapping.

struct SynthCatalogOptions {
    std::size_t count = 100;
    double min_diameter_px = 10.0;
    double max_diameter_px = 24.0;
    double cell_px = 32.0;   // layout cell; must exceed max diameter
    double margin_px = 16.0; // keep-out border of the mosaic
    double arc_img_lo = 0.2;
    double arc_img_hi = 1.0;
};

std::vector<CatalogEntry> synth_catalog(Rng& rng, const detect::GeoRef& georef,
                                        int mosaic_w, int mosaic_h,
                                        const SynthCatalogOptions& opts);

struct SynthDetectionOptions {
    double dropout = 0.0;            // per-entry drop probability
    int false_positives = 0;         // clutter boxes away from every crater
    double center_jitter_px = 0.0;   // uniform +- offset per axis
    double size_jitter_frac = 0.0;   // uniform +- relative size change
    double tp_score_lo = 0.6, tp_score_hi = 1.0;
    double fp_score_lo = 0.05, fp_score_hi = 1.0;
    double fp_diameter_lo_px = 8.0, fp_diameter_hi_px = 40.0;
};

// Every surviving catalog entry is emitted in each patch that fully
// contains its box (duplicates are what the merge step is for). False
// positives are rejection-sampled at least two diameter sums away from
// every catalog circle, so they can never match one.
std::vector<detect::DetectionPx> synth_detections(const std::vector<CatalogEntry>& catalog,
                                                  const std::vector<raster::PatchRect>& patches,
                                                  const detect::GeoRef& georef, Rng& rng,
                                                  const SynthDetectionOptions& opts);

} // namespace cratersr::eval
