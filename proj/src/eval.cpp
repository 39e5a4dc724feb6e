#include "cratersr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "cratersr/errors.hpp"
#include "cratersr/io_util.hpp"

namespace cratersr::eval {

namespace {
const std::string kCatalogHeader = "id,lat_deg,lon_deg,diameter_km,arc_img";
const std::string kGridHeader = "m,s,tau,precision,recall,f1";

detect::Box catalog_box(const CatalogEntry& e, double body_radius_m) {
    return detect::geo_box({e.lon_deg, e.lat_deg, e.diameter_km, 0.0}, body_radius_m);
}

std::string fmt_pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}
} // namespace

std::vector<CatalogEntry> load_catalog(const std::string& path) {
    std::vector<CatalogEntry> out;
    for (const auto& f : io::load_csv_rows(path, kCatalogHeader)) {
        CatalogEntry e;
        e.id = io::parse_long(f[0], path);
        e.lat_deg = io::parse_double(f[1], path);
        e.lon_deg = io::parse_double(f[2], path);
        e.diameter_km = io::parse_double(f[3], path);
        e.arc_img = io::parse_double(f[4], path);
        if (!(e.diameter_km > 0.0))
            throw FormatError(path + ": non-positive diameter for id " + std::to_string(e.id));
        if (!(e.arc_img >= 0.0 && e.arc_img <= 1.0))
            throw FormatError(path + ": arc_img outside [0,1] for id " + std::to_string(e.id));
        out.push_back(e);
    }
    return out;
}

void save_catalog(const std::vector<CatalogEntry>& entries, const std::string& path,
                  const std::string& comment) {
    std::string out = io::comment_block(comment);
    out += kCatalogHeader + "\n";
    for (const CatalogEntry& e : entries) {
        out += std::to_string(e.id) + "," + io::fmt_double(e.lat_deg) + "," +
               io::fmt_double(e.lon_deg) + "," + io::fmt_double(e.diameter_km) + "," +
               io::fmt_double(e.arc_img) + "\n";
    }
    io::atomic_write(path, out);
}

std::vector<CatalogEntry> filter_band(const std::vector<CatalogEntry>& entries,
                                      const DiameterBand& band) {
    std::vector<CatalogEntry> out;
    for (const CatalogEntry& e : entries)
        if (e.diameter_km >= band.min_km && e.diameter_km < band.max_km) out.push_back(e);
    return out;
}

std::vector<detect::DetectionGeo> filter_band(const std::vector<detect::DetectionGeo>& dets,
                                              const DiameterBand& band) {
    std::vector<detect::DetectionGeo> out;
    for (const detect::DetectionGeo& d : dets)
        if (d.diameter_km >= band.min_km && d.diameter_km < band.max_km) out.push_back(d);
    return out;
}

DiameterBand diameter_band_for_scale(double min_px, double max_px, double meters_per_pixel) {
    if (!(meters_per_pixel > 0.0))
        throw ArgumentError("diameter_band_for_scale: meters_per_pixel must be positive");
    if (!(min_px >= 0.0) || !(max_px > min_px))
        throw ArgumentError("diameter_band_for_scale: bad pixel band");
    return {min_px * meters_per_pixel / 1000.0, max_px * meters_per_pixel / 1000.0};
}

MatchResult match_detections(const std::vector<detect::DetectionGeo>& dets,
                             const std::vector<CatalogEntry>& catalog,
                             double body_radius_m, double iou_min) {
    if (!(iou_min > 0.0 && iou_min <= 1.0))
        throw ArgumentError("match_detections: iou_min must be in (0, 1]");

    MatchResult res;
    res.num_detections = dets.size();
    res.num_catalog = catalog.size();
    if (dets.empty() || catalog.empty()) return res;

    std::vector<detect::Box> det_boxes(dets.size());
    for (std::size_t i = 0; i < dets.size(); ++i)
        det_boxes[i] = detect::geo_box(dets[i], body_radius_m);
    std::vector<detect::Box> cat_boxes(catalog.size());
    double max_side = 0.0;
    for (std::size_t i = 0; i < catalog.size(); ++i) {
        cat_boxes[i] = catalog_box(catalog[i], body_radius_m);
        max_side = std::max(max_side, cat_boxes[i].x_max - cat_boxes[i].x_min);
    }

    // Catalog entries hashed by box-center cell; a cell spans the largest
    // catalog box, so every box intersecting a detection lies within one
    // cell of the detection's extent. Purely a pruning step: results match
    // the all-pairs scan.
    const double cell = std::max(max_side, 1e-9);
    std::map<std::pair<long, long>, std::vector<std::size_t>> bins;
    for (std::size_t i = 0; i < catalog.size(); ++i) {
        const double cx = 0.5 * (cat_boxes[i].x_min + cat_boxes[i].x_max);
        const double cy = 0.5 * (cat_boxes[i].y_min + cat_boxes[i].y_max);
        bins[{static_cast<long>(std::floor(cx / cell)),
              static_cast<long>(std::floor(cy / cell))}]
            .push_back(i);
    }

    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
        if (dets[a].lon_deg != dets[b].lon_deg) return dets[a].lon_deg < dets[b].lon_deg;
        return dets[a].lat_deg < dets[b].lat_deg;
    });

    std::vector<char> taken(catalog.size(), 0);
    std::vector<std::size_t> candidates;
    for (const std::size_t di : order) {
        const detect::Box& db = det_boxes[di];
        candidates.clear();
        const long x0 = static_cast<long>(std::floor(db.x_min / cell)) - 1;
        const long x1 = static_cast<long>(std::floor(db.x_max / cell)) + 1;
        const long y0 = static_cast<long>(std::floor(db.y_min / cell)) - 1;
        const long y1 = static_cast<long>(std::floor(db.y_max / cell)) + 1;
        for (long bx = x0; bx <= x1; ++bx) {
            for (long by = y0; by <= y1; ++by) {
                const auto it = bins.find({bx, by});
                if (it == bins.end()) continue;
                candidates.insert(candidates.end(), it->second.begin(), it->second.end());
            }
        }
        std::sort(candidates.begin(), candidates.end());

        double best_iou = 0.0;
        std::size_t best_ci = 0;
        bool found = false;
        for (const std::size_t ci : candidates) {
            if (taken[ci]) continue;
            const double v = detect::box_iou(db, cat_boxes[ci]);
            if (v > best_iou) {
                best_iou = v;
                best_ci = ci;
                found = true;
            }
        }
        if (found && best_iou >= iou_min) {
            taken[best_ci] = 1;
            res.pairs.emplace_back(di, best_ci);
            res.pair_iou.push_back(best_iou);
        }
    }
    return res;
}

double f1_score(double precision_pct, double recall_pct) {
    const double s = precision_pct + recall_pct;
    return s > 0.0 ? 2.0 * precision_pct * recall_pct / s : 0.0;
}

Metrics compute_metrics(std::size_t true_positives, std::size_t num_detections,
                        std::size_t num_catalog) {
    Metrics m;
    m.precision = num_detections
                      ? 100.0 * static_cast<double>(true_positives) / static_cast<double>(num_detections)
                      : 0.0;
    m.recall = num_catalog
                   ? 100.0 * static_cast<double>(true_positives) / static_cast<double>(num_catalog)
                   : 0.0;
    m.f1 = f1_score(m.precision, m.recall);
    return m;
}

LocalizationStats localization_stats(std::span<const double> iou_values) {
    LocalizationStats s;
    s.count = iou_values.size();
    if (s.count == 0) return s;
    double sum = 0.0;
    for (const double v : iou_values) sum += 100.0 * v;
    s.mean = sum / static_cast<double>(s.count);
    double sq = 0.0;
    for (const double v : iou_values) {
        const double d = 100.0 * v - s.mean;
        sq += d * d;
    }
    s.stddev = std::sqrt(sq / static_cast<double>(s.count)); // population std
    return s;
}

bool circles_overlap(double xa, double ya, double ra, double xb, double yb, double rb) {
    const double dx = xa - xb;
    const double dy = ya - yb;
    const double d2 = dx * dx + dy * dy;
    const double rd = ra - rb;
    const double rs = ra + rb;
    return rd * rd < d2 && d2 < rs * rs;
}

std::vector<std::size_t> overlapping_subset(const std::vector<CatalogEntry>& entries,
                                            double body_radius_m) {
    const double mpd = detect::meters_per_degree(body_radius_m);
    const std::size_t n = entries.size();
    std::vector<double> r_deg(n);
    double max_d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        r_deg[i] = 0.5 * entries[i].diameter_km * 1000.0 / mpd;
        max_d = std::max(max_d, 2.0 * r_deg[i]);
    }

    // Strict overlap needs center distance below r_a + r_b <= max diameter,
    // so binning at that pitch confines partners to the 3x3 neighborhood.
    const double cell = std::max(max_d, 1e-9);
    std::map<std::pair<long, long>, std::vector<std::size_t>> bins;
    const auto cell_of = [&](std::size_t i) {
        return std::pair<long, long>{static_cast<long>(std::floor(entries[i].lon_deg / cell)),
                                     static_cast<long>(std::floor(entries[i].lat_deg / cell))};
    };
    for (std::size_t i = 0; i < n; ++i) bins[cell_of(i)].push_back(i);

    std::vector<char> overlapping(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto [bx, by] = cell_of(i);
        for (long dx = -1; dx <= 1; ++dx) {
            for (long dy = -1; dy <= 1; ++dy) {
                const auto it = bins.find({bx + dx, by + dy});
                if (it == bins.end()) continue;
                for (const std::size_t j : it->second) {
                    if (j <= i) continue;
                    if (circles_overlap(entries[i].lon_deg, entries[i].lat_deg, r_deg[i],
                                        entries[j].lon_deg, entries[j].lat_deg, r_deg[j])) {
                        overlapping[i] = 1;
                        overlapping[j] = 1;
                    }
                }
            }
        }
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i)
        if (overlapping[i]) out.push_back(i);
    return out;
}

std::array<double, 3> arcimg_binned_recall(const MatchResult& match,
                                           const std::vector<CatalogEntry>& catalog) {
    std::array<std::size_t, 3> total{};
    std::array<std::size_t, 3> hit{};
    const auto bin_of = [](double arc) -> int {
        for (std::size_t b = 0; b < kArcImgBins.size(); ++b)
            if (arc >= kArcImgBins[b].first && arc < kArcImgBins[b].second)
                return static_cast<int>(b);
        return -1;
    };
    for (const CatalogEntry& e : catalog) {
        const int b = bin_of(e.arc_img);
        if (b >= 0) ++total[static_cast<std::size_t>(b)];
    }
    for (const auto& [di, ci] : match.pairs) {
        (void)di;
        const int b = bin_of(catalog[ci].arc_img);
        if (b >= 0) ++hit[static_cast<std::size_t>(b)];
    }
    std::array<double, 3> out{};
    for (std::size_t b = 0; b < 3; ++b)
        out[b] = total[b] ? 100.0 * static_cast<double>(hit[b]) / static_cast<double>(total[b])
                          : 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Grid search

std::vector<GridRow> grid_search(const std::vector<detect::DetectionPx>& raw,
                                 int patch_size, const detect::GeoRef& georef,
                                 const std::vector<CatalogEntry>& catalog,
                                 const GridSpec& grid, double iou_min) {
    if (grid.margins.empty() || grid.score_mins.empty() || grid.taus.empty())
        throw ArgumentError("grid_search: every axis needs at least one value");
    std::vector<GridRow> rows;
    rows.reserve(grid.margins.size() * grid.score_mins.size() * grid.taus.size());
    for (const int m : grid.margins) {
        for (const double s : grid.score_mins) {
            for (const double tau : grid.taus) {
                const detect::PostprocParams p{m, s, tau};
                const auto merged =
                    detect::merge_patches(detect::postprocess(raw, patch_size, p), georef, tau);
                const auto match =
                    match_detections(merged, catalog, georef.body_radius_m, iou_min);
                rows.push_back(
                    {p, compute_metrics(match.pairs.size(), merged.size(), catalog.size())});
            }
        }
    }
    return rows;
}

std::size_t best_grid_row(const std::vector<GridRow>& rows) {
    if (rows.empty()) throw ArgumentError("best_grid_row: no rows");
    std::size_t best = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const GridRow& a = rows[i];
        const GridRow& b = rows[best];
        bool better = false;
        if (a.metrics.f1 != b.metrics.f1)
            better = a.metrics.f1 > b.metrics.f1;
        else if (a.metrics.precision != b.metrics.precision)
            better = a.metrics.precision > b.metrics.precision;
        else if (a.params.iou_max != b.params.iou_max)
            better = a.params.iou_max < b.params.iou_max;
        else if (a.params.score_min != b.params.score_min)
            better = a.params.score_min < b.params.score_min;
        else if (a.params.boundary_margin != b.params.boundary_margin)
            better = a.params.boundary_margin < b.params.boundary_margin;
        if (better) best = i;
    }
    return best;
}

void save_grid_rows(const std::vector<GridRow>& rows, const std::string& path,
                    const std::string& comment) {
    std::string out = io::comment_block(comment);
    out += kGridHeader + "\n";
    for (const GridRow& r : rows) {
        out += std::to_string(r.params.boundary_margin) + "," +
               io::fmt_double(r.params.score_min) + "," + io::fmt_double(r.params.iou_max) +
               "," + fmt_pct(r.metrics.precision) + "," + fmt_pct(r.metrics.recall) + "," +
               fmt_pct(r.metrics.f1) + "\n";
    }
    io::atomic_write(path, out);
}

std::vector<GridRow> load_grid_rows(const std::string& path) {
    std::vector<GridRow> out;
    for (const auto& f : io::load_csv_rows(path, kGridHeader)) {
        GridRow r;
        r.params.boundary_margin = static_cast<int>(io::parse_long(f[0], path));
        r.params.score_min = io::parse_double(f[1], path);
        r.params.iou_max = io::parse_double(f[2], path);
        r.metrics.precision = io::parse_double(f[3], path);
        r.metrics.recall = io::parse_double(f[4], path);
        r.metrics.f1 = io::parse_double(f[5], path);
        out.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic fixtures

std::vector<CatalogEntry> synth_catalog(Rng& rng, const detect::GeoRef& georef,
                                        int mosaic_w, int mosaic_h,
                                        const SynthCatalogOptions& opts) {
    if (opts.count == 0) throw ArgumentError("synth_catalog: count must be positive");
    if (!(opts.min_diameter_px > 0.0) || !(opts.max_diameter_px >= opts.min_diameter_px))
        throw ArgumentError("synth_catalog: bad diameter range");
    if (!(opts.cell_px > opts.max_diameter_px))
        throw ArgumentError("synth_catalog: cell must exceed the largest diameter");

    const double usable_w = mosaic_w - 2.0 * opts.margin_px;
    const double usable_h = mosaic_h - 2.0 * opts.margin_px;
    const long nx = static_cast<long>(std::floor(usable_w / opts.cell_px));
    const long ny = static_cast<long>(std::floor(usable_h / opts.cell_px));
    if (nx < 1 || ny < 1 || static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) < opts.count)
        throw ArgumentError("synth_catalog: mosaic too small for requested count");

    // Pick `count` distinct layout cells; one crater per cell keeps every
    // pair of boxes disjoint.
    const std::size_t n_cells = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
    std::vector<std::size_t> cells(n_cells);
    std::iota(cells.begin(), cells.end(), std::size_t{0});
    for (std::size_t k = 0; k < opts.count; ++k)
        std::swap(cells[k], cells[k + rng.uniform_index(n_cells - k)]);

    const double mpp = georef.meters_per_pixel;
    const double mpd = detect::meters_per_degree(georef.body_radius_m);
    std::vector<CatalogEntry> out;
    out.reserve(opts.count);
    for (std::size_t k = 0; k < opts.count; ++k) {
        const std::size_t cell = cells[k];
        const double cell_x = opts.margin_px + static_cast<double>(cell % static_cast<std::size_t>(nx)) * opts.cell_px;
        const double cell_y = opts.margin_px + static_cast<double>(cell / static_cast<std::size_t>(nx)) * opts.cell_px;
        const double d_px = rng.uniform(opts.min_diameter_px, opts.max_diameter_px);
        const double slack = (opts.cell_px - d_px) / 2.0;
        const double cx = cell_x + opts.cell_px / 2.0 + rng.uniform(-slack, slack);
        const double cy = cell_y + opts.cell_px / 2.0 + rng.uniform(-slack, slack);

        CatalogEntry e;
        e.id = static_cast<long>(k) + 1;
        e.lon_deg = georef.lon_origin + cx * mpp / mpd;
        e.lat_deg = georef.lat_origin - cy * mpp / mpd;
        e.diameter_km = d_px * mpp / 1000.0;
        e.arc_img = rng.uniform(opts.arc_img_lo, opts.arc_img_hi);
        out.push_back(e);
    }
    return out;
}

std::vector<detect::DetectionPx> synth_detections(const std::vector<CatalogEntry>& catalog,
                                                  const std::vector<raster::PatchRect>& patches,
                                                  const detect::GeoRef& georef, Rng& rng,
                                                  const SynthDetectionOptions& opts) {
    if (patches.empty()) throw ArgumentError("synth_detections: no patches");
    if (!(opts.dropout >= 0.0 && opts.dropout <= 1.0))
        throw ArgumentError("synth_detections: dropout must be in [0,1]");

    double mosaic_w = 0.0, mosaic_h = 0.0;
    for (const raster::PatchRect& p : patches) {
        mosaic_w = std::max(mosaic_w, static_cast<double>(p.offset_x + p.width));
        mosaic_h = std::max(mosaic_h, static_cast<double>(p.offset_y + p.height));
    }

    const auto emit_in_patches = [&](double x_min, double y_min, double x_max, double y_max,
                                     double score, std::vector<detect::DetectionPx>& out) {
        bool placed = false;
        for (const raster::PatchRect& p : patches) {
            if (x_min >= p.offset_x && y_min >= p.offset_y &&
                x_max <= p.offset_x + p.width && y_max <= p.offset_y + p.height) {
                out.push_back({p.id, p.offset_x, p.offset_y, x_min - p.offset_x,
                               y_min - p.offset_y, x_max - p.offset_x, y_max - p.offset_y,
                               score});
                placed = true;
            }
        }
        return placed;
    };

    std::vector<detect::DetectionPx> out;
    std::vector<std::pair<std::pair<double, double>, double>> circles; // (center, radius) px
    circles.reserve(catalog.size());
    for (const CatalogEntry& e : catalog) {
        const auto [cx, cy] = detect::geo_to_px_center(e.lon_deg, e.lat_deg, georef);
        const double d_px = e.diameter_km * 1000.0 / georef.meters_per_pixel;
        circles.push_back({{cx, cy}, d_px / 2.0});

        // Draw everything before branching so the stream stays aligned
        // whether or not the entry is dropped.
        const bool drop = rng.bernoulli(opts.dropout);
        const double jx = rng.uniform(-opts.center_jitter_px, opts.center_jitter_px);
        const double jy = rng.uniform(-opts.center_jitter_px, opts.center_jitter_px);
        const double sf = 1.0 + rng.uniform(-opts.size_jitter_frac, opts.size_jitter_frac);
        const double score = rng.uniform(opts.tp_score_lo, opts.tp_score_hi);
        if (drop) continue;

        const double d = d_px * sf;
        const double x0 = cx + jx - d / 2.0, x1 = cx + jx + d / 2.0;
        const double y0 = cy + jy - d / 2.0, y1 = cy + jy + d / 2.0;
        emit_in_patches(x0, y0, x1, y1, score, out);
    }

    for (int i = 0; i < opts.false_positives; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
            const double d = rng.uniform(opts.fp_diameter_lo_px, opts.fp_diameter_hi_px);
            const double cx = rng.uniform(0.0, mosaic_w);
            const double cy = rng.uniform(0.0, mosaic_h);
            const double score = rng.uniform(opts.fp_score_lo, opts.fp_score_hi);
            bool clear = true;
            for (const auto& [center, r] : circles) {
                const double dx = cx - center.first;
                const double dy = cy - center.second;
                const double keep_out = 2.0 * (d / 2.0 + r);
                if (dx * dx + dy * dy <= keep_out * keep_out) {
                    clear = false;
                    break;
                }
            }
            if (!clear) continue;
            placed = emit_in_patches(cx - d / 2.0, cy - d / 2.0, cx + d / 2.0, cy + d / 2.0,
                                     score, out);
        }
        if (!placed)
            throw ArgumentError("synth_detections: could not place a false positive clear "
                                "of the catalog");
    }
    return out;
}

} // namespace cratersr::eval
