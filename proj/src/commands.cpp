#include "cratersr/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include <json.hpp>

#include "cratersr/config.hpp"
#include "cratersr/detect.hpp"
#include "cratersr/errors.hpp"
#include "cratersr/eval.hpp"
#include "cratersr/io_util.hpp"
#include "cratersr/liif.hpp"
#include "cratersr/raster.hpp"

namespace cratersr::cli {

namespace {

void add_grads(liif::LossGrads& acc, liif::LossGrads& lg) {
    acc.loss += lg.loss;
    const auto dst_e = nn::collect_params(acc.d_encoder);
    const auto src_e = nn::collect_params(lg.d_encoder);
    for (std::size_t i = 0; i < dst_e.size(); ++i) {
        auto& d = dst_e[i].second->values;
        const auto& s = src_e[i].second->values;
        for (std::size_t k = 0; k < d.size(); ++k) d[k] += s[k];
    }
    const auto dst_m = liif::collect_params(acc.d_mlp);
    const auto src_m = liif::collect_params(lg.d_mlp);
    for (std::size_t i = 0; i < dst_m.size(); ++i) {
        auto& d = dst_m[i].second->values;
        const auto& s = src_m[i].second->values;
        for (std::size_t k = 0; k < d.size(); ++k) d[k] += s[k];
    }
}

void scale_grads(liif::LossGrads& g, double f) {
    g.loss *= f;
    for (auto& [name, t] : nn::collect_params(g.d_encoder)) {
        (void)name;
        for (double& v : t->values) v *= f;
    }
    for (auto& [name, t] : liif::collect_params(g.d_mlp)) {
        (void)name;
        for (double& v : t->values) v *= f;
    }
}

int require_square_uniform(const std::vector<raster::PatchRect>& rects) {
    if (rects.empty()) throw ArgumentError("patch list is empty");
    const int size = rects.front().width;
    for (const raster::PatchRect& r : rects)
        if (r.width != size || r.height != size)
            throw ArgumentError("patch list must contain uniform square patches");
    return size;
}

std::vector<double> parse_double_list(const std::string& csv, const std::string& what) {
    std::vector<double> out;
    for (const std::string& f : io::split_csv_line(csv)) out.push_back(io::parse_double(f, what));
    return out;
}

std::vector<int> parse_int_list(const std::string& csv, const std::string& what) {
    std::vector<int> out;
    for (const std::string& f : io::split_csv_line(csv))
        out.push_back(static_cast<int>(io::parse_long(f, what)));
    return out;
}

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

} // namespace

int cmd_train_sr(const TrainSrArgs& a) {
    const nlohmann::json cfg = config::load_config_file(a.config);
    const config::TrainConfig tc = config::parse_train_config(cfg);

    std::vector<raster::ImageGrid> images;
    images.reserve(tc.images.size());
    for (const std::string& p : tc.images) images.push_back(raster::load_pgm16(p));
    const int need = static_cast<int>(std::floor(tc.base_patch * tc.scale_max));
    for (std::size_t i = 0; i < images.size(); ++i)
        if (images[i].height < need || images[i].width < need)
            throw ArgumentError("train-sr: image '" + tc.images[i] +
                                "' smaller than base_patch * scale_max");

    Rng rng(a.seed);
    liif::LiifModel model = liif::init_model(rng, tc.depth, tc.blocks, tc.hidden_width);
    liif::TrainState ts = liif::make_train_state(model, tc.lr);
    liif::SamplingOptions samp;
    samp.base_patch = tc.base_patch;
    samp.scale_min = tc.scale_min;
    samp.scale_max = tc.scale_max;

    double window_loss = 0.0;
    long window_n = 0;
    double last_loss = 0.0;
    for (long step = 1; step <= tc.steps; ++step) {
        if (tc.lr_decay_step > 0 && step == tc.lr_decay_step)
            liif::set_learning_rate(ts, ts.states.front().lr * 0.5);

        const auto pick = [&]() -> const raster::ImageGrid& {
            return images[rng.uniform_index(images.size())];
        };
        if (tc.batch == 1) {
            last_loss = liif::train_step(model, liif::sample_training_pair(pick(), rng, samp), ts);
        } else {
            liif::LossGrads acc =
                liif::loss_and_grads(model, liif::sample_training_pair(pick(), rng, samp));
            for (int b = 1; b < tc.batch; ++b) {
                liif::LossGrads lg =
                    liif::loss_and_grads(model, liif::sample_training_pair(pick(), rng, samp));
                add_grads(acc, lg);
            }
            scale_grads(acc, 1.0 / tc.batch);
            liif::apply_grads(model, acc, ts);
            last_loss = acc.loss;
        }
        window_loss += last_loss;
        ++window_n;
        if (step % tc.log_every == 0 || step == tc.steps) {
            std::cout << "step " << step << " loss " << window_loss / window_n << "\n";
            window_loss = 0.0;
            window_n = 0;
        }
    }

    liif::save_model(model, a.out);
    nlohmann::json prov;
    prov["version"] = config::kVersion;
    prov["config"] = config::config_hash(cfg);
    prov["seed"] = a.seed;
    prov["steps"] = tc.steps;
    prov["final_loss"] = last_loss;
    io::atomic_write(a.out + "/provenance.json", prov.dump(2) + "\n");
    std::cout << "saved model to " << a.out << "\n";
    return 0;
}

int cmd_sr(const SrArgs& a) {
    if (a.bicubic && !a.model.empty())
        throw ArgumentError("sr: --bicubic and --model are mutually exclusive");
    if (!a.bicubic && a.model.empty())
        throw ArgumentError("sr: need --model or --bicubic");
    if (!(a.scale > 0.0)) throw ArgumentError("sr: --scale must be positive");

    const raster::ImageGrid input = raster::load_pgm16(a.input);
    const int out_h = std::max(1L, std::lround(input.height * a.scale));
    const int out_w = std::max(1L, std::lround(input.width * a.scale));

    raster::ImageGrid result;
    if (a.bicubic) {
        result = raster::bicubic_resize(input, out_h, out_w);
    } else {
        const liif::LiifModel model = liif::load_model(a.model);
        result = liif::predict_sr(model.encoder, model.mlp, input, out_h, out_w);
    }

    nlohmann::json params;
    params["input"] = a.input;
    params["scale"] = a.scale;
    params["method"] = a.bicubic ? "bicubic" : "liif";
    raster::save_pgm16(result, a.out, config::provenance_line("sr", params));
    std::cout << "wrote " << out_w << "x" << out_h << " image to " << a.out << "\n";
    return 0;
}

int cmd_postprocess(const PostprocessArgs& a) {
    const auto dets = detect::load_detections_px(a.dets);
    const auto patches = raster::load_patch_list(a.patches);
    const detect::GeoRef georef = detect::load_georef(a.georef);
    const int patch_size = require_square_uniform(patches);

    const detect::PostprocParams p{a.margin, a.score_min, a.tau};
    const auto kept = detect::postprocess(dets, patch_size, p);
    const auto merged = detect::merge_patches(kept, georef, a.tau);

    nlohmann::json params;
    params["m"] = a.margin;
    params["s"] = a.score_min;
    params["tau"] = a.tau;
    params["patch_size"] = patch_size;
    detect::save_detections_geo(merged, a.out,
                                config::provenance_comment("postprocess", params));
    std::cout << "kept " << kept.size() << " of " << dets.size() << " detections, "
              << merged.size() << " after merge\n";
    return 0;
}

int cmd_combine(const CombineArgs& a) {
    if (a.inputs.empty()) throw ArgumentError("combine: need at least one input");
    const detect::GeoRef georef = detect::load_georef(a.georef);
    std::vector<std::vector<detect::DetectionGeo>> per_model;
    per_model.reserve(a.inputs.size());
    std::size_t total = 0;
    for (const std::string& path : a.inputs) {
        per_model.push_back(detect::load_detections_geo(path));
        total += per_model.back().size();
    }
    const auto combined = detect::combine_models(per_model, georef.body_radius_m, a.tau);

    nlohmann::json params;
    params["inputs"] = a.inputs;
    params["tau"] = a.tau;
    detect::save_detections_geo(combined, a.out,
                                config::provenance_comment("combine", params));
    std::cout << "combined " << total << " detections from " << a.inputs.size()
              << " models into " << combined.size() << "\n";
    return 0;
}

int cmd_evaluate(const EvaluateArgs& a) {
    auto dets = detect::load_detections_geo(a.dets);
    auto catalog = eval::load_catalog(a.catalog);
    const detect::GeoRef georef = detect::load_georef(a.georef);

    nlohmann::json band_json;
    if (!a.band.empty()) {
        const auto vals = parse_double_list(a.band, "--band");
        if (vals.size() != 2 || !(vals[1] > vals[0]))
            throw ArgumentError("evaluate: --band expects min_km,max_km");
        const eval::DiameterBand band{vals[0], vals[1]};
        dets = eval::filter_band(dets, band);
        catalog = eval::filter_band(catalog, band);
        band_json = {vals[0], vals[1]};
    }

    const eval::MatchResult match =
        eval::match_detections(dets, catalog, georef.body_radius_m, a.iou_min);
    const eval::Metrics m =
        eval::compute_metrics(match.pairs.size(), dets.size(), catalog.size());
    const eval::LocalizationStats loc = eval::localization_stats(match.pair_iou);
    const std::array<double, 3> arc = eval::arcimg_binned_recall(match, catalog);

    nlohmann::json report;
    report["version"] = config::kVersion;
    report["precision"] = m.precision;
    report["recall"] = m.recall;
    report["f1"] = m.f1;
    report["matched"] = match.pairs.size();
    report["detections"] = dets.size();
    report["catalog"] = catalog.size();
    report["iou_min"] = a.iou_min;
    report["band"] = band_json;
    report["localization"] = {{"mean", loc.mean}, {"stddev", loc.stddev}, {"count", loc.count}};
    report["arc_img_recall"] = {{"ge_095", arc[0]}, {"from_075_to_095", arc[1]},
                                {"from_050_to_075", arc[2]}};

    std::cout << "precision=" << fmt2(m.precision) << " recall=" << fmt2(m.recall)
              << " f1=" << fmt2(m.f1) << " matched=" << match.pairs.size() << "/"
              << catalog.size() << "\n";
    if (a.out.empty())
        std::cout << report.dump(2) << "\n";
    else
        io::atomic_write(a.out, report.dump(2) + "\n");
    return 0;
}

int cmd_gridsearch(const GridsearchArgs& a) {
    const auto dets = detect::load_detections_px(a.dets);
    const auto patches = raster::load_patch_list(a.patches);
    const detect::GeoRef georef = detect::load_georef(a.georef);
    const auto catalog = eval::load_catalog(a.catalog);
    const int patch_size = require_square_uniform(patches);

    eval::GridSpec grid;
    grid.margins = parse_int_list(a.m_grid, "--m-grid");
    grid.score_mins = parse_double_list(a.s_grid, "--s-grid");
    grid.taus = parse_double_list(a.tau_grid, "--tau-grid");

    const auto rows = eval::grid_search(dets, patch_size, georef, catalog, grid, a.iou_min);
    nlohmann::json params;
    params["m_grid"] = grid.margins;
    params["s_grid"] = grid.score_mins;
    params["tau_grid"] = grid.taus;
    params["iou_min"] = a.iou_min;
    eval::save_grid_rows(rows, a.out, config::provenance_comment("gridsearch", params));

    const eval::GridRow& best = rows[eval::best_grid_row(rows)];
    std::cout << "evaluated " << rows.size() << " combinations\n";
    std::cout << "best m=" << best.params.boundary_margin << " s="
              << io::fmt_double(best.params.score_min) << " tau="
              << io::fmt_double(best.params.iou_max) << " precision="
              << fmt2(best.metrics.precision) << " recall=" << fmt2(best.metrics.recall)
              << " f1=" << fmt2(best.metrics.f1) << "\n";
    return 0;
}

int cmd_synth(const SynthArgs& a) {
    const nlohmann::json cfg = config::load_config_file(a.config);
    const config::SynthConfig sc = config::parse_synth_config(cfg);

    std::error_code ec;
    std::filesystem::create_directories(a.out_dir, ec);
    if (ec) throw IoError("synth: cannot create directory " + a.out_dir);

    Rng rng(a.seed);
    const auto rects = raster::tile_rects(sc.mosaic_width, sc.mosaic_height, sc.patch_size,
                                          sc.overlap_fraction);

    eval::SynthCatalogOptions cat_opts;
    cat_opts.count = sc.count;
    cat_opts.min_diameter_px = sc.min_diameter_px;
    cat_opts.max_diameter_px = sc.max_diameter_px;
    cat_opts.cell_px = sc.cell_px;
    cat_opts.margin_px = sc.margin_px;
    const auto catalog =
        eval::synth_catalog(rng, sc.georef, sc.mosaic_width, sc.mosaic_height, cat_opts);

    eval::SynthDetectionOptions det_opts;
    det_opts.dropout = sc.dropout;
    det_opts.false_positives = sc.false_positives;
    det_opts.center_jitter_px = sc.center_jitter_px;
    det_opts.size_jitter_frac = sc.size_jitter_frac;
    const auto dets = eval::synth_detections(catalog, rects, sc.georef, rng, det_opts);

    const std::string comment = config::provenance_comment("synth", cfg, a.seed);
    eval::save_catalog(catalog, a.out_dir + "/catalog.csv", comment);
    detect::save_detections_px(dets, a.out_dir + "/detections.csv", comment);
    raster::save_patch_list(rects, a.out_dir + "/patches.csv", comment);
    detect::save_georef(sc.georef, a.out_dir + "/georef.json");

    std::cout << "wrote " << catalog.size() << " catalog entries, " << dets.size()
              << " detections, " << rects.size() << " patches to " << a.out_dir << "\n";
    return 0;
}

} // namespace cratersr::cli
