#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "cratersr/commands.hpp"
#include "cratersr/errors.hpp"

// Exit codes: 0 success, 2 bad usage or malformed input, 3 numeric failure,
// 4 I/O failure.

int main(int argc, char** argv) {
    using namespace cratersr;

    CLI::App app{"Crater super-resolution and detection post-processing toolkit"};
    app.require_subcommand(1);
    int rc = 0;

    cli::TrainSrArgs train_args;
    auto* train = app.add_subcommand("train-sr", "Train the implicit SR model");
    train->add_option("--config", train_args.config, "Training config (JSON)")->required();
    train->add_option("--seed", train_args.seed, "RNG seed");
    train->add_option("--out", train_args.out, "Output model bundle directory")->required();
    train->callback([&] { rc = cli::cmd_train_sr(train_args); });

    cli::SrArgs sr_args;
    auto* sr = app.add_subcommand("sr", "Upscale a PGM image at an arbitrary scale");
    sr->add_option("--model", sr_args.model, "Model bundle directory");
    sr->add_option("--input", sr_args.input, "Input PGM")->required();
    sr->add_option("--scale", sr_args.scale, "Scale factor")->required();
    sr->add_option("--out", sr_args.out, "Output PGM")->required();
    sr->add_flag("--bicubic", sr_args.bicubic, "Bicubic resampling instead of a model");
    sr->callback([&] { rc = cli::cmd_sr(sr_args); });

    cli::PostprocessArgs pp_args;
    auto* pp = app.add_subcommand("postprocess",
                                  "Filter patch detections and merge them to geo coordinates");
    pp->add_option("--dets", pp_args.dets, "Pixel detections CSV")->required();
    pp->add_option("--patches", pp_args.patches, "Patch list CSV")->required();
    pp->add_option("--georef", pp_args.georef, "Georeference JSON")->required();
    pp->add_option("--m", pp_args.margin, "Boundary margin (px)");
    pp->add_option("--s", pp_args.score_min, "Minimum score (inclusive)");
    pp->add_option("--tau", pp_args.tau, "NMS IoU threshold");
    pp->add_option("--out", pp_args.out, "Output geo detections CSV")->required();
    pp->callback([&] { rc = cli::cmd_postprocess(pp_args); });

    cli::CombineArgs comb_args;
    auto* comb = app.add_subcommand("combine", "Union geo detections from several models");
    comb->add_option("--inputs", comb_args.inputs, "Geo detection CSVs")
        ->required()
        ->delimiter(',');
    comb->add_option("--georef", comb_args.georef, "Georeference JSON")->required();
    comb->add_option("--tau", comb_args.tau, "NMS IoU threshold");
    comb->add_option("--out", comb_args.out, "Output geo detections CSV")->required();
    comb->callback([&] { rc = cli::cmd_combine(comb_args); });

    cli::EvaluateArgs eval_args;
    auto* ev = app.add_subcommand("evaluate", "Score geo detections against a catalog");
    ev->add_option("--dets", eval_args.dets, "Geo detections CSV")->required();
    ev->add_option("--catalog", eval_args.catalog, "Crater catalog CSV")->required();
    ev->add_option("--georef", eval_args.georef, "Georeference JSON")->required();
    ev->add_option("--band", eval_args.band, "Diameter band min_km,max_km");
    ev->add_option("--iou-min", eval_args.iou_min, "Match IoU threshold");
    ev->add_option("--out", eval_args.out, "JSON report path (default: stdout)");
    ev->callback([&] { rc = cli::cmd_evaluate(eval_args); });

    cli::GridsearchArgs grid_args;
    auto* grid = app.add_subcommand("gridsearch",
                                    "Sweep post-processing parameters against a catalog");
    grid->add_option("--dets", grid_args.dets, "Pixel detections CSV")->required();
    grid->add_option("--patches", grid_args.patches, "Patch list CSV")->required();
    grid->add_option("--georef", grid_args.georef, "Georeference JSON")->required();
    grid->add_option("--catalog", grid_args.catalog, "Crater catalog CSV")->required();
    grid->add_option("--m-grid", grid_args.m_grid, "Margins, comma-separated")->required();
    grid->add_option("--s-grid", grid_args.s_grid, "Score thresholds, comma-separated")
        ->required();
    grid->add_option("--tau-grid", grid_args.tau_grid, "NMS thresholds, comma-separated")
        ->required();
    grid->add_option("--iou-min", grid_args.iou_min, "Match IoU threshold");
    grid->add_option("--out", grid_args.out, "Output grid CSV")->required();
    grid->callback([&] { rc = cli::cmd_gridsearch(grid_args); });

    cli::SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth",
                                     "Generate a synthetic catalog and matching detections");
    synth->add_option("--config", synth_args.config, "Synthesis config (JSON)")->required();
    synth->add_option("--seed", synth_args.seed, "RNG seed");
    synth->add_option("--out", synth_args.out_dir, "Output directory")->required();
    synth->callback([&] { rc = cli::cmd_synth(synth_args); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ArgumentError& e) { // includes FormatError
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return rc;
}
