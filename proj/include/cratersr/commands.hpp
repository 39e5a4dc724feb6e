#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cratersr::cli {

// One struct per subcommand, filled by the argument parser. Every command
// returns 0 on success and reports problems by throwing (the driver maps
// exception types to exit codes).

struct TrainSrArgs {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
};
int cmd_train_sr(const TrainSrArgs& a);

struct SrArgs {
    std::string model; // bundle directory; empty with bicubic=true
    std::string input;
    double scale = 2.0;
    std::string out;
    bool bicubic = false;
};
int cmd_sr(const SrArgs& a);

struct PostprocessArgs {
    std::string dets;
    std::string patches;
    std::string georef;
    std::string out;
    int margin = 0;
    double score_min = 0.0;
    double tau = 0.5;
};
int cmd_postprocess(const PostprocessArgs& a);

struct CombineArgs {
    std::vector<std::string> inputs;
    std::string georef;
    std::string out;
    double tau = 0.5;
};
int cmd_combine(const CombineArgs& a);

struct EvaluateArgs {
    std::string dets;
    std::string catalog;
    std::string georef;
    std::string out;  // JSON report; empty -> stdout only
    std::string band; // "min_km,max_km"; empty -> no band filter
    double iou_min = 0.5;
};
int cmd_evaluate(const EvaluateArgs& a);

struct GridsearchArgs {
    std::string dets;
    std::string patches;
    std::string georef;
    std::string catalog;
    std::string out;
    std::string m_grid;   // comma-separated ints
    std::string s_grid;   // comma-separated doubles
    std::string tau_grid; // comma-separated doubles
    double iou_min = 0.5;
};
int cmd_gridsearch(const GridsearchArgs& a);

struct SynthArgs {
    std::string config;
    std::uint64_t seed = 0;
    std::string out_dir;
};
int cmd_synth(const SynthArgs& a);

} // namespace cratersr::cli
