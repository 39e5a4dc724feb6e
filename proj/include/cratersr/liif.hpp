#pragma once

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cratersr/nn.hpp"
#include "cratersr/raster.hpp"
#include "cratersr/rng.hpp"

namespace cratersr::liif {

// Normalized pixel-center coordinates in (-1,1): coordinate i = -1 + (2i+1)/n.
std::vector<double> pixel_center_coords(int n);

// Feature unfolding: output channel c*9 + (m+1)*3 + (n+1) at (i,j) holds
// M[c, i+m, j+n], zero outside the grid.
nn::Tensor unfold3x3(const nn::Tensor& m); // [D,H,W] -> [9D,H,W]

// Adjoint of unfold3x3 (scatter-add back to [D,H,W]).
nn::Tensor unfold3x3_backward(const nn::Tensor& d_unfolded, std::size_t depth);

// A query in the continuous image domain. u runs along height, v along
// width; cell is the normalized output pixel size (2/out_h, 2/out_w).
struct QueryPoint {
    double u = 0.0;
    double v = 0.0;
    double cell_h = 0.0;
    double cell_w = 0.0;
};

enum class Corner { TopLeft = 0, TopRight = 1, BottomLeft = 2, BottomRight = 3 };
inline constexpr std::array<Corner, 4> kCorners = {
    Corner::TopLeft, Corner::TopRight, Corner::BottomLeft, Corner::BottomRight};

// Unfolded latent grid with per-cell center coordinates. Latent vectors are
// stored contiguously per cell for fast gathering.
class FeatureMapLatent {
public:
    // Builds the unfolded grid from encoder features [D,H,W].
    explicit FeatureMapLatent(const nn::Tensor& features);

    std::size_t base_depth() const { return depth_; }
    std::size_t latent_width() const { return 9 * depth_; }
    std::size_t grid_h() const { return h_; }
    std::size_t grid_w() const { return w_; }
    const std::vector<double>& row_coords() const { return row_coords_; }
    const std::vector<double>& col_coords() const { return col_coords_; }

    std::span<const double> latent(std::size_t row, std::size_t col) const {
        return {cells_.data() + (row * w_ + col) * latent_width(), latent_width()};
    }

    // (row, col) of the latent on the requested side of the query, clamped
    // at the borders.
    std::pair<std::size_t, std::size_t> cell_index(const QueryPoint& q, Corner c) const;

private:
    std::size_t depth_ = 0, h_ = 0, w_ = 0;
    std::vector<double> cells_; // [H][W][9D]
    std::vector<double> row_coords_, col_coords_;
};

struct LatentSample {
    std::vector<double> z;
    double pu = 0.0; // center coordinate of the latent's cell
    double pv = 0.0;
    std::size_t row = 0, col = 0;
};

LatentSample nearest_latent(const FeatureMapLatent& fm, const QueryPoint& q, Corner c);

struct EnsembleWeights {
    std::array<double, 4> w{}; // indexed by Corner
};

// Local-ensemble weights: each corner is weighted by the area of the
// rectangle spanned by the query and the diagonally opposite center,
// normalized over the four corners. A fully degenerate neighborhood (all
// areas zero) falls back to uniform 1/4.
EnsembleWeights ensemble_weights(const QueryPoint& q,
                                 const std::array<std::pair<double, double>, 4>& centers);

// ---------------------------------------------------------------------------
// Implicit decoder: 5 linear layers, ReLU after layers 1-4, linear output.

struct MlpParams {
    std::vector<nn::LinearParams> layers; // 5 entries
};

MlpParams init_mlp(Rng& rng, std::size_t input_width, std::size_t hidden_width = 256);
MlpParams mlp_grads_like(const MlpParams& p);
std::vector<std::pair<std::string, nn::Tensor*>> collect_params(MlpParams& p);
std::size_t mlp_input_width(const MlpParams& p);

double mlp_forward(const MlpParams& p, std::span<const double> input);

// Concatenates [z, relcoord, cell] and runs the decoder. relcoord is the
// query-minus-center offset already scaled by the feature-grid dimensions.
double mlp_decode(const MlpParams& p, std::span<const double> z,
                  std::pair<double, double> relcoord, std::pair<double, double> cell);

struct MlpBatchCache {
    nn::Tensor x0;
    std::array<nn::Tensor, 4> pre;  // z1..z4
    std::array<nn::Tensor, 4> post; // relu(z1)..relu(z4)
};
nn::Tensor mlp_forward_batch(const MlpParams& p, const nn::Tensor& x, MlpBatchCache* cache);

struct MlpBatchGrads {
    MlpParams dparams;
    nn::Tensor dx;
};
MlpBatchGrads mlp_backward_batch(const MlpParams& p, const MlpBatchCache& cache,
                                 const nn::Tensor& dout);

// ---------------------------------------------------------------------------
// Full model

struct LiifModel {
    nn::EncoderParams encoder;
    MlpParams mlp;
};

// Encoder with the given depth/blocks; MLP input width is 9*depth + 4.
LiifModel init_model(Rng& rng, int depth, int num_blocks, std::size_t hidden_width = 256);
std::vector<std::pair<std::string, nn::Tensor*>> collect_params(LiifModel& m);

// Queries every output pixel center through the local ensemble; output
// clamped to [0,1]. Arbitrary (including non-integer) scale ratios.
raster::ImageGrid predict_sr(const nn::EncoderParams& encoder, const MlpParams& mlp,
                             const raster::ImageGrid& img, int out_h, int out_w);

// ---------------------------------------------------------------------------
// Training

struct TrainingBatch {
    raster::ImageGrid lr_patch;
    std::vector<QueryPoint> coords;
    std::vector<double> targets;
    double scale = 1.0;
};

struct SamplingOptions {
    int base_patch = 48;         // LR patch side; crop side is floor(base*s)
    double scale_min = 1.0;
    double scale_max = 4.0;
    double brightness_lo = 0.8, brightness_hi = 1.2;
    double contrast_lo = 0.8, contrast_hi = 1.2;
};

// Draws s ~ U(scale_min, scale_max), augments, crops floor(base*s) square at
// random, bicubic-resizes the crop to the base size and samples base^2
// target pixels from the crop.
TrainingBatch sample_training_pair(const raster::ImageGrid& hr, Rng& rng,
                                   const SamplingOptions& opts = {});

struct TrainState {
    std::vector<nn::AdamState> states; // aligned with collect_params(LiifModel)
};
TrainState make_train_state(LiifModel& model, double lr);
void set_learning_rate(TrainState& ts, double lr);

struct LossGrads {
    double loss = 0.0;
    nn::EncoderParams d_encoder;
    MlpParams d_mlp;
};

// Forward + full backward through ensemble, MLP, unfolding and encoder.
LossGrads loss_and_grads(const LiifModel& model, const TrainingBatch& batch);

// Adam update from precomputed gradients (e.g. accumulated over several
// sampled pairs).
void apply_grads(LiifModel& model, LossGrads& grads, TrainState& ts);

// One optimization step; returns the batch loss. Throws NumericError if the
// loss is non-finite.
double train_step(LiifModel& model, const TrainingBatch& batch, TrainState& ts);

// ---------------------------------------------------------------------------
// Bundle persistence: header.json + encoder/mlp tensor manifests.

void save_model(const LiifModel& model, const std::string& dir);
LiifModel load_model(const std::string& dir);

} // namespace cratersr::liif
