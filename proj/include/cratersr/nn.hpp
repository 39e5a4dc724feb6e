#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cratersr/raster.hpp"
#include "cratersr/rng.hpp"
#include "cratersr/tensor.hpp"

namespace cratersr::nn {

// ---------------------------------------------------------------------------
// Parameter containers. The same structs double as gradient containers
// (gradients have identical shapes).

struct LinearParams {
    Tensor weight; // [out, in]
    Tensor bias;   // [out]
};

struct Conv3x3Params {
    Tensor weight; // [out_ch, in_ch, 3, 3]
    Tensor bias;   // [out_ch]
};

struct ResidualBlock {
    Conv3x3Params conv1;
    Conv3x3Params conv2;
};

// Tiny residual encoder: stem conv (1 -> depth), then `blocks` of
// (conv -> ReLU -> conv) with a skip connection. Spatial size is preserved.
struct EncoderParams {
    Conv3x3Params stem;
    std::vector<ResidualBlock> blocks;
    int depth = 0;
};

struct AdamState {
    long step = 0;
    Tensor m;
    Tensor v;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

AdamState make_adam_state(const Tensor& param, double lr);

// ---------------------------------------------------------------------------
// Forward / backward kernels

Tensor linear_forward(const LinearParams& p, const Tensor& x); // x [batch,in]

struct LinearGrads {
    Tensor dx;
    Tensor dweight;
    Tensor dbias;
};
LinearGrads linear_backward(const LinearParams& p, const Tensor& x, const Tensor& dy);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy); // x is the pre-activation

Tensor conv3x3_forward(const Conv3x3Params& p, const Tensor& x); // x [in_ch,H,W]

struct Conv3x3Grads {
    Tensor dx;
    Tensor dweight;
    Tensor dbias;
};
Conv3x3Grads conv3x3_backward(const Conv3x3Params& p, const Tensor& x, const Tensor& dy);

struct L1Loss {
    double loss = 0.0;
    Tensor dpred;
};
// Mean absolute error; gradient sign(pred - target)/N with sign(0) = 0.
L1Loss l1_loss(const Tensor& pred, const Tensor& target);

// Bias-corrected Adam update, in place on param and state.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state);

// ---------------------------------------------------------------------------
// Encoder

Tensor image_to_tensor(const raster::ImageGrid& img); // [1,H,W]

struct EncoderActivations {
    Tensor input; // [1,H,W]
    Tensor stem_out;
    struct Block {
        Tensor input;    // h_in
        Tensor conv1_out; // pre-ReLU
        Tensor relu_out;
    };
    std::vector<Block> blocks;
};

Tensor encoder_forward(const EncoderParams& p, const raster::ImageGrid& img);
std::pair<Tensor, EncoderActivations> encoder_forward_cached(const EncoderParams& p,
                                                             const raster::ImageGrid& img);
// Returns parameter gradients shaped like `p`.
EncoderParams encoder_backward(const EncoderParams& p, const EncoderActivations& acts,
                               const Tensor& dfeatures);

// ---------------------------------------------------------------------------
// Initialization (uniform +-1/sqrt(fan_in), seeded)

LinearParams init_linear(Rng& rng, std::size_t out, std::size_t in);
Conv3x3Params init_conv3x3(Rng& rng, std::size_t out_ch, std::size_t in_ch);
EncoderParams init_encoder(Rng& rng, int depth, int num_blocks);

EncoderParams encoder_grads_like(const EncoderParams& p); // zero-filled

// Flat view over every parameter tensor, in a stable order.
std::vector<std::pair<std::string, Tensor*>> collect_params(EncoderParams& p);

// ---------------------------------------------------------------------------
// Gradient verification

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

// Central finite differences over each coordinate in `coords` (perturbed in
// place), compared against `analytic`. The relative error uses a small
// absolute floor so finite-difference noise on near-zero gradients does not
// dominate. Throws NumericError on non-finite values.
GradCheckResult grad_check(const std::function<double()>& loss_fn,
                           std::span<double* const> coords,
                           std::span<const double> analytic, double eps);

// ---------------------------------------------------------------------------
// Persistence: `<stem>.json` manifest (tensor name, shape, byte offset into
// the blob) plus `<stem>.bin`, float32 little-endian. Round-trips bit-exactly.

using NamedTensor = std::pair<std::string, Tensor>;

void save_tensors(const std::string& path_stem, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::string& path_stem);

} // namespace cratersr::nn
