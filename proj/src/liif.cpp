#include "cratersr/liif.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>

#include <json.hpp>

#include "cratersr/errors.hpp"
#include "cratersr/io_util.hpp"

namespace cratersr::liif {

std::vector<double> pixel_center_coords(int n) {
    if (n <= 0) throw ArgumentError("pixel_center_coords: grid size must be positive");
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] = -1.0 + (2.0 * i + 1.0) / n;
    return out;
}

nn::Tensor unfold3x3(const nn::Tensor& m) {
    if (m.rank() != 3) throw ArgumentError("unfold3x3: expected a [D,H,W] tensor");
    const std::size_t d = m.shape[0], h = m.shape[1], w = m.shape[2];
    nn::Tensor out({9 * d, h, w});
    for (std::size_t c = 0; c < d; ++c) {
        for (int dm = -1; dm <= 1; ++dm) {
            for (int dn = -1; dn <= 1; ++dn) {
                const std::size_t oc =
                    c * 9 + static_cast<std::size_t>((dm + 1) * 3 + (dn + 1));
                for (std::size_t i = 0; i < h; ++i) {
                    const long si = static_cast<long>(i) + dm;
                    if (si < 0 || si >= static_cast<long>(h)) continue;
                    for (std::size_t j = 0; j < w; ++j) {
                        const long sj = static_cast<long>(j) + dn;
                        if (sj < 0 || sj >= static_cast<long>(w)) continue;
                        out.at3(oc, i, j) =
                            m.at3(c, static_cast<std::size_t>(si), static_cast<std::size_t>(sj));
                    }
                }
            }
        }
    }
    return out;
}

nn::Tensor unfold3x3_backward(const nn::Tensor& d_unfolded, std::size_t depth) {
    if (d_unfolded.rank() != 3 || depth == 0 || d_unfolded.shape[0] != 9 * depth)
        throw ArgumentError("unfold3x3_backward: channel count does not match depth");
    const std::size_t h = d_unfolded.shape[1], w = d_unfolded.shape[2];
    nn::Tensor dm({depth, h, w});
    for (std::size_t c = 0; c < depth; ++c) {
        for (int om = -1; om <= 1; ++om) {
            for (int on = -1; on <= 1; ++on) {
                const std::size_t oc =
                    c * 9 + static_cast<std::size_t>((om + 1) * 3 + (on + 1));
                for (std::size_t i = 0; i < h; ++i) {
                    const long si = static_cast<long>(i) + om;
                    if (si < 0 || si >= static_cast<long>(h)) continue;
                    for (std::size_t j = 0; j < w; ++j) {
                        const long sj = static_cast<long>(j) + on;
                        if (sj < 0 || sj >= static_cast<long>(w)) continue;
                        dm.at3(c, static_cast<std::size_t>(si), static_cast<std::size_t>(sj)) +=
                            d_unfolded.at3(oc, i, j);
                    }
                }
            }
        }
    }
    return dm;
}

FeatureMapLatent::FeatureMapLatent(const nn::Tensor& features) {
    if (features.rank() != 3) throw ArgumentError("FeatureMapLatent: expected [D,H,W]");
    depth_ = features.shape[0];
    h_ = features.shape[1];
    w_ = features.shape[2];
    if (depth_ == 0 || h_ == 0 || w_ == 0)
        throw ArgumentError("FeatureMapLatent: empty feature map");
    // Channels-last copy so each latent vector is contiguous.
    cells_.assign(h_ * w_ * 9 * depth_, 0.0);
    for (std::size_t i = 0; i < h_; ++i) {
        for (std::size_t j = 0; j < w_; ++j) {
            double* cell = cells_.data() + (i * w_ + j) * 9 * depth_;
            for (std::size_t c = 0; c < depth_; ++c) {
                for (int m = -1; m <= 1; ++m) {
                    const long si = static_cast<long>(i) + m;
                    for (int n = -1; n <= 1; ++n) {
                        const long sj = static_cast<long>(j) + n;
                        double v = 0.0;
                        if (si >= 0 && si < static_cast<long>(h_) && sj >= 0 &&
                            sj < static_cast<long>(w_))
                            v = features.at3(c, static_cast<std::size_t>(si),
                                             static_cast<std::size_t>(sj));
                        cell[c * 9 + static_cast<std::size_t>((m + 1) * 3 + (n + 1))] = v;
                    }
                }
            }
        }
    }
    row_coords_ = pixel_center_coords(static_cast<int>(h_));
    col_coords_ = pixel_center_coords(static_cast<int>(w_));
}

std::pair<std::size_t, std::size_t> FeatureMapLatent::cell_index(const QueryPoint& q,
                                                                 Corner c) const {
    // Continuous grid index of the query; floor gives the top-left neighbor.
    const double tr = (q.u + 1.0) * static_cast<double>(h_) / 2.0 - 0.5;
    const double tc = (q.v + 1.0) * static_cast<double>(w_) / 2.0 - 0.5;
    const bool bottom = (c == Corner::BottomLeft || c == Corner::BottomRight);
    const bool right = (c == Corner::TopRight || c == Corner::BottomRight);
    const long r = std::clamp(static_cast<long>(std::floor(tr)) + (bottom ? 1L : 0L), 0L,
                              static_cast<long>(h_) - 1);
    const long col = std::clamp(static_cast<long>(std::floor(tc)) + (right ? 1L : 0L), 0L,
                                static_cast<long>(w_) - 1);
    return {static_cast<std::size_t>(r), static_cast<std::size_t>(col)};
}

LatentSample nearest_latent(const FeatureMapLatent& fm, const QueryPoint& q, Corner c) {
    const auto [row, col] = fm.cell_index(q, c);
    const auto z = fm.latent(row, col);
    LatentSample s;
    s.z.assign(z.begin(), z.end());
    s.pu = fm.row_coords()[row];
    s.pv = fm.col_coords()[col];
    s.row = row;
    s.col = col;
    return s;
}

EnsembleWeights ensemble_weights(const QueryPoint& q,
                                 const std::array<std::pair<double, double>, 4>& centers) {
    // Each corner's area is spanned against the diagonally opposite center:
    // TL<->BR, TR<->BL.
    constexpr std::array<std::size_t, 4> diag = {3, 2, 1, 0};
    EnsembleWeights out;
    double sum = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
        const auto& [pu, pv] = centers[diag[c]];
        out.w[c] = std::abs(q.u - pu) * std::abs(q.v - pv);
        sum += out.w[c];
    }
    if (sum == 0.0) {
        out.w.fill(0.25);
        return out;
    }
    for (double& v : out.w) v /= sum;
    return out;
}

// ---------------------------------------------------------------------------
// MLP

MlpParams init_mlp(Rng& rng, std::size_t input_width, std::size_t hidden_width) {
    if (input_width == 0 || hidden_width == 0)
        throw ArgumentError("init_mlp: widths must be positive");
    const std::array<std::size_t, 6> widths = {input_width, hidden_width, hidden_width,
                                               hidden_width, hidden_width, 1};
    MlpParams p;
    p.layers.reserve(5);
    for (std::size_t l = 0; l < 5; ++l)
        p.layers.push_back(nn::init_linear(rng, widths[l + 1], widths[l]));
    return p;
}

MlpParams mlp_grads_like(const MlpParams& p) {
    MlpParams g;
    g.layers.reserve(p.layers.size());
    for (const auto& l : p.layers)
        g.layers.push_back({nn::zeros_like(l.weight), nn::zeros_like(l.bias)});
    return g;
}

std::vector<std::pair<std::string, nn::Tensor*>> collect_params(MlpParams& p) {
    std::vector<std::pair<std::string, nn::Tensor*>> out;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const std::string stem = "layer" + std::to_string(l);
        out.emplace_back(stem + ".weight", &p.layers[l].weight);
        out.emplace_back(stem + ".bias", &p.layers[l].bias);
    }
    return out;
}

std::size_t mlp_input_width(const MlpParams& p) {
    if (p.layers.empty()) throw ArgumentError("mlp_input_width: uninitialized decoder");
    return p.layers.front().weight.shape[1];
}

nn::Tensor mlp_forward_batch(const MlpParams& p, const nn::Tensor& x, MlpBatchCache* cache) {
    if (p.layers.size() != 5) throw ArgumentError("mlp_forward_batch: expected 5 layers");
    if (x.rank() != 2 || x.shape[1] != p.layers[0].weight.shape[1])
        throw ArgumentError("mlp_forward_batch: input width mismatch");
    if (cache) cache->x0 = x;
    nn::Tensor h = x;
    for (std::size_t l = 0; l < 4; ++l) {
        nn::Tensor z = nn::linear_forward(p.layers[l], h);
        nn::Tensor a = nn::relu(z);
        if (cache) {
            cache->pre[l] = std::move(z);
            cache->post[l] = a;
        }
        h = std::move(a);
    }
    return nn::linear_forward(p.layers[4], h);
}

MlpBatchGrads mlp_backward_batch(const MlpParams& p, const MlpBatchCache& cache,
                                 const nn::Tensor& dout) {
    if (p.layers.size() != 5) throw ArgumentError("mlp_backward_batch: expected 5 layers");
    MlpBatchGrads out;
    out.dparams.layers.resize(5);
    nn::LinearGrads g = nn::linear_backward(p.layers[4], cache.post[3], dout);
    out.dparams.layers[4] = {std::move(g.dweight), std::move(g.dbias)};
    nn::Tensor d = std::move(g.dx);
    for (int l = 3; l >= 0; --l) {
        const std::size_t li = static_cast<std::size_t>(l);
        nn::Tensor dz = nn::relu_backward(cache.pre[li], d);
        const nn::Tensor& input = (l == 0) ? cache.x0 : cache.post[li - 1];
        g = nn::linear_backward(p.layers[li], input, dz);
        out.dparams.layers[li] = {std::move(g.dweight), std::move(g.dbias)};
        d = std::move(g.dx);
    }
    out.dx = std::move(d);
    return out;
}

double mlp_forward(const MlpParams& p, std::span<const double> input) {
    nn::Tensor x({1, input.size()}, std::vector<double>(input.begin(), input.end()));
    return mlp_forward_batch(p, x, nullptr).values[0];
}

double mlp_decode(const MlpParams& p, std::span<const double> z,
                  std::pair<double, double> relcoord, std::pair<double, double> cell) {
    if (z.size() + 4 != mlp_input_width(p))
        throw ArgumentError("mlp_decode: latent width does not match decoder input");
    std::vector<double> row(z.begin(), z.end());
    row.push_back(relcoord.first);
    row.push_back(relcoord.second);
    row.push_back(cell.first);
    row.push_back(cell.second);
    return mlp_forward(p, row);
}

// ---------------------------------------------------------------------------
// Model assembly

LiifModel init_model(Rng& rng, int depth, int num_blocks, std::size_t hidden_width) {
    LiifModel m;
    m.encoder = nn::init_encoder(rng, depth, num_blocks);
    m.mlp = init_mlp(rng, 9 * static_cast<std::size_t>(depth) + 4, hidden_width);
    return m;
}

std::vector<std::pair<std::string, nn::Tensor*>> collect_params(LiifModel& m) {
    std::vector<std::pair<std::string, nn::Tensor*>> out;
    for (auto& [name, t] : nn::collect_params(m.encoder))
        out.emplace_back("encoder." + name, t);
    for (auto& [name, t] : collect_params(m.mlp)) out.emplace_back("mlp." + name, t);
    return out;
}

namespace {

// Fills 4 decoder input rows per query (one per ensemble corner) starting at
// x row `first_row`: [latent, relcoord * grid size, cell]. Optionally
// records the corner cell indices and ensemble weights for the backward pass.
void fill_query_rows(const FeatureMapLatent& fm, std::span<const QueryPoint> queries,
                     std::size_t first_row, nn::Tensor& x,
                     std::array<std::pair<std::size_t, std::size_t>, 4>* cells_out,
                     EnsembleWeights* wts_out) {
    const std::size_t lw = fm.latent_width();
    const double gh = static_cast<double>(fm.grid_h());
    const double gw = static_cast<double>(fm.grid_w());
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const QueryPoint& query = queries[q];
        std::array<std::pair<std::size_t, std::size_t>, 4> cells;
        std::array<std::pair<double, double>, 4> centers;
        for (std::size_t c = 0; c < 4; ++c) {
            cells[c] = fm.cell_index(query, kCorners[c]);
            centers[c] = {fm.row_coords()[cells[c].first], fm.col_coords()[cells[c].second]};
        }
        for (std::size_t c = 0; c < 4; ++c) {
            double* row = x.data() + (first_row + 4 * q + c) * x.shape[1];
            const auto z = fm.latent(cells[c].first, cells[c].second);
            std::copy(z.begin(), z.end(), row);
            row[lw + 0] = (query.u - centers[c].first) * gh;
            row[lw + 1] = (query.v - centers[c].second) * gw;
            row[lw + 2] = query.cell_h;
            row[lw + 3] = query.cell_w;
        }
        if (cells_out) cells_out[q] = cells;
        if (wts_out) wts_out[q] = ensemble_weights(query, centers);
    }
}

// Adjoint of the channels-last latent gather + unfolding, back to [D,H,W].
nn::Tensor fold_cells_last(const std::vector<double>& d_cells, std::size_t depth,
                           std::size_t h, std::size_t w) {
    nn::Tensor dm({depth, h, w});
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            const double* dc = d_cells.data() + (i * w + j) * 9 * depth;
            for (std::size_t c = 0; c < depth; ++c) {
                for (int m = -1; m <= 1; ++m) {
                    const long si = static_cast<long>(i) + m;
                    if (si < 0 || si >= static_cast<long>(h)) continue;
                    for (int n = -1; n <= 1; ++n) {
                        const long sj = static_cast<long>(j) + n;
                        if (sj < 0 || sj >= static_cast<long>(w)) continue;
                        dm.at3(c, static_cast<std::size_t>(si), static_cast<std::size_t>(sj)) +=
                            dc[c * 9 + static_cast<std::size_t>((m + 1) * 3 + (n + 1))];
                    }
                }
            }
        }
    }
    return dm;
}

} // namespace

raster::ImageGrid predict_sr(const nn::EncoderParams& encoder, const MlpParams& mlp,
                             const raster::ImageGrid& img, int out_h, int out_w) {
    raster::validate(img);
    if (out_h <= 0 || out_w <= 0)
        throw ArgumentError("predict_sr: output size must be positive");
    const nn::Tensor features = nn::encoder_forward(encoder, img);
    const FeatureMapLatent fm(features);
    const std::size_t in_w = mlp_input_width(mlp);
    if (in_w != fm.latent_width() + 4)
        throw ArgumentError("predict_sr: decoder width does not match encoder depth");

    const std::vector<double> ys = pixel_center_coords(out_h);
    const std::vector<double> xs = pixel_center_coords(out_w);
    const double cell_h = 2.0 / out_h;
    const double cell_w = 2.0 / out_w;

    raster::ImageGrid out(out_h, out_w, 0.0, img.source_bit_depth);

    constexpr std::size_t kChunk = 1024; // queries per decoder batch
    std::vector<QueryPoint> queries;
    queries.reserve(kChunk);
    std::vector<EnsembleWeights> wts(kChunk);
    std::size_t write_pos = 0;
    const auto flush = [&] {
        if (queries.empty()) return;
        nn::Tensor x({queries.size() * 4, in_w});
        fill_query_rows(fm, queries, 0, x, nullptr, wts.data());
        const nn::Tensor pred = mlp_forward_batch(mlp, x, nullptr);
        for (std::size_t q = 0; q < queries.size(); ++q) {
            double v = 0.0;
            for (std::size_t c = 0; c < 4; ++c) v += wts[q].w[c] * pred.at2(4 * q + c, 0);
            out.values[write_pos++] = std::clamp(v, 0.0, 1.0);
        }
        queries.clear();
    };
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            queries.push_back({ys[static_cast<std::size_t>(oy)],
                               xs[static_cast<std::size_t>(ox)], cell_h, cell_w});
            if (queries.size() == kChunk) flush();
        }
    }
    flush();
    return out;
}

// ---------------------------------------------------------------------------
// Training

TrainingBatch sample_training_pair(const raster::ImageGrid& hr, Rng& rng,
                                   const SamplingOptions& opts) {
    raster::validate(hr);
    if (opts.base_patch < 2) throw ArgumentError("sample_training_pair: base_patch too small");
    if (!(opts.scale_min >= 1.0) || !(opts.scale_max >= opts.scale_min))
        throw ArgumentError("sample_training_pair: bad scale range");
    const int need = static_cast<int>(std::floor(opts.base_patch * opts.scale_max));
    if (hr.height < need || hr.width < need)
        throw ArgumentError("sample_training_pair: image smaller than base_patch * scale_max");

    raster::AugmentSpec spec;
    spec.hflip = rng.bernoulli(0.5);
    spec.vflip = rng.bernoulli(0.5);
    spec.rot90_steps = rng.uniform_int(0, 3);
    spec.brightness_scale = rng.uniform(opts.brightness_lo, opts.brightness_hi);
    spec.contrast_scale = rng.uniform(opts.contrast_lo, opts.contrast_hi);
    const raster::ImageGrid aug = raster::augment_sr(hr, spec);

    const double s = rng.uniform(opts.scale_min, opts.scale_max);
    const int crop = static_cast<int>(std::floor(opts.base_patch * s));
    const int oy = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(aug.height - crop + 1)));
    const int ox = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(aug.width - crop + 1)));

    raster::ImageGrid hr_crop(crop, crop, 0.0, hr.source_bit_depth);
    for (int y = 0; y < crop; ++y)
        for (int x = 0; x < crop; ++x) hr_crop.at(y, x) = aug.at(oy + y, ox + x);

    TrainingBatch batch;
    batch.scale = s;
    batch.lr_patch = raster::bicubic_resize(hr_crop, opts.base_patch, opts.base_patch);

    // base_patch^2 distinct target pixels out of the crop's crop^2 (partial
    // Fisher-Yates; a full shuffle when the scale is 1).
    const std::size_t n = static_cast<std::size_t>(crop) * static_cast<std::size_t>(crop);
    const std::size_t q_count =
        static_cast<std::size_t>(opts.base_patch) * static_cast<std::size_t>(opts.base_patch);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t k = 0; k < q_count; ++k)
        std::swap(perm[k], perm[k + rng.uniform_index(n - k)]);

    const std::vector<double> cs = pixel_center_coords(crop);
    const double cell = 2.0 / crop;
    batch.coords.reserve(q_count);
    batch.targets.reserve(q_count);
    for (std::size_t k = 0; k < q_count; ++k) {
        const int i = static_cast<int>(perm[k] / static_cast<std::size_t>(crop));
        const int j = static_cast<int>(perm[k] % static_cast<std::size_t>(crop));
        batch.coords.push_back({cs[static_cast<std::size_t>(i)],
                                cs[static_cast<std::size_t>(j)], cell, cell});
        batch.targets.push_back(hr_crop.at(i, j));
    }
    return batch;
}

TrainState make_train_state(LiifModel& model, double lr) {
    TrainState ts;
    for (auto& [name, t] : collect_params(model)) {
        (void)name;
        ts.states.push_back(nn::make_adam_state(*t, lr));
    }
    return ts;
}

void set_learning_rate(TrainState& ts, double lr) {
    for (auto& s : ts.states) s.lr = lr;
}

LossGrads loss_and_grads(const LiifModel& model, const TrainingBatch& batch) {
    const std::size_t q_count = batch.coords.size();
    if (q_count == 0) throw ArgumentError("loss_and_grads: empty batch");
    if (batch.targets.size() != q_count)
        throw ArgumentError("loss_and_grads: coords/targets size mismatch");

    auto [features, acts] = nn::encoder_forward_cached(model.encoder, batch.lr_patch);
    const FeatureMapLatent fm(features);
    const std::size_t in_w = mlp_input_width(model.mlp);
    if (in_w != fm.latent_width() + 4)
        throw ArgumentError("loss_and_grads: decoder width does not match encoder depth");

    nn::Tensor x({q_count * 4, in_w});
    std::vector<std::array<std::pair<std::size_t, std::size_t>, 4>> cells(q_count);
    std::vector<EnsembleWeights> wts(q_count);
    fill_query_rows(fm, batch.coords, 0, x, cells.data(), wts.data());

    MlpBatchCache cache;
    const nn::Tensor out = mlp_forward_batch(model.mlp, x, &cache);

    nn::Tensor pred({q_count});
    for (std::size_t q = 0; q < q_count; ++q) {
        double v = 0.0;
        for (std::size_t c = 0; c < 4; ++c) v += wts[q].w[c] * out.at2(4 * q + c, 0);
        pred.values[q] = v;
    }
    const nn::Tensor target({q_count}, batch.targets);
    const nn::L1Loss l1 = nn::l1_loss(pred, target);
    if (!std::isfinite(l1.loss)) throw NumericError("loss_and_grads: non-finite loss");

    // Ensemble weights depend only on geometry, so they pass straight
    // through to each corner's decoder output.
    nn::Tensor dout({q_count * 4, 1});
    for (std::size_t q = 0; q < q_count; ++q)
        for (std::size_t c = 0; c < 4; ++c)
            dout.at2(4 * q + c, 0) = l1.dpred.values[q] * wts[q].w[c];

    MlpBatchGrads mg = mlp_backward_batch(model.mlp, cache, dout);

    // Scatter the latent part of each input-row gradient back onto the
    // unfolded grid, then fold to the encoder feature map.
    const std::size_t lw = fm.latent_width();
    std::vector<double> d_cells(fm.grid_h() * fm.grid_w() * lw, 0.0);
    for (std::size_t q = 0; q < q_count; ++q) {
        for (std::size_t c = 0; c < 4; ++c) {
            const auto [r, cc] = cells[q][c];
            double* dst = d_cells.data() + (r * fm.grid_w() + cc) * lw;
            const double* src = mg.dx.data() + (4 * q + c) * in_w;
            for (std::size_t k = 0; k < lw; ++k) dst[k] += src[k];
        }
    }
    const nn::Tensor dfeat =
        fold_cells_last(d_cells, fm.base_depth(), fm.grid_h(), fm.grid_w());

    LossGrads result;
    result.loss = l1.loss;
    result.d_mlp = std::move(mg.dparams);
    result.d_encoder = nn::encoder_backward(model.encoder, acts, dfeat);
    return result;
}

void apply_grads(LiifModel& model, LossGrads& grads, TrainState& ts) {
    const auto params = collect_params(model);
    if (ts.states.size() != params.size())
        throw ArgumentError("apply_grads: optimizer state does not match model");
    std::size_t k = 0;
    for (auto& [name, g] : nn::collect_params(grads.d_encoder)) {
        (void)name;
        nn::adam_step(*params[k].second, *g, ts.states[k]);
        ++k;
    }
    for (auto& [name, g] : collect_params(grads.d_mlp)) {
        (void)name;
        nn::adam_step(*params[k].second, *g, ts.states[k]);
        ++k;
    }
}

double train_step(LiifModel& model, const TrainingBatch& batch, TrainState& ts) {
    LossGrads lg = loss_and_grads(model, batch);
    apply_grads(model, lg, ts);
    return lg.loss;
}

// ---------------------------------------------------------------------------
// Persistence

void save_model(const LiifModel& model, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("save_model: cannot create directory " + dir);

    LiifModel copy = model; // collect_params needs mutable access
    std::vector<nn::NamedTensor> enc, mlp;
    for (auto& [name, t] : nn::collect_params(copy.encoder)) enc.emplace_back(name, *t);
    for (auto& [name, t] : collect_params(copy.mlp)) mlp.emplace_back(name, *t);
    nn::save_tensors(dir + "/encoder", enc);
    nn::save_tensors(dir + "/mlp", mlp);

    nlohmann::json header;
    header["format"] = "cratersr-liif-v1";
    header["depth"] = copy.encoder.depth;
    header["blocks"] = copy.encoder.blocks.size();
    std::vector<std::size_t> widths;
    widths.push_back(copy.mlp.layers.front().weight.shape[1]);
    for (const auto& l : copy.mlp.layers) widths.push_back(l.weight.shape[0]);
    header["mlp_widths"] = widths;
    header["coords"] = "pixel-center-symmetric";
    header["relcoord_scale"] = "grid-dims";
    io::atomic_write(dir + "/header.json", header.dump(2) + "\n");
}

namespace {

void fill_from_loaded(std::vector<std::pair<std::string, nn::Tensor*>> slots,
                      const std::vector<nn::NamedTensor>& loaded, const std::string& what) {
    std::map<std::string, const nn::Tensor*> by_name;
    for (const auto& [name, t] : loaded) by_name[name] = &t;
    if (by_name.size() != slots.size())
        throw FormatError("load_model: " + what + ": tensor count mismatch");
    for (auto& [name, slot] : slots) {
        const auto it = by_name.find(name);
        if (it == by_name.end())
            throw FormatError("load_model: " + what + ": missing tensor " + name);
        if (it->second->shape != slot->shape)
            throw FormatError("load_model: " + what + ": shape mismatch for " + name);
        *slot = *it->second;
    }
}

} // namespace

LiifModel load_model(const std::string& dir) {
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(io::read_file(dir + "/header.json"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("load_model: bad header: ") + e.what());
    }
    if (header.value("format", std::string{}) != "cratersr-liif-v1")
        throw FormatError("load_model: unrecognized bundle format");

    int depth = 0, blocks = 0;
    std::vector<std::size_t> widths;
    try {
        depth = header.at("depth").get<int>();
        blocks = header.at("blocks").get<int>();
        widths = header.at("mlp_widths").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("load_model: bad header field: ") + e.what());
    }
    if (depth <= 0 || blocks < 0) throw FormatError("load_model: bad depth/blocks");
    if (widths.size() != 6 || widths.back() != 1)
        throw FormatError("load_model: bad mlp widths");

    LiifModel m;
    Rng scratch(0); // shapes only; every value is overwritten below
    m.encoder = nn::init_encoder(scratch, depth, blocks);
    m.mlp.layers.clear();
    for (std::size_t l = 0; l < 5; ++l)
        m.mlp.layers.push_back(
            {nn::Tensor({widths[l + 1], widths[l]}), nn::Tensor({widths[l + 1]})});

    fill_from_loaded(nn::collect_params(m.encoder), nn::load_tensors(dir + "/encoder"),
                     "encoder");
    fill_from_loaded(collect_params(m.mlp), nn::load_tensors(dir + "/mlp"), "mlp");
    return m;
}

} // namespace cratersr::liif
