#include "cratersr/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "cratersr/io_util.hpp"
#include <json.hpp>

namespace cratersr::nn {

AdamState make_adam_state(const Tensor& param, double lr) {
    AdamState s;
    s.m = zeros_like(param);
    s.v = zeros_like(param);
    s.lr = lr;
    return s;
}

// ---------------------------------------------------------------------------
// Linear

Tensor linear_forward(const LinearParams& p, const Tensor& x) {
    if (x.rank() != 2 || p.weight.rank() != 2 || x.shape[1] != p.weight.shape[1])
        throw ArgumentError("linear_forward: shape mismatch");
    const std::size_t batch = x.shape[0];
    const std::size_t in = p.weight.shape[1];
    const std::size_t out = p.weight.shape[0];
    if (p.bias.values.size() != out)
        throw ArgumentError("linear_forward: bias shape mismatch");

    Tensor y({batch, out});
    for (std::size_t r = 0; r < batch; ++r) {
        const double* xr = x.data() + r * in;
        double* yr = y.data() + r * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double* w = p.weight.data() + o * in;
            double acc = p.bias.values[o];
            for (std::size_t i = 0; i < in; ++i) acc += xr[i] * w[i];
            yr[o] = acc;
        }
    }
    return y;
}

LinearGrads linear_backward(const LinearParams& p, const Tensor& x, const Tensor& dy) {
    if (x.rank() != 2 || dy.rank() != 2 || x.shape[0] != dy.shape[0] ||
        x.shape[1] != p.weight.shape[1] || dy.shape[1] != p.weight.shape[0])
        throw ArgumentError("linear_backward: shape mismatch");
    const std::size_t batch = x.shape[0];
    const std::size_t in = p.weight.shape[1];
    const std::size_t out = p.weight.shape[0];

    LinearGrads g;
    g.dx = Tensor({batch, in});
    g.dweight = zeros_like(p.weight);
    g.dbias = zeros_like(p.bias);

    for (std::size_t r = 0; r < batch; ++r) {
        const double* dyr = dy.data() + r * out;
        const double* xr = x.data() + r * in;
        double* dxr = g.dx.data() + r * in;
        for (std::size_t o = 0; o < out; ++o) {
            const double d = dyr[o];
            if (d == 0.0) continue;
            const double* w = p.weight.data() + o * in;
            double* dw = g.dweight.data() + o * in;
            for (std::size_t i = 0; i < in; ++i) {
                dxr[i] += d * w[i];
                dw[i] += d * xr[i];
            }
            g.dbias.values[o] += d;
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// ReLU

Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.values) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
    require_same_shape(x, dy, "relu_backward");
    Tensor dx = dy;
    for (std::size_t i = 0; i < x.values.size(); ++i)
        if (x.values[i] <= 0.0) dx.values[i] = 0.0;
    return dx;
}

// ---------------------------------------------------------------------------
// 3x3 convolution (cross-correlation, stride 1, zero padding 1)

Tensor conv3x3_forward(const Conv3x3Params& p, const Tensor& x) {
    if (x.rank() != 3 || p.weight.rank() != 4 || p.weight.shape[2] != 3 ||
        p.weight.shape[3] != 3)
        throw ArgumentError("conv3x3_forward: bad shapes");
    if (x.shape[0] != p.weight.shape[1])
        throw ArgumentError("conv3x3_forward: channel mismatch");
    const std::size_t in_ch = x.shape[0];
    const std::size_t h = x.shape[1];
    const std::size_t w = x.shape[2];
    const std::size_t out_ch = p.weight.shape[0];

    Tensor y({out_ch, h, w});
    for (std::size_t o = 0; o < out_ch; ++o) {
        double* yo = y.data() + o * h * w;
        const double b = p.bias.values[o];
        for (std::size_t i = 0; i < h * w; ++i) yo[i] = b;
        for (std::size_t c = 0; c < in_ch; ++c) {
            const double* xc = x.data() + c * h * w;
            for (int km = 0; km < 3; ++km) {
                for (int kn = 0; kn < 3; ++kn) {
                    const double wgt = p.weight.at4(o, c, km, kn);
                    const int dm = km - 1, dn = kn - 1;
                    const std::size_t i_lo = dm < 0 ? 1 : 0;
                    const std::size_t i_hi = dm > 0 ? h - 1 : h;
                    const std::size_t j_lo = dn < 0 ? 1 : 0;
                    const std::size_t j_hi = dn > 0 ? w - 1 : w;
                    for (std::size_t i = i_lo; i < i_hi; ++i) {
                        const double* src = xc + (i + dm) * w + dn;
                        double* dst = yo + i * w;
                        for (std::size_t j = j_lo; j < j_hi; ++j)
                            dst[j] += wgt * src[j];
                    }
                }
            }
        }
    }
    return y;
}

Conv3x3Grads conv3x3_backward(const Conv3x3Params& p, const Tensor& x, const Tensor& dy) {
    if (x.rank() != 3 || dy.rank() != 3 || x.shape[0] != p.weight.shape[1] ||
        dy.shape[0] != p.weight.shape[0] || dy.shape[1] != x.shape[1] ||
        dy.shape[2] != x.shape[2])
        throw ArgumentError("conv3x3_backward: shape mismatch");
    const std::size_t in_ch = x.shape[0];
    const std::size_t h = x.shape[1];
    const std::size_t w = x.shape[2];
    const std::size_t out_ch = p.weight.shape[0];

    Conv3x3Grads g;
    g.dx = zeros_like(x);
    g.dweight = zeros_like(p.weight);
    g.dbias = zeros_like(p.bias);

    for (std::size_t o = 0; o < out_ch; ++o) {
        const double* dyo = dy.data() + o * h * w;
        double db = 0.0;
        for (std::size_t i = 0; i < h * w; ++i) db += dyo[i];
        g.dbias.values[o] = db;

        for (std::size_t c = 0; c < in_ch; ++c) {
            const double* xc = x.data() + c * h * w;
            double* dxc = g.dx.data() + c * h * w;
            for (int km = 0; km < 3; ++km) {
                for (int kn = 0; kn < 3; ++kn) {
                    const double wgt = p.weight.at4(o, c, km, kn);
                    const int dm = km - 1, dn = kn - 1;
                    const std::size_t i_lo = dm < 0 ? 1 : 0;
                    const std::size_t i_hi = dm > 0 ? h - 1 : h;
                    const std::size_t j_lo = dn < 0 ? 1 : 0;
                    const std::size_t j_hi = dn > 0 ? w - 1 : w;
                    double dw = 0.0;
                    for (std::size_t i = i_lo; i < i_hi; ++i) {
                        const double* src = xc + (i + dm) * w + dn;
                        double* ddst = dxc + (i + dm) * w + dn;
                        const double* dyrow = dyo + i * w;
                        for (std::size_t j = j_lo; j < j_hi; ++j) {
                            dw += dyrow[j] * src[j];
                            ddst[j] += dyrow[j] * wgt;
                        }
                    }
                    g.dweight.at4(o, c, km, kn) = dw;
                }
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// L1 loss

L1Loss l1_loss(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "l1_loss");
    if (pred.values.empty()) throw ArgumentError("l1_loss: empty tensors");
    const double n = static_cast<double>(pred.values.size());
    L1Loss r;
    r.dpred = zeros_like(pred);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const double d = pred.values[i] - target.values[i];
        acc += std::fabs(d);
        r.dpred.values[i] = d > 0.0 ? 1.0 / n : (d < 0.0 ? -1.0 / n : 0.0);
    }
    r.loss = acc / n;
    return r;
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(Tensor& param, const Tensor& grad, AdamState& state) {
    require_same_shape(param, grad, "adam_step");
    require_same_shape(param, state.m, "adam_step state");
    state.step += 1;
    const double b1 = state.beta1, b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < param.values.size(); ++i) {
        const double g = grad.values[i];
        const double m = state.m.values[i] = b1 * state.m.values[i] + (1.0 - b1) * g;
        const double v = state.v.values[i] = b2 * state.v.values[i] + (1.0 - b2) * g * g;
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        param.values[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

// ---------------------------------------------------------------------------
// Encoder

Tensor image_to_tensor(const raster::ImageGrid& img) {
    Tensor t({1, static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width)});
    t.values = img.values;
    return t;
}

Tensor encoder_forward(const EncoderParams& p, const raster::ImageGrid& img) {
    return encoder_forward_cached(p, img).first;
}

std::pair<Tensor, EncoderActivations> encoder_forward_cached(const EncoderParams& p,
                                                             const raster::ImageGrid& img) {
    EncoderActivations acts;
    acts.input = image_to_tensor(img);
    acts.stem_out = conv3x3_forward(p.stem, acts.input);

    Tensor h = acts.stem_out;
    for (const ResidualBlock& blk : p.blocks) {
        EncoderActivations::Block rec;
        rec.input = h;
        rec.conv1_out = conv3x3_forward(blk.conv1, h);
        rec.relu_out = relu(rec.conv1_out);
        Tensor c2 = conv3x3_forward(blk.conv2, rec.relu_out);
        for (std::size_t i = 0; i < h.values.size(); ++i)
            c2.values[i] += h.values[i]; // skip connection
        h = std::move(c2);
        acts.blocks.push_back(std::move(rec));
    }
    return {std::move(h), std::move(acts)};
}

EncoderParams encoder_backward(const EncoderParams& p, const EncoderActivations& acts,
                               const Tensor& dfeatures) {
    EncoderParams g = encoder_grads_like(p);
    Tensor dh = dfeatures;
    for (std::size_t bi = p.blocks.size(); bi-- > 0;) {
        const ResidualBlock& blk = p.blocks[bi];
        const EncoderActivations::Block& rec = acts.blocks[bi];
        Conv3x3Grads g2 = conv3x3_backward(blk.conv2, rec.relu_out, dh);
        Tensor da1 = relu_backward(rec.conv1_out, g2.dx);
        Conv3x3Grads g1 = conv3x3_backward(blk.conv1, rec.input, da1);
        g.blocks[bi].conv2.weight = std::move(g2.dweight);
        g.blocks[bi].conv2.bias = std::move(g2.dbias);
        g.blocks[bi].conv1.weight = std::move(g1.dweight);
        g.blocks[bi].conv1.bias = std::move(g1.dbias);
        // d(input) = d(conv path) + d(skip)
        for (std::size_t i = 0; i < dh.values.size(); ++i)
            g1.dx.values[i] += dh.values[i];
        dh = std::move(g1.dx);
    }
    Conv3x3Grads gs = conv3x3_backward(p.stem, acts.input, dh);
    g.stem.weight = std::move(gs.dweight);
    g.stem.bias = std::move(gs.dbias);
    return g;
}

// ---------------------------------------------------------------------------
// Initialization

namespace {

Tensor uniform_tensor(Rng& rng, std::vector<std::size_t> shape, double bound) {
    Tensor t(std::move(shape));
    for (double& v : t.values) v = rng.uniform(-bound, bound);
    return t;
}

} // namespace

LinearParams init_linear(Rng& rng, std::size_t out, std::size_t in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    LinearParams p;
    p.weight = uniform_tensor(rng, {out, in}, bound);
    p.bias = uniform_tensor(rng, {out}, bound);
    return p;
}

Conv3x3Params init_conv3x3(Rng& rng, std::size_t out_ch, std::size_t in_ch) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch) * 9.0);
    Conv3x3Params p;
    p.weight = uniform_tensor(rng, {out_ch, in_ch, 3, 3}, bound);
    p.bias = uniform_tensor(rng, {out_ch}, bound);
    return p;
}

EncoderParams init_encoder(Rng& rng, int depth, int num_blocks) {
    if (depth < 1 || num_blocks < 0)
        throw ArgumentError("init_encoder: bad depth/block count");
    EncoderParams p;
    p.depth = depth;
    const auto d = static_cast<std::size_t>(depth);
    p.stem = init_conv3x3(rng, d, 1);
    for (int i = 0; i < num_blocks; ++i)
        p.blocks.push_back({init_conv3x3(rng, d, d), init_conv3x3(rng, d, d)});
    return p;
}

EncoderParams encoder_grads_like(const EncoderParams& p) {
    EncoderParams g;
    g.depth = p.depth;
    g.stem.weight = zeros_like(p.stem.weight);
    g.stem.bias = zeros_like(p.stem.bias);
    for (const ResidualBlock& blk : p.blocks)
        g.blocks.push_back({{zeros_like(blk.conv1.weight), zeros_like(blk.conv1.bias)},
                            {zeros_like(blk.conv2.weight), zeros_like(blk.conv2.bias)}});
    return g;
}

std::vector<std::pair<std::string, Tensor*>> collect_params(EncoderParams& p) {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back("stem.weight", &p.stem.weight);
    out.emplace_back("stem.bias", &p.stem.bias);
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        const std::string base = "block" + std::to_string(i);
        out.emplace_back(base + ".conv1.weight", &p.blocks[i].conv1.weight);
        out.emplace_back(base + ".conv1.bias", &p.blocks[i].conv1.bias);
        out.emplace_back(base + ".conv2.weight", &p.blocks[i].conv2.weight);
        out.emplace_back(base + ".conv2.bias", &p.blocks[i].conv2.bias);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckResult grad_check(const std::function<double()>& loss_fn,
                           std::span<double* const> coords,
                           std::span<const double> analytic, double eps) {
    if (coords.size() != analytic.size())
        throw ArgumentError("grad_check: coordinate/gradient count mismatch");
    if (eps <= 0.0) throw ArgumentError("grad_check: eps must be positive");

    // Floor keeps finite-difference noise on near-zero gradients from
    // registering as large relative error; a wrong gradient still shows up.
    constexpr double kDenomFloor = 1e-2;

    GradCheckResult res;
    for (std::size_t i = 0; i < coords.size(); ++i) {
        double* c = coords[i];
        const double saved = *c;
        *c = saved + eps;
        const double up = loss_fn();
        *c = saved - eps;
        const double down = loss_fn();
        *c = saved;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NumericError("grad_check: non-finite loss");
        const double fd = (up - down) / (2.0 * eps);
        const double a = analytic[i];
        const double rel =
            std::fabs(fd - a) / std::max({std::fabs(fd), std::fabs(a), kDenomFloor});
        if (rel > res.max_rel_err) {
            res.max_rel_err = rel;
            res.worst_index = i;
            res.analytic_at_worst = a;
            res.numeric_at_worst = fd;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

void append_f32_le(std::string& blob, double v) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    blob.push_back(static_cast<char>(bits & 0xff));
    blob.push_back(static_cast<char>((bits >> 8) & 0xff));
    blob.push_back(static_cast<char>((bits >> 16) & 0xff));
    blob.push_back(static_cast<char>((bits >> 24) & 0xff));
}

double read_f32_le(const unsigned char* p) {
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                               (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) |
                               (static_cast<std::uint32_t>(p[3]) << 24);
    return static_cast<double>(std::bit_cast<float>(bits));
}

} // namespace

void save_tensors(const std::string& path_stem, const std::vector<NamedTensor>& tensors) {
    nlohmann::json manifest;
    manifest["format"] = "cratersr-tensors-v1";
    manifest["dtype"] = "float32-le";
    std::string blob;
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [name, t] : tensors) {
        nlohmann::json entry;
        entry["name"] = name;
        entry["shape"] = t.shape;
        entry["offset"] = blob.size();
        entry["count"] = t.values.size();
        list.push_back(entry);
        for (double v : t.values) append_f32_le(blob, v);
    }
    manifest["tensors"] = list;
    io::atomic_write(path_stem + ".json", manifest.dump(2) + "\n");
    io::atomic_write(path_stem + ".bin", blob);
}

std::vector<NamedTensor> load_tensors(const std::string& path_stem) {
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(io::read_file(path_stem + ".json"));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("tensor manifest " + path_stem + ".json: " + e.what());
    }
    if (manifest.value("format", "") != "cratersr-tensors-v1")
        throw FormatError("tensor manifest " + path_stem + ".json: unknown format");
    const std::string blob = io::read_file(path_stem + ".bin");

    std::vector<NamedTensor> out;
    for (const auto& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        const auto offset = entry.at("offset").get<std::size_t>();
        const auto count = entry.at("count").get<std::size_t>();
        if (offset + count * 4 > blob.size())
            throw FormatError("tensor blob too short for '" + name + "'");
        Tensor t(shape);
        if (t.values.size() != count)
            throw FormatError("tensor '" + name + "': shape/count mismatch");
        const auto* base = reinterpret_cast<const unsigned char*>(blob.data()) + offset;
        for (std::size_t i = 0; i < count; ++i)
            t.values[i] = read_f32_le(base + 4 * i);
        out.emplace_back(name, std::move(t));
    }
    return out;
}

} // namespace cratersr::nn
