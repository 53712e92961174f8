#include <algorithm>
#include <cmath>

#include "qsep/error.h"
#include "qsep/kernels.h"
#include "qsep/rng.h"
#include "qsep/separator.h"

namespace qsep {

namespace {

int enc_out_channels(const UnetConfig& u, int level) { return u.base_channels << level; }

int enc_in_channels(const UnetConfig& u, int level) {
    return level == 0 ? 1 : enc_out_channels(u, level - 1);
}

// Decoder level l consumes the upsampled tensor from below concatenated
// with the skip from encoder level l.
int dec_in_channels(const UnetConfig& u, int level) {
    const int from_below = level == u.levels - 1 ? enc_out_channels(u, u.levels - 1)
                                                 : enc_out_channels(u, level + 1);
    return from_below + enc_out_channels(u, level);
}

int dec_out_channels(const UnetConfig& u, int level) { return enc_out_channels(u, level); }

int out_conv_in_channels(const UnetConfig& u) {
    return u.levels > 0 ? dec_out_channels(u, 0) : 1;
}

ConvLayer make_conv(int in_ch, int out_ch, int kernel) {
    ConvLayer c;
    c.in_ch = in_ch;
    c.out_ch = out_ch;
    c.kernel = kernel;
    c.weights.assign(size_t(out_ch) * in_ch * kernel * kernel, 0.0);
    c.bias.assign(size_t(out_ch), 0.0);
    return c;
}

void check_conv_shape(const ConvLayer& c, int in_ch, int out_ch, int kernel, const char* name) {
    if (c.in_ch != in_ch || c.out_ch != out_ch || c.kernel != kernel ||
        c.weights.size() != size_t(out_ch) * in_ch * kernel * kernel ||
        c.bias.size() != size_t(out_ch))
        throw_usage(std::string("model params: ") + name + " has inconsistent shape");
}

void check_params(const ModelParams& p) {
    const UnetConfig& u = p.config.unet;
    if (u.levels < 0 || u.base_channels < 1 || u.out_channels < 1 || u.kernel_size < 1 ||
        u.kernel_size % 2 == 0)
        throw_usage("model params: bad architecture config (kernel must be odd)");
    if (int(p.enc.size()) != u.levels || int(p.dec.size()) != u.levels)
        throw_usage("model params: conv layer count does not match levels");
    for (int l = 0; l < u.levels; ++l) {
        check_conv_shape(p.enc[size_t(l)], enc_in_channels(u, l), enc_out_channels(u, l),
                         u.kernel_size, "encoder conv");
        check_conv_shape(p.dec[size_t(l)], dec_in_channels(u, l), dec_out_channels(u, l),
                         u.kernel_size, "decoder conv");
    }
    check_conv_shape(p.out_conv, out_conv_in_channels(u), u.out_channels, u.kernel_size,
                     "output conv");
    const size_t c = size_t(u.out_channels);
    if (p.embed_weight.size() != c * size_t(p.config.embed_dim) || p.embed_bias.size() != c ||
        p.channel_scale.size() != c)
        throw_usage("model params: projection shapes do not match config");
}

// Same-size convolution with zero border padding, computed tap by tap as
// shifted row-wise axpy updates.
Tensor3 conv_forward(const ConvLayer& c, const Tensor3& in) {
    Tensor3 out(c.out_ch, in.rows, in.cols);
    const int p = c.kernel / 2;
    const int R = in.rows, T = in.cols;
    for (int o = 0; o < c.out_ch; ++o) {
        double* op = out.plane(o);
        std::fill(op, op + out.plane_size(), c.bias[size_t(o)]);
        for (int i = 0; i < c.in_ch; ++i) {
            const double* ip = in.plane(i);
            for (int ky = 0; ky < c.kernel; ++ky) {
                const int dy = ky - p;
                const int f0 = std::max(0, -dy), f1 = std::min(R, R - dy);
                for (int kx = 0; kx < c.kernel; ++kx) {
                    const double w = c.w(o, i, ky, kx);
                    if (w == 0.0) continue;
                    const int dx = kx - p;
                    const int t0 = std::max(0, -dx), t1 = std::min(T, T - dx);
                    if (t1 <= t0) continue;
                    for (int f = f0; f < f1; ++f)
                        kernels::axpy(w, ip + size_t(f + dy) * T + (t0 + dx),
                                      op + size_t(f) * T + t0, size_t(t1 - t0));
                }
            }
        }
    }
    return out;
}

// Accumulates weight/bias gradients into dc and returns the input grad.
Tensor3 conv_backward(const ConvLayer& c, const Tensor3& in, const Tensor3& dout,
                      ConvLayer& dc) {
    Tensor3 din(c.in_ch, in.rows, in.cols);
    const int p = c.kernel / 2;
    const int R = in.rows, T = in.cols;
    for (int o = 0; o < c.out_ch; ++o) {
        const double* dop = dout.plane(o);
        dc.bias[size_t(o)] += kernels::sum(dop, dout.plane_size());
        for (int i = 0; i < c.in_ch; ++i) {
            const double* ip = in.plane(i);
            double* dip = din.plane(i);
            for (int ky = 0; ky < c.kernel; ++ky) {
                const int dy = ky - p;
                const int f0 = std::max(0, -dy), f1 = std::min(R, R - dy);
                for (int kx = 0; kx < c.kernel; ++kx) {
                    const int dx = kx - p;
                    const int t0 = std::max(0, -dx), t1 = std::min(T, T - dx);
                    if (t1 <= t0 || f1 <= f0) continue;
                    // dW[o][i][ky][kx] = sum over valid bins of
                    // dout[o][f][t] * in[i][f+dy][t+dx]
                    double gw = 0.0;
                    for (int f = f0; f < f1; ++f)
                        gw += kernels::dot(dop + size_t(f) * T + t0,
                                           ip + size_t(f + dy) * T + (t0 + dx), size_t(t1 - t0));
                    dc.w(o, i, ky, kx) += gw;
                    // din[i][f+dy][t+dx] += w * dout[o][f][t]
                    const double w = c.w(o, i, ky, kx);
                    if (w == 0.0) continue;
                    for (int f = f0; f < f1; ++f)
                        kernels::axpy(w, dop + size_t(f) * T + t0,
                                      dip + size_t(f + dy) * T + (t0 + dx), size_t(t1 - t0));
                }
            }
        }
    }
    return din;
}

Tensor3 leaky_forward(const Tensor3& pre, double slope) {
    Tensor3 out = pre;
    for (auto& v : out.values)
        if (v < 0.0) v *= slope;
    return out;
}

Tensor3 leaky_backward(const Tensor3& pre, const Tensor3& dact, double slope) {
    Tensor3 dpre = dact;
    for (size_t i = 0; i < dpre.values.size(); ++i)
        if (pre.values[i] < 0.0) dpre.values[i] *= slope;
    return dpre;
}

// 2x2 average pooling; odd extents are padded by repeating the last
// row/column before pooling.
Tensor3 pool2(const Tensor3& x) {
    const int R = (x.rows + 1) / 2, T = (x.cols + 1) / 2;
    Tensor3 out(x.ch, R, T);
    for (int c = 0; c < x.ch; ++c)
        for (int r = 0; r < R; ++r)
            for (int t = 0; t < T; ++t) {
                const int r0 = 2 * r, r1 = std::min(2 * r + 1, x.rows - 1);
                const int t0 = 2 * t, t1 = std::min(2 * t + 1, x.cols - 1);
                out.at(c, r, t) = 0.25 * (x.at(c, r0, t0) + x.at(c, r0, t1) + x.at(c, r1, t0) +
                                          x.at(c, r1, t1));
            }
    return out;
}

Tensor3 pool2_backward(const Tensor3& dpooled, int rows, int cols) {
    Tensor3 dx(dpooled.ch, rows, cols);
    for (int c = 0; c < dpooled.ch; ++c)
        for (int r = 0; r < dpooled.rows; ++r)
            for (int t = 0; t < dpooled.cols; ++t) {
                const double g = 0.25 * dpooled.at(c, r, t);
                const int r0 = 2 * r, r1 = std::min(2 * r + 1, rows - 1);
                const int t0 = 2 * t, t1 = std::min(2 * t + 1, cols - 1);
                dx.at(c, r0, t0) += g;
                dx.at(c, r0, t1) += g;
                dx.at(c, r1, t0) += g;
                dx.at(c, r1, t1) += g;
            }
    return dx;
}

// Nearest-neighbor 2x upsample cropped to the skip tensor's extent.
Tensor3 upsample2(const Tensor3& x, int rows, int cols) {
    Tensor3 out(x.ch, rows, cols);
    for (int c = 0; c < x.ch; ++c)
        for (int r = 0; r < rows; ++r) {
            const double* src = x.plane(c) + size_t(r / 2) * x.cols;
            double* dst = out.plane(c) + size_t(r) * cols;
            for (int t = 0; t < cols; ++t) dst[t] = src[t / 2];
        }
    return out;
}

Tensor3 upsample2_backward(const Tensor3& dout, int src_rows, int src_cols) {
    Tensor3 dx(dout.ch, src_rows, src_cols);
    for (int c = 0; c < dout.ch; ++c)
        for (int r = 0; r < dout.rows; ++r) {
            const double* g = dout.plane(c) + size_t(r) * dout.cols;
            double* dst = dx.plane(c) + size_t(r / 2) * src_cols;
            for (int t = 0; t < dout.cols; ++t) dst[t / 2] += g[t];
        }
    return dx;
}

Tensor3 concat(const Tensor3& a, const Tensor3& b) {
    Tensor3 out(a.ch + b.ch, a.rows, a.cols);
    std::copy(a.values.begin(), a.values.end(), out.values.begin());
    std::copy(b.values.begin(), b.values.end(), out.values.begin() + ptrdiff_t(a.size()));
    return out;
}

void split(const Tensor3& cat, Tensor3& a, Tensor3& b) {
    std::copy(cat.values.begin(), cat.values.begin() + ptrdiff_t(a.size()), a.values.begin());
    std::copy(cat.values.begin() + ptrdiff_t(a.size()), cat.values.end(), b.values.begin());
}

void init_conv(ConvLayer& c, Rng& rng) {
    const double bound = 1.0 / std::sqrt(double(c.in_ch) * c.kernel * c.kernel);
    for (auto& w : c.weights) w = rng.uniform(-bound, bound);
}

} // namespace

ModelParams init_params(const ModelConfig& config, uint64_t seed) {
    const UnetConfig& u = config.unet;
    ModelParams p;
    p.config = config;
    Rng rng(seed);
    for (int l = 0; l < u.levels; ++l) {
        p.enc.push_back(make_conv(enc_in_channels(u, l), enc_out_channels(u, l), u.kernel_size));
        init_conv(p.enc.back(), rng);
    }
    for (int l = 0; l < u.levels; ++l) {
        p.dec.push_back(make_conv(dec_in_channels(u, l), dec_out_channels(u, l), u.kernel_size));
        init_conv(p.dec.back(), rng);
    }
    p.out_conv = make_conv(out_conv_in_channels(u), u.out_channels, u.kernel_size);
    init_conv(p.out_conv, rng);

    const int C = u.out_channels, D = config.embed_dim;
    p.embed_weight.resize(size_t(C) * D);
    const double bound = 1.0 / std::sqrt(double(D));
    for (auto& w : p.embed_weight) w = rng.uniform(-bound, bound);
    p.embed_bias.assign(size_t(C), 0.0);
    p.channel_scale.assign(size_t(C), 1.0);
    p.mask_bias = 0.0;
    check_params(p);
    return p;
}

ModelParams zero_like(const ModelParams& params) {
    ModelParams g;
    g.config = params.config;
    for (const auto& c : params.enc) g.enc.push_back(make_conv(c.in_ch, c.out_ch, c.kernel));
    for (const auto& c : params.dec) g.dec.push_back(make_conv(c.in_ch, c.out_ch, c.kernel));
    g.out_conv = make_conv(params.out_conv.in_ch, params.out_conv.out_ch, params.out_conv.kernel);
    g.embed_weight.assign(params.embed_weight.size(), 0.0);
    g.embed_bias.assign(params.embed_bias.size(), 0.0);
    g.channel_scale.assign(params.channel_scale.size(), 0.0);
    g.mask_bias = 0.0;
    return g;
}

FeatureMap unet_forward(const Grid& log_mag, const ModelParams& params, UnetTrace* trace) {
    check_params(params);
    const UnetConfig& u = params.config.unet;
    const int min_extent = 1 << u.levels;
    if (log_mag.rows < min_extent || log_mag.cols < min_extent)
        throw_usage("unet_forward: grid too small for the configured depth");
    for (double v : log_mag.values)
        if (!std::isfinite(v)) throw_numeric("unet_forward: non-finite input");

    Tensor3 cur(1, log_mag.rows, log_mag.cols);
    std::copy(log_mag.values.begin(), log_mag.values.end(), cur.values.begin());

    UnetTrace local;
    UnetTrace& tr = trace ? *trace : local;
    tr = UnetTrace{};
    tr.input = cur;
    tr.enc_pre.reserve(size_t(u.levels));
    tr.enc_act.reserve(size_t(u.levels));
    tr.pooled.reserve(size_t(u.levels));
    tr.dec_in.resize(size_t(u.levels));
    tr.dec_pre.resize(size_t(u.levels));
    tr.dec_act.resize(size_t(u.levels));

    for (int l = 0; l < u.levels; ++l) {
        tr.enc_pre.push_back(conv_forward(params.enc[size_t(l)], cur));
        tr.enc_act.push_back(leaky_forward(tr.enc_pre.back(), u.leaky_slope));
        tr.pooled.push_back(pool2(tr.enc_act.back()));
        cur = tr.pooled.back();
    }
    for (int l = u.levels - 1; l >= 0; --l) {
        const Tensor3& skip = tr.enc_act[size_t(l)];
        Tensor3 up = upsample2(cur, skip.rows, skip.cols);
        tr.dec_in[size_t(l)] = concat(up, skip);
        tr.dec_pre[size_t(l)] = conv_forward(params.dec[size_t(l)], tr.dec_in[size_t(l)]);
        tr.dec_act[size_t(l)] = leaky_forward(tr.dec_pre[size_t(l)], u.leaky_slope);
        cur = tr.dec_act[size_t(l)];
    }
    FeatureMap out;
    out.values = conv_forward(params.out_conv, cur); // final conv is linear
    return out;
}

Grid unet_backward(const ModelParams& params, const UnetTrace& trace, const Tensor3& dfeatures,
                   ModelParams& grads) {
    const UnetConfig& u = params.config.unet;
    const Tensor3& out_in = u.levels > 0 ? trace.dec_act[0] : trace.input;
    Tensor3 dcur = conv_backward(params.out_conv, out_in, dfeatures, grads.out_conv);

    // Skip gradients collected while walking the decoder from the top
    // level down to the deepest one.
    std::vector<Tensor3> dskip(size_t(u.levels));
    for (int l = 0; l < u.levels; ++l) {
        Tensor3 dpre = leaky_backward(trace.dec_pre[size_t(l)], dcur, u.leaky_slope);
        Tensor3 dcat =
            conv_backward(params.dec[size_t(l)], trace.dec_in[size_t(l)], dpre, grads.dec[size_t(l)]);
        const Tensor3& skip = trace.enc_act[size_t(l)];
        Tensor3 dup(dcat.ch - skip.ch, dcat.rows, dcat.cols);
        dskip[size_t(l)] = Tensor3(skip.ch, skip.rows, skip.cols);
        split(dcat, dup, dskip[size_t(l)]);
        const Tensor3& below =
            l == u.levels - 1 ? trace.pooled[size_t(l)] : trace.dec_act[size_t(l + 1)];
        dcur = upsample2_backward(dup, below.rows, below.cols);
    }
    // dcur now holds d(pooled[levels-1]); unwind the encoder.
    for (int l = u.levels - 1; l >= 0; --l) {
        const Tensor3& act = trace.enc_act[size_t(l)];
        Tensor3 dact = pool2_backward(dcur, act.rows, act.cols);
        for (size_t i = 0; i < dact.values.size(); ++i)
            dact.values[i] += dskip[size_t(l)].values[i];
        Tensor3 dpre = leaky_backward(trace.enc_pre[size_t(l)], dact, u.leaky_slope);
        const Tensor3& in = l == 0 ? trace.input : trace.pooled[size_t(l - 1)];
        dcur = conv_backward(params.enc[size_t(l)], in, dpre, grads.enc[size_t(l)]);
    }

    Grid dinput(trace.input.rows, trace.input.cols);
    std::copy(dcur.values.begin(), dcur.values.end(), dinput.values.begin());
    return dinput;
}

} // namespace qsep
