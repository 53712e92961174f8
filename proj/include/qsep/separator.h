#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "qsep/dsp.h"
#include "qsep/grid.h"
#include "qsep/tensor.h"

namespace qsep {

// Query embedding e: a D-dimensional vector, produced by the text hasher
// or supplied directly.
struct QueryEmbedding {
    std::vector<double> values;
};

// Encoder-decoder shape. levels encoder stages (conv + leaky activation +
// 2x average pool) mirrored by levels decoder stages (2x nearest upsample
// + skip concat + conv + activation), then a final linear conv producing
// out_channels feature planes. levels = 0 with kernel_size = 1 degenerates
// to a single 1x1 conv, i.e. an affine map per bin.
struct UnetConfig {
    int levels = 2;
    int base_channels = 8;
    int out_channels = 16;
    int kernel_size = 3;
    double leaky_slope = 0.1;
};

// Everything needed to reproduce the model's input pipeline and shapes.
struct ModelConfig {
    UnetConfig unet;
    int embed_dim = 16;
    StftConfig stft;
    bool warp_enabled = false;
    int warp_bins = 128;
};

struct ConvLayer {
    int in_ch = 0;
    int out_ch = 0;
    int kernel = 3;
    std::vector<double> weights; // out_ch x in_ch x k x k
    std::vector<double> bias;    // out_ch

    double& w(int o, int i, int ky, int kx) {
        return weights[((size_t(o) * in_ch + i) * kernel + ky) * kernel + kx];
    }
    double w(int o, int i, int ky, int kx) const {
        return weights[((size_t(o) * in_ch + i) * kernel + ky) * kernel + kx];
    }
};

// Learnable state: the encoder-decoder convs plus the query projection
// (W_e, b_e), per-channel scale s and scalar mask bias b. The same struct
// shapes gradient accumulators.
struct ModelParams {
    ModelConfig config;
    std::vector<ConvLayer> enc;  // levels entries
    std::vector<ConvLayer> dec;  // levels entries, dec[l] at level l
    ConvLayer out_conv;
    std::vector<double> embed_weight; // C x D, row-major
    std::vector<double> embed_bias;   // C
    std::vector<double> channel_scale;// C (s)
    double mask_bias = 0.0;           // b
};

// C feature planes over the input's F x T grid (f_s).
struct FeatureMap {
    Tensor3 values;
};

// Intermediates retained by the forward pass for exact backpropagation.
struct UnetTrace {
    Tensor3 input;                 // 1 x F x T
    std::vector<Tensor3> enc_pre;  // conv output before activation, per level
    std::vector<Tensor3> enc_act;  // activation output (the skip tensors)
    std::vector<Tensor3> pooled;   // downsampled activation, per level
    std::vector<Tensor3> dec_in;   // concat(upsampled, skip), per level
    std::vector<Tensor3> dec_pre;  // decoder conv output before activation
    std::vector<Tensor3> dec_act;  // decoder activation output
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Seeded parameter initialization: fan-in-scaled uniform conv and
// projection weights, zero biases, channel scale of ones.
ModelParams init_params(const ModelConfig& config, uint64_t seed);

// Zero-valued gradient accumulator with the same shapes as params.
ModelParams zero_like(const ModelParams& params);

// f_s = net(log-magnitude grid). Pass a trace to retain intermediates for
// unet_backward.
FeatureMap unet_forward(const Grid& log_mag, const ModelParams& params,
                        UnetTrace* trace = nullptr);

// Accumulates d(loss)/d(conv params) into grads given d(loss)/d(features);
// returns d(loss)/d(input grid).
Grid unet_backward(const ModelParams& params, const UnetTrace& trace, const Tensor3& dfeatures,
                   ModelParams& grads);

// f_e = sigmoid(W_e e + b_e).
std::vector<double> embed_project(const QueryEmbedding& e, const ModelParams& params);

// p[f][t] = sigmoid(sum_c s[c] * f_e[c] * f_s[c][f][t] + b).
SeparationMask predict_mask(const FeatureMap& f_s, const std::vector<double>& f_e,
                            const ModelParams& params);

// 1 where the source holds at least theta of the mixture magnitude
// (ties count as 1), else 0.
SeparationMask ideal_binary_mask(const MagnitudeSpectrogram& source_mag,
                                 const MagnitudeSpectrogram& mixture_mag, double theta = 0.5);

// Full inference: mask the mixture once per query and resynthesize with
// the mixture phase. Output clips match the input length.
std::vector<AudioClip> separate(const AudioClip& mix, const std::vector<QueryEmbedding>& queries,
                                const ModelParams& params, const StftConfig& stft_config);

// Versioned checkpoint holding the config and every tensor by name.
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

} // namespace qsep
