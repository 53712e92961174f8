#include <cmath>

#include "qsep/error.h"
#include "qsep/kernels.h"
#include "qsep/separator.h"

namespace qsep {

std::vector<double> embed_project(const QueryEmbedding& e, const ModelParams& params) {
    const int C = params.config.unet.out_channels;
    const int D = params.config.embed_dim;
    if (int(e.values.size()) != D) throw_usage("embed_project: embedding dimension mismatch");
    for (double v : e.values)
        if (!std::isfinite(v)) throw_numeric("embed_project: non-finite embedding");

    std::vector<double> out(static_cast<size_t>(C));
    for (int c = 0; c < C; ++c) {
        const double* row = params.embed_weight.data() + size_t(c) * D;
        out[size_t(c)] = sigmoid(kernels::dot(row, e.values.data(), size_t(D)) +
                                 params.embed_bias[size_t(c)]);
    }
    return out;
}

SeparationMask predict_mask(const FeatureMap& f_s, const std::vector<double>& f_e,
                            const ModelParams& params) {
    const int C = params.config.unet.out_channels;
    if (f_s.values.ch != C || int(f_e.size()) != C || int(params.channel_scale.size()) != C)
        throw_usage("predict_mask: channel dimension mismatch");

    SeparationMask mask{Grid(f_s.values.rows, f_s.values.cols, params.mask_bias)};
    for (int c = 0; c < C; ++c) {
        const double w = params.channel_scale[size_t(c)] * f_e[size_t(c)];
        if (w != 0.0) kernels::axpy(w, f_s.values.plane(c), mask.values.data(), mask.values.size());
    }
    for (auto& v : mask.values.values) v = sigmoid(v);
    return mask;
}

SeparationMask ideal_binary_mask(const MagnitudeSpectrogram& source_mag,
                                 const MagnitudeSpectrogram& mixture_mag, double theta) {
    if (!source_mag.bins.same_shape(mixture_mag.bins))
        throw_usage("ideal_binary_mask: shape mismatch");
    SeparationMask mask{Grid(source_mag.bins.rows, source_mag.bins.cols)};
    for (size_t i = 0; i < mask.values.size(); ++i)
        mask.values.values[i] =
            source_mag.bins.values[i] >= theta * mixture_mag.bins.values[i] ? 1.0 : 0.0;
    return mask;
}

std::vector<AudioClip> separate(const AudioClip& mix, const std::vector<QueryEmbedding>& queries,
                                const ModelParams& params, const StftConfig& stft_config) {
    if (queries.empty()) throw_usage("separate: need at least one query");

    const ComplexSpectrogram spec = stft(mix, stft_config);
    const MagnitudeSpectrogram mag = magnitude(spec);
    Grid net_in = log_compress(mag, stft_config.log_epsilon);

    LogFreqMap map;
    if (params.config.warp_enabled) {
        map = make_log_freq_map(net_in.rows, params.config.warp_bins, mix.sample_rate);
        net_in = warp_rows(net_in, map);
    }
    const FeatureMap f_s = unet_forward(net_in, params);

    std::vector<AudioClip> out;
    out.reserve(queries.size());
    for (const auto& q : queries) {
        const std::vector<double> f_e = embed_project(q, params);
        SeparationMask mask = predict_mask(f_s, f_e, params);
        if (params.config.warp_enabled) mask.values = unwarp_rows(mask.values, map);
        out.push_back(istft(apply_mask(spec, mask)));
    }
    return out;
}

} // namespace qsep
