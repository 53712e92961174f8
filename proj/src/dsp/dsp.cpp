#include "qsep/dsp.h"

#include <cmath>
#include <numbers>

#include "qsep/error.h"
#include "qsep/fft.h"
#include "qsep/kernels.h"

namespace qsep {

namespace {

void check_stft_config(const StftConfig& config) {
    if (!fft::is_power_of_two(config.window_size) || config.window_size < 2)
        throw_usage("stft: window_size must be a power of two >= 2");
    if (config.hop_size <= 0 || config.hop_size > config.window_size)
        throw_usage("stft: hop_size must satisfy 0 < hop <= window_size");
    if (!(config.log_epsilon > 0.0)) throw_usage("stft: log_epsilon must be positive");
}

// Mirror index without repeating the edge sample: ..., x[2], x[1], x[0],
// x[1], x[2], ... Valid while |overhang| <= n - 1.
size_t reflect_index(int64_t j, int64_t n) {
    if (j < 0) j = -j;
    if (j >= n) j = 2 * n - 2 - j;
    return size_t(j);
}

} // namespace

std::vector<double> make_window(WindowKind kind, int size) {
    if (size < 1) throw_usage("make_window: size must be positive");
    std::vector<double> w(size_t(size), 1.0);
    if (kind == WindowKind::Hann) {
        for (int i = 0; i < size; ++i)
            w[size_t(i)] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / size));
    }
    return w;
}

ComplexSpectrogram stft(const AudioClip& clip, const StftConfig& config) {
    check_stft_config(config);
    if (clip.sample_rate <= 0) throw_usage("stft: sample_rate must be positive");
    if (clip.samples.empty()) throw_usage("stft: empty clip");
    for (double s : clip.samples)
        if (!std::isfinite(s)) throw_numeric("stft: non-finite sample");

    const int w = config.window_size;
    const int hop = config.hop_size;
    const int pad = w / 2;
    const int64_t source_samples = int64_t(clip.samples.size());

    // Short input is zero-extended to one full window.
    std::vector<double> x = clip.samples;
    if (int64_t(x.size()) < w) x.resize(size_t(w), 0.0);
    const int64_t n = int64_t(x.size());

    // Center frames by reflect-padding pad samples on both ends; frame t
    // then starts at t * hop in padded coordinates.
    const int64_t frames = 1 + n / hop;
    const std::vector<double> win = make_window(config.window, w);

    ComplexSpectrogram spec;
    spec.freqs = w / 2 + 1;
    spec.frames = int(frames);
    spec.config = config;
    spec.sample_rate = clip.sample_rate;
    spec.source_samples = source_samples;
    spec.bins.resize(size_t(spec.freqs) * size_t(frames));

    std::vector<double> frame(static_cast<size_t>(w));
    for (int64_t t = 0; t < frames; ++t) {
        const int64_t start = t * hop - pad;
        for (int i = 0; i < w; ++i)
            frame[size_t(i)] = x[reflect_index(start + i, n)] * win[size_t(i)];
        const auto half = fft::real_forward(frame);
        for (int f = 0; f < spec.freqs; ++f) spec.at(f, int(t)) = half[size_t(f)];
    }
    return spec;
}

AudioClip istft(const ComplexSpectrogram& spec) {
    check_stft_config(spec.config);
    const int w = spec.config.window_size;
    const int hop = spec.config.hop_size;
    const int pad = w / 2;
    if (spec.freqs != w / 2 + 1)
        throw_usage("istft: bin count does not match window_size");
    if (spec.frames < 1) throw_usage("istft: no frames");
    if (spec.sample_rate <= 0) throw_usage("istft: sample_rate must be positive");

    const std::vector<double> win = make_window(spec.config.window, w);
    const int64_t padded_len = int64_t(spec.frames - 1) * hop + w;
    std::vector<double> acc(size_t(padded_len), 0.0);
    std::vector<double> env(size_t(padded_len), 0.0);

    std::vector<std::complex<double>> half(static_cast<size_t>(spec.freqs));
    for (int t = 0; t < spec.frames; ++t) {
        for (int f = 0; f < spec.freqs; ++f) half[size_t(f)] = spec.at(f, t);
        const std::vector<double> frame = fft::real_inverse(half, w);
        const int64_t start = int64_t(t) * hop;
        // Weighted overlap-add: window both ways, divide by the summed
        // squared-window envelope afterwards.
        for (int i = 0; i < w; ++i) {
            acc[size_t(start + i)] += frame[size_t(i)] * win[size_t(i)];
            env[size_t(start + i)] += win[size_t(i)] * win[size_t(i)];
        }
    }
    for (size_t i = 0; i < acc.size(); ++i) acc[i] = env[i] > 1e-12 ? acc[i] / env[i] : 0.0;

    const int64_t target =
        spec.source_samples > 0 ? spec.source_samples : int64_t(spec.frames - 1) * hop;
    AudioClip clip;
    clip.sample_rate = spec.sample_rate;
    clip.samples.resize(size_t(target), 0.0);
    const int64_t avail = std::max<int64_t>(0, padded_len - pad);
    for (int64_t i = 0; i < std::min(target, avail); ++i)
        clip.samples[size_t(i)] = acc[size_t(pad + i)];
    return clip;
}

MagnitudeSpectrogram magnitude(const ComplexSpectrogram& spec) {
    MagnitudeSpectrogram mag;
    mag.bins = Grid(spec.freqs, spec.frames);
    mag.config = spec.config;
    mag.sample_rate = spec.sample_rate;
    mag.source_samples = spec.source_samples;
    // std::complex<double> is layout-compatible with an interleaved
    // (re, im) double array.
    kernels::complex_magnitude(reinterpret_cast<const double*>(spec.bins.data()),
                               mag.bins.data(), spec.bins.size());
    return mag;
}

Grid log_compress(const MagnitudeSpectrogram& mag, double eps) {
    if (!(eps > 0.0)) throw_usage("log_compress: eps must be positive");
    Grid out(mag.bins.rows, mag.bins.cols);
    for (size_t i = 0; i < out.size(); ++i) out.values[i] = std::log(mag.bins.values[i] + eps);
    return out;
}

ComplexSpectrogram apply_mask(const ComplexSpectrogram& mix, const SeparationMask& mask) {
    if (mask.values.rows != mix.freqs || mask.values.cols != mix.frames)
        throw_usage("apply_mask: mask shape does not match spectrogram");
    ComplexSpectrogram out = mix;
    for (size_t i = 0; i < out.bins.size(); ++i) out.bins[i] = mix.bins[i] * mask.values.values[i];
    return out;
}

LogFreqMap make_log_freq_map(int linear_bins, int out_bins, int sample_rate, double f_min) {
    if (out_bins < 2) throw_usage("log_freq_warp: out_bins must be >= 2");
    if (linear_bins < 2) throw_usage("log_freq_warp: need at least 2 linear bins");
    if (sample_rate <= 0) throw_usage("log_freq_warp: sample_rate must be positive");
    const double nyquist = sample_rate / 2.0;
    if (!(f_min > 0.0) || f_min >= nyquist)
        throw_usage("log_freq_warp: f_min must lie in (0, Nyquist)");

    LogFreqMap map;
    map.linear_bins = linear_bins;
    map.sample_rate = sample_rate;
    map.f_min = f_min;
    map.center_hz.resize(size_t(out_bins));
    map.lo_bin.resize(size_t(out_bins));
    map.frac.resize(size_t(out_bins));

    const double df = nyquist / (linear_bins - 1);
    const double ratio = nyquist / f_min;
    for (int j = 0; j < out_bins; ++j) {
        const double c = f_min * std::pow(ratio, double(j) / double(out_bins - 1));
        double pos = c / df;
        int lo = int(std::floor(pos));
        if (lo > linear_bins - 2) lo = linear_bins - 2;
        if (lo < 0) lo = 0;
        double frac = pos - lo;
        if (frac < 0.0) frac = 0.0;
        if (frac > 1.0) frac = 1.0;
        map.center_hz[size_t(j)] = c;
        map.lo_bin[size_t(j)] = lo;
        map.frac[size_t(j)] = frac;
    }
    return map;
}

Grid warp_rows(const Grid& g, const LogFreqMap& map) {
    if (g.rows != map.linear_bins) throw_usage("warp_rows: grid does not match mapping table");
    const int out_bins = int(map.center_hz.size());
    Grid out(out_bins, g.cols);
    for (int j = 0; j < out_bins; ++j) {
        const int lo = map.lo_bin[size_t(j)];
        const double frac = map.frac[size_t(j)];
        const double* a = g.row(lo);
        const double* b = g.row(lo + 1);
        double* o = out.row(j);
        for (int t = 0; t < g.cols; ++t) o[t] = (1.0 - frac) * a[t] + frac * b[t];
    }
    return out;
}

Grid unwarp_rows(const Grid& g, const LogFreqMap& map) {
    const int out_bins = int(map.center_hz.size());
    if (g.rows != out_bins) throw_usage("unwarp_rows: grid does not match mapping table");
    Grid out(map.linear_bins, g.cols);
    const double nyquist = map.sample_rate / 2.0;
    const double df = nyquist / (map.linear_bins - 1);
    const double log_span = std::log(nyquist / map.f_min);
    for (int k = 0; k < map.linear_bins; ++k) {
        const double fk = k * df;
        double* o = out.row(k);
        if (fk < map.f_min) {
            const double* a = g.row(0);
            for (int t = 0; t < g.cols; ++t) o[t] = a[t];
            continue;
        }
        double u = (out_bins - 1) * std::log(fk / map.f_min) / log_span;
        int jlo = int(std::floor(u));
        if (jlo > out_bins - 2) jlo = out_bins - 2;
        if (jlo < 0) jlo = 0;
        double frac = u - jlo;
        if (frac < 0.0) frac = 0.0;
        if (frac > 1.0) frac = 1.0;
        const double* a = g.row(jlo);
        const double* b = g.row(jlo + 1);
        for (int t = 0; t < g.cols; ++t) o[t] = (1.0 - frac) * a[t] + frac * b[t];
    }
    return out;
}

MagnitudeSpectrogram log_freq_warp(const MagnitudeSpectrogram& mag, int out_bins,
                                   LogFreqMap* map_out) {
    const LogFreqMap map = make_log_freq_map(mag.bins.rows, out_bins, mag.sample_rate, 32.0);
    MagnitudeSpectrogram out;
    out.bins = warp_rows(mag.bins, map);
    out.config = mag.config;
    out.sample_rate = mag.sample_rate;
    out.source_samples = mag.source_samples;
    if (map_out) *map_out = map;
    return out;
}

MagnitudeSpectrogram log_freq_unwarp(const MagnitudeSpectrogram& warped, const LogFreqMap& map) {
    MagnitudeSpectrogram out;
    out.bins = unwarp_rows(warped.bins, map);
    out.config = warped.config;
    out.sample_rate = warped.sample_rate;
    out.source_samples = warped.source_samples;
    return out;
}

} // namespace qsep
