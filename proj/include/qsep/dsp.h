#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "qsep/grid.h"

namespace qsep {

// Mono time-domain signal. Samples are dimensionless amplitudes with a
// nominal [-1, 1] range; nothing below enforces the range, only finiteness.
struct AudioClip {
    std::vector<double> samples;
    int sample_rate = 16000;
};

enum class WindowKind {
    Hann,
    Rect,
};

// Analysis/synthesis parameters. window_size must be a power of two (the
// transform is radix-2); hop must satisfy 0 < hop <= window_size. Frames
// are centered: the signal is reflect-padded by window_size/2 on both ends
// so frame t is centered at sample t * hop_size, giving
// T = 1 + floor(len / hop_size) frames.
struct StftConfig {
    int window_size = 512;
    int hop_size = 256;
    WindowKind window = WindowKind::Hann;
    double log_epsilon = 1e-10;
};

// F x T complex grid, row-major with F = window_size/2 + 1 rows.
// source_samples carries the pre-padding signal length through analysis
// and masking so synthesis can trim to the exact original length.
struct ComplexSpectrogram {
    std::vector<std::complex<double>> bins;
    int freqs = 0;
    int frames = 0;
    StftConfig config;
    int sample_rate = 0;
    int64_t source_samples = 0;

    std::complex<double>& at(int f, int t) { return bins[size_t(f) * size_t(frames) + size_t(t)]; }
    const std::complex<double>& at(int f, int t) const {
        return bins[size_t(f) * size_t(frames) + size_t(t)];
    }
};

// Entrywise modulus of a ComplexSpectrogram; same layout and metadata.
struct MagnitudeSpectrogram {
    Grid bins;
    StftConfig config;
    int sample_rate = 0;
    int64_t source_samples = 0;
};

// F x T mask in [0, 1]: sigmoid outputs for predictions, {0, 1} for
// ground truth. Applied entrywise to the mixture magnitude.
struct SeparationMask {
    Grid values;
};

std::vector<double> make_window(WindowKind kind, int size);

ComplexSpectrogram stft(const AudioClip& clip, const StftConfig& config);
AudioClip istft(const ComplexSpectrogram& spec);
MagnitudeSpectrogram magnitude(const ComplexSpectrogram& spec);

// Entrywise log(m + eps). eps must be positive.
Grid log_compress(const MagnitudeSpectrogram& mag, double eps);

// Scale the mixture magnitude by the mask entrywise; phase is untouched.
ComplexSpectrogram apply_mask(const ComplexSpectrogram& mix, const SeparationMask& mask);

// Resampling tables between the linear frequency axis and a logarithmic
// one spanning [f_min, Nyquist]. Warping samples each log-spaced center by
// linear interpolation of its two bracketing linear bins; unwarping does
// the converse. Both directions are fully described by these tables.
struct LogFreqMap {
    std::vector<double> center_hz;  // out_bins log-spaced centers
    std::vector<int> lo_bin;        // linear bin at or below each center
    std::vector<double> frac;       // weight toward lo_bin + 1
    int linear_bins = 0;
    int sample_rate = 0;
    double f_min = 0.0;
};

LogFreqMap make_log_freq_map(int linear_bins, int out_bins, int sample_rate, double f_min = 32.0);

// Row-axis resampling primitives behind log_freq_warp/log_freq_unwarp,
// usable on any grid sharing the map's linear frequency axis (feature
// planes, masks). warp_rows expects map.linear_bins rows; unwarp_rows
// expects one row per map center and fills rows below f_min from the
// first log bin.
Grid warp_rows(const Grid& g, const LogFreqMap& map);
Grid unwarp_rows(const Grid& g, const LogFreqMap& map);

// Warp the frequency axis onto out_bins log-spaced bins. If map_out is
// non-null the mapping tables are copied there for inversion or analysis.
MagnitudeSpectrogram log_freq_warp(const MagnitudeSpectrogram& mag, int out_bins,
                                   LogFreqMap* map_out = nullptr);

// Inverse of log_freq_warp. Linear bins below f_min take the first log
// bin's value (the warped grid carries no information below f_min).
MagnitudeSpectrogram log_freq_unwarp(const MagnitudeSpectrogram& warped, const LogFreqMap& map);

} // namespace qsep
