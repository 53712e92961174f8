#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qsep/dsp.h"

namespace qsep {

// Top-row-first RGB8 raster: pixel (r, c) at rgb[3 * (r * width + c)].
struct SpectrogramImage {
    int width = 0;  // frames
    int height = 0; // frequency bins
    std::vector<uint8_t> rgb;
};

// Fixed perceptual colormap (dark violet at 0 through teal to yellow at 1),
// linearly interpolated between pinned anchor rows so rendering is
// byte-reproducible everywhere. t is clamped to [0, 1].
void colormap_rgb(double t, uint8_t rgb[3]);

// Map a magnitude spectrogram to pixels: intensity is dB relative to the
// grid maximum, clamped to [db_floor, 0]; row 0 is the highest bin
// (frequency increases upward). An all-zero grid renders uniformly at the
// floor color. db_floor must be negative.
SpectrogramImage render_spectrogram(const MagnitudeSpectrogram& mag, double db_floor = -80.0);

// Minimal PNG container: 8-bit RGB, filter 0 scanlines, one zlib IDAT.
// Output bytes are a pure function of the pixels.
std::vector<uint8_t> encode_png_rgb8(const SpectrogramImage& image);

std::vector<uint8_t> render_spectrogram_png(const MagnitudeSpectrogram& mag,
                                            double db_floor = -80.0);

void write_spectrogram_png(const std::string& path, const MagnitudeSpectrogram& mag,
                           double db_floor = -80.0);

} // namespace qsep
