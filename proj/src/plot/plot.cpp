#include "qsep/plot.h"

#include <cmath>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "qsep/error.h"

namespace qsep {
namespace {

// Anchor rows of the shipped colormap, equally spaced over [0, 1].
constexpr uint8_t kColormapAnchors[9][3] = {
    {68, 1, 84},   {71, 44, 122}, {59, 81, 139},  {44, 113, 142}, {33, 144, 141},
    {39, 173, 129}, {92, 200, 99}, {170, 220, 50}, {253, 231, 37},
};

void push_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

void push_chunk(std::vector<uint8_t>& out, const char type[4], const uint8_t* data, size_t len) {
    push_be32(out, static_cast<uint32_t>(len));
    const size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    if (len != 0) out.insert(out.end(), data, data + len);
    uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, out.data() + type_at, static_cast<uInt>(4 + len));
    push_be32(out, crc);
}

} // namespace

void colormap_rgb(double t, uint8_t rgb[3]) {
    if (!(t >= 0.0)) t = 0.0;
    if (t > 1.0) t = 1.0;
    constexpr int kSegments = 8; // anchors - 1
    double x = t * kSegments;
    int i = static_cast<int>(x);
    if (i >= kSegments) i = kSegments - 1;
    const double frac = x - i;
    for (int ch = 0; ch < 3; ++ch) {
        const double v =
            kColormapAnchors[i][ch] + frac * (kColormapAnchors[i + 1][ch] - kColormapAnchors[i][ch]);
        rgb[ch] = static_cast<uint8_t>(std::lround(v));
    }
}

SpectrogramImage render_spectrogram(const MagnitudeSpectrogram& mag, double db_floor) {
    const int f = mag.bins.rows;
    const int t = mag.bins.cols;
    if (f <= 0 || t <= 0) throw_usage("render_spectrogram: empty magnitude grid");
    if (!(db_floor < 0.0)) throw_usage("render_spectrogram: db_floor must be negative");

    double peak = 0.0;
    for (double v : mag.bins.values) {
        if (!std::isfinite(v)) throw_numeric("render_spectrogram: magnitude grid is not finite");
        if (v > peak) peak = v;
    }

    SpectrogramImage img;
    img.width = t;
    img.height = f;
    img.rgb.assign(size_t(3) * size_t(f) * size_t(t), 0);
    for (int r = 0; r < f; ++r) {
        const int bin = f - 1 - r; // frequency increases upward
        for (int c = 0; c < t; ++c) {
            const double v = mag.bins.at(bin, c);
            double level = 0.0; // silence and an all-zero grid sit at the floor
            if (peak > 0.0 && v > 0.0) {
                const double db = 20.0 * std::log10(v / peak);
                level = db <= db_floor ? 0.0 : 1.0 - db / db_floor;
            }
            colormap_rgb(level, &img.rgb[3 * (size_t(r) * size_t(t) + size_t(c))]);
        }
    }
    return img;
}

std::vector<uint8_t> encode_png_rgb8(const SpectrogramImage& image) {
    if (image.width <= 0 || image.height <= 0) throw_usage("encode_png_rgb8: empty image");
    const size_t expect = size_t(3) * size_t(image.width) * size_t(image.height);
    if (image.rgb.size() != expect) throw_usage("encode_png_rgb8: pixel buffer size mismatch");

    // Raw scanlines: one filter byte (0 = none) then packed RGB.
    const size_t stride = 1 + size_t(3) * size_t(image.width);
    std::vector<uint8_t> raw(stride * size_t(image.height));
    for (int r = 0; r < image.height; ++r) {
        uint8_t* line = raw.data() + stride * size_t(r);
        line[0] = 0;
        std::memcpy(line + 1, image.rgb.data() + size_t(3) * size_t(image.width) * size_t(r),
                    size_t(3) * size_t(image.width));
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> packed(bound);
    const int rc = compress2(packed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                             Z_BEST_COMPRESSION);
    if (rc != Z_OK) throw_numeric("encode_png_rgb8: deflate failed");
    packed.resize(bound);

    std::vector<uint8_t> out;
    out.reserve(packed.size() + 128);
    static const uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.insert(out.end(), kSignature, kSignature + 8);

    uint8_t ihdr[13];
    ihdr[0] = uint8_t(uint32_t(image.width) >> 24);
    ihdr[1] = uint8_t(uint32_t(image.width) >> 16);
    ihdr[2] = uint8_t(uint32_t(image.width) >> 8);
    ihdr[3] = uint8_t(uint32_t(image.width));
    ihdr[4] = uint8_t(uint32_t(image.height) >> 24);
    ihdr[5] = uint8_t(uint32_t(image.height) >> 16);
    ihdr[6] = uint8_t(uint32_t(image.height) >> 8);
    ihdr[7] = uint8_t(uint32_t(image.height));
    ihdr[8] = 8;  // bit depth
    ihdr[9] = 2;  // color type: truecolor RGB
    ihdr[10] = 0; // compression
    ihdr[11] = 0; // filter method
    ihdr[12] = 0; // no interlace
    push_chunk(out, "IHDR", ihdr, sizeof(ihdr));
    push_chunk(out, "IDAT", packed.data(), packed.size());
    push_chunk(out, "IEND", nullptr, 0);
    return out;
}

std::vector<uint8_t> render_spectrogram_png(const MagnitudeSpectrogram& mag, double db_floor) {
    return encode_png_rgb8(render_spectrogram(mag, db_floor));
}

void write_spectrogram_png(const std::string& path, const MagnitudeSpectrogram& mag,
                           double db_floor) {
    const std::vector<uint8_t> bytes = render_spectrogram_png(mag, db_floor);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw_io("cannot open PNG output for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw_io("failed writing PNG output: " + path);
}

} // namespace qsep
