#include "qsep/wav.h"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "qsep/error.h"

namespace qsep {

namespace {

uint32_t read_u32(const uint8_t* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

uint16_t read_u16(const uint8_t* p) { return uint16_t(p[0] | p[1] << 8); }

void put_u32(std::string& s, uint32_t v) {
    s.push_back(char(v & 0xff));
    s.push_back(char(v >> 8 & 0xff));
    s.push_back(char(v >> 16 & 0xff));
    s.push_back(char(v >> 24 & 0xff));
}

void put_u16(std::string& s, uint16_t v) {
    s.push_back(char(v & 0xff));
    s.push_back(char(v >> 8 & 0xff));
}

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;

} // namespace

AudioClip read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_io("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const uint8_t* p = reinterpret_cast<const uint8_t*>(buf.data());
    const size_t size = buf.size();

    if (size < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
        throw_io(path + ": not a RIFF/WAVE file");

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t sample_rate = 0;
    bool have_fmt = false;
    const uint8_t* data = nullptr;
    size_t data_size = 0;

    size_t off = 12;
    while (off + 8 <= size) {
        const uint8_t* id = p + off;
        const uint32_t chunk_size = read_u32(p + off + 4);
        off += 8;
        if (off + chunk_size > size) throw_io(path + ": truncated chunk");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (chunk_size < 16) throw_io(path + ": malformed fmt chunk");
            format = read_u16(p + off);
            channels = read_u16(p + off + 2);
            sample_rate = read_u32(p + off + 4);
            bits = read_u16(p + off + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = p + off;
            data_size = chunk_size;
        }
        off += chunk_size + (chunk_size & 1); // chunks are word-aligned
    }

    if (!have_fmt || !data) throw_io(path + ": missing fmt or data chunk");
    if (channels == 0 || sample_rate == 0) throw_io(path + ": malformed fmt chunk");

    size_t bytes_per_sample;
    if (format == kFormatPcm && bits == 16) {
        bytes_per_sample = 2;
    } else if (format == kFormatFloat && bits == 32) {
        bytes_per_sample = 4;
    } else {
        throw_io(path + ": unsupported encoding (want 16-bit PCM or 32-bit float)");
    }

    const size_t frame_bytes = bytes_per_sample * channels;
    const size_t num_frames = data_size / frame_bytes;
    if (channels > 1)
        std::fprintf(stderr, "warning: %s: averaging %u channels to mono\n", path.c_str(),
                     unsigned(channels));

    AudioClip clip;
    clip.sample_rate = int(sample_rate);
    clip.samples.resize(num_frames);
    for (size_t i = 0; i < num_frames; ++i) {
        double acc = 0.0;
        for (unsigned c = 0; c < channels; ++c) {
            const uint8_t* s = data + i * frame_bytes + c * bytes_per_sample;
            if (bytes_per_sample == 2) {
                int16_t v;
                std::memcpy(&v, s, 2);
                acc += v / 32768.0;
            } else {
                float v;
                std::memcpy(&v, s, 4);
                acc += double(v);
            }
        }
        clip.samples[i] = acc / channels;
    }
    return clip;
}

void write_wav(const std::string& path, const AudioClip& clip) {
    if (clip.sample_rate <= 0) throw_usage("write_wav: sample_rate must be positive");
    for (double s : clip.samples)
        if (!std::isfinite(s)) throw_numeric("write_wav: non-finite sample");

    const uint32_t data_size = uint32_t(clip.samples.size() * 2);
    std::string out;
    out.reserve(44 + data_size);
    out.append("RIFF");
    put_u32(out, 36 + data_size);
    out.append("WAVE");
    out.append("fmt ");
    put_u32(out, 16);
    put_u16(out, kFormatPcm);
    put_u16(out, 1); // mono
    put_u32(out, uint32_t(clip.sample_rate));
    put_u32(out, uint32_t(clip.sample_rate) * 2); // byte rate
    put_u16(out, 2);                              // block align
    put_u16(out, 16);                             // bits per sample
    out.append("data");
    put_u32(out, data_size);
    for (double s : clip.samples) {
        double x = s < -1.0 ? -1.0 : (s > 1.0 ? 1.0 : s);
        int16_t v = int16_t(std::lrint(x * 32767.0));
        put_u16(out, uint16_t(v));
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw_io("cannot open " + path + " for writing");
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) throw_io("short write to " + path);
}

} // namespace qsep
