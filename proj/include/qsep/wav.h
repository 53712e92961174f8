#pragma once

#include <string>

#include "qsep/dsp.h"

namespace qsep {

// Read a RIFF/WAVE file. Accepts 16-bit PCM and 32-bit IEEE float data;
// multichannel input is averaged down to mono with a warning on stderr.
AudioClip read_wav(const std::string& path);

// Write a mono 16-bit PCM little-endian WAV. Samples are clamped to
// [-1, 1] before quantization.
void write_wav(const std::string& path, const AudioClip& clip);

} // namespace qsep
