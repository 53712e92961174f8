#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qsep/dsp.h"

namespace qsep {

// One mixture recipe: a foreground clip layered over a background at a
// chosen SNR, both resampled to target_rate and cut/looped to duration_s.
struct MixSpec {
    std::string foreground_path;
    std::string background_path;
    double snr_db = 0.0;
    int target_rate = 16000;
    double duration_s = 4.0;
    uint64_t seed = 0;
};

struct MixResult {
    AudioClip mixture;
    std::vector<AudioClip> sources; // foreground, background (post-gain)
    double rescale = 1.0;           // peak-limiter factor applied to everything
};

struct ManifestEntry {
    std::string id;
    std::string mixture_path;               // relative to the manifest file
    std::vector<std::string> source_paths;  // ordered, foreground first
    std::vector<std::string> query_texts;   // ordered to match source_paths
    double snr_db = 0.0;
    uint64_t seed = 0;
    std::string split_tag; // "train" or "test"
    double rescale = 1.0;
};

struct MixtureManifest {
    std::vector<ManifestEntry> entries;
};

enum class PairingMode {
    Exhaustive, // every foreground x background pair
    Random,     // random_pairs seeded draws with replacement
};

struct DatasetConfig {
    std::string out_dir;
    int target_rate = 16000;
    double duration_s = 4.0;
    uint64_t seed = 0;
    PairingMode pairing = PairingMode::Exhaustive;
    int random_pairs = 0;   // entry count for PairingMode::Random
    double snr_min_db = -5.0;
    double snr_max_db = 5.0;
    int jobs = 1;           // parallel entry rendering; output is order-stable
};

// Windowed-sinc rate conversion (32 taps per side, DC-exact kernel
// normalization). Output length is round(len * target / source).
AudioClip resample(const AudioClip& clip, int target_rate);

// Scaled copy with the requested RMS. Silent input is an error.
AudioClip normalize_rms(const AudioClip& clip, double target_rms);

// Load, resample, loop to length, set levels (foreground RMS 0.1,
// background 10^(-snr/20) relative), sum, and peak-limit everything by a
// single shared factor so mask ground truth stays valid.
MixResult mix(const MixSpec& spec);

// Render every configured pairing of fg_dir x bg_dir WAVs under
// config.out_dir (audio/ plus manifest.jsonl) and return the manifest.
// Reruns with the same inputs and seed are byte-identical.
MixtureManifest build_dataset(const std::string& fg_dir, const std::string& bg_dir,
                              const DatasetConfig& config);

// Parse a JSON Lines manifest written by build_dataset.
MixtureManifest load_manifest(const std::string& path);

} // namespace qsep
