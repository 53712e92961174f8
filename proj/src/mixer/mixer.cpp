#include "qsep/mixer.h"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "qsep/error.h"
#include "qsep/kernels.h"
#include "qsep/rng.h"
#include "qsep/wav.h"

namespace fs = std::filesystem;

namespace qsep {

namespace {

constexpr int kSincTaps = 32;      // taps per side
constexpr double kPeakLimit = 0.99; // headroom before the shared rescale

double sinc(double x) {
    if (std::fabs(x) < 1e-12) return 1.0;
    double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

AudioClip loop_to_length(const AudioClip& clip, size_t n) {
    AudioClip out;
    out.sample_rate = clip.sample_rate;
    out.samples.resize(n);
    const size_t len = clip.samples.size();
    for (size_t i = 0; i < n; ++i) out.samples[i] = clip.samples[i % len];
    return out;
}

double rms(const AudioClip& clip) {
    if (clip.samples.empty()) return 0.0;
    return std::sqrt(kernels::sum_squares(clip.samples.data(), clip.samples.size()) /
                     static_cast<double>(clip.samples.size()));
}

// Write through a temp file so partially written WAVs never land under
// their final name.
void write_wav_atomic(const fs::path& path, const AudioClip& clip) {
    fs::path tmp = path;
    tmp += ".tmp";
    write_wav(tmp.string(), clip);
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw_io("cannot move " + tmp.string() + " into place: " + ec.message());
}

std::vector<fs::path> list_wavs(const std::string& dir) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw_usage(dir + " is not a directory");
    std::vector<fs::path> out;
    for (const fs::directory_entry& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext == ".wav") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) throw_usage("no WAV files in " + dir);
    return out;
}

std::string humanize(const fs::path& p) {
    std::string s = p.stem().string();
    for (char& c : s)
        if (c == '_' || c == '-') c = ' ';
    return s;
}

nlohmann::json entry_to_json(const ManifestEntry& e) {
    nlohmann::json j;
    j["id"] = e.id;
    j["mixture_path"] = e.mixture_path;
    j["source_paths"] = e.source_paths;
    j["query_texts"] = e.query_texts;
    j["snr_db"] = e.snr_db;
    j["seed"] = e.seed;
    j["split_tag"] = e.split_tag;
    j["rescale"] = e.rescale;
    return j;
}

ManifestEntry entry_from_json(const nlohmann::json& j) {
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.mixture_path = j.at("mixture_path").get<std::string>();
    e.source_paths = j.at("source_paths").get<std::vector<std::string>>();
    e.query_texts = j.at("query_texts").get<std::vector<std::string>>();
    e.snr_db = j.at("snr_db").get<double>();
    e.seed = j.at("seed").get<uint64_t>();
    e.split_tag = j.at("split_tag").get<std::string>();
    e.rescale = j.value("rescale", 1.0);
    return e;
}

} // namespace

AudioClip resample(const AudioClip& clip, int target_rate) {
    if (target_rate <= 0) throw_usage("resample target rate must be positive");
    if (clip.sample_rate <= 0) throw_usage("resample input has no sample rate");
    for (double v : clip.samples)
        if (!std::isfinite(v)) throw_numeric("resample input contains a non-finite sample");
    if (target_rate == clip.sample_rate) return clip;

    AudioClip out;
    out.sample_rate = target_rate;
    const size_t n_in = clip.samples.size();
    const size_t n_out = static_cast<size_t>(std::llround(
        static_cast<double>(n_in) * target_rate / clip.sample_rate));
    out.samples.resize(n_out);
    if (n_out == 0 || n_in == 0) {
        out.samples.clear();
        return out;
    }

    const double step = static_cast<double>(clip.sample_rate) / target_rate;
    // Lowpass at the narrower Nyquist when decimating.
    const double cutoff = std::min(1.0, static_cast<double>(target_rate) / clip.sample_rate);
    const int reach = static_cast<int>(std::ceil(kSincTaps / cutoff));

    for (size_t i = 0; i < n_out; ++i) {
        const double center = static_cast<double>(i) * step;
        const int64_t j0 = static_cast<int64_t>(std::floor(center)) - reach + 1;
        const int64_t j1 = static_cast<int64_t>(std::floor(center)) + reach;
        double acc = 0.0, wsum = 0.0;
        for (int64_t j = std::max<int64_t>(0, j0);
             j <= std::min<int64_t>(static_cast<int64_t>(n_in) - 1, j1); ++j) {
            const double d = center - static_cast<double>(j);
            const double u = d * cutoff / kSincTaps; // in [-1, 1] over the kernel span
            const double w = sinc(d * cutoff) *
                             (0.5 + 0.5 * std::cos(std::numbers::pi * u)) * cutoff;
            acc += w * clip.samples[static_cast<size_t>(j)];
            wsum += w;
        }
        // Normalizing by the in-range kernel mass keeps DC exact, edges included.
        out.samples[i] = wsum > 1e-12 ? acc / wsum : 0.0;
    }
    return out;
}

AudioClip normalize_rms(const AudioClip& clip, double target_rms) {
    if (!(target_rms > 0.0)) throw_usage("target RMS must be positive");
    for (double v : clip.samples)
        if (!std::isfinite(v)) throw_numeric("normalize_rms input contains a non-finite sample");
    double level = rms(clip);
    if (level <= 0.0) throw_numeric("cannot normalize a silent clip");
    AudioClip out = clip;
    kernels::scale(target_rms / level, out.samples.data(), out.samples.size());
    return out;
}

MixResult mix(const MixSpec& spec) {
    if (!(spec.duration_s > 0.0)) throw_usage("mix duration must be positive");
    if (spec.target_rate <= 0) throw_usage("mix target rate must be positive");

    AudioClip fg = resample(read_wav(spec.foreground_path), spec.target_rate);
    AudioClip bg = resample(read_wav(spec.background_path), spec.target_rate);
    if (fg.samples.empty()) throw_usage("foreground clip " + spec.foreground_path + " is empty");
    if (bg.samples.empty()) throw_usage("background clip " + spec.background_path + " is empty");

    const size_t n = static_cast<size_t>(std::llround(spec.duration_s * spec.target_rate));
    if (n == 0) throw_usage("mix duration rounds to zero samples");
    fg = normalize_rms(loop_to_length(fg, n), 0.1);
    bg = normalize_rms(loop_to_length(bg, n), 0.1);
    kernels::scale(std::pow(10.0, -spec.snr_db / 20.0), bg.samples.data(), bg.samples.size());

    MixResult r;
    r.mixture.sample_rate = spec.target_rate;
    r.mixture.samples.resize(n);
    kernels::add(fg.samples.data(), bg.samples.data(), r.mixture.samples.data(), n);

    double peak = 0.0;
    for (double v : r.mixture.samples) peak = std::max(peak, std::fabs(v));
    if (peak > kPeakLimit) {
        r.rescale = kPeakLimit / peak;
        kernels::scale(r.rescale, r.mixture.samples.data(), n);
        kernels::scale(r.rescale, fg.samples.data(), n);
        kernels::scale(r.rescale, bg.samples.data(), n);
    }
    r.sources.push_back(std::move(fg));
    r.sources.push_back(std::move(bg));
    return r;
}

MixtureManifest build_dataset(const std::string& fg_dir, const std::string& bg_dir,
                              const DatasetConfig& config) {
    if (config.out_dir.empty()) throw_usage("dataset output directory is required");
    if (!(config.duration_s > 0.0)) throw_usage("dataset duration must be positive");
    if (config.target_rate <= 0) throw_usage("dataset target rate must be positive");
    if (!(config.snr_min_db <= config.snr_max_db)) throw_usage("snr range is inverted");
    if (config.pairing == PairingMode::Random && config.random_pairs < 1)
        throw_usage("random pairing needs a positive entry count");

    std::vector<fs::path> fgs = list_wavs(fg_dir);
    std::vector<fs::path> bgs = list_wavs(bg_dir);

    std::vector<std::pair<size_t, size_t>> pairs;
    Rng rng(config.seed);
    if (config.pairing == PairingMode::Exhaustive) {
        for (size_t f = 0; f < fgs.size(); ++f)
            for (size_t b = 0; b < bgs.size(); ++b) pairs.emplace_back(f, b);
    } else {
        for (int i = 0; i < config.random_pairs; ++i)
            pairs.emplace_back(static_cast<size_t>(rng.next_u64() % fgs.size()),
                               static_cast<size_t>(rng.next_u64() % bgs.size()));
    }

    const fs::path out_root(config.out_dir);
    const fs::path audio_dir = out_root / "audio";
    std::error_code ec;
    fs::create_directories(audio_dir, ec);
    if (ec) throw_io("cannot create " + audio_dir.string() + ": " + ec.message());

    MixtureManifest manifest;
    manifest.entries.resize(pairs.size());

    // Entries are independent; each derives its randomness from a
    // per-index fork, so the schedule cannot affect the output.
    std::atomic<size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= pairs.size()) return;
            {
                std::lock_guard<std::mutex> lock(err_mu);
                if (first_error) return;
            }
            try {
                const fs::path& fg = fgs[pairs[i].first];
                const fs::path& bg = bgs[pairs[i].second];
                Rng entry_rng(rng.fork(static_cast<uint64_t>(i)));

                char tag[32];
                std::snprintf(tag, sizeof tag, "e%04zu", i);
                ManifestEntry e;
                e.id = std::string(tag) + "_" + fg.stem().string() + "_" + bg.stem().string();
                e.snr_db = entry_rng.uniform(config.snr_min_db, config.snr_max_db);
                e.seed = entry_rng.next_u64();
                e.split_tag = fnv1a64(e.id) % 10 < 8 ? "train" : "test";
                e.query_texts = {humanize(fg), humanize(bg)};

                MixSpec spec;
                spec.foreground_path = fg.string();
                spec.background_path = bg.string();
                spec.snr_db = e.snr_db;
                spec.target_rate = config.target_rate;
                spec.duration_s = config.duration_s;
                spec.seed = e.seed;
                MixResult r = mix(spec);
                e.rescale = r.rescale;

                e.mixture_path = "audio/" + e.id + "_mix.wav";
                e.source_paths = {"audio/" + e.id + "_src0.wav", "audio/" + e.id + "_src1.wav"};
                write_wav_atomic(out_root / e.mixture_path, r.mixture);
                write_wav_atomic(out_root / e.source_paths[0], r.sources[0]);
                write_wav_atomic(out_root / e.source_paths[1], r.sources[1]);
                manifest.entries[i] = std::move(e);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    int jobs = std::max(1, config.jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    const fs::path manifest_path = out_root / "manifest.jsonl";
    const fs::path tmp = out_root / "manifest.jsonl.tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw_io("cannot open " + tmp.string());
        for (const ManifestEntry& e : manifest.entries) out << entry_to_json(e).dump() << "\n";
        out.flush();
        if (!out) throw_io("failed writing " + tmp.string());
    }
    fs::rename(tmp, manifest_path, ec);
    if (ec) throw_io("cannot move manifest into place: " + ec.message());
    return manifest;
}

MixtureManifest load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_io("cannot open manifest " + path);
    MixtureManifest m;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            m.entries.push_back(entry_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw_io("manifest " + path + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (m.entries.empty()) throw_io("manifest " + path + " has no entries");
    return m;
}

} // namespace qsep
