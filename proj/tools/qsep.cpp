// Command-line front end: mix / train / separate / eval / query / plot.
// Exit codes: 0 success, 1 usage, 2 I/O, 3 numeric, 4 provider.

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qsep/dsp.h"
#include "qsep/error.h"
#include "qsep/metrics.h"
#include "qsep/mixer.h"
#include "qsep/plot.h"
#include "qsep/querygen.h"
#include "qsep/separator.h"
#include "qsep/trainer.h"
#include "qsep/wav.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qsep;

namespace {

// Values from --config fill in only where the flag was not passed:
// flags > config file > built-in defaults. Unknown keys are typos.
class ConfigMerge {
  public:
    explicit ConfigMerge(const std::string& path) {
        if (path.empty()) return;
        std::ifstream in(path);
        if (!in) throw_io("cannot read config file: " + path);
        try {
            in >> values_;
        } catch (const json::exception& e) {
            throw_usage("config file is not valid JSON: " + std::string(e.what()));
        }
        if (!values_.is_object()) throw_usage("config file must hold a JSON object");
    }

    template <typename T>
    void apply(const CLI::Option* opt, const char* key, T& value) {
        known_.insert(key);
        if (!values_.is_object()) return;
        if (opt != nullptr && opt->count() > 0) return; // explicit flag wins
        if (!values_.contains(key)) return;
        try {
            value = values_.at(key).get<T>();
        } catch (const json::exception&) {
            throw_usage(std::string("config key '") + key + "' has the wrong type");
        }
    }

    // Seeds travel as strings internally (full uint64 range) but read
    // naturally from config as either a JSON integer or a string.
    void apply_seed(const CLI::Option* opt, const char* key, std::string& value) {
        known_.insert(key);
        if (!values_.is_object()) return;
        if (opt != nullptr && opt->count() > 0) return;
        if (!values_.contains(key)) return;
        const json& v = values_.at(key);
        if (v.is_number_unsigned()) {
            value = std::to_string(v.get<uint64_t>());
        } else if (v.is_string()) {
            value = v.get<std::string>();
        } else {
            throw_usage(std::string("config key '") + key +
                        "' must be a non-negative integer or string");
        }
    }

    void finish() const {
        if (!values_.is_object()) return;
        for (const auto& item : values_.items())
            if (known_.count(item.key()) == 0)
                throw_usage("unknown config key '" + item.key() + "'");
    }

  private:
    json values_;
    std::set<std::string> known_;
};

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

fs::path manifest_base(const std::string& manifest_path) {
    return fs::path(manifest_path).parent_path();
}

uint64_t parse_seed(const std::string& s, const char* flag) {
    try {
        size_t used = 0;
        const uint64_t v = std::stoull(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw_usage(std::string(flag) + ": expected a non-negative integer, got '" + s + "'");
    }
}

// ------------------------------------------------------------------- mix

struct MixArgs {
    std::string fg, bg, out, config;
    std::string pairs = "exhaustive";
    std::string seed_text = "0";
    int rate = 16000;
    double duration = 4.0;
    int random_pairs = 0;
    double snr_min = -5.0, snr_max = 5.0;
    int jobs = 1;
};

int run_mix(const MixArgs& a, const CLI::App* cmd) {
    ConfigMerge cfg(a.config);
    MixArgs m = a;
    cfg.apply(cmd->get_option("--fg"), "fg", m.fg);
    cfg.apply(cmd->get_option("--bg"), "bg", m.bg);
    cfg.apply(cmd->get_option("--out"), "out", m.out);
    cfg.apply(cmd->get_option("--pairs"), "pairs", m.pairs);
    cfg.apply_seed(cmd->get_option("--seed"), "seed", m.seed_text);
    cfg.apply(cmd->get_option("--rate"), "rate", m.rate);
    cfg.apply(cmd->get_option("--duration"), "duration", m.duration);
    cfg.apply(cmd->get_option("--random-pairs"), "random-pairs", m.random_pairs);
    cfg.apply(cmd->get_option("--snr-min"), "snr-min", m.snr_min);
    cfg.apply(cmd->get_option("--snr-max"), "snr-max", m.snr_max);
    cfg.apply(cmd->get_option("--jobs"), "jobs", m.jobs);
    cfg.finish();

    if (m.fg.empty() || !fs::is_directory(m.fg))
        throw_usage("--fg: not a directory: '" + m.fg + "'");
    if (m.bg.empty() || !fs::is_directory(m.bg))
        throw_usage("--bg: not a directory: '" + m.bg + "'");
    if (m.out.empty()) throw_usage("--out: output directory is required");

    DatasetConfig d;
    d.out_dir = m.out;
    d.target_rate = m.rate;
    d.duration_s = m.duration;
    d.seed = parse_seed(m.seed_text, "--seed");
    if (m.pairs == "exhaustive") {
        d.pairing = PairingMode::Exhaustive;
    } else if (m.pairs == "random") {
        d.pairing = PairingMode::Random;
    } else {
        throw_usage("--pairs: expected 'exhaustive' or 'random', got '" + m.pairs + "'");
    }
    d.random_pairs = m.random_pairs;
    d.snr_min_db = m.snr_min;
    d.snr_max_db = m.snr_max;
    d.jobs = m.jobs;

    MixtureManifest manifest = build_dataset(m.fg, m.bg, d);
    std::cout << "wrote " << manifest.entries.size() << " entries to "
              << (fs::path(m.out) / "manifest.jsonl").string() << "\n";
    return 0;
}

// ------------------------------------------------------------ shared I/O

AudioClip read_wav_checked(const fs::path& path, const char* what) {
    if (!fs::exists(path)) throw_io(std::string(what) + " file not found: " + path.string());
    return read_wav(path.string());
}

std::vector<ManifestEntry> entries_for_split(const MixtureManifest& manifest,
                                             const std::string& split) {
    if (split != "train" && split != "test" && split != "all")
        throw_usage("--split: expected 'train', 'test' or 'all', got '" + split + "'");
    std::vector<ManifestEntry> out;
    for (const ManifestEntry& e : manifest.entries)
        if (split == "all" || e.split_tag == split) out.push_back(e);
    if (out.empty()) throw_usage("manifest has no entries for split '" + split + "'");
    return out;
}

// ----------------------------------------------------------------- train

struct TrainArgs {
    std::string manifest, out, config, log_path;
    std::string split = "train";
    std::string optimizer = "adam";
    std::string seed_text = "0";
    std::string query_seed_text = "0";
    int epochs = 100, batch = 8;
    double lr = 1e-3, weight_floor = 1e-3;
    int embed_dim = 16, levels = 2, base_channels = 8, out_channels = 16, kernel = 3;
    int win = 512, hop = 256;
};

int run_train(const TrainArgs& a, const CLI::App* cmd) {
    ConfigMerge cfg(a.config);
    TrainArgs t = a;
    cfg.apply(cmd->get_option("--manifest"), "manifest", t.manifest);
    cfg.apply(cmd->get_option("--out"), "out", t.out);
    cfg.apply(cmd->get_option("--log-path"), "log-path", t.log_path);
    cfg.apply(cmd->get_option("--split"), "split", t.split);
    cfg.apply(cmd->get_option("--optimizer"), "optimizer", t.optimizer);
    cfg.apply_seed(cmd->get_option("--seed"), "seed", t.seed_text);
    cfg.apply_seed(cmd->get_option("--query-seed"), "query-seed", t.query_seed_text);
    cfg.apply(cmd->get_option("--epochs"), "epochs", t.epochs);
    cfg.apply(cmd->get_option("--batch"), "batch", t.batch);
    cfg.apply(cmd->get_option("--lr"), "lr", t.lr);
    cfg.apply(cmd->get_option("--weight-floor"), "weight-floor", t.weight_floor);
    cfg.apply(cmd->get_option("--embed-dim"), "embed-dim", t.embed_dim);
    cfg.apply(cmd->get_option("--levels"), "levels", t.levels);
    cfg.apply(cmd->get_option("--base-channels"), "base-channels", t.base_channels);
    cfg.apply(cmd->get_option("--out-channels"), "out-channels", t.out_channels);
    cfg.apply(cmd->get_option("--kernel"), "kernel", t.kernel);
    cfg.apply(cmd->get_option("--win"), "win", t.win);
    cfg.apply(cmd->get_option("--hop"), "hop", t.hop);
    cfg.finish();

    if (t.manifest.empty()) throw_usage("--manifest is required");
    if (t.out.empty()) throw_usage("--out is required");

    const uint64_t seed = parse_seed(t.seed_text, "--seed");
    const uint64_t query_seed = parse_seed(t.query_seed_text, "--query-seed");

    ModelConfig mc;
    mc.unet.levels = t.levels;
    mc.unet.base_channels = t.base_channels;
    mc.unet.out_channels = t.out_channels;
    mc.unet.kernel_size = t.kernel;
    mc.embed_dim = t.embed_dim;
    mc.stft.window_size = t.win;
    mc.stft.hop_size = t.hop;

    MixtureManifest manifest = load_manifest(t.manifest);
    const fs::path base = manifest_base(t.manifest);
    std::vector<TrainSample> samples;
    for (const ManifestEntry& e : entries_for_split(manifest, t.split)) {
        if (e.query_texts.size() != e.source_paths.size())
            throw_usage("manifest entry '" + e.id + "' has " + std::to_string(e.query_texts.size()) +
                        " query texts for " + std::to_string(e.source_paths.size()) + " sources");
        TrainSample s;
        AudioClip mix = read_wav_checked(base / e.mixture_path, "mixture");
        s.mixture_complex = stft(mix, mc.stft);
        s.mixture = magnitude(s.mixture_complex);
        for (size_t i = 0; i < e.source_paths.size(); ++i) {
            AudioClip src = read_wav_checked(base / e.source_paths[i], "source");
            MagnitudeSpectrogram smag = magnitude(stft(src, mc.stft));
            s.gt_masks.push_back(ideal_binary_mask(smag, s.mixture));
            s.queries.push_back(text_to_embedding(
                TextQuery{e.query_texts[i], QueryOrigin::Manual}, mc.embed_dim, query_seed));
        }
        samples.push_back(std::move(s));
    }

    TrainConfig tc;
    tc.batch_size = t.batch;
    tc.learning_rate = t.lr;
    tc.epochs = t.epochs;
    tc.seed = seed;
    tc.weight_floor = t.weight_floor;
    tc.log_path = t.log_path;
    if (t.optimizer == "adam") {
        tc.optimizer = OptimizerKind::Adam;
    } else if (t.optimizer == "sgd") {
        tc.optimizer = OptimizerKind::Sgd;
    } else {
        throw_usage("--optimizer: expected 'adam' or 'sgd', got '" + t.optimizer + "'");
    }

    ModelParams params = train(samples, mc, tc, seed);
    if (fs::path(t.out).has_parent_path()) fs::create_directories(fs::path(t.out).parent_path());
    save_checkpoint(t.out, params);
    std::cout << "trained on " << samples.size() << " samples for " << t.epochs
              << " epochs; checkpoint written to " << t.out << "\n";
    return 0;
}

// -------------------------------------------------------------- separate

struct SeparateArgs {
    std::string in, params_path, out, config;
    std::string query_seed_text = "0";
    std::vector<std::string> query_texts;
    std::vector<std::string> query_embeds;
    std::vector<std::string> oracle_refs;
};

std::vector<double> read_embedding_file(const std::string& path, int dim) {
    std::ifstream in(path);
    if (!in) throw_io("cannot read embedding file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw_usage("embedding file is not valid JSON: " + path + " (" + e.what() + ")");
    }
    if (!j.is_array()) throw_usage("embedding file must hold a JSON array: " + path);
    std::vector<double> v;
    for (const auto& x : j) {
        if (!x.is_number()) throw_usage("embedding file has a non-numeric entry: " + path);
        v.push_back(x.get<double>());
    }
    if (int(v.size()) != dim)
        throw_usage("embedding in " + path + " has dimension " + std::to_string(v.size()) +
                    ", model expects " + std::to_string(dim));
    return v;
}

int run_separate(const SeparateArgs& a, const CLI::App* cmd) {
    ConfigMerge cfg(a.config);
    SeparateArgs s = a;
    cfg.apply(cmd->get_option("--in"), "in", s.in);
    cfg.apply(cmd->get_option("--params"), "params", s.params_path);
    cfg.apply(cmd->get_option("--out"), "out", s.out);
    cfg.apply_seed(cmd->get_option("--query-seed"), "query-seed", s.query_seed_text);
    cfg.apply(cmd->get_option("--query"), "query", s.query_texts);
    cfg.apply(cmd->get_option("--query-embed"), "query-embed", s.query_embeds);
    cfg.apply(cmd->get_option("--oracle"), "oracle", s.oracle_refs);
    cfg.finish();

    if (s.in.empty()) throw_usage("--in is required");
    if (s.out.empty()) throw_usage("--out is required");
    const bool has_queries = !s.query_texts.empty() || !s.query_embeds.empty();
    if (has_queries && !s.oracle_refs.empty())
        throw_usage("--oracle is mutually exclusive with --query/--query-embed");
    if (!has_queries && s.oracle_refs.empty())
        throw_usage("provide at least one --query, --query-embed or --oracle");

    const uint64_t query_seed = parse_seed(s.query_seed_text, "--query-seed");
    AudioClip mix = read_wav_checked(s.in, "input");
    fs::create_directories(s.out);
    const std::string stem = stem_of(s.in);

    std::vector<AudioClip> outputs;
    if (!s.oracle_refs.empty()) {
        // Oracle mode: ideal binary masks computed from reference sources,
        // applied to the mixture. No model involved.
        StftConfig stft_cfg; // oracle masking only needs a COLA analysis grid
        ComplexSpectrogram mix_spec = stft(mix, stft_cfg);
        MagnitudeSpectrogram mix_mag = magnitude(mix_spec);
        for (const std::string& ref_path : s.oracle_refs) {
            AudioClip ref = read_wav_checked(ref_path, "oracle reference");
            if (ref.sample_rate != mix.sample_rate)
                throw_usage("oracle reference sample rate differs from the mixture: " + ref_path);
            MagnitudeSpectrogram ref_mag = magnitude(stft(ref, stft_cfg));
            SeparationMask ibm = ideal_binary_mask(ref_mag, mix_mag);
            outputs.push_back(istft(apply_mask(mix_spec, ibm)));
        }
    } else {
        if (s.params_path.empty()) throw_usage("--params is required unless --oracle is used");
        ModelParams params = load_checkpoint(s.params_path);
        std::vector<QueryEmbedding> queries;
        for (const std::string& text : s.query_texts)
            queries.push_back(text_to_embedding(TextQuery{text, QueryOrigin::Manual},
                                                params.config.embed_dim, query_seed));
        for (const std::string& path : s.query_embeds)
            queries.push_back(QueryEmbedding{read_embedding_file(path, params.config.embed_dim)});
        outputs = separate(mix, queries, params, params.config.stft);
    }

    for (size_t i = 0; i < outputs.size(); ++i) {
        const std::string path = (fs::path(s.out) / (stem + "_q" + std::to_string(i) + ".wav")).string();
        write_wav(path, outputs[i]);
        std::cout << path << "\n";
    }
    return 0;
}

// ------------------------------------------------------------------ eval

struct EvalArgs {
    std::string manifest, est_dir, out, config;
    std::string split = "all";
    int jobs = 1;
};

int run_eval(const EvalArgs& a, const CLI::App* cmd) {
    ConfigMerge cfg(a.config);
    EvalArgs e = a;
    cfg.apply(cmd->get_option("--manifest"), "manifest", e.manifest);
    cfg.apply(cmd->get_option("--est-dir"), "est-dir", e.est_dir);
    cfg.apply(cmd->get_option("--out"), "out", e.out);
    cfg.apply(cmd->get_option("--split"), "split", e.split);
    cfg.apply(cmd->get_option("--jobs"), "jobs", e.jobs);
    cfg.finish();

    if (e.manifest.empty()) throw_usage("--manifest is required");
    if (e.est_dir.empty() || !fs::is_directory(e.est_dir))
        throw_usage("--est-dir: not a directory: '" + e.est_dir + "'");
    if (e.out.empty()) throw_usage("--out is required");
    if (e.jobs < 1) throw_usage("--jobs must be at least 1");

    MixtureManifest manifest = load_manifest(e.manifest);
    const fs::path base = manifest_base(e.manifest);

    struct Pair {
        std::string id;
        fs::path est, ref;
    };
    std::vector<Pair> pairs;
    for (const ManifestEntry& entry : entries_for_split(manifest, e.split)) {
        // Estimates are named the way cmd_separate writes them: the
        // mixture file's stem plus the query index.
        const std::string stem = stem_of(entry.mixture_path);
        for (size_t i = 0; i < entry.source_paths.size(); ++i) {
            Pair p;
            p.id = entry.id + "_q" + std::to_string(i);
            p.est = fs::path(e.est_dir) / (stem + "_q" + std::to_string(i) + ".wav");
            p.ref = base / entry.source_paths[i];
            pairs.push_back(std::move(p));
        }
    }

    // Estimates must all exist before any heavy lifting starts.
    for (const Pair& p : pairs)
        if (!fs::exists(p.est)) throw_io("estimate file not found: " + p.est.string());

    const EmbedderConfig embedder; // fixed surrogate embedder configuration
    std::vector<PairMetrics> results(pairs.size());
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= pairs.size()) return;
            try {
                AudioClip est = read_wav(pairs[i].est.string());
                AudioClip ref = read_wav(pairs[i].ref.string());
                results[i] = evaluate_pair(est, ref, embedder);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    const int jobs = std::min<int>(e.jobs, int(pairs.size()));
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int i = 0; i < jobs; ++i) threads.emplace_back(worker);
        for (std::thread& th : threads) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    json report;
    report["entries"] = json::array();
    double mean_fd = 0.0, mean_kld = 0.0, mean_si = 0.0, mean_sdr = 0.0;
    for (size_t i = 0; i < pairs.size(); ++i) {
        json row;
        row["id"] = pairs[i].id;
        row["fd"] = results[i].fd;
        row["kld"] = results[i].kld;
        row["si_sdr"] = results[i].si_sdr_db;
        row["sdr"] = results[i].sdr_db;
        report["entries"].push_back(row);
        mean_fd += results[i].fd;
        mean_kld += results[i].kld;
        mean_si += results[i].si_sdr_db;
        mean_sdr += results[i].sdr_db;
    }
    const double n = double(pairs.size());
    report["mean"] = {{"fd", mean_fd / n},
                      {"kld", mean_kld / n},
                      {"si_sdr", mean_si / n},
                      {"sdr", mean_sdr / n}};

    if (fs::path(e.out).has_parent_path()) fs::create_directories(fs::path(e.out).parent_path());
    std::ofstream out(e.out, std::ios::trunc);
    if (!out) throw_io("cannot write report: " + e.out);
    out << report.dump(2) << "\n";
    if (!out) throw_io("failed writing report: " + e.out);

    std::cout << "evaluated " << pairs.size() << " pairs: mean si_sdr "
              << report["mean"]["si_sdr"].dump() << " dB, mean sdr "
              << report["mean"]["sdr"].dump() << " dB, mean fd " << report["mean"]["fd"].dump()
              << ", mean kld " << report["mean"]["kld"].dump() << "\n";
    return 0;
}

// ----------------------------------------------------------------- query

struct QueryArgs {
    std::string global_text, regional_text, frame, mask, config;
    std::string endpoint, model, api_key_env, template_id, audit_log;
    std::string templates_dir; // empty: env QSEP_PROMPTS_DIR, then share/prompts
    double timeout = 30.0;
    int retries = 2;
    bool offline = false;
};

int run_query(const QueryArgs& a, const CLI::App* cmd) {
    ConfigMerge cfg(a.config);
    QueryArgs q = a;
    cfg.apply(cmd->get_option("--global-text"), "global-text", q.global_text);
    cfg.apply(cmd->get_option("--regional-text"), "regional-text", q.regional_text);
    cfg.apply(cmd->get_option("--frame"), "frame", q.frame);
    cfg.apply(cmd->get_option("--mask"), "mask", q.mask);
    cfg.apply(cmd->get_option("--endpoint"), "endpoint", q.endpoint);
    cfg.apply(cmd->get_option("--model"), "model", q.model);
    cfg.apply(cmd->get_option("--api-key-env"), "api-key-env", q.api_key_env);
    cfg.apply(cmd->get_option("--template-id"), "template-id", q.template_id);
    cfg.apply(cmd->get_option("--templates-dir"), "templates-dir", q.templates_dir);
    cfg.apply(cmd->get_option("--audit-log"), "audit-log", q.audit_log);
    cfg.apply(cmd->get_option("--timeout"), "timeout", q.timeout);
    cfg.apply(cmd->get_option("--retries"), "retries", q.retries);
    cfg.apply(cmd->get_option("--offline"), "offline", q.offline);
    cfg.finish();

    if (q.templates_dir.empty()) {
        const char* env = std::getenv("QSEP_PROMPTS_DIR");
        q.templates_dir = (env != nullptr && *env != '\0') ? env : "share/prompts";
    }

    TextQuery result;
    if (q.offline) {
        if (q.global_text.empty() || q.regional_text.empty())
            throw_usage("--offline requires --global-text and --regional-text");
        result = fallback_subtract(SceneDescription{q.global_text, "cli", ""},
                                   RegionalDescription{q.regional_text, "cli", "", ""});
    } else {
        ProviderConfig pc;
        pc.endpoint_url = q.endpoint;
        pc.model_name = q.model;
        pc.api_key_env_var = q.api_key_env;
        pc.timeout_s = q.timeout;
        pc.max_retries = q.retries;
        pc.templates_dir = q.templates_dir;
        pc.audit_log_path = q.audit_log;

        SceneDescription d_v;
        RegionalDescription d_a;
        if (!q.global_text.empty() && !q.regional_text.empty()) {
            d_v = SceneDescription{q.global_text, "cli", q.frame};
            d_a = RegionalDescription{q.regional_text, "cli", q.frame, q.mask};
        } else {
            if (q.frame.empty() || q.mask.empty())
                throw_usage("live mode needs --frame and --mask, or both --global-text and "
                            "--regional-text");
            d_v = global_describe(q.frame, pc);
            d_a = regional_describe(q.frame, q.mask, pc);
        }
        ProviderConfig subtract_pc = pc;
        subtract_pc.prompt_template_id = q.template_id; // empty = subtract_v1
        result = textual_subtract(d_v, d_a, subtract_pc);
    }

    std::cout << result.text << "\n";
    std::cerr << "origin: " << (result.origin == QueryOrigin::Llm ? "llm" : "fallback") << "\n";
    return 0;
}

// ------------------------------------------------------------------ plot

struct PlotArgs {
    std::vector<std::string> inputs;
    std::string out, config;
    int win = 512, hop = 256;
    double db_floor = -80.0;
};

int run_plot(const PlotArgs& a, const CLI::App* cmd) {
    ConfigMerge cfg(a.config);
    PlotArgs p = a;
    cfg.apply(cmd->get_option("--in"), "in", p.inputs);
    cfg.apply(cmd->get_option("--out"), "out", p.out);
    cfg.apply(cmd->get_option("--win"), "win", p.win);
    cfg.apply(cmd->get_option("--hop"), "hop", p.hop);
    cfg.apply(cmd->get_option("--db-floor"), "db-floor", p.db_floor);
    cfg.finish();

    if (p.inputs.empty()) throw_usage("provide at least one --in WAV file");
    if (p.out.empty()) throw_usage("--out is required");
    fs::create_directories(p.out);

    StftConfig stft_cfg;
    stft_cfg.window_size = p.win;
    stft_cfg.hop_size = p.hop;
    for (const std::string& in_path : p.inputs) {
        AudioClip clip = read_wav_checked(in_path, "input");
        MagnitudeSpectrogram mag = magnitude(stft(clip, stft_cfg));
        const std::string out_path = (fs::path(p.out) / (stem_of(in_path) + ".png")).string();
        write_spectrogram_png(out_path, mag, p.db_floor);
        std::cout << out_path << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"query-conditioned audio source separation toolkit"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::simple);

    MixArgs mix_args;
    CLI::App* mix_cmd = app.add_subcommand("mix", "build a synthetic two-source mixture dataset");
    mix_cmd->add_option("--fg", mix_args.fg, "directory of foreground WAVs");
    mix_cmd->add_option("--bg", mix_args.bg, "directory of background WAVs");
    mix_cmd->add_option("--out", mix_args.out, "output dataset directory");
    mix_cmd->add_option("--pairs", mix_args.pairs, "pairing: exhaustive|random");
    mix_cmd->add_option("--random-pairs", mix_args.random_pairs, "entry count for --pairs random");
    mix_cmd->add_option("--seed", mix_args.seed_text, "dataset seed");
    mix_cmd->add_option("--rate", mix_args.rate, "target sample rate (Hz)");
    mix_cmd->add_option("--duration", mix_args.duration, "clip duration (seconds)");
    mix_cmd->add_option("--snr-min", mix_args.snr_min, "minimum mixture SNR (dB)");
    mix_cmd->add_option("--snr-max", mix_args.snr_max, "maximum mixture SNR (dB)");
    mix_cmd->add_option("--jobs", mix_args.jobs, "parallel rendering workers");
    mix_cmd->add_option("--config", mix_args.config, "JSON config file (flags win)");

    TrainArgs train_args;
    CLI::App* train_cmd = app.add_subcommand("train", "train the mask predictor on a manifest");
    train_cmd->add_option("--manifest", train_args.manifest, "dataset manifest (JSON Lines)");
    train_cmd->add_option("--out", train_args.out, "checkpoint output path");
    train_cmd->add_option("--split", train_args.split, "manifest split: train|test|all");
    train_cmd->add_option("--epochs", train_args.epochs, "training epochs");
    train_cmd->add_option("--batch", train_args.batch, "batch size");
    train_cmd->add_option("--lr", train_args.lr, "learning rate");
    train_cmd->add_option("--optimizer", train_args.optimizer, "adam|sgd");
    train_cmd->add_option("--weight-floor", train_args.weight_floor, "loss weight floor");
    train_cmd->add_option("--seed", train_args.seed_text, "init and shuffle seed");
    train_cmd->add_option("--query-seed", train_args.query_seed_text, "text embedding seed");
    train_cmd->add_option("--embed-dim", train_args.embed_dim, "query embedding dimension");
    train_cmd->add_option("--levels", train_args.levels, "encoder/decoder levels");
    train_cmd->add_option("--base-channels", train_args.base_channels, "first-level channels");
    train_cmd->add_option("--out-channels", train_args.out_channels, "feature planes");
    train_cmd->add_option("--kernel", train_args.kernel, "conv kernel size");
    train_cmd->add_option("--win", train_args.win, "STFT window size");
    train_cmd->add_option("--hop", train_args.hop, "STFT hop size");
    train_cmd->add_option("--log-path", train_args.log_path, "per-epoch TSV loss log");
    train_cmd->add_option("--config", train_args.config, "JSON config file (flags win)");

    SeparateArgs sep_args;
    CLI::App* sep_cmd = app.add_subcommand("separate", "separate sources from a mixture WAV");
    sep_cmd->add_option("--in", sep_args.in, "mixture WAV");
    sep_cmd->add_option("--params", sep_args.params_path, "model checkpoint");
    sep_cmd->add_option("--out", sep_args.out, "output directory");
    sep_cmd->add_option("--query", sep_args.query_texts, "text query (repeatable)");
    sep_cmd->add_option("--query-embed", sep_args.query_embeds,
                        "JSON embedding file (repeatable)");
    sep_cmd->add_option("--oracle", sep_args.oracle_refs,
                        "reference WAV for ideal-binary-mask separation (repeatable)");
    sep_cmd->add_option("--query-seed", sep_args.query_seed_text, "text embedding seed");
    sep_cmd->add_option("--config", sep_args.config, "JSON config file (flags win)");

    EvalArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "score estimates against manifest references");
    eval_cmd->add_option("--manifest", eval_args.manifest, "dataset manifest (JSON Lines)");
    eval_cmd->add_option("--est-dir", eval_args.est_dir, "directory of <id>_q<i>.wav estimates");
    eval_cmd->add_option("--out", eval_args.out, "JSON report path");
    eval_cmd->add_option("--split", eval_args.split, "manifest split: train|test|all");
    eval_cmd->add_option("--jobs", eval_args.jobs, "parallel scoring workers");
    eval_cmd->add_option("--config", eval_args.config, "JSON config file (flags win)");

    QueryArgs query_args;
    CLI::App* query_cmd = app.add_subcommand("query", "produce a separation text query");
    query_cmd->add_flag("--offline", query_args.offline, "use the deterministic fallback");
    query_cmd->add_option("--global-text", query_args.global_text, "scene description text");
    query_cmd->add_option("--regional-text", query_args.regional_text, "masked-object text");
    query_cmd->add_option("--frame", query_args.frame, "video frame image");
    query_cmd->add_option("--mask", query_args.mask, "binary region mask image");
    query_cmd->add_option("--endpoint", query_args.endpoint, "chat-completions URL");
    query_cmd->add_option("--model", query_args.model, "provider model name");
    query_cmd->add_option("--api-key-env", query_args.api_key_env,
                          "environment variable holding the API key");
    query_cmd->add_option("--timeout", query_args.timeout, "request timeout (seconds)");
    query_cmd->add_option("--retries", query_args.retries, "extra attempts after the first");
    query_cmd->add_option("--template-id", query_args.template_id, "subtraction prompt template");
    query_cmd->add_option("--templates-dir", query_args.templates_dir,
                          "prompt template directory (default: $QSEP_PROMPTS_DIR or share/prompts)");
    query_cmd->add_option("--audit-log", query_args.audit_log, "JSON Lines audit log path");
    query_cmd->add_option("--config", query_args.config, "JSON config file (flags win)");

    PlotArgs plot_args;
    CLI::App* plot_cmd = app.add_subcommand("plot", "render log-magnitude spectrogram PNGs");
    plot_cmd->add_option("--in", plot_args.inputs, "input WAV (repeatable)");
    plot_cmd->add_option("--out", plot_args.out, "output directory");
    plot_cmd->add_option("--win", plot_args.win, "STFT window size");
    plot_cmd->add_option("--hop", plot_args.hop, "STFT hop size");
    plot_cmd->add_option("--db-floor", plot_args.db_floor, "dynamic range floor (dB, negative)");
    plot_cmd->add_option("--config", plot_args.config, "JSON config file (flags win)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1; // every command-line shape problem is a usage error
    }

    try {
        if (mix_cmd->parsed()) return run_mix(mix_args, mix_cmd);
        if (train_cmd->parsed()) return run_train(train_args, train_cmd);
        if (sep_cmd->parsed()) return run_separate(sep_args, sep_cmd);
        if (eval_cmd->parsed()) return run_eval(eval_args, eval_cmd);
        if (query_cmd->parsed()) return run_query(query_args, query_cmd);
        if (plot_cmd->parsed()) return run_plot(plot_args, plot_cmd);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
