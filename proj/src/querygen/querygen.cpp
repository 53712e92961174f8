#include "qsep/querygen.h"

#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "qsep/error.h"
#include "qsep/rng.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace qsep {
namespace {

std::atomic<long> g_http_requests{0};
std::mutex g_audit_mutex;

// ---------------------------------------------------------------- utilities

std::string read_file_bytes(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_io(std::string(what) + " file is not readable: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw_io(std::string("failed reading ") + what + " file: " + path);
    return ss.str();
}

std::string base64_encode(const std::string& bytes) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    size_t i = 0;
    while (i + 3 <= bytes.size()) {
        uint32_t v = (uint8_t(bytes[i]) << 16) | (uint8_t(bytes[i + 1]) << 8) | uint8_t(bytes[i + 2]);
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back(alphabet[v & 63]);
        i += 3;
    }
    size_t rest = bytes.size() - i;
    if (rest == 1) {
        uint32_t v = uint8_t(bytes[i]) << 16;
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back('=');
        out.push_back('=');
    } else if (rest == 2) {
        uint32_t v = (uint8_t(bytes[i]) << 16) | (uint8_t(bytes[i + 1]) << 8);
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

std::string mime_for(const std::string& path) {
    std::string ext = fs::path(path).extension().string();
    for (char& c : ext) c = char(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".webp") return "image/webp";
    return "application/octet-stream";
}

std::string data_url(const std::string& path, const std::string& bytes) {
    return "data:" + mime_for(path) + ";base64," + base64_encode(bytes);
}

std::string trimmed(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// Lowercase ASCII-alphanumeric token runs, in input order.
std::vector<std::string> tokenize_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        unsigned char u = static_cast<unsigned char>(ch);
        if (std::isalnum(u)) {
            cur.push_back(char(std::tolower(u)));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

const std::set<std::string>& stopwords() {
    static const std::set<std::string> words = {
        "a",     "an",     "the",    "and",   "or",      "of",    "to",
        "in",    "on",     "at",     "with",  "by",      "for",   "from",
        "as",    "is",     "are",    "was",   "were",    "be",    "been",
        "being", "it",     "its",    "this",  "that",    "these", "those",
        "he",    "she",    "they",   "them",  "his",     "her",   "their",
        "there", "here",   "into",   "over",  "under",   "up",    "down",
        "out",   "off",    "about",  "while", "during",  "through",
        "some",  "very",   "no",     "not",   "so",
    };
    return words;
}

void validate_provider(const ProviderConfig& cfg) {
    if (cfg.endpoint_url.empty()) throw_usage("provider endpoint URL is empty");
    if (cfg.endpoint_url.rfind("http://", 0) != 0 && cfg.endpoint_url.rfind("https://", 0) != 0)
        throw_usage("provider endpoint URL must start with http:// or https://");
    if (cfg.model_name.empty()) throw_usage("provider model name is empty");
    if (!(cfg.timeout_s > 0.0)) throw_usage("provider timeout must be positive");
    if (cfg.max_retries < 0) throw_usage("provider max_retries must be non-negative");
}

void split_url(const std::string& url, std::string& base, std::string& path) {
    size_t scheme_end = url.find("://");
    size_t slash = url.find('/', scheme_end + 3);
    if (slash == std::string::npos) {
        base = url;
        path = "/";
    } else {
        base = url.substr(0, slash);
        path = url.substr(slash);
    }
}

void audit_append(const ProviderConfig& cfg, const std::string& template_id, int attempts,
                  bool ok, int status, size_t prompt_chars, size_t response_chars) {
    if (cfg.audit_log_path.empty()) return;
    json line;
    line["ts"] = static_cast<int64_t>(
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count());
    line["endpoint"] = cfg.endpoint_url;
    line["model"] = cfg.model_name;
    line["template_id"] = template_id;
    line["attempts"] = attempts;
    line["ok"] = ok;
    line["status"] = status;
    line["prompt_chars"] = prompt_chars;
    line["response_chars"] = response_chars;
    std::lock_guard<std::mutex> lock(g_audit_mutex);
    std::ofstream out(cfg.audit_log_path, std::ios::app);
    if (!out) throw_io("cannot open audit log for append: " + cfg.audit_log_path);
    out << line.dump() << "\n";
}

// One chat-completions call: deterministic prompt (temperature 0), optional
// inline images, Bearer auth from the environment, bounded retries on
// transport failures and 5xx. Every exit path writes an audit line.
std::string chat_call(const ProviderConfig& cfg, const std::string& template_id,
                      const std::string& prompt, const std::vector<std::string>& image_urls) {
    validate_provider(cfg);

    std::string api_key;
    if (!cfg.api_key_env_var.empty()) {
        const char* v = std::getenv(cfg.api_key_env_var.c_str());
        if (v == nullptr || *v == '\0') {
            audit_append(cfg, template_id, 0, false, 0, prompt.size(), 0);
            throw_provider("API key environment variable '" + cfg.api_key_env_var +
                           "' is not set; no request was sent");
        }
        api_key = v;
    }

    json msg;
    msg["role"] = "user";
    if (image_urls.empty()) {
        msg["content"] = prompt;
    } else {
        json parts = json::array();
        parts.push_back({{"type", "text"}, {"text", prompt}});
        for (const std::string& u : image_urls)
            parts.push_back({{"type", "image_url"}, {"image_url", {{"url", u}}}});
        msg["content"] = parts;
    }
    json payload;
    payload["model"] = cfg.model_name;
    payload["temperature"] = 0;
    payload["messages"] = json::array({msg});
    const std::string body = payload.dump();

    std::string base, path;
    split_url(cfg.endpoint_url, base, path);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (cfg.endpoint_url.rfind("https://", 0) == 0) {
        audit_append(cfg, template_id, 0, false, 0, prompt.size(), 0);
        throw_provider("endpoint requires HTTPS but this build lacks TLS support");
    }
#endif

    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

    const int max_attempts = cfg.max_retries + 1;
    const auto timeout_sec = static_cast<time_t>(cfg.timeout_s);
    const auto timeout_usec =
        static_cast<time_t>((cfg.timeout_s - double(timeout_sec)) * 1e6);
    std::string last_error;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        if (attempt > 1)
            std::this_thread::sleep_for(std::chrono::milliseconds(25 * (attempt - 1)));
        g_http_requests.fetch_add(1, std::memory_order_relaxed);

        httplib::Client cli(base);
        cli.set_connection_timeout(timeout_sec, timeout_usec);
        cli.set_read_timeout(timeout_sec, timeout_usec);
        cli.set_write_timeout(timeout_sec, timeout_usec);
        httplib::Result res = cli.Post(path, headers, body, "application/json");

        if (!res) {
            last_error = "transport failure (" + httplib::to_string(res.error()) + ")";
            continue; // connection refused / timeout: retryable
        }
        if (res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue; // server-side: retryable
        }
        if (res->status != 200) {
            audit_append(cfg, template_id, attempt, false, res->status, prompt.size(),
                         res->body.size());
            throw_provider("provider returned HTTP " + std::to_string(res->status) + " after " +
                           std::to_string(attempt) + " attempt(s)");
        }

        std::string content;
        try {
            json reply = json::parse(res->body);
            content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception&) {
            audit_append(cfg, template_id, attempt, false, res->status, prompt.size(),
                         res->body.size());
            throw_provider("malformed provider response: expected choices[0].message.content");
        }
        content = trimmed(content);
        if (content.empty()) {
            audit_append(cfg, template_id, attempt, false, res->status, prompt.size(),
                         res->body.size());
            throw_provider("provider returned an empty description");
        }
        audit_append(cfg, template_id, attempt, true, res->status, prompt.size(), content.size());
        return content;
    }
    audit_append(cfg, template_id, max_attempts, false, 0, prompt.size(), 0);
    throw_provider("provider unreachable: " + last_error + " after " +
                   std::to_string(max_attempts) + " attempt(s)");
}

std::string template_or(const ProviderConfig& cfg, const char* fallback_id) {
    return cfg.prompt_template_id.empty() ? std::string(fallback_id) : cfg.prompt_template_id;
}

// Cut to the 256-character budget at the last sentence boundary when one
// exists; otherwise hard-cut without splitting a UTF-8 sequence.
std::string condense_query(std::string text) {
    constexpr size_t kMaxChars = 256;
    text = trimmed(text);
    if (text.size() <= kMaxChars) return text;
    size_t cut = text.find_last_of(".!?", kMaxChars - 1);
    if (cut != std::string::npos && cut > 0) {
        text.resize(cut + 1);
    } else {
        text.resize(kMaxChars);
        while (!text.empty() &&
               (static_cast<unsigned char>(text.back()) & 0xC0) == 0x80)
            text.pop_back();
    }
    text = trimmed(text);
    std::fprintf(stderr, "warning: provider query exceeded 256 characters; truncated to %zu\n",
                 text.size());
    return text;
}

} // namespace

long http_request_count() { return g_http_requests.load(std::memory_order_relaxed); }

std::string render_template(const std::string& templates_dir, const std::string& id,
                            const std::vector<std::pair<std::string, std::string>>& vars) {
    if (id.empty()) throw_usage("template id is empty");
    const std::string path = (fs::path(templates_dir) / (id + ".txt")).string();
    const std::string text = read_file_bytes(path, "prompt template");

    // Single pass: substituted values are emitted verbatim and never
    // rescanned, so user text containing "{{" stays literal.
    std::string out;
    out.reserve(text.size());
    size_t pos = 0;
    while (true) {
        const size_t open = text.find("{{", pos);
        if (open == std::string::npos) {
            out.append(text, pos, std::string::npos);
            break;
        }
        out.append(text, pos, open - pos);
        const size_t end = text.find("}}", open + 2);
        if (end == std::string::npos)
            throw_usage("unterminated placeholder in template " + id);
        const std::string name = text.substr(open + 2, end - open - 2);
        const std::string* value = nullptr;
        for (const auto& kv : vars)
            if (kv.first == name) {
                value = &kv.second;
                break;
            }
        if (value == nullptr)
            throw_usage("template " + id + " references unbound placeholder {{" + name + "}}");
        out += *value;
        pos = end + 2;
    }
    return out;
}

SceneDescription global_describe(const std::string& frame_ref, const ProviderConfig& provider) {
    validate_provider(provider);
    const std::string frame_bytes = read_file_bytes(frame_ref, "frame");
    const std::string id = template_or(provider, "global_v1");
    const std::string prompt = render_template(provider.templates_dir, id, {});
    const std::string text = chat_call(provider, id, prompt, {data_url(frame_ref, frame_bytes)});
    return SceneDescription{text, provider.model_name, frame_ref};
}

RegionalDescription regional_describe(const std::string& frame_ref, const std::string& mask_ref,
                                      const ProviderConfig& provider) {
    validate_provider(provider);
    const std::string frame_bytes = read_file_bytes(frame_ref, "frame");
    const std::string mask_bytes = read_file_bytes(mask_ref, "mask");
    const std::string id = template_or(provider, "regional_v1");
    const std::string prompt = render_template(provider.templates_dir, id, {});
    const std::string text = chat_call(
        provider, id, prompt, {data_url(frame_ref, frame_bytes), data_url(mask_ref, mask_bytes)});
    return RegionalDescription{text, provider.model_name, frame_ref, mask_ref};
}

TextQuery textual_subtract(const SceneDescription& d_v, const RegionalDescription& d_a,
                           const ProviderConfig& llm) {
    if (trimmed(d_v.text).empty()) throw_usage("scene description text is empty");
    if (trimmed(d_a.text).empty()) throw_usage("regional description text is empty");
    const std::string id = template_or(llm, "subtract_v1");
    const std::string prompt = render_template(
        llm.templates_dir, id, {{"global", d_v.text}, {"regional", d_a.text}});
    std::string text = condense_query(chat_call(llm, id, prompt, {}));
    if (text.empty()) throw_provider("provider returned an empty query");
    return TextQuery{text, QueryOrigin::Llm};
}

TextQuery fallback_subtract(const SceneDescription& d_v, const RegionalDescription& d_a) {
    if (trimmed(d_v.text).empty()) throw_usage("scene description text is empty");
    if (trimmed(d_a.text).empty()) throw_usage("regional description text is empty");
    const std::vector<std::string> scene = tokenize_words(d_v.text);
    const std::vector<std::string> region = tokenize_words(d_a.text);
    const std::set<std::string> removed(region.begin(), region.end());

    std::string out;
    for (const std::string& tok : scene) {
        if (stopwords().count(tok) != 0) continue;
        if (removed.count(tok) != 0) continue;
        if (!out.empty()) out.push_back(' ');
        out += tok;
    }
    if (out.size() > 256) { // keep the query-length bound without splitting a token
        const size_t cut = out.find_last_of(' ', 256);
        out.resize(cut == std::string::npos ? 256 : cut);
    }
    if (out.empty()) out = "background ambience";
    return TextQuery{out, QueryOrigin::Fallback};
}

QueryEmbedding text_to_embedding(const TextQuery& q, int dim, uint64_t seed) {
    if (dim < 1) throw_usage("embedding dimension must be at least 1");
    std::vector<std::string> tokens = tokenize_words(q.text);
    if (tokens.empty()) tokens.emplace_back(); // degenerate text still embeds deterministically

    QueryEmbedding e;
    e.values.assign(static_cast<size_t>(dim), 0.0);
    for (const std::string& tok : tokens) {
        uint64_t state = fnv1a64(tok) ^ (seed + 0x9e3779b97f4a7c15ULL);
        const uint64_t r_index = splitmix64(state);
        const uint64_t r_sign = splitmix64(state);
        const size_t idx = static_cast<size_t>(r_index % uint64_t(dim));
        e.values[idx] += (r_sign & 1u) ? 1.0 : -1.0;
    }
    double norm_sq = 0.0;
    for (double v : e.values) norm_sq += v * v;
    if (norm_sq < 1e-24) {
        e.values[0] = 1.0; // hash cancellation: pin a stable unit vector
    } else {
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (double& v : e.values) v *= inv;
    }
    return e;
}

} // namespace qsep
