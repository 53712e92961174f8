#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qsep/separator.h"

namespace qsep {

// Whole-scene description from a vision provider.
struct SceneDescription {
    std::string text;
    std::string provider_id;
    std::string frame_ref;
};

// Description of the masked object only.
struct RegionalDescription {
    std::string text;
    std::string provider_id;
    std::string frame_ref;
    std::string mask_ref;
};

enum class QueryOrigin {
    Llm,
    Fallback,
    Manual,
};

struct TextQuery {
    std::string text; // nonempty, at most 256 characters
    QueryOrigin origin = QueryOrigin::Manual;
};

// Chat-completions endpoint description. API keys come from the named
// environment variable, never from config files. Each call builds its own
// connection, so callers may fan out requests across threads.
struct ProviderConfig {
    std::string endpoint_url;
    std::string model_name;
    std::string api_key_env_var;    // empty = no Authorization header
    double timeout_s = 30.0;
    int max_retries = 2;            // extra attempts after the first
    std::string prompt_template_id; // file stem under templates_dir; empty = operation default
    std::string templates_dir = "share/prompts";
    std::string audit_log_path;     // JSON Lines, appended per call; empty = off
};

// Load templates_dir/<id>.txt and substitute every {{name}} placeholder.
// Placeholders missing from vars are an error; rendering is byte-stable.
std::string render_template(const std::string& templates_dir, const std::string& id,
                            const std::vector<std::pair<std::string, std::string>>& vars);

// Ask the provider for an overall scene description of the frame image.
SceneDescription global_describe(const std::string& frame_ref, const ProviderConfig& provider);

// Ask for a description of the masked region; the mask image rides along
// in the same message. Both files are read before any network activity.
RegionalDescription regional_describe(const std::string& frame_ref, const std::string& mask_ref,
                                      const ProviderConfig& provider);

// Condense "scene minus masked object" into an audio-focused query via
// the provider. Over-length replies are truncated at a sentence boundary
// with a warning.
TextQuery textual_subtract(const SceneDescription& d_v, const RegionalDescription& d_a,
                           const ProviderConfig& llm);

// Offline stand-in: lowercase tokens of the scene text, minus stopwords,
// minus every token appearing in the regional text, original order kept.
// An empty difference becomes "background ambience". Never touches the
// network.
TextQuery fallback_subtract(const SceneDescription& d_v, const RegionalDescription& d_a);

// Feature-hashed bag-of-tokens embedding, L2-normalized; identical text
// and seed give identical vectors.
QueryEmbedding text_to_embedding(const TextQuery& q, int dim, uint64_t seed);

// Physical HTTP attempts made by this process (retries count separately);
// lets tests prove offline paths stay offline.
long http_request_count();

} // namespace qsep
