#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "qsep/error.h"
#include "qsep/querygen.h"
#include "qsep/rng.h"

using namespace qsep;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

ErrorCategory category_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.category();
    }
    FAIL("expected a qsep::Error to be thrown");
    return ErrorCategory::Usage;
}

// Scratch directory removed on destruction.
struct TempTree {
    fs::path root;
    explicit TempTree(const std::string& name) : root(fs::path("querygen_test_tmp") / name) {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~TempTree() {
        std::error_code ec;
        fs::remove_all(root, ec);
        fs::remove(root.parent_path(), ec); // only succeeds once empty
    }
    std::string file(const std::string& rel, const std::string& bytes) const {
        fs::path p = root / rel;
        std::ofstream out(p, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        return p.string();
    }
};

// In-process chat-completions endpoint capturing every request.
struct MockProvider {
    httplib::Server svr;
    std::thread th;
    int port = 0;
    std::mutex mu;
    std::vector<std::string> bodies;
    std::vector<httplib::Headers> header_sets;
    std::atomic<int> hits{0};

    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

    explicit MockProvider(Handler handler) {
        svr.Post("/v1/chat/completions",
                 [this, handler](const httplib::Request& req, httplib::Response& res) {
                     {
                         std::lock_guard<std::mutex> lock(mu);
                         bodies.push_back(req.body);
                         header_sets.push_back(req.headers);
                     }
                     hits.fetch_add(1);
                     handler(req, res);
                 });
        port = svr.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        th = std::thread([this] { svr.listen_after_bind(); });
        svr.wait_until_ready();
    }
    ~MockProvider() {
        svr.stop();
        th.join();
    }

    std::string endpoint() const {
        return "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    }
    std::string last_body() {
        std::lock_guard<std::mutex> lock(mu);
        REQUIRE(!bodies.empty());
        return bodies.back();
    }
    std::string last_header(const std::string& key) {
        std::lock_guard<std::mutex> lock(mu);
        REQUIRE(!header_sets.empty());
        auto it = header_sets.back().find(key);
        return it == header_sets.back().end() ? std::string() : it->second;
    }

    static Handler canned(const std::string& text) {
        return [text](const httplib::Request&, httplib::Response& res) {
            json reply;
            reply["choices"][0]["message"]["content"] = text;
            res.set_content(reply.dump(), "application/json");
        };
    }
};

ProviderConfig mock_config(const MockProvider& mock) {
    ProviderConfig cfg;
    cfg.endpoint_url = mock.endpoint();
    cfg.model_name = "mock-vlm";
    cfg.timeout_s = 5.0;
    cfg.max_retries = 2;
    cfg.templates_dir = QSEP_PROMPTS_SOURCE_DIR;
    return cfg;
}

const std::string kFakePng = std::string("\x89PNG\r\n\x1a\n", 8) + "notarealimage";

double cosine(const QueryEmbedding& a, const QueryEmbedding& b) {
    REQUIRE(a.values.size() == b.values.size());
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    return dot / std::sqrt(na * nb);
}

std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream ss(s);
    std::string w;
    while (ss >> w) out.push_back(w);
    return out;
}

} // namespace

TEST_CASE("render_template substitutes placeholders byte-identically") {
    TempTree tree("templates");
    tree.file("greet_v1.txt", "Hello {{name}}, welcome to {{place}}. Again: {{name}}.");

    SUBCASE("all placeholders bound, repeats included") {
        std::string a = render_template(tree.root.string(), "greet_v1",
                                        {{"name", "Ada"}, {"place", "the lab"}});
        CHECK(a == "Hello Ada, welcome to the lab. Again: Ada.");
        std::string b = render_template(tree.root.string(), "greet_v1",
                                        {{"name", "Ada"}, {"place", "the lab"}});
        CHECK(a == b);
    }
    SUBCASE("values containing placeholder syntax stay literal") {
        std::string a = render_template(tree.root.string(), "greet_v1",
                                        {{"name", "{{place}}"}, {"place", "X"}});
        CHECK(a == "Hello {{place}}, welcome to X. Again: {{place}}.");
    }
    SUBCASE("unbound placeholder is a usage error") {
        CHECK(category_of([&] {
                  render_template(tree.root.string(), "greet_v1", {{"name", "Ada"}});
              }) == ErrorCategory::Usage);
    }
    SUBCASE("missing template file is an io error") {
        CHECK(category_of([&] { render_template(tree.root.string(), "nope_v9", {}); }) ==
              ErrorCategory::Io);
    }
    SUBCASE("shipped templates load and the subtraction one binds both texts") {
        std::string g = render_template(QSEP_PROMPTS_SOURCE_DIR, "global_v1", {});
        std::string r = render_template(QSEP_PROMPTS_SOURCE_DIR, "regional_v1", {});
        CHECK(!g.empty());
        CHECK(!r.empty());
        std::string s = render_template(QSEP_PROMPTS_SOURCE_DIR, "subtract_v1",
                                        {{"global", "SCENE-TEXT"}, {"regional", "REGION-TEXT"}});
        CHECK(s.find("SCENE-TEXT") != std::string::npos);
        CHECK(s.find("REGION-TEXT") != std::string::npos);
        CHECK(s.find("{{") == std::string::npos);
    }
}

TEST_CASE("global_describe wraps the provider caption with provenance") {
    TempTree tree("global");
    const std::string frame = tree.file("frame.png", kFakePng);
    MockProvider mock(MockProvider::canned("a man plays guitar on a beach"));
    ProviderConfig cfg = mock_config(mock);

    SUBCASE("canned caption comes back wrapped") {
        SceneDescription d = global_describe(frame, cfg);
        CHECK(d.text == "a man plays guitar on a beach");
        CHECK(d.provider_id == "mock-vlm");
        CHECK(d.frame_ref == frame);
        CHECK(mock.hits.load() == 1);

        json body = json::parse(mock.last_body());
        CHECK(body["model"] == "mock-vlm");
        CHECK(body["temperature"] == 0);
        REQUIRE(body["messages"].size() == 1);
        CHECK(body["messages"][0]["role"] == "user");
        auto& parts = body["messages"][0]["content"];
        REQUIRE(parts.is_array());
        REQUIRE(parts.size() == 2);
        CHECK(parts[0]["type"] == "text");
        const std::string prompt = parts[0]["text"].get<std::string>();
        CHECK(prompt == render_template(QSEP_PROMPTS_SOURCE_DIR, "global_v1", {}));
        CHECK(parts[1]["type"] == "image_url");
        const std::string url = parts[1]["image_url"]["url"].get<std::string>();
        CHECK(url.rfind("data:image/png;base64,", 0) == 0);
        CHECK(url.size() > 30);
        CHECK(mock.last_header("Authorization").empty());
    }
    SUBCASE("api key from the environment rides as a bearer token") {
        setenv("QSEP_TEST_API_KEY", "sk-fixture-123", 1);
        cfg.api_key_env_var = "QSEP_TEST_API_KEY";
        global_describe(frame, cfg);
        CHECK(mock.last_header("Authorization") == "Bearer sk-fixture-123");
        unsetenv("QSEP_TEST_API_KEY");
    }
    SUBCASE("configured but unset api key env var fails before any request") {
        unsetenv("QSEP_TEST_MISSING_KEY");
        cfg.api_key_env_var = "QSEP_TEST_MISSING_KEY";
        const long before = http_request_count();
        try {
            global_describe(frame, cfg);
            FAIL("expected a provider error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Provider);
            CHECK(std::string(e.what()).find("QSEP_TEST_MISSING_KEY") != std::string::npos);
        }
        CHECK(http_request_count() == before);
        CHECK(mock.hits.load() == 0);
    }
    SUBCASE("missing frame file is an io error before any request") {
        const long before = http_request_count();
        CHECK(category_of([&] { global_describe(tree.root.string() + "/absent.png", cfg); }) ==
              ErrorCategory::Io);
        CHECK(http_request_count() == before);
    }
    SUBCASE("config validation rejects bad timeout and retries") {
        ProviderConfig bad = cfg;
        bad.timeout_s = 0.0;
        CHECK(category_of([&] { global_describe(frame, bad); }) == ErrorCategory::Usage);
        bad = cfg;
        bad.max_retries = -1;
        CHECK(category_of([&] { global_describe(frame, bad); }) == ErrorCategory::Usage);
        bad = cfg;
        bad.endpoint_url = "ftp://example.invalid/x";
        CHECK(category_of([&] { global_describe(frame, bad); }) == ErrorCategory::Usage);
    }
}

TEST_CASE("provider failure modes surface distinctly with retry accounting") {
    TempTree tree("failures");
    const std::string frame = tree.file("frame.png", kFakePng);

    SUBCASE("empty description text is rejected") {
        MockProvider mock(MockProvider::canned("   \n  "));
        ProviderConfig cfg = mock_config(mock);
        try {
            global_describe(frame, cfg);
            FAIL("expected a provider error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Provider);
            CHECK(std::string(e.what()).find("empty") != std::string::npos);
        }
        CHECK(mock.hits.load() == 1); // empty text is not retryable
    }
    SUBCASE("malformed response json is rejected without retry") {
        MockProvider mock([](const httplib::Request&, httplib::Response& res) {
            res.set_content("{\"unexpected\":true}", "application/json");
        });
        ProviderConfig cfg = mock_config(mock);
        try {
            global_describe(frame, cfg);
            FAIL("expected a provider error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Provider);
            CHECK(std::string(e.what()).find("malformed") != std::string::npos);
        }
        CHECK(mock.hits.load() == 1);
    }
    SUBCASE("http 500 retries up to the budget then reports the status") {
        MockProvider mock([](const httplib::Request&, httplib::Response& res) {
            res.status = 500;
            res.set_content("boom", "text/plain");
        });
        ProviderConfig cfg = mock_config(mock);
        cfg.max_retries = 2;
        try {
            global_describe(frame, cfg);
            FAIL("expected a provider error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Provider);
            CHECK(std::string(e.what()).find("500") != std::string::npos);
            CHECK(std::string(e.what()).find("3 attempt") != std::string::npos);
        }
        CHECK(mock.hits.load() == 3);
    }
    SUBCASE("http 404 is terminal on the first attempt") {
        MockProvider mock([](const httplib::Request&, httplib::Response& res) {
            res.status = 404;
            res.set_content("no such model", "text/plain");
        });
        ProviderConfig cfg = mock_config(mock);
        try {
            global_describe(frame, cfg);
            FAIL("expected a provider error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Provider);
            CHECK(std::string(e.what()).find("404") != std::string::npos);
        }
        CHECK(mock.hits.load() == 1);
    }
    SUBCASE("unreachable endpoint exhausts retries with transport accounting") {
        ProviderConfig cfg;
        cfg.endpoint_url = "http://127.0.0.1:1/v1/chat/completions"; // nothing listens on port 1
        cfg.model_name = "mock-vlm";
        cfg.timeout_s = 0.5;
        cfg.max_retries = 1;
        cfg.templates_dir = QSEP_PROMPTS_SOURCE_DIR;
        const long before = http_request_count();
        try {
            global_describe(frame, cfg);
            FAIL("expected a provider error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Provider);
            CHECK(std::string(e.what()).find("2 attempt") != std::string::npos);
            CHECK(std::string(e.what()).find("transport") != std::string::npos);
        }
        CHECK(http_request_count() == before + 2);
    }
    SUBCASE("read timeout counts as a retryable transport failure") {
        MockProvider mock([](const httplib::Request&, httplib::Response& res) {
            std::this_thread::sleep_for(std::chrono::milliseconds(400));
            json reply;
            reply["choices"][0]["message"]["content"] = "too late";
            res.set_content(reply.dump(), "application/json");
        });
        ProviderConfig cfg = mock_config(mock);
        cfg.timeout_s = 0.15;
        cfg.max_retries = 1;
        try {
            global_describe(frame, cfg);
            FAIL("expected a provider error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Provider);
            CHECK(std::string(e.what()).find("transport") != std::string::npos);
            CHECK(std::string(e.what()).find("2 attempt") != std::string::npos);
        }
    }
}

TEST_CASE("regional_describe attaches the mask and validates inputs first") {
    TempTree tree("regional");
    const std::string frame = tree.file("frame.png", kFakePng);
    const std::string mask = tree.file("mask.png", kFakePng + "mask");
    MockProvider mock(MockProvider::canned("an acoustic guitar being strummed"));
    ProviderConfig cfg = mock_config(mock);

    SUBCASE("wrapped result carries both file references") {
        RegionalDescription d = regional_describe(frame, mask, cfg);
        CHECK(d.text == "an acoustic guitar being strummed");
        CHECK(d.provider_id == "mock-vlm");
        CHECK(d.frame_ref == frame);
        CHECK(d.mask_ref == mask);

        json body = json::parse(mock.last_body());
        auto& parts = body["messages"][0]["content"];
        REQUIRE(parts.size() == 3); // prompt text, frame image, mask image
        CHECK(parts[0]["text"].get<std::string>() ==
              render_template(QSEP_PROMPTS_SOURCE_DIR, "regional_v1", {}));
        CHECK(parts[1]["image_url"]["url"].get<std::string>().rfind("data:image/png;base64,", 0) == 0);
        CHECK(parts[2]["image_url"]["url"].get<std::string>().rfind("data:image/png;base64,", 0) == 0);
        CHECK(parts[1]["image_url"]["url"] != parts[2]["image_url"]["url"]);
    }
    SUBCASE("missing mask file fails before any network call") {
        const long before = http_request_count();
        CHECK(category_of([&] {
                  regional_describe(frame, tree.root.string() + "/absent_mask.png", cfg);
              }) == ErrorCategory::Io);
        CHECK(http_request_count() == before);
        CHECK(mock.hits.load() == 0);
    }
}

TEST_CASE("textual_subtract renders the versioned prompt and condenses the reply") {
    TempTree tree("subtract");
    SceneDescription d_v{"a man plays guitar on a beach with crashing waves", "mock-vlm", "f.png"};
    RegionalDescription d_a{"a man playing guitar", "mock-vlm", "f.png", "m.png"};

    SUBCASE("mock llm reply becomes the query text") {
        MockProvider mock(MockProvider::canned("ocean waves and wind"));
        ProviderConfig cfg = mock_config(mock);
        TextQuery q = textual_subtract(d_v, d_a, cfg);
        CHECK(q.text == "ocean waves and wind");
        CHECK(q.origin == QueryOrigin::Llm);

        json body = json::parse(mock.last_body());
        // No images ride along: content is the flat prompt string.
        REQUIRE(body["messages"][0]["content"].is_string());
        const std::string prompt = body["messages"][0]["content"].get<std::string>();
        CHECK(prompt.find(d_v.text) != std::string::npos);
        CHECK(prompt.find(d_a.text) != std::string::npos);
        CHECK(prompt == render_template(QSEP_PROMPTS_SOURCE_DIR, "subtract_v1",
                                        {{"global", d_v.text}, {"regional", d_a.text}}));
    }
    SUBCASE("over-length reply is truncated at a sentence boundary") {
        std::string longtext;
        for (int i = 0; i < 12; ++i)
            longtext += "waves keep rolling onto the shore while gulls cry overhead. ";
        REQUIRE(longtext.size() > 256);
        MockProvider mock(MockProvider::canned(longtext));
        ProviderConfig cfg = mock_config(mock);
        TextQuery q = textual_subtract(d_v, d_a, cfg);
        CHECK(q.text.size() <= 256);
        CHECK(q.text.back() == '.');
        CHECK(q.text.size() >= 200); // the cut lands on the last boundary inside the budget
        CHECK(longtext.rfind(q.text, 0) == 0);
    }
    SUBCASE("reply with no sentence boundary is hard-cut to the budget") {
        const std::string longtext(400, 'x');
        MockProvider mock(MockProvider::canned(longtext));
        ProviderConfig cfg = mock_config(mock);
        TextQuery q = textual_subtract(d_v, d_a, cfg);
        CHECK(q.text.size() == 256);
    }
    SUBCASE("empty inputs are usage errors before any network call") {
        MockProvider mock(MockProvider::canned("unused"));
        ProviderConfig cfg = mock_config(mock);
        SceneDescription empty_v{"", "p", "f"};
        RegionalDescription empty_a{" \t ", "p", "f", "m"};
        CHECK(category_of([&] { textual_subtract(empty_v, d_a, cfg); }) == ErrorCategory::Usage);
        CHECK(category_of([&] { textual_subtract(d_v, empty_a, cfg); }) == ErrorCategory::Usage);
        CHECK(mock.hits.load() == 0);
    }
}

TEST_CASE("audit log records one json line per provider call including failures") {
    TempTree tree("audit");
    const std::string frame = tree.file("frame.png", kFakePng);
    const std::string audit_path = (tree.root / "audit.jsonl").string();

    MockProvider mock(MockProvider::canned("a quiet street"));
    ProviderConfig cfg = mock_config(mock);
    cfg.audit_log_path = audit_path;

    global_describe(frame, cfg); // success
    unsetenv("QSEP_TEST_MISSING_KEY");
    cfg.api_key_env_var = "QSEP_TEST_MISSING_KEY";
    CHECK_THROWS_AS(global_describe(frame, cfg), Error); // fails before sending
    cfg.api_key_env_var.clear();

    std::ifstream in(audit_path);
    REQUIRE(in.good());
    std::vector<json> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        lines.push_back(json::parse(line));
    }
    REQUIRE(lines.size() == 2);
    CHECK(lines[0]["ok"] == true);
    CHECK(lines[0]["status"] == 200);
    CHECK(lines[0]["attempts"] == 1);
    CHECK(lines[0]["model"] == "mock-vlm");
    CHECK(lines[0]["template_id"] == "global_v1");
    CHECK(lines[0]["endpoint"] == cfg.endpoint_url);
    CHECK(lines[0]["prompt_chars"].get<int64_t>() > 0);
    CHECK(lines[0]["response_chars"].get<int64_t>() > 0);
    CHECK(lines[1]["ok"] == false);
    CHECK(lines[1]["attempts"] == 0); // rejected before any attempt
}

TEST_CASE("fallback_subtract reproduces the token-set difference exactly") {
    SceneDescription beach{"a man plays guitar on a beach with crashing waves", "p", "f"};
    RegionalDescription guitar{"a man playing guitar", "p", "f", "m"};

    SUBCASE("worked example") {
        TextQuery q = fallback_subtract(beach, guitar);
        CHECK(q.text == "plays beach crashing waves");
        CHECK(q.origin == QueryOrigin::Fallback);
    }
    SUBCASE("identical descriptions leave only the ambience placeholder") {
        RegionalDescription same{beach.text, "p", "f", "m"};
        TextQuery q = fallback_subtract(beach, same);
        CHECK(q.text == "background ambience");
        CHECK(q.origin == QueryOrigin::Fallback);
    }
    SUBCASE("disjoint vocabularies pass content tokens through in order") {
        SceneDescription scene{"Dogs bark near the busy street market", "p", "f"};
        RegionalDescription region{"violin solo performance", "p", "f", "m"};
        TextQuery q = fallback_subtract(scene, region);
        CHECK(q.text == "dogs bark near busy street market");
    }
    SUBCASE("tokenization is case-insensitive and punctuation-blind") {
        SceneDescription scene{"RAIN, falling; rain againRAIN? thunder!", "p", "f"};
        RegionalDescription region{"Thunder.", "p", "f", "m"};
        TextQuery q = fallback_subtract(scene, region);
        CHECK(q.text == "rain falling rain againrain");
    }
    SUBCASE("deterministic across 100 repetitions") {
        const std::string expect = fallback_subtract(beach, guitar).text;
        for (int i = 0; i < 100; ++i) CHECK(fallback_subtract(beach, guitar).text == expect);
    }
    SUBCASE("idempotent in the regional description") {
        TextQuery once = fallback_subtract(beach, guitar);
        SceneDescription again{once.text, "p", "f"};
        TextQuery twice = fallback_subtract(again, guitar);
        CHECK(twice.text == once.text);
    }
    SUBCASE("no output token ever appears in the regional text (fuzz)") {
        const std::vector<std::string> vocab = {
            "drums",  "city",  "rain",   "engine", "crowd", "violin", "wind",
            "market", "birds", "hammer", "train",  "river", "siren",  "applause"};
        Rng rng(402);
        for (int rep = 0; rep < 200; ++rep) {
            auto pick = [&](int n) {
                std::string s;
                for (int i = 0; i < n; ++i) {
                    if (!s.empty()) s.push_back(' ');
                    s += vocab[static_cast<size_t>(rng.next_u64() % vocab.size())];
                }
                return s;
            };
            SceneDescription v{pick(1 + int(rng.next_u64() % 8)), "p", "f"};
            RegionalDescription a{pick(1 + int(rng.next_u64() % 4)), "p", "f", "m"};
            TextQuery q = fallback_subtract(v, a);
            std::set<std::string> banned;
            for (const std::string& w : split_words(a.text)) banned.insert(w);
            for (const std::string& w : split_words(q.text))
                if (q.text != "background ambience") CHECK(banned.count(w) == 0);
        }
    }
    SUBCASE("empty inputs are usage errors") {
        SceneDescription empty_v{"", "p", "f"};
        RegionalDescription empty_a{"", "p", "f", "m"};
        CHECK(category_of([&] { fallback_subtract(empty_v, guitar); }) == ErrorCategory::Usage);
        CHECK(category_of([&] { fallback_subtract(beach, empty_a); }) == ErrorCategory::Usage);
    }
    SUBCASE("very long differences respect the query length bound") {
        std::string big;
        for (int i = 0; i < 120; ++i) big += "uniqueword" + std::to_string(i) + " ";
        SceneDescription v{big, "p", "f"};
        TextQuery q = fallback_subtract(v, guitar);
        CHECK(q.text.size() <= 256);
        CHECK(!q.text.empty());
        CHECK(q.text.back() != ' ');
    }
}

TEST_CASE("offline paths never touch the network") {
    const long before = http_request_count();
    SceneDescription v{"wind turbines spin above a gravel road", "p", "f"};
    RegionalDescription a{"a single wind turbine", "p", "f", "m"};
    for (int i = 0; i < 10; ++i) {
        TextQuery q = fallback_subtract(v, a);
        text_to_embedding(q, 16, 7);
    }
    CHECK(http_request_count() == before);
}

TEST_CASE("text_to_embedding hashes tokens into a stable unit vector") {
    SUBCASE("identical text and seed give identical vectors") {
        TextQuery q{"rushing water over rocks", QueryOrigin::Manual};
        QueryEmbedding a = text_to_embedding(q, 24, 9);
        QueryEmbedding b = text_to_embedding(q, 24, 9);
        REQUIRE(a.values.size() == 24);
        for (size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == b.values[i]);
    }
    SUBCASE("unit norm within 1e-9 for assorted texts and dims") {
        const std::vector<std::string> texts = {
            "a", "crowd cheering in a stadium", "!!!", "x y z w v u t s r q",
            "Plays beach crashing waves"};
        for (const std::string& t : texts) {
            for (int dim : {1, 3, 16, 128}) {
                QueryEmbedding e = text_to_embedding(TextQuery{t, QueryOrigin::Manual}, dim, 5);
                double n = 0.0;
                for (double x : e.values) n += x * x;
                CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-9);
            }
        }
    }
    SUBCASE("seed changes the vector") {
        TextQuery q{"train passing over a steel bridge", QueryOrigin::Manual};
        QueryEmbedding a = text_to_embedding(q, 32, 1);
        QueryEmbedding b = text_to_embedding(q, 32, 2);
        double diff = 0.0;
        for (size_t i = 0; i < a.values.size(); ++i) diff += std::abs(a.values[i] - b.values[i]);
        CHECK(diff > 1e-6);
    }
    SUBCASE("token order does not matter but token identity does") {
        QueryEmbedding ab = text_to_embedding(TextQuery{"rain thunder", QueryOrigin::Manual}, 32, 3);
        QueryEmbedding ba = text_to_embedding(TextQuery{"thunder rain", QueryOrigin::Manual}, 32, 3);
        QueryEmbedding other = text_to_embedding(TextQuery{"rain wind", QueryOrigin::Manual}, 32, 3);
        for (size_t i = 0; i < ab.values.size(); ++i) CHECK(ab.values[i] == ba.values[i]);
        double diff = 0.0;
        for (size_t i = 0; i < ab.values.size(); ++i) diff += std::abs(ab.values[i] - other.values[i]);
        CHECK(diff > 1e-6);
    }
    SUBCASE("disjoint-token pairs are near-orthogonal on average at dim 16") {
        Rng rng(777);
        double sum_abs_cos = 0.0;
        for (int pair = 0; pair < 100; ++pair) {
            std::string ta, tb;
            for (int i = 0; i < 8; ++i) {
                ta += " left" + std::to_string(pair) + "x" + std::to_string(i);
                tb += " right" + std::to_string(pair) + "y" + std::to_string(i);
            }
            const uint64_t seed = rng.next_u64();
            QueryEmbedding ea = text_to_embedding(TextQuery{ta, QueryOrigin::Manual}, 16, seed);
            QueryEmbedding eb = text_to_embedding(TextQuery{tb, QueryOrigin::Manual}, 16, seed);
            sum_abs_cos += std::abs(cosine(ea, eb));
        }
        CHECK(sum_abs_cos / 100.0 < 0.3);
    }
    SUBCASE("dim below one is a usage error") {
        CHECK(category_of([&] {
                  text_to_embedding(TextQuery{"x", QueryOrigin::Manual}, 0, 1);
              }) == ErrorCategory::Usage);
    }
}
