#include "fragbench/runner.hpp"

#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "fragbench/analyze.hpp"
#include "fragbench/errors.hpp"
#include "fragbench/score.hpp"

using namespace fragbench;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
    fs::path dir = fs::temp_directory_path() / "fragbench_runner_test";
    fs::create_directories(dir);
    return dir;
}

RenderedPrompt simple_prompt() {
    RenderedPrompt prompt;
    prompt.system_text = "system text";
    prompt.user_text = "user text";
    return prompt;
}

// In-process chat-completions endpoint with a scriptable handler.
class LocalServer {
public:
    explicit LocalServer(httplib::Server::Handler handler) {
        server_.Post("/v1/chat/completions", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LocalServer() {
        server_.stop();
        thread_.join();
    }
    std::string endpoint() const {
        return "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

std::string ok_body(const std::string& text) {
    json reply{{"choices", json::array({{{"message", {{"role", "assistant"},
                                                      {"content", text}}}}})}};
    return reply.dump();
}

ModelConfig local_config(const std::string& endpoint, const std::string& name = "test-model") {
    ModelConfig config;
    config.name = name;
    config.endpoint = endpoint;
    config.max_retries = 3;
    config.backoff_base = std::chrono::milliseconds(1);
    config.request_timeout = std::chrono::milliseconds(5000);
    return config;
}

// Writes a small corpus file and returns a matching manifest.
RunManifest small_manifest(const std::string& tag, std::size_t docs, std::size_t lines,
                           const std::vector<double>& levels,
                           const std::vector<std::uint64_t>& seeds) {
    fs::path corpus_path = test_dir() / (tag + "_corpus.jsonl");
    {
        std::ofstream out(corpus_path);
        for (std::size_t d = 0; d < docs; ++d) {
            std::string body;
            for (std::size_t l = 0; l < lines; ++l) {
                if (l) body += "\\n";
                body += "document " + std::to_string(d) + " line " + std::to_string(l) +
                        " with several words";
            }
            out << R"({"id": "doc-)" << d << R"(", "body": ")" << body << "\"}\n";
        }
    }
    RunManifest manifest;
    manifest.task = TaskKind::absence;
    manifest.domain = Domain::legal;
    manifest.corpus_path = corpus_path.string();
    manifest.corpus_hash = file_hash_hex(corpus_path.string());
    manifest.rate = 0.2;
    manifest.target_seed = 11;
    manifest.frag_seeds = seeds;
    manifest.wfr_levels = levels;
    manifest.template_version = template_version();
    return manifest;
}

// Scores span-task records in place, like the score subcommand does.
void score_records(std::vector<EvalRecord>& records) {
    for (auto& r : records) {
        if (r.status != CallStatus::ok) continue;
        auto parsed = parse_predicted_lines(r.raw_response);
        auto counts = score_instance(parsed, r.truth_lines);
        r.predicted_lines = parsed.predicted_lines;
        r.tp = counts.tp;
        r.fp = counts.fp;
        r.fn = counts.fn;
        r.scored = true;
    }
}

}  // namespace

TEST_SUITE_BEGIN("runner");

TEST_CASE("request body carries system and user messages") {
    auto config = local_config("http://unused/v1");
    auto body = json::parse(build_chat_request(simple_prompt(), config));
    CHECK(body["model"] == "test-model");
    REQUIRE(body["messages"].size() == 2);
    CHECK(body["messages"][0]["role"] == "system");
    CHECK(body["messages"][0]["content"] == "system text");
    CHECK(body["messages"][1]["role"] == "user");
    CHECK(body["messages"][1]["content"] == "user text");
    CHECK(!body.contains("reasoning_effort"));

    // Math prompts have no system message.
    RenderedPrompt math;
    math.user_text = "Question: 1+1?";
    auto math_body = json::parse(build_chat_request(math, config));
    REQUIRE(math_body["messages"].size() == 1);
    CHECK(math_body["messages"][0]["role"] == "user");
}

TEST_CASE("thinking flag maps through the provider adapter table") {
    CHECK(thinking_provider("gpt-5.2") == "openai");
    CHECK(thinking_provider("claude-4.5-haiku") == "anthropic");
    CHECK(thinking_provider("gemini-3.0-flash") == "google");
    CHECK(thinking_provider("qwen3-plus") == "default");

    auto config = local_config("http://unused/v1", "gpt-5.2");
    config.thinking = true;
    auto body = json::parse(build_chat_request(simple_prompt(), config));
    CHECK(body["reasoning_effort"] == "medium");

    config = local_config("http://unused/v1", "claude-4.5-haiku");
    config.thinking = true;
    body = json::parse(build_chat_request(simple_prompt(), config));
    CHECK(body["thinking"]["type"] == "enabled");

    config = local_config("http://unused/v1", "gemini-3.0-flash");
    config.thinking = true;
    body = json::parse(build_chat_request(simple_prompt(), config));
    CHECK(body.contains("extra_body"));
}

TEST_CASE("successful completion round trip") {
    LocalServer server([](const httplib::Request& req, httplib::Response& res) {
        auto body = json::parse(req.body);
        CHECK(body["messages"].size() == 2);
        res.set_content(ok_body("model says hi"), "application/json");
    });
    auto result = complete(simple_prompt(), local_config(server.endpoint()));
    CHECK(result.status == CallStatus::ok);
    CHECK(result.text == "model says hi");
    CHECK(result.attempts == 1);
}

TEST_CASE("transient failures are retried with backoff") {
    std::atomic<int> calls{0};
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        int n = ++calls;
        if (n <= 2) {
            res.status = 500;
            res.set_content("flaky", "text/plain");
        } else {
            res.set_content(ok_body("recovered"), "application/json");
        }
    });
    auto result = complete(simple_prompt(), local_config(server.endpoint()));
    CHECK(result.status == CallStatus::ok);
    CHECK(result.text == "recovered");
    CHECK(result.attempts == 3);
    CHECK(calls.load() == 3);
}

TEST_CASE("retries exhaust into transport_error") {
    std::atomic<int> calls{0};
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 503;
        res.set_content("down", "text/plain");
    });
    auto config = local_config(server.endpoint());
    config.max_retries = 2;
    auto result = complete(simple_prompt(), config);
    CHECK(result.status == CallStatus::transport_error);
    CHECK(calls.load() == 3);  // 1 + 2 retries
}

TEST_CASE("context length rejection maps without retry") {
    std::atomic<int> calls{0};
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 400;
        res.set_content(
            R"({"error": {"message": "This model's maximum context length is 8192 tokens.",)"
            R"( "type": "invalid_request_error", "code": "context_length_exceeded"}})",
            "application/json");
    });
    auto result = complete(simple_prompt(), local_config(server.endpoint()));
    CHECK(result.status == CallStatus::context_length_error);
    CHECK(calls.load() == 1);  // never retried
}

TEST_CASE("provider refusal error objects map to refused") {
    LocalServer server([](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"error": {"message": "declined", "type": "refusal"}})",
                        "application/json");
    });
    auto result = complete(simple_prompt(), local_config(server.endpoint()));
    CHECK(result.status == CallStatus::refused);
}

TEST_CASE("unreachable endpoint is a transport error") {
    auto config = local_config("http://127.0.0.1:1/v1");
    config.max_retries = 1;
    config.request_timeout = std::chrono::milliseconds(1000);
    auto result = complete(simple_prompt(), config);
    CHECK(result.status == CallStatus::transport_error);
    CHECK(result.attempts == 2);
}

TEST_CASE("oracle mock answers from the instance context") {
    OracleModel oracle;
    std::vector<std::string> truth{"li ne one", "li ne two"};
    CallContext ctx{"doc", TaskKind::absence, 0.5, 1, &truth, std::nullopt};
    auto result = oracle.complete(simple_prompt(), ctx);
    CHECK(result.status == CallStatus::ok);
    CHECK(result.text == "li ne one\nli ne two");

    CallContext math_ctx{"p1", TaskKind::math, 0.5, 1, nullptr, 42.0};
    CHECK(oracle.complete(simple_prompt(), math_ctx).text == "The answer is #### 42");
}

TEST_CASE("lossy mock extremes and determinism") {
    std::map<double, double> all_on{{0.5, 1.0}};
    std::map<double, double> all_off{{0.5, 0.0}};
    std::vector<std::string> truth{"a line", "b line", "c line"};
    CallContext ctx{"doc", TaskKind::absence, 0.5, 1, &truth, std::nullopt};

    LossyModel on(all_on, 0.0, 3);
    CHECK(on.complete(simple_prompt(), ctx).text == "a line\nb line\nc line");

    LossyModel off(all_off, 0.0, 3);
    CHECK(off.complete(simple_prompt(), ctx).text.empty());

    LossyModel lossy({{0.5, 0.6}}, 0.1, 9);
    auto first = lossy.complete(simple_prompt(), ctx).text;
    auto second = lossy.complete(simple_prompt(), ctx).text;
    CHECK(first == second);

    LossyModel missing({{0.4, 0.6}}, 0.0, 9);
    CHECK_THROWS_AS(missing.complete(simple_prompt(), ctx), std::invalid_argument);

    CHECK_THROWS_AS(LossyModel({{0.5, 1.5}}, 0.0, 1), std::invalid_argument);
}

TEST_CASE("profile interpolation") {
    std::map<double, double> anchors{{0.0, 0.9}, {0.5, 0.4}, {1.0, 0.7}};
    std::vector<double> levels;
    for (int i = 0; i <= 10; ++i) levels.push_back(i / 10.0);
    auto profile = interpolate_profile(anchors, levels);
    CHECK(profile.at(0.0) == doctest::Approx(0.9));
    CHECK(profile.at(0.5) == doctest::Approx(0.4));
    CHECK(profile.at(1.0) == doctest::Approx(0.7));
    CHECK(profile.at(0.1) == doctest::Approx(0.8));
    CHECK(profile.at(0.8) == doctest::Approx(0.58));
    CHECK(profile.size() == 11);
}

TEST_CASE("manifest persistence round trip") {
    auto manifest = small_manifest("mf", 2, 5, {0.0, 0.5, 1.0}, {4, 5});
    manifest.icl = true;
    manifest.icl_asset = "assets/icl_examples.json";
    manifest.needle_count = 60;
    manifest.sample_n = 2;
    manifest.created_at = "2025-01-01T00:00:00Z";

    auto path = (test_dir() / "manifest.json").string();
    save_manifest(manifest, path);
    auto loaded = load_manifest(path);
    CHECK(loaded.task == manifest.task);
    CHECK(loaded.domain == manifest.domain);
    CHECK(loaded.corpus_path == manifest.corpus_path);
    CHECK(loaded.corpus_hash == manifest.corpus_hash);
    CHECK(loaded.rate == manifest.rate);
    CHECK(loaded.target_seed == manifest.target_seed);
    CHECK(loaded.frag_seeds == manifest.frag_seeds);
    CHECK(loaded.wfr_levels == manifest.wfr_levels);
    CHECK(loaded.icl == manifest.icl);
    CHECK(loaded.icl_asset == manifest.icl_asset);
    CHECK(loaded.needle_count == manifest.needle_count);
    CHECK(loaded.sample_n == manifest.sample_n);
    CHECK(loaded.created_at == manifest.created_at);

    CHECK_THROWS_AS(load_manifest("/nonexistent/m.json"), io_error);
}

TEST_CASE("record store appends, reloads, and skips duplicates") {
    auto path = (test_dir() / "store_basic.jsonl").string();
    fs::remove(path);
    {
        RecordStore store(path);
        EvalRecord r;
        r.doc_id = "d1";
        r.task = TaskKind::absence;
        r.wfr_level = 0.3;
        r.frag_seed = 1;
        r.target_seed = 2;
        r.model = "m";
        r.raw_response = "resp";
        r.truth_lines = {"t1", "t2"};
        store.append(r);
        CHECK(store.contains(r.identity()));
        CHECK(store.size() == 1);
        CHECK_THROWS_AS(store.append(r), consistency_error);  // identity is unique
    }
    auto records = RecordStore::load(path);
    REQUIRE(records.size() == 1);
    CHECK(records[0].doc_id == "d1");
    CHECK(records[0].wfr_level == 0.3);
    CHECK(records[0].truth_lines == std::vector<std::string>{"t1", "t2"});

    // Reopening indexes the existing identities.
    RecordStore reopened(path);
    CHECK(reopened.contains(records[0].identity()));
}

TEST_CASE("record store io errors") {
    CHECK_THROWS_AS(RecordStore::load("/nonexistent/records.jsonl"), io_error);
    CHECK_THROWS_AS(RecordStore("/nonexistent/dir/records.jsonl"), io_error);
}

TEST_CASE("sweep covers the grid and is resumable") {
    auto manifest = small_manifest("sweep", 5, 8, {0.0, 0.5, 1.0}, {1, 2});
    auto path = (test_dir() / "sweep_records.jsonl").string();
    fs::remove(path);

    OracleModel oracle;
    {
        RecordStore store(path);
        auto summary = run_sweep(manifest, oracle, store);
        CHECK(summary.grid_size == 5 * 3 * 2);
        CHECK(summary.calls_made == 30);
        CHECK(summary.skipped == 0);
        CHECK(summary.ok == 30);
    }

    // Identity is unique in the store.
    auto records = RecordStore::load(path);
    std::set<std::string> identities;
    for (const auto& r : records) CHECK(identities.insert(r.identity()).second);
    CHECK(records.size() == 30);

    // A rerun makes zero new calls.
    {
        RecordStore store(path);
        auto summary = run_sweep(manifest, oracle, store);
        CHECK(summary.calls_made == 0);
        CHECK(summary.skipped == 30);
    }
    CHECK(RecordStore::load(path).size() == 30);
}

TEST_CASE("sweep reuses one mask per document across levels and seeds") {
    auto manifest = small_manifest("mask", 3, 10, {0.0, 0.4, 1.0}, {1, 2});
    auto path = (test_dir() / "mask_records.jsonl").string();
    fs::remove(path);
    OracleModel oracle;
    RecordStore store(path);
    run_sweep(manifest, oracle, store);

    // Same document, same target count at every (level, seed); at level 0
    // the truth lines are identical across seeds.
    auto records = RecordStore::load(path);
    std::map<std::string, std::set<std::size_t>> truth_counts;
    std::map<std::string, std::set<std::string>> clean_truths;
    for (const auto& r : records) {
        truth_counts[r.doc_id].insert(r.truth_lines.size());
        if (r.wfr_level == 0.0) {
            std::string joined;
            for (const auto& t : r.truth_lines) joined += t + "\x1e";
            clean_truths[r.doc_id].insert(joined);
        }
    }
    for (const auto& [doc, counts] : truth_counts) CHECK(counts.size() == 1);
    for (const auto& [doc, truths] : clean_truths) CHECK(truths.size() == 1);
}

TEST_CASE("manifest fully determines instance regeneration") {
    auto manifest = small_manifest("regen", 3, 6, {0.7}, {9});
    auto path = (test_dir() / "regen_records.jsonl").string();
    fs::remove(path);
    OracleModel oracle;
    RecordStore store(path);
    run_sweep(manifest, oracle, store);

    auto corpus = load_documents(manifest.corpus_path, manifest.domain);
    for (const auto& r : RecordStore::load(path)) {
        const Document* doc = nullptr;
        for (const auto& d : corpus.documents)
            if (d.id == r.doc_id) doc = &d;
        REQUIRE(doc != nullptr);
        auto mask = select_targets(*doc, manifest.rate, manifest.target_seed,
                                   TargetMode::omit);
        FragmentationSpec spec{FragMode::random_slot, r.wfr_level, 1,
                               doc_stream_seed(r.frag_seed, doc->id)};
        auto inst = build_absence_instance(*doc, mask, spec);
        CHECK(inst.truth_lines == r.truth_lines);
    }
}

TEST_CASE("sweep with corpus hash mismatch fails fast") {
    auto manifest = small_manifest("hash", 2, 5, {0.0}, {1});
    manifest.corpus_hash = "0000000000000000";
    auto path = (test_dir() / "hash_records.jsonl").string();
    fs::remove(path);
    OracleModel oracle;
    RecordStore store(path);
    CHECK_THROWS_AS(run_sweep(manifest, oracle, store), consistency_error);
}

TEST_CASE("insertion sweep pulls needles from the pool file") {
    auto manifest = small_manifest("ins", 4, 10, {0.0, 1.0}, {1});
    manifest.task = TaskKind::insertion;
    manifest.needle_count = 20;
    fs::path pool_path = test_dir() / "ins_needles.txt";
    {
        std::ofstream out(pool_path);
        for (int i = 0; i < 40; ++i)
            out << "synthetic needle sentence " << i << " with filler words\n";
    }
    manifest.needle_pool_path = pool_path.string();

    auto path = (test_dir() / "ins_records.jsonl").string();
    fs::remove(path);
    OracleModel oracle;
    RecordStore store(path);
    auto summary = run_sweep(manifest, oracle, store);
    CHECK(summary.calls_made == 4 * 2);
    CHECK(summary.ok == 8);

    auto records = RecordStore::load(path);
    for (const auto& r : records) {
        CHECK(r.task == TaskKind::insertion);
        CHECK(!r.truth_lines.empty());
        if (r.wfr_level == 0.0)
            for (const auto& t : r.truth_lines)
                CHECK(t.find("synthetic needle sentence") != std::string::npos);
    }

    // Scoring the oracle's insertion answers is perfect.
    score_records(records);
    auto curve = aggregate_curve(filter_ok(records), Metric::micro_f1);
    for (const auto& p : curve.points) CHECK(p.mean == 1.0);
}

TEST_CASE("icl manifest prepends the demonstration block") {
    class PromptCheckingModel : public Model {
    public:
        std::string name() const override { return "prompt-check"; }
        CompletionResult complete(const RenderedPrompt& prompt, const CallContext&) override {
            CompletionResult r;
            saw_prefix = saw_prefix &&
                         prompt.user_text.rfind("Below are some examples of the task:", 0) == 0;
            saw_icl_flag = saw_icl_flag && prompt.icl_used;
            r.text = "x";
            return r;
        }
        bool saw_prefix = true;
        bool saw_icl_flag = true;
    };

    auto manifest = small_manifest("icl", 2, 6, {0.0, 0.5}, {1});
    manifest.icl = true;
    manifest.icl_asset = std::string(FRAGBENCH_ASSET_DIR) + "/icl_examples.json";

    auto path = (test_dir() / "icl_records.jsonl").string();
    fs::remove(path);
    PromptCheckingModel model;
    RecordStore store(path);
    auto summary = run_sweep(manifest, model, store);
    CHECK(summary.calls_made == 4);
    CHECK(model.saw_prefix);
    CHECK(model.saw_icl_flag);
}

TEST_CASE("bounded concurrency holds the inflight watermark") {
    class GaugedModel : public Model {
    public:
        std::string name() const override { return "gauged"; }
        CompletionResult complete(const RenderedPrompt&, const CallContext& ctx) override {
            int now = ++inflight_;
            int seen = watermark_.load();
            while (now > seen && !watermark_.compare_exchange_weak(seen, now)) {
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
            --inflight_;
            CompletionResult r;
            r.text = ctx.truth_lines ? "x" : "";
            return r;
        }
        std::atomic<int> inflight_{0};
        std::atomic<int> watermark_{0};
    };

    auto manifest = small_manifest("conc", 6, 6, {0.0, 0.5, 1.0}, {1, 2});
    auto path = (test_dir() / "conc_records.jsonl").string();
    fs::remove(path);
    GaugedModel model;
    RecordStore store(path);
    auto summary = run_sweep(manifest, model, store, 4);
    CHECK(summary.calls_made == 6 * 3 * 2);
    CHECK(model.watermark_.load() <= 4);
    CHECK(model.watermark_.load() >= 2);  // did actually run in parallel
}

TEST_CASE("lossy sweep scores into a valley") {
    std::map<double, double> anchors{{0.0, 0.9}, {0.5, 0.4}, {1.0, 0.7}};
    std::vector<double> levels;
    for (int i = 0; i <= 10; ++i) levels.push_back(i / 10.0);
    auto manifest = small_manifest("valley", 10, 30, levels, {1, 2, 3});

    auto path = (test_dir() / "valley_records.jsonl").string();
    fs::remove(path);
    LossyModel lossy(interpolate_profile(anchors, levels), 0.0, 77);
    RecordStore store(path);
    auto summary = run_sweep(manifest, lossy, store, 2);
    CHECK(summary.ok == summary.calls_made);

    auto records = RecordStore::load(path);
    score_records(records);
    auto curve = aggregate_curve(filter_ok(records), Metric::micro_f1);
    REQUIRE(curve.points.size() == 11);

    auto report = detect_valley(curve, 0.05);
    CHECK(report.is_u_shaped);
    CHECK(report.level_at_min >= 0.4);
    CHECK(report.level_at_min <= 0.6);
}

TEST_CASE("context length records never reach a curve") {
    // Fails exactly the calls whose document index is even at level 0.5.
    class FlakyContextModel : public Model {
    public:
        std::string name() const override { return "flaky-context"; }
        CompletionResult complete(const RenderedPrompt&, const CallContext& ctx) override {
            CompletionResult r;
            bool fail = ctx.wfr_level == 0.5;
            if (fail) {
                r.status = CallStatus::context_length_error;
                r.error_message = "maximum context length exceeded";
                return r;
            }
            if (ctx.truth_lines) {
                for (std::size_t i = 0; i < ctx.truth_lines->size(); ++i) {
                    if (i) r.text += "\n";
                    r.text += (*ctx.truth_lines)[i];
                }
            }
            return r;
        }
    };

    auto manifest = small_manifest("excl", 4, 8, {0.0, 0.5, 1.0}, {1, 2});
    auto path = (test_dir() / "excl_records.jsonl").string();
    fs::remove(path);
    FlakyContextModel model;
    RecordStore store(path);
    auto summary = run_sweep(manifest, model, store);
    CHECK(summary.context_length_errors == 4 * 2);

    auto records = RecordStore::load(path);
    score_records(records);
    auto ok = filter_ok(records);
    CHECK(ok.size() == records.size() - 8);
    auto curve = aggregate_curve(ok, Metric::micro_f1);

    // Level 0.5 vanished entirely; remaining levels aggregate only ok rows.
    REQUIRE(curve.points.size() == 2);
    CHECK(curve.points[0].level == 0.0);
    CHECK(curve.points[1].level == 1.0);
}

TEST_CASE("math sweep with the oracle is perfectly accurate") {
    fs::path problems_path = test_dir() / "math_problems.jsonl";
    {
        std::ofstream out(problems_path);
        for (int i = 0; i < 6; ++i)
            out << R"({"question": "Count to )" << i + 3
                << R"(. Then stop.", "solution": "Easy. #### )" << i + 3 << "\"}\n";
    }
    RunManifest manifest;
    manifest.task = TaskKind::math;
    manifest.domain = Domain::math;
    manifest.corpus_path = problems_path.string();
    manifest.corpus_hash = file_hash_hex(problems_path.string());
    manifest.rate = 0.1;
    manifest.target_seed = 0;
    manifest.frag_seeds = {1};
    manifest.wfr_levels = {0.0, 0.5, 1.0};

    auto path = (test_dir() / "math_records.jsonl").string();
    fs::remove(path);
    OracleModel oracle;
    RecordStore store(path);
    auto summary = run_sweep(manifest, oracle, store);
    CHECK(summary.calls_made == 6 * 3);

    auto records = RecordStore::load(path);
    for (auto& r : records) {
        r.extracted_answer = extract_math_answer(r.raw_response);
        r.correct = r.gold_answer && math_correct(r.extracted_answer, *r.gold_answer);
        r.scored = true;
    }
    auto curve = aggregate_curve(records, Metric::accuracy);
    for (const auto& p : curve.points) CHECK(p.mean == 1.0);
}

TEST_SUITE_END();
