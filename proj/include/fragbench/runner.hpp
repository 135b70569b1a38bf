#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "fragbench/corpus.hpp"
#include "fragbench/prompt.hpp"
#include "fragbench/taskgen.hpp"

namespace fragbench {

enum class CallStatus { ok, context_length_error, transport_error, refused };

std::string status_name(CallStatus s);
CallStatus status_from_name(const std::string& name);

struct ModelConfig {
    std::string name;
    std::string endpoint;     // base URL, e.g. "https://api.example.com/v1"
    std::string api_key_env;  // environment variable holding the key
    bool thinking = false;
    int max_retries = 3;
    std::chrono::milliseconds request_timeout{120000};
    int max_inflight = 1;
    std::chrono::milliseconds backoff_base{1000};  // doubled per retry, with jitter
    // Response prefixes treated as refusals, matched case-insensitively.
    // Empty by default: refusals are then detected only from provider
    // error objects.
    std::vector<std::string> refusal_markers;
};

struct CompletionResult {
    CallStatus status = CallStatus::ok;
    std::string text;
    int attempts = 1;
    double latency_ms = 0.0;
    std::string error_message;
};

// One model call's outcome. Identity fields first; parse/score fields are
// filled by the score stage, never by the runner.
struct EvalRecord {
    std::string doc_id;
    TaskKind task = TaskKind::absence;
    double wfr_level = 0.0;
    std::uint64_t frag_seed = 0;
    std::uint64_t target_seed = 0;
    std::string model;

    std::string raw_response;
    CallStatus status = CallStatus::ok;
    double latency_ms = 0.0;
    int attempts = 1;
    std::string error_message;

    std::vector<std::string> truth_lines;  // span tasks
    std::optional<double> gold_answer;     // math task

    bool scored = false;
    std::vector<std::string> predicted_lines;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::optional<double> extracted_answer;
    std::optional<bool> correct;

    // Unique key within a store: doc, task, level, seeds, model.
    std::string identity() const;
};

// Everything needed to regenerate a sweep's instances bit-for-bit, given
// the referenced input files.
struct RunManifest {
    TaskKind task = TaskKind::absence;
    Domain domain = Domain::legal;
    std::string corpus_path;
    std::string corpus_hash;  // fnv1a64 of the file bytes, hex
    double rate = 0.1;
    std::uint64_t target_seed = 0;
    std::vector<std::uint64_t> frag_seeds;
    std::vector<double> wfr_levels;
    std::string needle_pool_path;  // insertion task only
    std::size_t needle_count = 100;
    bool icl = false;
    std::string icl_asset;
    std::string icl_wfr_mode = "matched";  // "matched" or "fixed"
    std::size_t sample_n = 0;              // 0 = use the whole corpus
    std::uint64_t sample_seed = 0;
    std::string template_version;
    std::string created_at;
};

void save_manifest(const RunManifest& manifest, const std::string& path);
RunManifest load_manifest(const std::string& path);
std::string file_hash_hex(const std::string& path);

// Instance context passed to models alongside the rendered prompt. Mock
// models read the truth from here; the HTTP model ignores it.
struct CallContext {
    std::string doc_id;
    TaskKind task = TaskKind::absence;
    double wfr_level = 0.0;
    std::uint64_t frag_seed = 0;
    const std::vector<std::string>* truth_lines = nullptr;
    std::optional<double> gold_answer;
};

// complete() must be safe to call from several worker threads at once.
class Model {
public:
    virtual ~Model() = default;
    virtual std::string name() const = 0;
    virtual CompletionResult complete(const RenderedPrompt& prompt,
                                      const CallContext& ctx) = 0;
};

// One chat-completions call: POST {endpoint}/chat/completions with
// system+user messages. Transport failures and 408/429/5xx responses are
// retried up to max_retries with exponential backoff and jitter; a
// provider-reported overlong input maps to context_length_error without
// retry.
CompletionResult complete(const RenderedPrompt& prompt, const ModelConfig& config);

// Request body shape, exposed for wire-format tests. thinking=true merges
// the provider-specific field set from thinking_request_fields.
std::string build_chat_request(const RenderedPrompt& prompt, const ModelConfig& config);

// Adapter table: provider key -> JSON fields enabling thinking mode. The
// provider is inferred from the model name ("gpt..." -> openai, "claude..."
// -> anthropic, "gemini..." -> google, anything else -> default).
std::string thinking_provider(const std::string& model_name);

class HttpModel : public Model {
public:
    explicit HttpModel(ModelConfig config) : config_(std::move(config)) {}
    std::string name() const override { return config_.name; }
    CompletionResult complete(const RenderedPrompt& prompt, const CallContext& ctx) override;

private:
    ModelConfig config_;
};

// Answers every instance perfectly from its context.
class OracleModel : public Model {
public:
    std::string name() const override { return "oracle"; }
    CompletionResult complete(const RenderedPrompt& prompt, const CallContext& ctx) override;
};

// Emits each truth line independently with the detection probability of
// the instance's level and adds spurious lines at fp_rate. The profile
// must cover every sweep level. Deterministic given seed: the per-call
// stream is derived from (seed, doc_id, level, frag_seed), so results do
// not depend on call order.
class LossyModel : public Model {
public:
    LossyModel(std::map<double, double> profile, double fp_rate, std::uint64_t seed);
    std::string name() const override { return "lossy-mock"; }
    CompletionResult complete(const RenderedPrompt& prompt, const CallContext& ctx) override;

private:
    std::map<double, double> profile_;
    double fp_rate_;
    std::uint64_t seed_;
};

// Linear interpolation of sparse profile anchors onto a level grid.
std::map<double, double> interpolate_profile(const std::map<double, double>& anchors,
                                             const std::vector<double>& levels);

// Append-only JSONL record store. Existing records are indexed by
// identity at open so a rerun skips completed calls; appends are
// serialized internally and flushed per record.
class RecordStore {
public:
    explicit RecordStore(const std::string& path);
    bool contains(const std::string& identity) const;
    void append(const EvalRecord& record);
    std::size_t size() const;
    const std::string& path() const { return path_; }

    static std::vector<EvalRecord> load(const std::string& path);
    static void save(const std::vector<EvalRecord>& records, const std::string& path);

private:
    std::string path_;
    std::ofstream out_;
    std::unordered_set<std::string> identities_;
    mutable std::mutex mu_;
};

struct SweepSummary {
    std::size_t grid_size = 0;
    std::size_t calls_made = 0;
    std::size_t skipped = 0;
    std::size_t ok = 0;
    std::size_t context_length_errors = 0;
    std::size_t transport_errors = 0;
    std::size_t refused = 0;
};

// Runs the full {level x frag_seed x document} grid for the manifest's
// task, reusing one TargetMask per document across all levels and seeds.
// At most max_inflight calls are outstanding at any time; one writer
// serializes appends to the store. Partial failures are recorded, never
// fatal. Already-present identities are skipped.
SweepSummary run_sweep(const RunManifest& manifest, Model& model,
                       RecordStore& store, int max_inflight = 1);

}  // namespace fragbench
