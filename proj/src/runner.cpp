#include "fragbench/runner.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "fragbench/errors.hpp"
#include "fragbench/rng.hpp"
#include "fragbench/score.hpp"

namespace fragbench {

using nlohmann::json;

std::string status_name(CallStatus s) {
    switch (s) {
        case CallStatus::ok: return "ok";
        case CallStatus::context_length_error: return "context_length_error";
        case CallStatus::transport_error: return "transport_error";
        case CallStatus::refused: return "refused";
    }
    return "ok";
}

CallStatus status_from_name(const std::string& name) {
    if (name == "ok") return CallStatus::ok;
    if (name == "context_length_error") return CallStatus::context_length_error;
    if (name == "transport_error") return CallStatus::transport_error;
    if (name == "refused") return CallStatus::refused;
    throw std::invalid_argument("unknown status: " + name);
}

namespace {

std::string fmt_level(double level) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", level);
    return buf;
}

}  // namespace

std::string EvalRecord::identity() const {
    std::ostringstream out;
    out << doc_id << '|' << task_name(task) << '|' << fmt_level(wfr_level) << '|'
        << frag_seed << '|' << target_seed << '|' << model;
    return out.str();
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

json manifest_to_json(const RunManifest& m) {
    return json{{"task", task_name(m.task)},
                {"domain", domain_name(m.domain)},
                {"corpus", m.corpus_path},
                {"corpus_hash", m.corpus_hash},
                {"rate", m.rate},
                {"target_seed", m.target_seed},
                {"frag_seeds", m.frag_seeds},
                {"wfr_levels", m.wfr_levels},
                {"needle_pool", m.needle_pool_path},
                {"needle_count", m.needle_count},
                {"icl", m.icl},
                {"icl_asset", m.icl_asset},
                {"icl_wfr_mode", m.icl_wfr_mode},
                {"sample_n", m.sample_n},
                {"sample_seed", m.sample_seed},
                {"template_version", m.template_version},
                {"created_at", m.created_at}};
}

}  // namespace

void save_manifest(const RunManifest& manifest, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write manifest: " + path);
    out << manifest_to_json(manifest).dump(2) << '\n';
    if (!out) throw io_error("write failed: " + path);
}

RunManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open manifest: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw parse_error("manifest " + path + ": not a JSON object");

    RunManifest m;
    try {
        m.task = task_from_name(j.at("task").get<std::string>());
        m.domain = domain_from_name(j.at("domain").get<std::string>());
        m.corpus_path = j.at("corpus").get<std::string>();
        m.corpus_hash = j.at("corpus_hash").get<std::string>();
        m.rate = j.at("rate").get<double>();
        m.target_seed = j.at("target_seed").get<std::uint64_t>();
        m.frag_seeds = j.at("frag_seeds").get<std::vector<std::uint64_t>>();
        m.wfr_levels = j.at("wfr_levels").get<std::vector<double>>();
        m.needle_pool_path = j.value("needle_pool", std::string());
        m.needle_count = j.value("needle_count", std::size_t{100});
        m.icl = j.value("icl", false);
        m.icl_asset = j.value("icl_asset", std::string());
        m.icl_wfr_mode = j.value("icl_wfr_mode", std::string("matched"));
        m.sample_n = j.value("sample_n", std::size_t{0});
        m.sample_seed = j.value("sample_seed", std::uint64_t{0});
        m.template_version = j.value("template_version", std::string());
        m.created_at = j.value("created_at", std::string());
    } catch (const json::exception& e) {
        throw parse_error("manifest " + path + ": " + e.what());
    }
    if (m.wfr_levels.empty()) throw parse_error("manifest " + path + ": no wfr_levels");
    if (m.frag_seeds.empty()) throw parse_error("manifest " + path + ": no frag_seeds");
    return m;
}

std::string file_hash_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open for hashing: " + path);
    std::uint64_t h = 1469598103934665603ULL;
    char buf[65536];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

// ---------------------------------------------------------------------------
// HTTP chat-completions client

std::string thinking_provider(const std::string& model_name) {
    auto contains = [&](const char* needle) {
        return model_name.find(needle) != std::string::npos;
    };
    if (contains("gpt") || contains("o1") || contains("o3")) return "openai";
    if (contains("claude")) return "anthropic";
    if (contains("gemini")) return "google";
    return "default";
}

std::string build_chat_request(const RenderedPrompt& prompt, const ModelConfig& config) {
    json body;
    body["model"] = config.name;
    body["messages"] = json::array();
    if (!prompt.system_text.empty())
        body["messages"].push_back({{"role", "system"}, {"content", prompt.system_text}});
    body["messages"].push_back({{"role", "user"}, {"content", prompt.user_text}});

    if (config.thinking) {
        // Adapter table: provider-specific fields that switch thinking on.
        const std::string provider = thinking_provider(config.name);
        if (provider == "openai") {
            body["reasoning_effort"] = "medium";
        } else if (provider == "anthropic") {
            body["thinking"] = {{"type", "enabled"}, {"budget_tokens", 4096}};
        } else if (provider == "google") {
            body["extra_body"] = {
                {"google", {{"thinking_config", {{"include_thoughts", false}}}}}};
        } else {
            body["reasoning"] = {{"enabled", true}};
        }
    }
    return body.dump();
}

namespace {

struct UrlParts {
    std::string origin;  // scheme://host[:port]
    std::string path;    // leading path prefix, possibly empty
};

UrlParts split_endpoint(const std::string& endpoint) {
    auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos)
        throw std::invalid_argument("endpoint must start with http:// or https://");
    auto path_start = endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {endpoint, ""};
    return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

bool contains_ci(const std::string& haystack, const std::string& needle) {
    auto lower = [](std::string s) {
        for (char& c : s)
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        return s;
    };
    return lower(haystack).find(lower(needle)) != std::string::npos;
}

bool looks_like_context_length(int status, const std::string& body) {
    if (status != 400 && status != 413 && status != 422) return false;
    return contains_ci(body, "context_length") || contains_ci(body, "context length") ||
           contains_ci(body, "maximum context") || contains_ci(body, "too many tokens") ||
           contains_ci(body, "input is too long") || contains_ci(body, "prompt is too long");
}

bool retryable_status(int status) {
    return status == 408 || status == 429 || status >= 500;
}

}  // namespace

CompletionResult complete(const RenderedPrompt& prompt, const ModelConfig& config) {
    const auto started = std::chrono::steady_clock::now();
    auto elapsed_ms = [&] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                         started)
            .count();
    };

    CompletionResult result;
    UrlParts url;
    try {
        url = split_endpoint(config.endpoint);
    } catch (const std::invalid_argument& e) {
        result.status = CallStatus::transport_error;
        result.error_message = e.what();
        return result;
    }

    const std::string request_body = build_chat_request(prompt, config);
    const char* api_key =
        config.api_key_env.empty() ? nullptr : std::getenv(config.api_key_env.c_str());

    std::mt19937_64 jitter_rng(std::random_device{}());
    const int attempts_allowed = 1 + std::max(config.max_retries, 0);
    for (int attempt = 1; attempt <= attempts_allowed; ++attempt) {
        result.attempts = attempt;
        if (attempt > 1) {
            // Exponential backoff with up to 25% jitter.
            double base = static_cast<double>(config.backoff_base.count());
            double delay = base * std::pow(2.0, attempt - 2);
            delay *= 1.0 + 0.25 * std::uniform_real_distribution<double>(0, 1)(jitter_rng);
            std::this_thread::sleep_for(
                std::chrono::milliseconds(static_cast<long>(delay)));
        }

        httplib::Client client(url.origin);
        const auto timeout =
            std::chrono::duration_cast<std::chrono::seconds>(config.request_timeout);
        client.set_connection_timeout(std::max<long>(1, timeout.count()), 0);
        client.set_read_timeout(std::max<long>(1, timeout.count()), 0);
        client.set_write_timeout(std::max<long>(1, timeout.count()), 0);

        httplib::Headers headers;
        if (api_key) headers.emplace("Authorization", std::string("Bearer ") + api_key);

        auto res = client.Post(url.path + "/chat/completions", headers, request_body,
                               "application/json");
        if (!res) {
            result.status = CallStatus::transport_error;
            result.error_message = "transport: " + httplib::to_string(res.error());
            continue;  // retry
        }

        if (res->status == 200) {
            json reply = json::parse(res->body, nullptr, false);
            if (reply.is_discarded()) {
                result.status = CallStatus::transport_error;
                result.error_message = "unparseable response body";
                continue;
            }
            if (reply.contains("error")) {
                const json& err = reply["error"];
                std::string type = err.value("type", err.value("code", std::string()));
                if (contains_ci(type, "refusal") || contains_ci(type, "content_filter")) {
                    result.status = CallStatus::refused;
                } else if (looks_like_context_length(400, res->body)) {
                    result.status = CallStatus::context_length_error;
                } else {
                    result.status = CallStatus::transport_error;
                }
                result.error_message = err.value("message", res->body);
                result.latency_ms = elapsed_ms();
                return result;
            }
            std::string text;
            try {
                text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const json::exception&) {
                result.status = CallStatus::transport_error;
                result.error_message = "response missing choices[0].message.content";
                result.latency_ms = elapsed_ms();
                return result;
            }
            for (const auto& marker : config.refusal_markers) {
                if (!marker.empty() && contains_ci(text.substr(0, marker.size()), marker)) {
                    result.status = CallStatus::refused;
                    result.error_message = "refusal marker matched";
                    result.text = text;
                    result.latency_ms = elapsed_ms();
                    return result;
                }
            }
            result.status = CallStatus::ok;
            result.text = std::move(text);
            result.error_message.clear();
            result.latency_ms = elapsed_ms();
            return result;
        }

        if (looks_like_context_length(res->status, res->body)) {
            result.status = CallStatus::context_length_error;
            result.error_message = res->body;
            result.latency_ms = elapsed_ms();
            return result;  // never retried
        }
        if (retryable_status(res->status)) {
            result.status = CallStatus::transport_error;
            result.error_message = "http " + std::to_string(res->status) + ": " + res->body;
            continue;
        }
        result.status = CallStatus::transport_error;
        result.error_message = "http " + std::to_string(res->status) + ": " + res->body;
        result.latency_ms = elapsed_ms();
        return result;  // non-retryable 4xx
    }
    result.latency_ms = elapsed_ms();
    return result;
}

CompletionResult HttpModel::complete(const RenderedPrompt& prompt, const CallContext&) {
    return fragbench::complete(prompt, config_);
}

// ---------------------------------------------------------------------------
// Mock models

namespace {

std::string format_gold(double value) {
    if (value == static_cast<long long>(value))
        return std::to_string(static_cast<long long>(value));
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", value);
    return buf;
}

std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i) out.push_back('\n');
        out += lines[i];
    }
    return out;
}

}  // namespace

CompletionResult OracleModel::complete(const RenderedPrompt&, const CallContext& ctx) {
    CompletionResult result;
    if (ctx.task == TaskKind::math) {
        result.text = "The answer is #### " + format_gold(ctx.gold_answer.value_or(0.0));
    } else if (ctx.truth_lines) {
        result.text = join_lines(*ctx.truth_lines);
    }
    return result;
}

LossyModel::LossyModel(std::map<double, double> profile, double fp_rate, std::uint64_t seed)
    : profile_(std::move(profile)), fp_rate_(fp_rate), seed_(seed) {
    for (const auto& [level, p] : profile_)
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("detection probability out of [0, 1]");
    if (!(fp_rate_ >= 0.0 && fp_rate_ <= 1.0))
        throw std::invalid_argument("false-positive rate out of [0, 1]");
}

CompletionResult LossyModel::complete(const RenderedPrompt&, const CallContext& ctx) {
    auto it = profile_.find(ctx.wfr_level);
    if (it == profile_.end())
        throw std::invalid_argument("lossy mock profile missing level " +
                                    fmt_level(ctx.wfr_level));
    const double detect_p = it->second;

    // Stream derived from the call identity so results are independent of
    // scheduling order.
    std::uint64_t level_bits = 0;
    static_assert(sizeof level_bits == sizeof ctx.wfr_level);
    std::memcpy(&level_bits, &ctx.wfr_level, sizeof level_bits);
    SeededRng rng(mix64(mix64(seed_, fnv1a64(ctx.doc_id)),
                        mix64(level_bits, ctx.frag_seed)));

    CompletionResult result;
    if (ctx.task == TaskKind::math) {
        double gold = ctx.gold_answer.value_or(0.0);
        bool right = rng.bernoulli(detect_p);
        result.text =
            "The answer is #### " + format_gold(right ? gold : gold + 1.0);
        return result;
    }

    std::vector<std::string> lines;
    if (ctx.truth_lines) {
        for (const auto& line : *ctx.truth_lines)
            if (rng.bernoulli(detect_p)) lines.push_back(line);
        for (std::size_t i = 0; i < ctx.truth_lines->size(); ++i)
            if (rng.bernoulli(fp_rate_))
                lines.push_back("zq unrelated filler line " +
                                std::to_string(rng.next_u64() % 100000));
    }
    result.text = join_lines(lines);
    return result;
}

std::map<double, double> interpolate_profile(const std::map<double, double>& anchors,
                                             const std::vector<double>& levels) {
    if (anchors.empty()) throw std::invalid_argument("no profile anchors");

    std::map<double, double> out;
    for (double level : levels) {
        auto upper = anchors.lower_bound(level);
        if (upper == anchors.end()) {
            out[level] = std::prev(upper)->second;
        } else if (upper == anchors.begin() || upper->first == level) {
            out[level] = upper->second;
        } else {
            auto lower = std::prev(upper);
            double t = (level - lower->first) / (upper->first - lower->first);
            out[level] = lower->second + t * (upper->second - lower->second);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Record store

namespace {

json record_to_json(const EvalRecord& r) {
    json j{{"doc_id", r.doc_id},
           {"task", task_name(r.task)},
           {"wfr_level", r.wfr_level},
           {"frag_seed", r.frag_seed},
           {"target_seed", r.target_seed},
           {"model", r.model},
           {"raw_response", r.raw_response},
           {"status", status_name(r.status)},
           {"latency_ms", r.latency_ms},
           {"attempts", r.attempts},
           {"error_message", r.error_message},
           {"truth_lines", r.truth_lines},
           {"scored", r.scored}};
    if (r.gold_answer) j["gold_answer"] = *r.gold_answer;
    if (r.scored) {
        j["predicted_lines"] = r.predicted_lines;
        j["tp"] = r.tp;
        j["fp"] = r.fp;
        j["fn"] = r.fn;
        if (r.extracted_answer) j["extracted_answer"] = *r.extracted_answer;
        if (r.correct) j["correct"] = *r.correct;
    }
    return j;
}

EvalRecord record_from_json(const json& j) {
    EvalRecord r;
    r.doc_id = j.at("doc_id").get<std::string>();
    r.task = task_from_name(j.at("task").get<std::string>());
    r.wfr_level = j.at("wfr_level").get<double>();
    r.frag_seed = j.at("frag_seed").get<std::uint64_t>();
    r.target_seed = j.at("target_seed").get<std::uint64_t>();
    r.model = j.at("model").get<std::string>();
    r.raw_response = j.at("raw_response").get<std::string>();
    r.status = status_from_name(j.at("status").get<std::string>());
    r.latency_ms = j.value("latency_ms", 0.0);
    r.attempts = j.value("attempts", 1);
    r.error_message = j.value("error_message", std::string());
    r.truth_lines = j.at("truth_lines").get<std::vector<std::string>>();
    if (j.contains("gold_answer")) r.gold_answer = j["gold_answer"].get<double>();
    r.scored = j.value("scored", false);
    if (r.scored) {
        r.predicted_lines = j.value("predicted_lines", std::vector<std::string>{});
        r.tp = j.value("tp", std::size_t{0});
        r.fp = j.value("fp", std::size_t{0});
        r.fn = j.value("fn", std::size_t{0});
        if (j.contains("extracted_answer"))
            r.extracted_answer = j["extracted_answer"].get<double>();
        if (j.contains("correct")) r.correct = j["correct"].get<bool>();
    }
    return r;
}

}  // namespace

RecordStore::RecordStore(const std::string& path) : path_(path) {
    {
        std::ifstream in(path);
        if (in) {
            std::string line;
            std::size_t line_no = 0;
            while (std::getline(in, line)) {
                ++line_no;
                if (line.empty()) continue;
                json j = json::parse(line, nullptr, false);
                if (j.is_discarded())
                    throw parse_error("record store " + path + ": bad JSON at line " +
                                      std::to_string(line_no));
                identities_.insert(record_from_json(j).identity());
            }
        }
    }
    out_.open(path, std::ios::app);
    if (!out_) throw io_error("cannot open record store for append: " + path);
}

bool RecordStore::contains(const std::string& identity) const {
    std::lock_guard<std::mutex> lock(mu_);
    return identities_.count(identity) > 0;
}

void RecordStore::append(const EvalRecord& record) {
    std::lock_guard<std::mutex> lock(mu_);
    if (!identities_.insert(record.identity()).second)
        throw consistency_error("duplicate record identity: " + record.identity());
    out_ << record_to_json(record).dump() << '\n';
    out_.flush();
    if (!out_) throw io_error("append failed: " + path_);
}

std::size_t RecordStore::size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return identities_.size();
}

std::vector<EvalRecord> RecordStore::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open record store: " + path);
    std::vector<EvalRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw parse_error("record store " + path + ": bad JSON at line " +
                              std::to_string(line_no));
        records.push_back(record_from_json(j));
    }
    return records;
}

void RecordStore::save(const std::vector<EvalRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write record store: " + path);
    for (const auto& r : records) out << record_to_json(r).dump() << '\n';
    if (!out) throw io_error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Sweep

namespace {

struct WorkItem {
    RenderedPrompt prompt;
    CallContext ctx;
    EvalRecord record;  // identity + truth prefilled
};

std::optional<double> gold_from_solution(const std::string& solution) {
    return extract_math_answer(solution);
}

}  // namespace

SweepSummary run_sweep(const RunManifest& manifest, Model& model, RecordStore& store,
                       int max_inflight) {
    if (max_inflight < 1) throw std::invalid_argument("max_inflight must be >= 1");

    if (!manifest.corpus_hash.empty()) {
        const std::string actual = file_hash_hex(manifest.corpus_path);
        if (actual != manifest.corpus_hash)
            throw consistency_error("corpus hash mismatch: manifest has " +
                                    manifest.corpus_hash + ", file is " + actual);
    }

    // Materialize the instance grid first; each item is pure to build.
    std::vector<WorkItem> work;

    if (manifest.task == TaskKind::math) {
        auto problems = load_gsm8k_problems(manifest.corpus_path);
        if (manifest.sample_n > 0 && manifest.sample_n < problems.size()) {
            // Problems sample like documents: via index sampling.
            DocumentSet pseudo;
            pseudo.documents.resize(problems.size());
            for (std::size_t i = 0; i < problems.size(); ++i)
                pseudo.documents[i].id = std::to_string(i);
            auto sampled = sample_documents(pseudo, manifest.sample_n, manifest.sample_seed);
            std::vector<GsmProblem> kept;
            kept.reserve(manifest.sample_n);
            for (const auto& d : sampled.documents) kept.push_back(problems[std::stoul(d.id)]);
            problems = std::move(kept);
        }

        for (double level : manifest.wfr_levels) {
            for (std::uint64_t seed : manifest.frag_seeds) {
                for (std::size_t pi = 0; pi < problems.size(); ++pi) {
                    const auto gold = gold_from_solution(problems[pi].solution);
                    if (!gold) continue;  // unusable problem, no numeric answer

                    WorkItem item;
                    item.record.doc_id = "gsm8k-problem-" + std::to_string(pi);
                    item.record.task = TaskKind::math;
                    item.record.wfr_level = level;
                    item.record.frag_seed = seed;
                    item.record.target_seed = manifest.target_seed;
                    item.record.model = model.name();
                    item.record.gold_answer = gold;

                    FragmentationSpec spec{FragMode::random_slot, level, 1,
                                           doc_stream_seed(seed, item.record.doc_id)};
                    auto frag =
                        random_slot_fragment(split_period_lines(problems[pi].question), spec);
                    std::string question;
                    for (std::size_t li = 0; li < frag.lines.size(); ++li) {
                        if (li) question.push_back('\n');
                        question += frag.lines[li];
                    }
                    item.prompt = render_math_prompt(question);
                    item.ctx = {item.record.doc_id, TaskKind::math, level, seed,
                                nullptr,            gold};
                    work.push_back(std::move(item));
                }
            }
        }
    } else {
        DocumentSet corpus = load_documents(manifest.corpus_path, manifest.domain);
        if (manifest.sample_n > 0 && manifest.sample_n < corpus.documents.size())
            corpus = sample_documents(corpus, manifest.sample_n, manifest.sample_seed);

        NeedlePool pool;
        if (manifest.task == TaskKind::insertion) {
            if (manifest.needle_pool_path.empty())
                throw std::invalid_argument("insertion sweep needs a needle pool file");
            pool = build_needle_pool(corpus, manifest.needle_pool_path,
                                     manifest.needle_count);
        }

        std::vector<IclExample> icl_fixed;
        std::vector<IclSource> icl_sources;
        if (manifest.icl) {
            if (manifest.icl_asset.empty())
                throw std::invalid_argument("icl enabled but no icl_asset in manifest");
            icl_sources = load_icl_asset(manifest.icl_asset);
            if (manifest.icl_wfr_mode == "fixed")
                icl_fixed = make_icl_examples(icl_sources, std::nullopt, 0);
        }

        // One mask per document, reused across every level and seed.
        const TargetMode mode =
            manifest.task == TaskKind::absence ? TargetMode::omit : TargetMode::insert;
        std::vector<TargetMask> masks;
        masks.reserve(corpus.documents.size());
        for (const auto& doc : corpus.documents)
            masks.push_back(select_targets(doc, manifest.rate, manifest.target_seed, mode));

        for (double level : manifest.wfr_levels) {
            std::vector<IclExample> icl_matched;
            if (manifest.icl && manifest.icl_wfr_mode != "fixed")
                icl_matched = make_icl_examples(icl_sources, level, 0);
            const std::vector<IclExample>* icl =
                manifest.icl ? (manifest.icl_wfr_mode == "fixed" ? &icl_fixed : &icl_matched)
                             : nullptr;

            for (std::uint64_t seed : manifest.frag_seeds) {
                for (std::size_t di = 0; di < corpus.documents.size(); ++di) {
                    const Document& doc = corpus.documents[di];
                    FragmentationSpec spec{FragMode::random_slot, level, 1,
                                           doc_stream_seed(seed, doc.id)};

                    WorkItem item;
                    TaskInstance instance =
                        manifest.task == TaskKind::absence
                            ? build_absence_instance(doc, masks[di], spec)
                            : build_insertion_instance(doc, masks[di], pool, spec);
                    item.prompt =
                        manifest.task == TaskKind::absence
                            ? render_absence_prompt(instance, domain_label(doc.domain), icl)
                            : render_insertion_prompt(instance, domain_label(doc.domain));

                    item.record.doc_id = doc.id;
                    item.record.task = manifest.task;
                    item.record.wfr_level = level;
                    item.record.frag_seed = seed;
                    item.record.target_seed = manifest.target_seed;
                    item.record.model = model.name();
                    item.record.truth_lines = std::move(instance.truth_lines);

                    item.ctx = {doc.id,  manifest.task, level, seed, nullptr,
                                std::nullopt};
                    work.push_back(std::move(item));
                }
            }
        }
    }

    SweepSummary summary;
    summary.grid_size = work.size();

    // Skip identities already in the store (resume).
    std::vector<WorkItem> pending;
    for (auto& item : work) {
        if (store.contains(item.record.identity()))
            ++summary.skipped;
        else
            pending.push_back(std::move(item));
    }

    std::atomic<std::size_t> next{0};
    std::mutex summary_mu;
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto worker = [&] {
        for (;;) {
            if (failed.load()) return;
            std::size_t i = next.fetch_add(1);
            if (i >= pending.size()) return;
            WorkItem& item = pending[i];
            item.ctx.truth_lines = &item.record.truth_lines;

            CompletionResult res;
            try {
                res = model.complete(item.prompt, item.ctx);
            } catch (const std::invalid_argument&) {
                // Configuration bug (e.g. a mock profile missing a level):
                // stop the sweep and surface it to the caller.
                std::lock_guard<std::mutex> lock(summary_mu);
                if (!failed.exchange(true)) failure = std::current_exception();
                return;
            } catch (const std::exception& e) {
                res.status = CallStatus::transport_error;
                res.error_message = e.what();
            }

            item.record.raw_response = res.text;
            item.record.status = res.status;
            item.record.latency_ms = res.latency_ms;
            item.record.attempts = res.attempts;
            item.record.error_message = res.error_message;
            try {
                store.append(item.record);
            } catch (...) {
                // Store failures (full disk, duplicate identity) are fatal
                // for the sweep; surface them on the calling thread.
                std::lock_guard<std::mutex> lock(summary_mu);
                if (!failed.exchange(true)) failure = std::current_exception();
                return;
            }

            std::lock_guard<std::mutex> lock(summary_mu);
            ++summary.calls_made;
            switch (res.status) {
                case CallStatus::ok: ++summary.ok; break;
                case CallStatus::context_length_error: ++summary.context_length_errors; break;
                case CallStatus::transport_error: ++summary.transport_errors; break;
                case CallStatus::refused: ++summary.refused; break;
            }
        }
    };

    const int workers =
        static_cast<int>(std::min<std::size_t>(max_inflight, pending.size()));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(workers);
        for (int i = 0; i < workers; ++i) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return summary;
}

}  // namespace fragbench
