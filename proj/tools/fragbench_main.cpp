// fragbench: word-boundary fragmentation benchmark toolkit.
//
// Subcommands cover the full pipeline: fragment corpora, generate
// absence/insertion instances, run sweeps against chat-completion
// endpoints or offline mocks, score records, measure tokenization
// entropy, and emit curve reports.

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fragbench/analyze.hpp"
#include "fragbench/corpus.hpp"
#include "fragbench/errors.hpp"
#include "fragbench/perturb.hpp"
#include "fragbench/prompt.hpp"
#include "fragbench/runner.hpp"
#include "fragbench/score.hpp"
#include "fragbench/taskgen.hpp"
#include "fragbench/tokenstats.hpp"

namespace {

using namespace fragbench;

std::vector<double> parse_levels(const std::string& text) {
    // "start:end:step", inclusive; values normalized to 10 decimal places
    // so grids built from different strings compare exactly.
    double start = 0, end = 0, step = 0;
    if (std::sscanf(text.c_str(), "%lf:%lf:%lf", &start, &end, &step) != 3 || step <= 0)
        throw std::invalid_argument("bad --wfr-levels, expected start:end:step");
    std::vector<double> levels;
    for (int i = 0;; ++i) {
        double level = start + i * step;
        if (level > end + 1e-9) break;
        levels.push_back(std::round(level * 1e10) / 1e10);
    }
    if (levels.empty()) throw std::invalid_argument("empty --wfr-levels range");
    return levels;
}

std::map<double, double> parse_profile(const std::string& text) {
    // "level:prob,level:prob,..."
    std::map<double, double> anchors;
    std::string token;
    std::istringstream ss(text);
    while (std::getline(ss, token, ',')) {
        double level = 0, prob = 0;
        if (std::sscanf(token.c_str(), "%lf:%lf", &level, &prob) != 2)
            throw std::invalid_argument("bad --mock-profile entry: " + token);
        anchors[level] = prob;
    }
    if (anchors.empty()) throw std::invalid_argument("empty --mock-profile");
    return anchors;
}

std::string now_iso8601() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

DocumentSet load_corpus(const std::string& path, const std::string& domain,
                        std::size_t sample_n, std::uint64_t sample_seed) {
    auto set = load_documents(path, domain_from_name(domain));
    if (sample_n > 0 && sample_n < set.documents.size())
        set = sample_documents(set, sample_n, sample_seed);
    return set;
}

int cmd_fragment(const std::string& corpus, const std::string& domain,
                 const std::string& mode, double p, std::size_t n,
                 std::uint64_t frag_seed, const std::string& out,
                 std::size_t sample_n, std::uint64_t sample_seed) {
    auto set = load_corpus(corpus, domain, sample_n, sample_seed);
    FragmentationSpec spec;
    spec.mode = frag_mode_from_name(mode);
    spec.p = p;
    spec.n = n;
    spec.frag_seed = frag_seed;

    DocumentSet fragmented = set;
    std::cout << "doc_id,inserted,eligible,measured_wfr\n";
    for (auto& doc : fragmented.documents) {
        FragmentationSpec doc_spec = spec;
        doc_spec.frag_seed = doc_stream_seed(frag_seed, doc.id);
        if (spec.mode == FragMode::interword_control) {
            doc.lines = interword_perturb(doc.lines, doc_spec);
            std::cout << doc.id << ",0,0,0\n";
        } else {
            auto result = fragment_lines(doc.lines, doc_spec);
            std::cout << doc.id << ',' << result.inserted << ',' << result.eligible << ','
                      << result.measured_wfr << '\n';
            doc.lines = std::move(result.lines);
        }
    }
    if (!out.empty()) save_documents(fragmented, out);
    return 0;
}

int cmd_gen_tasks(const std::string& corpus, const std::string& domain,
                  const std::string& task, double rate, std::uint64_t target_seed,
                  std::uint64_t frag_seed, const std::string& levels_text,
                  const std::string& needle_pool, std::size_t needle_count,
                  const std::string& out, std::size_t sample_n,
                  std::uint64_t sample_seed) {
    auto set = load_corpus(corpus, domain, sample_n, sample_seed);
    auto kind = task_from_name(task);
    if (kind == TaskKind::math)
        throw std::invalid_argument("gen-tasks builds absence/insertion instances only");
    auto levels = parse_levels(levels_text);

    NeedlePool pool;
    if (kind == TaskKind::insertion) {
        if (needle_pool.empty())
            throw std::invalid_argument("--needle-pool is required for insertion tasks");
        pool = build_needle_pool(set, needle_pool, needle_count);
    }

    std::vector<TaskInstance> instances;
    for (const auto& doc : set.documents) {
        auto mask = select_targets(doc, rate, target_seed,
                                   kind == TaskKind::absence ? TargetMode::omit
                                                             : TargetMode::insert);
        for (double level : levels) {
            FragmentationSpec spec{FragMode::random_slot, level, 1,
                                   doc_stream_seed(frag_seed, doc.id)};
            instances.push_back(kind == TaskKind::absence
                                    ? build_absence_instance(doc, mask, spec)
                                    : build_insertion_instance(doc, mask, pool, spec));
        }
    }
    save_instances(instances, out);
    std::cerr << "wrote " << instances.size() << " instances to " << out << "\n";
    return 0;
}

int cmd_make_manifest(const RunManifest& base, const std::string& frag_seeds_text,
                      const std::string& levels_text, const std::string& out) {
    RunManifest manifest = base;
    manifest.corpus_hash = file_hash_hex(manifest.corpus_path);
    manifest.wfr_levels = parse_levels(levels_text);
    manifest.frag_seeds.clear();
    std::istringstream ss(frag_seeds_text);
    std::string token;
    while (std::getline(ss, token, ','))
        manifest.frag_seeds.push_back(std::stoull(token));
    if (manifest.frag_seeds.empty())
        throw std::invalid_argument("need at least one fragmentation seed");
    manifest.template_version = template_version();
    manifest.created_at = now_iso8601();
    save_manifest(manifest, out);
    std::cerr << "wrote manifest " << out << "\n";
    return 0;
}

int cmd_run(const std::string& manifest_path, const std::string& records_path,
            const std::string& mock, const std::string& mock_profile_text,
            double mock_fp_rate, std::uint64_t mock_seed, ModelConfig config,
            int max_inflight) {
    auto manifest = load_manifest(manifest_path);
    RecordStore store(records_path);

    std::unique_ptr<Model> model;
    if (mock == "oracle") {
        model = std::make_unique<OracleModel>();
    } else if (mock == "lossy") {
        auto anchors = parse_profile(mock_profile_text);
        model = std::make_unique<LossyModel>(
            interpolate_profile(anchors, manifest.wfr_levels), mock_fp_rate, mock_seed);
    } else if (mock.empty()) {
        if (config.endpoint.empty())
            throw std::invalid_argument("--endpoint is required without --mock");
        model = std::make_unique<HttpModel>(config);
    } else {
        throw std::invalid_argument("unknown --mock kind: " + mock);
    }

    auto summary = run_sweep(manifest, *model, store, max_inflight);
    std::cerr << "grid " << summary.grid_size << ", calls " << summary.calls_made
              << ", skipped " << summary.skipped << ", ok " << summary.ok
              << ", context_length " << summary.context_length_errors << ", transport "
              << summary.transport_errors << ", refused " << summary.refused << "\n";
    return 0;
}

int cmd_score(const std::string& records_path, const std::string& mode_text,
              const std::string& out) {
    auto records = RecordStore::load(records_path);
    MatchMode mode = mode_text == "relaxed" ? MatchMode::relaxed : MatchMode::exact;
    if (mode_text != "relaxed" && mode_text != "exact")
        throw std::invalid_argument("--mode must be exact or relaxed");

    std::size_t scored = 0;
    for (auto& r : records) {
        if (r.status != CallStatus::ok) continue;
        if (r.task == TaskKind::math) {
            r.extracted_answer = extract_math_answer(r.raw_response);
            r.correct =
                r.gold_answer && math_correct(r.extracted_answer, *r.gold_answer);
        } else {
            auto parsed = parse_predicted_lines(r.raw_response);
            auto counts = score_instance(parsed, r.truth_lines, mode);
            r.predicted_lines = parsed.predicted_lines;
            r.tp = counts.tp;
            r.fp = counts.fp;
            r.fn = counts.fn;
        }
        r.scored = true;
        ++scored;
    }
    RecordStore::save(records, out);  // annotated copy; the raw store is untouched
    std::cerr << "scored " << scored << " of " << records.size() << " records into " << out
              << "\n";
    return 0;
}

int cmd_entropy(const std::string& corpus, const std::string& domain,
                const std::string& ranks, const std::string& levels_text,
                std::uint64_t frag_seed, const std::string& out,
                std::size_t sample_n, std::uint64_t sample_seed) {
    auto set = load_corpus(corpus, domain, sample_n, sample_seed);
    auto model = load_token_model(ranks);
    auto levels = parse_levels(levels_text);
    auto points = entropy_curve(set, levels, frag_seed, model);

    std::ofstream file;
    std::ostream* sink = &std::cout;
    if (!out.empty()) {
        file.open(out);
        if (!file) throw io_error("cannot write " + out);
        sink = &file;
    }
    *sink << "doc_id,wfr,tokens,entropy_bits\n";
    char buf[64];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof buf, "%.12g", p.entropy_bits);
        *sink << p.doc_id << ',' << p.wfr_level << ',' << p.token_count << ',' << buf
              << '\n';
    }
    return 0;
}

std::vector<EntropyPoint> load_entropy_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open entropy csv: " + path);
    std::vector<EntropyPoint> points;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) continue;
        EntropyPoint p;
        char doc[256];
        unsigned long tokens = 0;
        if (std::sscanf(line.c_str(), "%255[^,],%lf,%lu,%lf", doc, &p.wfr_level, &tokens,
                        &p.entropy_bits) != 4)
            throw parse_error("bad entropy csv row: " + line);
        p.doc_id = doc;
        p.token_count = tokens;
        points.push_back(p);
    }
    return points;
}

int cmd_report(const std::string& records_path, const std::string& entropy_csv,
               double delta, const std::string& out_dir) {
    auto records = RecordStore::load(records_path);
    auto ok = filter_ok(records);
    if (ok.size() != records.size())
        std::cerr << "excluded " << records.size() - ok.size()
                  << " non-ok records from curves\n";
    if (ok.empty()) throw std::invalid_argument("no ok records to aggregate");

    const bool math = ok.front().task == TaskKind::math;
    auto metric = math ? Metric::accuracy : Metric::micro_f1;
    auto curve = aggregate_curve(ok, metric);

    std::vector<Curve> curves{curve};
    std::optional<ValleyReport> valley;
    std::optional<OffsetReport> offset;
    try {
        valley = detect_valley(curve, delta);
    } catch (const std::invalid_argument& e) {
        std::cerr << "valley detection skipped: " << e.what() << "\n";
    }

    if (!entropy_csv.empty()) {
        auto entropy = aggregate_entropy(load_entropy_csv(entropy_csv));
        curves.push_back(entropy);
        try {
            offset = entropy_offset(curve, entropy);
        } catch (const std::invalid_argument& e) {
            std::cerr << "entropy offset skipped: " << e.what() << "\n";
        }
    }

    emit_report(curves, valley, offset, out_dir);
    if (valley)
        std::cout << "valley: min " << valley->f1_min << " at level " << valley->level_at_min
                  << ", depth " << valley->depth << ", rebound " << valley->rebound
                  << (valley->is_u_shaped ? " (U-shaped)" : " (not U-shaped)") << "\n";
    if (offset)
        std::cout << "entropy offset: peak at " << offset->level_entropy_peak
                  << ", minimum at " << offset->level_f1_min << ", offset "
                  << offset->offset
                  << (offset->consistent_with_finding ? " (peak precedes minimum)"
                                                      : " (no early peak)")
                  << "\n";
    std::cerr << "report written to " << out_dir << "\n";
    return 0;
}

int cmd_gsm8k_docs(const std::string& problems_path, std::size_t group_size,
                   std::uint64_t seed, const std::string& out, std::size_t sample_n,
                   std::uint64_t sample_seed) {
    auto problems = load_gsm8k_problems(problems_path);
    auto set = build_gsm8k_documents(problems, group_size, seed);
    if (sample_n > 0 && sample_n < set.documents.size())
        set = sample_documents(set, sample_n, sample_seed);
    save_documents(set, out);
    std::cerr << "wrote " << set.documents.size() << " documents to " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"word-boundary fragmentation benchmark toolkit"};
    app.require_subcommand(1);

    // Shared option storage.
    std::string corpus, domain = "legal", out, mode = "random_slot", task = "absence";
    std::string levels_text = "0.0:1.0:0.1";
    double p = 0.0, rate = 0.1, delta = 0.05;
    std::size_t n = 1, needle_count = 100, group_size = 80, sample_n = 0;
    std::uint64_t frag_seed = 0, target_seed = 0, sample_seed = 0, seed = 0;
    std::string needle_pool, records_path, manifest_path, entropy_csv, ranks;
    std::string score_mode = "exact", out_dir = "report";
    std::string frag_seeds_text = "1,2,3";

    auto* fragment = app.add_subcommand("fragment", "fragment a corpus and report WFR");
    fragment->add_option("--corpus", corpus)->required();
    fragment->add_option("--domain", domain);
    fragment->add_option("--mode", mode,
                         "random_slot | fixed_slot | nth_slot | interword_control");
    fragment->add_option("--p", p)->required();
    fragment->add_option("--n", n, "slot index for nth_slot");
    fragment->add_option("--frag-seed", frag_seed);
    fragment->add_option("--out", out, "write fragmented corpus records here");
    fragment->add_option("--sample-n", sample_n);
    fragment->add_option("--sample-seed", sample_seed);

    auto* gen = app.add_subcommand("gen-tasks", "generate task instances");
    gen->add_option("--corpus", corpus)->required();
    gen->add_option("--domain", domain);
    gen->add_option("--task", task, "absence | insertion");
    gen->add_option("--rate", rate);
    gen->add_option("--target-seed", target_seed);
    gen->add_option("--frag-seed", frag_seed);
    gen->add_option("--wfr-levels", levels_text);
    gen->add_option("--needle-pool", needle_pool, "candidate needle file");
    gen->add_option("--needle-count", needle_count);
    gen->add_option("--out", out)->required();
    gen->add_option("--sample-n", sample_n);
    gen->add_option("--sample-seed", sample_seed);

    RunManifest base;
    std::string manifest_task = "absence", manifest_domain = "legal";
    auto* mk = app.add_subcommand("make-manifest", "write a sweep manifest");
    mk->add_option("--corpus", base.corpus_path)->required();
    mk->add_option("--domain", manifest_domain);
    mk->add_option("--task", manifest_task);
    mk->add_option("--rate", base.rate);
    mk->add_option("--target-seed", base.target_seed);
    mk->add_option("--frag-seeds", frag_seeds_text, "comma separated");
    mk->add_option("--wfr-levels", levels_text);
    mk->add_option("--needle-pool", base.needle_pool_path);
    mk->add_option("--needle-count", base.needle_count);
    mk->add_flag("--icl", base.icl, "prepend the 3-example demonstration block");
    mk->add_option("--icl-asset", base.icl_asset);
    mk->add_option("--icl-wfr-mode", base.icl_wfr_mode, "matched | fixed");
    mk->add_option("--sample-n", base.sample_n);
    mk->add_option("--sample-seed", base.sample_seed);
    mk->add_option("--out", out)->required();

    ModelConfig config;
    std::string mock, mock_profile = "0:0.9,0.5:0.4,1:0.7";
    double mock_fp_rate = 0.0;
    std::uint64_t mock_seed = 7;
    int max_inflight = 1, timeout_ms = 120000;
    auto* run = app.add_subcommand("run", "execute a sweep");
    run->add_option("--manifest", manifest_path)->required();
    run->add_option("--records", records_path)->required();
    run->add_option("--model", config.name);
    run->add_option("--endpoint", config.endpoint, "base URL, e.g. https://api.openai.com/v1");
    run->add_option("--api-key-env", config.api_key_env);
    run->add_flag("--thinking", config.thinking);
    run->add_option("--max-retries", config.max_retries);
    run->add_option("--timeout-ms", timeout_ms);
    run->add_option("--max-inflight", max_inflight);
    run->add_option("--mock", mock, "oracle | lossy (offline, no network)");
    run->add_option("--mock-profile", mock_profile, "level:prob anchors, interpolated");
    run->add_option("--mock-fp-rate", mock_fp_rate);
    run->add_option("--mock-seed", mock_seed);

    auto* score = app.add_subcommand("score", "parse and score a record store");
    score->add_option("--records", records_path)->required();
    score->add_option("--mode", score_mode, "exact | relaxed");
    score->add_option("--out", out)->required();

    auto* entropy = app.add_subcommand("entropy", "tokenization entropy per document");
    entropy->add_option("--corpus", corpus)->required();
    entropy->add_option("--domain", domain);
    entropy->add_option("--ranks", ranks, "BPE rank file (base64 rank per line)")->required();
    entropy->add_option("--wfr-levels", levels_text);
    entropy->add_option("--frag-seed", frag_seed);
    entropy->add_option("--out", out, "CSV path, stdout when omitted");
    entropy->add_option("--sample-n", sample_n);
    entropy->add_option("--sample-seed", sample_seed);

    auto* report = app.add_subcommand("report", "aggregate records into curves");
    report->add_option("--records", records_path)->required();
    report->add_option("--entropy-csv", entropy_csv);
    report->add_option("--delta", delta, "U-shape threshold");
    report->add_option("--out-dir", out_dir);

    auto* gsm = app.add_subcommand("gsm8k-docs", "build concatenated problem documents");
    gsm->add_option("--problems", corpus, "JSONL with question/solution records")->required();
    gsm->add_option("--group-size", group_size);
    gsm->add_option("--seed", seed);
    gsm->add_option("--out", out)->required();
    gsm->add_option("--sample-n", sample_n);
    gsm->add_option("--sample-seed", sample_seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (fragment->parsed())
            return cmd_fragment(corpus, domain, mode, p, n, frag_seed, out, sample_n,
                                sample_seed);
        if (gen->parsed())
            return cmd_gen_tasks(corpus, domain, task, rate, target_seed, frag_seed,
                                 levels_text, needle_pool, needle_count, out, sample_n,
                                 sample_seed);
        if (mk->parsed()) {
            base.task = task_from_name(manifest_task);
            base.domain = domain_from_name(manifest_domain);
            return cmd_make_manifest(base, frag_seeds_text, levels_text, out);
        }
        if (run->parsed()) {
            config.request_timeout = std::chrono::milliseconds(timeout_ms);
            return cmd_run(manifest_path, records_path, mock, mock_profile, mock_fp_rate,
                           mock_seed, config, max_inflight);
        }
        if (score->parsed()) return cmd_score(records_path, score_mode, out);
        if (entropy->parsed())
            return cmd_entropy(corpus, domain, ranks, levels_text, frag_seed, out, sample_n,
                               sample_seed);
        if (report->parsed()) return cmd_report(records_path, entropy_csv, delta, out_dir);
        if (gsm->parsed())
            return cmd_gsm8k_docs(corpus, group_size, seed, out, sample_n, sample_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
