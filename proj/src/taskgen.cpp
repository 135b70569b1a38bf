#include "fragbench/taskgen.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "fragbench/errors.hpp"
#include "fragbench/rng.hpp"

namespace fragbench {

using nlohmann::json;

std::string task_name(TaskKind t) {
    switch (t) {
        case TaskKind::absence: return "absence";
        case TaskKind::insertion: return "insertion";
        case TaskKind::math: return "math";
    }
    return "absence";
}

TaskKind task_from_name(const std::string& name) {
    if (name == "absence") return TaskKind::absence;
    if (name == "insertion") return TaskKind::insertion;
    if (name == "math") return TaskKind::math;
    throw std::invalid_argument("unknown task: " + name);
}

TargetMask select_targets(const Document& doc, double rate,
                          std::uint64_t target_seed, TargetMode mode) {
    if (!(rate > 0.0 && rate < 1.0))
        throw std::invalid_argument("target rate must lie strictly inside (0, 1)");
    if (doc.lines.size() < 2)
        throw std::invalid_argument("target selection needs a document with >= 2 lines");

    // omit selects line indices, insert selects gap positions 0..len.
    const std::size_t positions =
        mode == TargetMode::omit ? doc.lines.size() : doc.lines.size() + 1;

    SeededRng rng(target_seed);
    TargetMask mask;
    mask.doc_id = doc.id;
    mask.mode = mode;
    mask.target_seed = target_seed;
    mask.rate = rate;
    for (std::size_t i = 0; i < positions; ++i)
        if (rng.bernoulli(rate)) mask.indices.push_back(i);

    // Guarantee at least one target.
    if (mask.indices.empty()) mask.indices.push_back(rng.next_below(positions));
    return mask;
}

namespace {

void check_mask(const Document& doc, const TargetMask& mask, TargetMode expected) {
    if (mask.mode != expected)
        throw consistency_error("mask mode does not match the task");
    if (mask.doc_id != doc.id)
        throw consistency_error("mask built for document \"" + mask.doc_id +
                                "\", got \"" + doc.id + "\"");
    if (mask.indices.empty()) throw consistency_error("mask has no targets");
    const std::size_t limit =
        expected == TargetMode::omit ? doc.lines.size() : doc.lines.size() + 1;
    for (std::size_t idx : mask.indices)
        if (idx >= limit) throw consistency_error("mask index out of range");
}

}  // namespace

TaskInstance build_absence_instance(const Document& doc, const TargetMask& mask,
                                    const FragmentationSpec& spec) {
    check_mask(doc, mask, TargetMode::omit);

    auto frag = fragment_lines(doc.lines, spec);

    TaskInstance instance;
    instance.doc_id = doc.id;
    instance.task = TaskKind::absence;
    instance.wfr_level = spec.p;
    instance.frag_seed = spec.frag_seed;
    instance.target_seed = mask.target_seed;
    instance.mask_indices = mask.indices;
    instance.original_context = frag.lines;

    std::vector<bool> omitted(frag.lines.size(), false);
    for (std::size_t idx : mask.indices) omitted[idx] = true;
    for (std::size_t i = 0; i < frag.lines.size(); ++i) {
        if (omitted[i]) {
            instance.truth_lines.push_back(frag.lines[i]);
            instance.truth_insertions.push_back(frag.insertion_positions[i]);
        } else {
            instance.modified_context.push_back(frag.lines[i]);
        }
    }
    return instance;
}

TaskInstance build_insertion_instance(const Document& doc, const TargetMask& mask,
                                      const NeedlePool& pool,
                                      const FragmentationSpec& spec) {
    check_mask(doc, mask, TargetMode::insert);
    if (pool.needles.empty()) throw consistency_error("needle pool is empty");
    if (pool.domain != doc.domain)
        throw consistency_error("needle pool domain does not match the document");

    TaskInstance instance;
    instance.doc_id = doc.id;
    instance.task = TaskKind::insertion;
    instance.wfr_level = spec.p;
    instance.frag_seed = spec.frag_seed;
    instance.target_seed = mask.target_seed;
    instance.mask_indices = mask.indices;

    // Needle choice depends only on the target seed, so the same needles
    // appear at every fragmentation level. Sampling is without replacement
    // until the pool runs out.
    const std::size_t wanted = mask.indices.size();
    SeededRng needle_rng(mix64(mask.target_seed, fnv1a64("needles")));
    std::vector<std::size_t> chosen;
    if (wanted <= pool.needles.size()) {
        std::vector<std::size_t> order(pool.needles.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = 0; i < wanted; ++i) {
            std::size_t j = i + needle_rng.next_below(order.size() - i);
            std::swap(order[i], order[j]);
            chosen.push_back(order[i]);
        }
    } else {
        instance.warnings.push_back("needle pool smaller than targets; sampling with replacement");
        for (std::size_t i = 0; i < wanted; ++i)
            chosen.push_back(needle_rng.next_below(pool.needles.size()));
    }

    // One fragmentation stream: document lines first, then needles, so the
    // document's spacing is independent of the needle count.
    std::vector<std::string> combined = doc.lines;
    for (std::size_t idx : chosen) combined.push_back(pool.needles[idx]);
    auto frag = fragment_lines(combined, spec);

    const std::size_t doc_count = doc.lines.size();
    instance.original_context.assign(frag.lines.begin(), frag.lines.begin() + doc_count);
    for (std::size_t i = 0; i < wanted; ++i) {
        instance.truth_lines.push_back(frag.lines[doc_count + i]);
        instance.truth_insertions.push_back(frag.insertion_positions[doc_count + i]);
    }

    // Gap position k means "before original line k"; needles are assigned
    // to the sorted gap positions in sampling order.
    instance.modified_context.reserve(doc_count + wanted);
    std::size_t next_needle = 0;
    for (std::size_t line = 0; line <= doc_count; ++line) {
        while (next_needle < wanted && mask.indices[next_needle] == line) {
            instance.modified_context.push_back(instance.truth_lines[next_needle]);
            ++next_needle;
        }
        if (line < doc_count)
            instance.modified_context.push_back(instance.original_context[line]);
    }
    return instance;
}

namespace {

std::string ascii_lower_copy(std::string s) {
    for (char& c : s)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return s;
}

// Character (scalar) count; multi-byte sequences length like the slot counter.
std::size_t char_length(const std::string& s) {
    std::size_t count = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++count;
    return count;
}

}  // namespace

NeedlePool build_needle_pool(const DocumentSet& corpus,
                             const std::string& candidate_file, std::size_t n) {
    if (n < 1) throw std::invalid_argument("needle pool size must be >= 1");
    if (corpus.documents.empty())
        throw std::invalid_argument("needle pool needs a non-empty reference corpus");

    std::ifstream in(candidate_file);
    if (!in) throw io_error("cannot open needle candidate file: " + candidate_file);

    std::unordered_set<std::string> corpus_lines;
    std::vector<std::size_t> corpus_lengths;
    for (const Document& doc : corpus.documents) {
        for (const std::string& line : doc.lines) {
            corpus_lines.insert(ascii_lower_copy(line));
            corpus_lengths.push_back(char_length(line));
        }
    }

    std::vector<std::string> candidates;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (corpus_lines.count(ascii_lower_copy(line)))
            throw validation_error("needle candidate at line " + std::to_string(line_no) +
                                   " appears in the corpus: \"" + line + "\"");
        candidates.push_back(line);
    }
    if (candidates.size() < n)
        throw std::invalid_argument("candidate file holds " +
                                    std::to_string(candidates.size()) +
                                    " lines, need " + std::to_string(n));

    // 10 equal-width buckets over the corpus per-line length range.
    const std::size_t min_len =
        *std::min_element(corpus_lengths.begin(), corpus_lengths.end());
    const std::size_t max_len =
        *std::max_element(corpus_lengths.begin(), corpus_lengths.end());
    constexpr std::size_t kBuckets = 10;
    const double width =
        max_len > min_len ? static_cast<double>(max_len - min_len) / kBuckets : 1.0;
    auto bucket_of = [&](std::size_t len) -> std::size_t {
        if (len <= min_len) return 0;
        if (len >= max_len) return kBuckets - 1;
        auto b = static_cast<std::size_t>((static_cast<double>(len - min_len)) / width);
        return std::min(b, kBuckets - 1);
    };

    std::vector<double> corpus_hist(kBuckets, 0.0);
    for (std::size_t len : corpus_lengths)
        corpus_hist[bucket_of(len)] += 1.0 / static_cast<double>(corpus_lengths.size());

    std::vector<std::vector<std::size_t>> by_bucket(kBuckets);
    for (std::size_t i = 0; i < candidates.size(); ++i)
        by_bucket[bucket_of(char_length(candidates[i]))].push_back(i);

    // Greedy bucket filling toward the corpus proportions; leftover slots
    // are filled best-effort from the most underused buckets.
    NeedlePool pool;
    pool.domain = corpus.documents.front().domain;
    pool.min_len = min_len;
    pool.max_len = max_len;
    pool.length_histogram.assign(kBuckets, 0);

    std::vector<std::size_t> taken(kBuckets, 0);
    std::vector<std::size_t> want(kBuckets, 0);
    for (std::size_t b = 0; b < kBuckets; ++b)
        want[b] = static_cast<std::size_t>(corpus_hist[b] * static_cast<double>(n) + 0.5);

    auto take_from = [&](std::size_t b) {
        pool.needles.push_back(candidates[by_bucket[b][taken[b]]]);
        ++taken[b];
        ++pool.length_histogram[b];
    };
    for (std::size_t b = 0; b < kBuckets && pool.needles.size() < n; ++b)
        while (taken[b] < std::min(want[b], by_bucket[b].size()) && pool.needles.size() < n)
            take_from(b);
    while (pool.needles.size() < n) {
        // Most underfilled bucket that still has candidates.
        std::size_t best = kBuckets;
        double best_deficit = -1.0;
        for (std::size_t b = 0; b < kBuckets; ++b) {
            if (taken[b] >= by_bucket[b].size()) continue;
            double deficit = corpus_hist[b] - static_cast<double>(pool.length_histogram[b]) /
                                                  static_cast<double>(n);
            if (best == kBuckets || deficit > best_deficit) {
                best = b;
                best_deficit = deficit;
            }
        }
        if (best == kBuckets) break;
        take_from(best);
    }
    if (pool.needles.size() < n)
        throw std::invalid_argument("could not assemble a pool of " + std::to_string(n));

    // Best-effort pools keep working but flag buckets that drift more
    // than 10% from the corpus proportion.
    for (std::size_t b = 0; b < kBuckets; ++b) {
        double got = static_cast<double>(pool.length_histogram[b]) / static_cast<double>(n);
        if (std::abs(got - corpus_hist[b]) > 0.10)
            std::fprintf(stderr,
                         "needle pool: bucket %zu holds %.0f%% of needles vs %.0f%% of "
                         "corpus lines (candidate file too thin there)\n",
                         b, got * 100.0, corpus_hist[b] * 100.0);
    }
    return pool;
}

namespace {

json instance_to_json(const TaskInstance& instance) {
    return json{{"doc_id", instance.doc_id},
                {"task", task_name(instance.task)},
                {"wfr_level", instance.wfr_level},
                {"frag_seed", instance.frag_seed},
                {"target_seed", instance.target_seed},
                {"original_context", instance.original_context},
                {"modified_context", instance.modified_context},
                {"truth_lines", instance.truth_lines},
                {"truth_insertions", instance.truth_insertions},
                {"mask_indices", instance.mask_indices},
                {"warnings", instance.warnings}};
}

TaskInstance instance_from_json(const json& j) {
    TaskInstance instance;
    instance.doc_id = j.at("doc_id").get<std::string>();
    instance.task = task_from_name(j.at("task").get<std::string>());
    instance.wfr_level = j.at("wfr_level").get<double>();
    instance.frag_seed = j.at("frag_seed").get<std::uint64_t>();
    instance.target_seed = j.at("target_seed").get<std::uint64_t>();
    instance.original_context = j.at("original_context").get<std::vector<std::string>>();
    instance.modified_context = j.at("modified_context").get<std::vector<std::string>>();
    instance.truth_lines = j.at("truth_lines").get<std::vector<std::string>>();
    instance.truth_insertions =
        j.at("truth_insertions").get<std::vector<std::vector<std::size_t>>>();
    instance.mask_indices = j.at("mask_indices").get<std::vector<std::size_t>>();
    instance.warnings = j.at("warnings").get<std::vector<std::string>>();
    return instance;
}

}  // namespace

void save_instances(const std::vector<TaskInstance>& instances, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write instances file: " + path);
    for (const auto& instance : instances) out << instance_to_json(instance).dump() << '\n';
    if (!out) throw io_error("write failed: " + path);
}

std::vector<TaskInstance> load_instances(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open instances file: " + path);
    std::vector<TaskInstance> instances;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++line_no;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw parse_error("instances file " + path + ": bad JSON at record " +
                              std::to_string(line_no));
        instances.push_back(instance_from_json(j));
    }
    return instances;
}

}  // namespace fragbench
