#include "fragbench/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "fragbench/errors.hpp"
#include "fragbench/rng.hpp"

namespace fragbench {

using nlohmann::json;

std::string domain_name(Domain d) {
    switch (d) {
        case Domain::legal: return "legal";
        case Domain::github_pr: return "github_pr";
        case Domain::math: return "math";
    }
    return "legal";
}

Domain domain_from_name(const std::string& name) {
    if (name == "legal") return Domain::legal;
    if (name == "github_pr") return Domain::github_pr;
    if (name == "math") return Domain::math;
    throw std::invalid_argument("unknown domain: " + name);
}

std::string domain_label(Domain d) {
    switch (d) {
        case Domain::legal: return "Legal Documents";
        case Domain::github_pr: return "Github PRs";
        case Domain::math: return "Mathematical Reasoning";
    }
    return "Legal Documents";
}

namespace {

std::vector<std::string> body_to_lines(const std::string& body) {
    std::vector<std::string> lines;
    std::string current;
    for (char c : body) {
        if (c == '\n') {
            lines.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    lines.push_back(std::move(current));
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

}  // namespace

DocumentSet load_documents(const std::string& path, Domain domain) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open corpus file: " + path);

    DocumentSet set;
    set.source_path = path;
    std::unordered_set<std::string> seen_ids;

    std::string line;
    std::size_t record_index = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++record_index;
        json record = json::parse(line, nullptr, false);
        if (record.is_discarded() || !record.is_object())
            throw parse_error("record " + std::to_string(record_index) + " in " + path +
                              ": not a JSON object");
        if (!record.contains("id") || !record["id"].is_string())
            throw parse_error("record " + std::to_string(record_index) + " in " + path +
                              ": missing string field \"id\"");
        if (!record.contains("body") || !record["body"].is_string())
            throw parse_error("record " + std::to_string(record_index) + " in " + path +
                              ": missing string field \"body\"");

        Document doc;
        doc.id = record["id"].get<std::string>();
        doc.domain = domain;
        doc.lines = body_to_lines(record["body"].get<std::string>());
        if (doc.lines.empty())
            throw parse_error("record " + std::to_string(record_index) + " in " + path +
                              ": empty body");
        if (!seen_ids.insert(doc.id).second)
            throw parse_error("record " + std::to_string(record_index) + " in " + path +
                              ": duplicate id \"" + doc.id + "\"");
        set.documents.push_back(std::move(doc));
    }
    return set;
}

void save_documents(const DocumentSet& set, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write corpus file: " + path);
    for (const Document& doc : set.documents) {
        std::string body;
        for (std::size_t i = 0; i < doc.lines.size(); ++i) {
            if (i) body.push_back('\n');
            body += doc.lines[i];
        }
        json record{{"id", doc.id}, {"body", body}};
        out << record.dump() << '\n';
    }
    if (!out) throw io_error("write failed: " + path);
}

std::vector<std::string> split_period_lines(const std::string& text) {
    auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };

    std::vector<std::string> lines;
    std::string current;
    std::size_t i = 0;
    auto flush = [&] {
        if (!current.empty()) lines.push_back(std::move(current));
        current.clear();
    };

    while (i < text.size()) {
        char c = text[i];
        if (c == '\n') {
            flush();
            ++i;
            continue;
        }
        current.push_back(c);
        if (c == '.') {
            bool at_end = i + 1 == text.size();
            bool before_ws = !at_end && (is_ws(text[i + 1]) || text[i + 1] == '\n');
            if (at_end || before_ws) {
                flush();
                if (!at_end) ++i;  // consume one separator character
            }
        }
        ++i;
    }
    flush();
    return lines;
}

DocumentSet build_gsm8k_documents(const std::vector<GsmProblem>& problems,
                                  std::size_t group_size, std::uint64_t seed) {
    if (group_size < 1) throw std::invalid_argument("group_size must be >= 1");
    if (problems.empty()) throw std::invalid_argument("problems must be non-empty");

    DocumentSet set;
    set.sample_seed = seed;
    std::size_t doc_index = 0;
    for (std::size_t start = 0; start < problems.size(); start += group_size) {
        Document doc;
        doc.domain = Domain::math;
        doc.id = "gsm8k-" + std::to_string(doc_index++);
        std::size_t end = std::min(start + group_size, problems.size());
        for (std::size_t p = start; p < end; ++p) {
            for (auto& l : split_period_lines(problems[p].question))
                doc.lines.push_back(std::move(l));
            for (auto& l : split_period_lines(problems[p].solution))
                doc.lines.push_back(std::move(l));
        }
        set.documents.push_back(std::move(doc));
    }
    return set;
}

std::vector<GsmProblem> load_gsm8k_problems(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open problems file: " + path);

    std::vector<GsmProblem> problems;
    std::string line;
    std::size_t record_index = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++record_index;
        json record = json::parse(line, nullptr, false);
        if (record.is_discarded() || !record.is_object() ||
            !record.contains("question") || !record["question"].is_string())
            throw parse_error("record " + std::to_string(record_index) + " in " + path +
                              ": expected {\"question\", \"solution\"|\"answer\"}");
        GsmProblem p;
        p.question = record["question"].get<std::string>();
        if (record.contains("solution") && record["solution"].is_string())
            p.solution = record["solution"].get<std::string>();
        else if (record.contains("answer") && record["answer"].is_string())
            p.solution = record["answer"].get<std::string>();
        else
            throw parse_error("record " + std::to_string(record_index) + " in " + path +
                              ": missing \"solution\" or \"answer\"");
        problems.push_back(std::move(p));
    }
    return problems;
}

DocumentSet sample_documents(const DocumentSet& set, std::size_t n, std::uint64_t seed) {
    if (n < 1 || n > set.documents.size())
        throw std::invalid_argument("sample size " + std::to_string(n) +
                                    " out of range for " +
                                    std::to_string(set.documents.size()) + " documents");

    // Partial Fisher-Yates over the index vector, then restore original order.
    std::vector<std::size_t> indices(set.documents.size());
    std::iota(indices.begin(), indices.end(), 0);
    SeededRng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = i + rng.next_below(indices.size() - i);
        std::swap(indices[i], indices[j]);
    }
    indices.resize(n);
    std::sort(indices.begin(), indices.end());

    DocumentSet out;
    out.source_path = set.source_path;
    out.sample_seed = seed;
    out.documents.reserve(n);
    for (std::size_t idx : indices) out.documents.push_back(set.documents[idx]);
    return out;
}

}  // namespace fragbench
