#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fragbench {

enum class Domain { legal, github_pr, math };

std::string domain_name(Domain d);
Domain domain_from_name(const std::string& name);

// Label substituted into prompt templates for a domain.
std::string domain_label(Domain d);

// The unit of evaluation: an ordered list of text lines. Lines never
// contain a newline; ids are unique within a DocumentSet.
struct Document {
    std::string id;
    Domain domain = Domain::legal;
    std::vector<std::string> lines;
};

struct DocumentSet {
    std::vector<Document> documents;
    std::string source_path;
    std::optional<std::uint64_t> sample_seed;
};

struct GsmProblem {
    std::string question;
    std::string solution;
};

// Reads a corpus record file: one JSON object {"id": ..., "body": ...} per
// line. The body is split into lines on newlines; trailing empty lines are
// dropped. Throws io_error if the file cannot be read and parse_error
// (naming the record index) on malformed records, empty bodies, or
// duplicate ids.
DocumentSet load_documents(const std::string& path, Domain domain);

// Writes the same record format back out.
void save_documents(const DocumentSet& set, const std::string& path);

// Splits text at newlines and at periods followed by whitespace or end of
// text. The period stays on its line and exactly one separator character
// is consumed per split point, so decimals like "3.5" are never broken.
// Empty segments are dropped.
std::vector<std::string> split_period_lines(const std::string& text);

// Groups problems sequentially into documents of group_size; within each
// problem the question lines come first, then the solution lines.
DocumentSet build_gsm8k_documents(const std::vector<GsmProblem>& problems,
                                  std::size_t group_size, std::uint64_t seed);

// JSONL with "question" and "solution" (or "answer") per record.
std::vector<GsmProblem> load_gsm8k_problems(const std::string& path);

// Uniform sample of n documents without replacement, deterministic given
// seed; the original relative order is preserved.
DocumentSet sample_documents(const DocumentSet& set, std::size_t n,
                             std::uint64_t seed);

}  // namespace fragbench
