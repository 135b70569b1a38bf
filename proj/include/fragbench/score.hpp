#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace fragbench {

struct LinePrediction {
    std::vector<std::string> predicted_lines;  // cleaned, none empty
    std::vector<std::string> cleanup_log;      // one note per removed decoration
};

// exact compares trimmed lines case-insensitively; relaxed additionally
// ignores all whitespace and exists only as a formatting-artifact
// diagnostic, never as the headline metric.
enum class MatchMode { exact, relaxed };

struct MicroCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

// Splits a raw response on newlines, trims each line, strips one leading
// bullet or number decoration ("-", "*", "1.", "1)") and one pair of
// surrounding quotes, drops empty lines and lines starting with a
// recognized boilerplate prefix. Interior spacing is preserved exactly.
LinePrediction parse_predicted_lines(const std::string& raw_response);
LinePrediction parse_predicted_lines(const std::string& raw_response,
                                     const std::vector<std::string>& boilerplate_prefixes);

// The versioned prefix list used by the one-argument overload. Matched
// case-insensitively against the start of each cleaned line.
const std::vector<std::string>& default_boilerplate_prefixes();

// Multiset matching: tp = matched pairs, fp = unmatched predictions,
// fn = unmatched truth lines.
MicroCounts score_instance(const LinePrediction& predicted,
                           const std::vector<std::string>& truth_lines,
                           MatchMode mode = MatchMode::exact);

// Pools counts and returns 2PR/(P+R); 0 when tp = 0 with errors present,
// 1 when all three pooled counts are 0. Empty input is an argument error.
double micro_f1(const std::vector<MicroCounts>& counts);

// Final "#### <number>" occurrence, else the last number token in the
// response, else nullopt. Thousands separators are stripped before the
// numeric parse.
std::optional<double> extract_math_answer(const std::string& raw_response);

// |extracted - gold| <= 1e-6 after numeric parsing, so 13.00 equals 13.
bool math_correct(std::optional<double> extracted, double gold);

}  // namespace fragbench
