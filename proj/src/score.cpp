#include "fragbench/score.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <unordered_map>

namespace fragbench {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string ascii_lower(std::string s) {
    for (char& c : s)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return s;
}

bool starts_with_ci(const std::string& line, const std::string& prefix) {
    if (line.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        char a = line[i], b = prefix[i];
        if (a >= 'A' && a <= 'Z') a = static_cast<char>(a - 'A' + 'a');
        if (b >= 'A' && b <= 'Z') b = static_cast<char>(b - 'A' + 'a');
        if (a != b) return false;
    }
    return true;
}

// "- foo" / "* foo" / "12. foo" / "3) foo" -> decoration length, else 0.
// The following whitespace is part of the decoration, so "3.5 apples"
// stays intact.
std::size_t bullet_prefix_len(const std::string& s) {
    std::size_t i = 0;
    if (s[0] == '-' || s[0] == '*') {
        i = 1;
    } else if (std::isdigit(static_cast<unsigned char>(s[0]))) {
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
        if (i >= s.size() || (s[i] != '.' && s[i] != ')')) return 0;
        ++i;
    } else {
        return 0;
    }
    if (i >= s.size() || (s[i] != ' ' && s[i] != '\t')) return 0;
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    return i;
}

std::string strip_whitespace(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s)
        if (c != ' ' && c != '\t' && c != '\r' && c != '\n') out.push_back(c);
    return out;
}

std::string match_key(const std::string& line, MatchMode mode) {
    std::string key = ascii_lower(trim(line));
    if (mode == MatchMode::relaxed) key = strip_whitespace(key);
    return key;
}

}  // namespace

const std::vector<std::string>& default_boilerplate_prefixes() {
    // v1. Matched case-insensitively at line start; versioned so scores
    // stay reproducible.
    static const std::vector<std::string> prefixes = {
        "the missing lines are",
        "the missing line is",
        "missing lines:",
        "missing line:",
        "the extra lines are",
        "the extra line is",
        "the added lines are",
        "the added line is",
        "here are the missing lines",
        "here are the extra lines",
        "the following lines are missing",
        "the following lines were added",
        "the lines that are missing",
        "no missing lines",
        "no extra lines",
        "there are no missing lines",
        "there are no extra lines",
        "answer:",
    };
    return prefixes;
}

LinePrediction parse_predicted_lines(const std::string& raw_response) {
    return parse_predicted_lines(raw_response, default_boilerplate_prefixes());
}

LinePrediction parse_predicted_lines(const std::string& raw_response,
                                     const std::vector<std::string>& boilerplate_prefixes) {
    LinePrediction out;

    std::vector<std::string> raw_lines;
    std::string current;
    for (char c : raw_response) {
        if (c == '\n') {
            raw_lines.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    raw_lines.push_back(std::move(current));

    for (std::size_t i = 0; i < raw_lines.size(); ++i) {
        std::string line = trim(raw_lines[i]);
        if (line.empty()) continue;

        std::size_t bullet = bullet_prefix_len(line);
        if (bullet > 0) {
            out.cleanup_log.push_back("line " + std::to_string(i + 1) + ": stripped \"" +
                                      line.substr(0, bullet) + "\"");
            line = line.substr(bullet);
        }
        if (line.size() >= 2 && (line.front() == '"' || line.front() == '\'') &&
            line.back() == line.front()) {
            out.cleanup_log.push_back("line " + std::to_string(i + 1) +
                                      ": stripped surrounding quotes");
            line = trim(line.substr(1, line.size() - 2));
        }
        if (line.empty()) continue;

        bool boilerplate = false;
        for (const auto& prefix : boilerplate_prefixes) {
            if (starts_with_ci(line, prefix)) {
                out.cleanup_log.push_back("line " + std::to_string(i + 1) +
                                          ": dropped boilerplate");
                boilerplate = true;
                break;
            }
        }
        if (boilerplate) continue;

        out.predicted_lines.push_back(std::move(line));
    }
    return out;
}

MicroCounts score_instance(const LinePrediction& predicted,
                           const std::vector<std::string>& truth_lines,
                           MatchMode mode) {
    std::unordered_map<std::string, std::size_t> remaining;
    for (const auto& t : truth_lines) ++remaining[match_key(t, mode)];

    MicroCounts counts;
    for (const auto& p : predicted.predicted_lines) {
        auto it = remaining.find(match_key(p, mode));
        if (it != remaining.end() && it->second > 0) {
            --it->second;
            ++counts.tp;
        } else {
            ++counts.fp;
        }
    }
    counts.fn = truth_lines.size() - counts.tp;
    return counts;
}

double micro_f1(const std::vector<MicroCounts>& counts) {
    if (counts.empty()) throw std::invalid_argument("micro_f1: empty counts list");

    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& c : counts) {
        tp += c.tp;
        fp += c.fp;
        fn += c.fn;
    }
    if (tp + fp + fn == 0) return 1.0;
    if (tp == 0) return 0.0;
    double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    return 2.0 * precision * recall / (precision + recall);
}

std::optional<double> extract_math_answer(const std::string& raw_response) {
    auto parse_number_at = [&](std::size_t pos, std::size_t* end_out) -> std::optional<double> {
        std::size_t i = pos;
        std::string digits;
        if (i < raw_response.size() && (raw_response[i] == '+' || raw_response[i] == '-')) {
            digits.push_back(raw_response[i]);
            ++i;
        }
        bool any = false;
        while (i < raw_response.size() &&
               (std::isdigit(static_cast<unsigned char>(raw_response[i])) ||
                raw_response[i] == ',')) {
            if (raw_response[i] != ',') {
                digits.push_back(raw_response[i]);
                any = true;
            }
            ++i;
        }
        if (i + 1 < raw_response.size() && raw_response[i] == '.' &&
            std::isdigit(static_cast<unsigned char>(raw_response[i + 1]))) {
            digits.push_back('.');
            ++i;
            while (i < raw_response.size() &&
                   std::isdigit(static_cast<unsigned char>(raw_response[i]))) {
                digits.push_back(raw_response[i]);
                ++i;
                any = true;
            }
        }
        if (!any) return std::nullopt;
        if (end_out) *end_out = i;
        try {
            return std::stod(digits);
        } catch (const std::exception&) {
            return std::nullopt;
        }
    };

    // Final "#### <number>" marker wins.
    std::size_t marker = raw_response.rfind("####");
    while (marker != std::string::npos) {
        std::size_t i = marker + 4;
        while (i < raw_response.size() &&
               (raw_response[i] == ' ' || raw_response[i] == '\t'))
            ++i;
        if (i < raw_response.size() && raw_response[i] == '$') ++i;
        if (auto value = parse_number_at(i, nullptr)) return value;
        marker = marker == 0 ? std::string::npos : raw_response.rfind("####", marker - 1);
    }

    // Fallback: last number token anywhere in the response.
    std::optional<double> last;
    std::size_t i = 0;
    while (i < raw_response.size()) {
        char c = raw_response[i];
        bool sign_start = (c == '+' || c == '-') && i + 1 < raw_response.size() &&
                          std::isdigit(static_cast<unsigned char>(raw_response[i + 1]));
        if (std::isdigit(static_cast<unsigned char>(c)) || sign_start) {
            std::size_t end = i;
            if (auto value = parse_number_at(i, &end)) {
                last = value;
                i = end;
                continue;
            }
        }
        ++i;
    }
    return last;
}

bool math_correct(std::optional<double> extracted, double gold) {
    if (!extracted) return false;
    return std::abs(*extracted - gold) <= 1e-6;
}

}  // namespace fragbench
