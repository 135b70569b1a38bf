#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fragbench/corpus.hpp"

namespace fragbench {

// A ranked BPE vocabulary: byte sequence -> merge rank, lower rank means
// earlier merge. A token's id is its rank. Invariants: all 256 single
// bytes present, ranks unique.
//
// Encoding is pure byte-level BPE without a pre-tokenization split
// pattern, so token-identical parity with production encoders is not
// promised; the entropy trend is the target.
struct TokenModel {
    std::unordered_map<std::string, std::uint32_t> ranks;
    std::unordered_map<std::uint32_t, std::string> by_rank;
    std::string name;
};

// Builds and validates a model from (token bytes, rank) entries.
TokenModel make_token_model(const std::vector<std::pair<std::string, std::uint32_t>>& entries,
                            const std::string& name);

// Standard rank-file format: one "base64(token_bytes) rank" pair per
// line (the cl100k_base file shape). Throws parse_error naming the line
// on corrupt base64, duplicate ranks, duplicate tokens, or when any of
// the 256 single-byte tokens is missing.
TokenModel load_token_model(const std::string& rank_file);

// Greedy lowest-rank-merge BPE: starting from single bytes, repeatedly
// merge the adjacent pair whose concatenation has the smallest rank
// (leftmost first on equal rank) until no mergeable pair remains.
std::vector<std::uint32_t> encode(const TokenModel& model, std::string_view text);

// Shannon entropy in bits of the empirical token-id distribution; an
// empty list has entropy 0.
double token_entropy(const std::vector<std::uint32_t>& ids);

struct EntropyPoint {
    std::string doc_id;
    double wfr_level = 0.0;
    std::size_t token_count = 0;
    double entropy_bits = 0.0;
};

// Fragments each document at each level (random_slot, the same frag_seed
// semantics as the sweep runner), joins the lines with newlines, encodes,
// and measures entropy. One point per (document, level).
std::vector<EntropyPoint> entropy_curve(const DocumentSet& docs,
                                        const std::vector<double>& levels,
                                        std::uint64_t frag_seed,
                                        const TokenModel& model);

}  // namespace fragbench
