#include "fragbench/tokenstats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <stdexcept>
#include <unordered_map>

#include "fragbench/errors.hpp"
#include "fragbench/perturb.hpp"

namespace fragbench {

namespace {

int base64_value(unsigned char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}

std::string base64_decode(const std::string& in, bool& ok) {
    ok = true;
    std::string out;
    out.reserve(in.size() * 3 / 4 + 2);
    int val = 0, bits = -8;
    for (unsigned char c : in) {
        if (c == '=') break;
        int d = base64_value(c);
        if (d < 0) {
            ok = false;
            return out;
        }
        val = (val << 6) | d;
        bits += 6;
        if (bits >= 0) {
            out.push_back(static_cast<char>((val >> bits) & 0xFF));
            bits -= 8;
        }
    }
    return out;
}

void validate_model(const TokenModel& model) {
    for (int b = 0; b < 256; ++b) {
        std::string key(1, static_cast<char>(b));
        if (!model.ranks.count(key))
            throw parse_error("token model " + model.name + ": missing single-byte token " +
                              std::to_string(b));
    }
}

}  // namespace

TokenModel make_token_model(
    const std::vector<std::pair<std::string, std::uint32_t>>& entries,
    const std::string& name) {
    TokenModel model;
    model.name = name;
    for (const auto& [token, rank] : entries) {
        if (!model.ranks.emplace(token, rank).second)
            throw parse_error("token model " + name + ": duplicate token");
        if (!model.by_rank.emplace(rank, token).second)
            throw parse_error("token model " + name + ": duplicate rank " +
                              std::to_string(rank));
    }
    validate_model(model);
    return model;
}

TokenModel load_token_model(const std::string& rank_file) {
    std::ifstream in(rank_file);
    if (!in) throw io_error("cannot open rank file: " + rank_file);

    TokenModel model;
    model.name = rank_file;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto sep = line.find(' ');
        if (sep == std::string::npos)
            throw parse_error("rank file line " + std::to_string(line_no) +
                              ": expected \"base64 rank\"");
        bool ok = false;
        std::string token = base64_decode(line.substr(0, sep), ok);
        if (!ok)
            throw parse_error("rank file line " + std::to_string(line_no) +
                              ": corrupt base64");
        std::uint32_t rank = 0;
        try {
            rank = static_cast<std::uint32_t>(std::stoul(line.substr(sep + 1)));
        } catch (const std::exception&) {
            throw parse_error("rank file line " + std::to_string(line_no) +
                              ": bad rank value");
        }
        if (!model.ranks.emplace(token, rank).second)
            throw parse_error("rank file line " + std::to_string(line_no) +
                              ": duplicate token");
        if (!model.by_rank.emplace(rank, token).second)
            throw parse_error("rank file line " + std::to_string(line_no) +
                              ": duplicate rank " + std::to_string(rank));
    }
    validate_model(model);
    return model;
}

std::vector<std::uint32_t> encode(const TokenModel& model, std::string_view text) {
    std::vector<std::uint32_t> ids;
    if (text.empty()) return ids;

    // Token pieces as byte ranges over text, doubly linked. Merging two
    // pieces keeps the bytes contiguous, so a candidate pair is always a
    // substring of the input.
    struct Piece {
        std::size_t begin, end;
        std::size_t prev, next;  // npos-terminated links
        std::uint64_t stamp = 0;
        bool alive = true;
    };
    constexpr std::size_t npos = std::string::npos;

    std::vector<Piece> pieces(text.size());
    for (std::size_t i = 0; i < text.size(); ++i)
        pieces[i] = {i, i + 1, i ? i - 1 : npos, i + 1 < text.size() ? i + 1 : npos};

    auto pair_rank = [&](std::size_t left) -> std::uint32_t {
        const Piece& a = pieces[left];
        if (a.next == npos) return UINT32_MAX;
        const Piece& b = pieces[a.next];
        auto it = model.ranks.find(std::string(text.substr(a.begin, b.end - a.begin)));
        return it == model.ranks.end() ? UINT32_MAX : it->second;
    };

    // Min-heap of (rank, position, stamps) with lazy invalidation; equal
    // ranks resolve to the leftmost pair.
    struct Cand {
        std::uint32_t rank;
        std::size_t left;
        std::uint64_t left_stamp, right_stamp;
        bool operator>(const Cand& o) const {
            return rank != o.rank ? rank > o.rank : left > o.left;
        }
    };
    std::priority_queue<Cand, std::vector<Cand>, std::greater<Cand>> heap;

    auto push_candidate = [&](std::size_t left) {
        if (left == npos) return;
        std::uint32_t rank = pair_rank(left);
        if (rank == UINT32_MAX) return;
        heap.push({rank, left, pieces[left].stamp, pieces[pieces[left].next].stamp});
    };
    for (std::size_t i = 0; i + 1 < text.size(); ++i) push_candidate(i);

    std::uint64_t clock = 0;
    while (!heap.empty()) {
        Cand c = heap.top();
        heap.pop();
        Piece& a = pieces[c.left];
        if (!a.alive || a.stamp != c.left_stamp || a.next == npos) continue;
        Piece& b = pieces[a.next];
        if (!b.alive || b.stamp != c.right_stamp) continue;

        a.end = b.end;
        a.stamp = ++clock;
        b.alive = false;
        a.next = b.next;
        if (a.next != npos) pieces[a.next].prev = c.left;

        push_candidate(a.prev);
        push_candidate(c.left);
    }

    for (std::size_t i = 0; i != npos; i = pieces[i].next) {
        const Piece& p = pieces[i];
        auto it = model.ranks.find(std::string(text.substr(p.begin, p.end - p.begin)));
        if (it == model.ranks.end())
            throw consistency_error("token model cannot encode its own merge output");
        ids.push_back(it->second);
    }
    return ids;
}

double token_entropy(const std::vector<std::uint32_t>& ids) {
    if (ids.empty()) return 0.0;
    std::unordered_map<std::uint32_t, std::size_t> freq;
    for (std::uint32_t id : ids) ++freq[id];
    const double total = static_cast<double>(ids.size());
    double h = 0.0;
    for (const auto& [id, count] : freq) {
        double p = static_cast<double>(count) / total;
        h -= p * std::log2(p);
    }
    return h < 0.0 ? 0.0 : h;
}

std::vector<EntropyPoint> entropy_curve(const DocumentSet& docs,
                                        const std::vector<double>& levels,
                                        std::uint64_t frag_seed,
                                        const TokenModel& model) {
    if (levels.empty()) throw std::invalid_argument("entropy_curve: no levels");

    std::vector<EntropyPoint> points;
    points.reserve(docs.documents.size() * levels.size());
    for (const Document& doc : docs.documents) {
        for (double level : levels) {
            FragmentationSpec spec;
            spec.mode = FragMode::random_slot;
            spec.p = level;
            spec.frag_seed = doc_stream_seed(frag_seed, doc.id);
            auto frag = random_slot_fragment(doc.lines, spec);

            std::string joined;
            for (std::size_t i = 0; i < frag.lines.size(); ++i) {
                if (i) joined.push_back('\n');
                joined += frag.lines[i];
            }
            auto ids = encode(model, joined);
            points.push_back({doc.id, level, ids.size(), token_entropy(ids)});
        }
    }
    return points;
}

}  // namespace fragbench
