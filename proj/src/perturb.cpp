#include "fragbench/perturb.hpp"

#include <algorithm>
#include <stdexcept>

#include "fragbench/errors.hpp"
#include "fragbench/rng.hpp"

namespace fragbench {

namespace {

// UTF-8 scalar length from the lead byte; invalid bytes pass through as
// single scalars so arbitrary input survives a round trip.
std::size_t scalar_len(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xe) return 3;
    if ((lead >> 3) == 0x1e) return 4;
    return 1;
}

bool is_space_scalar(std::string_view s) {
    return s.size() == 1 && (s[0] == ' ' || s[0] == '\t');
}

std::vector<std::string_view> split_scalars(const std::string& line) {
    std::vector<std::string_view> out;
    out.reserve(line.size());
    std::size_t i = 0;
    while (i < line.size()) {
        std::size_t len = scalar_len(static_cast<unsigned char>(line[i]));
        len = std::min(len, line.size() - i);
        out.emplace_back(line.data() + i, len);
        i += len;
    }
    return out;
}

void check_probability(double p) {
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("fragmentation probability must lie in [0, 1]");
}

FragmentationResult finish(FragmentationResult r) {
    r.measured_wfr = static_cast<double>(r.inserted) /
                     static_cast<double>(std::max<std::size_t>(r.eligible, 1));
    return r;
}

// Contiguous non-space scalar run: [first, last) indices into a scalar list.
struct Run {
    std::size_t first = 0;
    std::size_t last = 0;
    std::size_t len() const { return last - first; }
};

std::vector<Run> non_space_runs(const std::vector<std::string_view>& scalars) {
    std::vector<Run> runs;
    std::size_t i = 0;
    while (i < scalars.size()) {
        if (is_space_scalar(scalars[i])) {
            ++i;
            continue;
        }
        Run run{i, i};
        while (run.last < scalars.size() && !is_space_scalar(scalars[run.last])) ++run.last;
        runs.push_back(run);
        i = run.last;
    }
    return runs;
}

// Shared body of fixed_slot and nth_slot: insert after slot_index scalars
// of each run that is long enough; every run of length >= 2 counts its
// slots and consumes one draw.
FragmentationResult slotted_fragment(const std::vector<std::string>& lines,
                                     const FragmentationSpec& spec,
                                     std::size_t slot_index) {
    check_probability(spec.p);
    SeededRng rng(spec.frag_seed);
    FragmentationResult r;
    r.lines.reserve(lines.size());
    r.insertion_positions.resize(lines.size());

    for (std::size_t li = 0; li < lines.size(); ++li) {
        const auto scalars = split_scalars(lines[li]);
        const auto runs = non_space_runs(scalars);

        // Insertion point per run, scalar index; npos = none.
        std::vector<std::size_t> insert_after(runs.size(), std::string::npos);
        for (std::size_t ri = 0; ri < runs.size(); ++ri) {
            if (runs[ri].len() < 2) continue;
            r.eligible += runs[ri].len() - 1;
            bool fire = rng.bernoulli(spec.p);
            if (fire && runs[ri].len() >= slot_index + 1)
                insert_after[ri] = runs[ri].first + slot_index - 1;
        }

        std::string out;
        out.reserve(lines[li].size() + runs.size());
        std::size_t next_run = 0;
        for (std::size_t si = 0; si < scalars.size(); ++si) {
            while (next_run < runs.size() && runs[next_run].last <= si) ++next_run;
            out.append(scalars[si]);
            if (next_run < runs.size() && insert_after[next_run] == si) {
                r.insertion_positions[li].push_back(out.size());
                out.push_back(' ');
                ++r.inserted;
            }
        }
        r.lines.push_back(std::move(out));
    }
    return finish(std::move(r));
}

}  // namespace

std::string frag_mode_name(FragMode m) {
    switch (m) {
        case FragMode::random_slot: return "random_slot";
        case FragMode::fixed_slot: return "fixed_slot";
        case FragMode::nth_slot: return "nth_slot";
        case FragMode::interword_control: return "interword_control";
    }
    return "random_slot";
}

FragMode frag_mode_from_name(const std::string& name) {
    if (name == "random_slot") return FragMode::random_slot;
    if (name == "fixed_slot") return FragMode::fixed_slot;
    if (name == "nth_slot") return FragMode::nth_slot;
    if (name == "interword_control") return FragMode::interword_control;
    throw std::invalid_argument("unknown fragmentation mode: " + name);
}

FragmentationResult random_slot_fragment(const std::vector<std::string>& lines,
                                         const FragmentationSpec& spec) {
    check_probability(spec.p);
    SeededRng rng(spec.frag_seed);
    FragmentationResult r;
    r.lines.reserve(lines.size());
    r.insertion_positions.resize(lines.size());

    for (std::size_t li = 0; li < lines.size(); ++li) {
        const auto scalars = split_scalars(lines[li]);
        std::string out;
        out.reserve(lines[li].size() + lines[li].size() / 2);
        for (std::size_t si = 0; si < scalars.size(); ++si) {
            out.append(scalars[si]);
            if (si + 1 < scalars.size() && !is_space_scalar(scalars[si]) &&
                !is_space_scalar(scalars[si + 1])) {
                ++r.eligible;
                if (rng.bernoulli(spec.p)) {
                    r.insertion_positions[li].push_back(out.size());
                    out.push_back(' ');
                    ++r.inserted;
                }
            }
        }
        r.lines.push_back(std::move(out));
    }
    return finish(std::move(r));
}

FragmentationResult fixed_slot_fragment(const std::vector<std::string>& lines,
                                        const FragmentationSpec& spec) {
    return slotted_fragment(lines, spec, 1);
}

FragmentationResult nth_slot_fragment(const std::vector<std::string>& lines,
                                      const FragmentationSpec& spec) {
    if (spec.n < 1) throw std::invalid_argument("nth_slot requires n >= 1");
    return slotted_fragment(lines, spec, spec.n);
}

FragmentationResult fragment_lines(const std::vector<std::string>& lines,
                                   const FragmentationSpec& spec) {
    switch (spec.mode) {
        case FragMode::random_slot: return random_slot_fragment(lines, spec);
        case FragMode::fixed_slot: return fixed_slot_fragment(lines, spec);
        case FragMode::nth_slot: return nth_slot_fragment(lines, spec);
        case FragMode::interword_control: break;
    }
    throw std::invalid_argument("interword_control does not produce a FragmentationResult");
}

std::vector<std::string> interword_perturb(const std::vector<std::string>& lines,
                                           const FragmentationSpec& spec) {
    check_probability(spec.p);
    SeededRng rng(spec.frag_seed);
    std::vector<std::string> out;
    out.reserve(lines.size());

    for (const auto& line : lines) {
        const auto scalars = split_scalars(line);
        std::string rebuilt;
        rebuilt.reserve(line.size() + 8);
        for (std::size_t si = 0; si < scalars.size(); ++si) {
            bool single_interword_space =
                scalars[si].size() == 1 && scalars[si][0] == ' ' && si > 0 &&
                si + 1 < scalars.size() && !is_space_scalar(scalars[si - 1]) &&
                !is_space_scalar(scalars[si + 1]);
            if (single_interword_space && rng.bernoulli(spec.p)) {
                // Uniform choice between the two replacements.
                rebuilt.append(rng.next_below(2) == 0 ? "  " : " \t");
            } else {
                rebuilt.append(scalars[si]);
            }
        }
        out.push_back(std::move(rebuilt));
    }
    return out;
}

std::uint64_t doc_stream_seed(std::uint64_t sweep_seed, std::string_view doc_id) {
    return mix64(sweep_seed, fnv1a64(doc_id));
}

std::size_t count_intra_word_slots(const std::vector<std::string>& lines) {
    std::size_t slots = 0;
    for (const auto& line : lines) {
        const auto scalars = split_scalars(line);
        for (const Run& run : non_space_runs(scalars))
            slots += run.len() > 0 ? run.len() - 1 : 0;
    }
    return slots;
}

double measure_wfr(const std::vector<std::string>& original,
                   const std::vector<std::string>& fragmented) {
    if (original.size() != fragmented.size())
        throw consistency_error("measure_wfr: line counts differ");

    auto is_ws_byte = [](char c) { return c == ' ' || c == '\t'; };
    auto is_continuation = [](char c) {
        return (static_cast<unsigned char>(c) & 0xC0) == 0x80;
    };

    std::size_t inserted = 0;
    for (std::size_t li = 0; li < original.size(); ++li) {
        const std::string& o = original[li];
        const std::string& f = fragmented[li];
        std::size_t i = 0, j = 0;
        while (j < f.size()) {
            if (i < o.size() && o[i] == f[j]) {
                ++i;
                ++j;
                continue;
            }
            // Must be an inserted space strictly inside a non-space run of
            // the original, at a scalar boundary.
            bool interior = f[j] == ' ' && i > 0 && i < o.size() &&
                            !is_ws_byte(o[i - 1]) && !is_ws_byte(o[i]) &&
                            !is_continuation(o[i]);
            if (!interior)
                throw consistency_error(
                    "measure_wfr: line " + std::to_string(li) +
                    " is not derivable by intra-word space insertion");
            ++inserted;
            ++j;
        }
        if (i != o.size())
            throw consistency_error("measure_wfr: line " + std::to_string(li) +
                                    " drops original characters");
    }

    std::size_t eligible = count_intra_word_slots(original);
    return static_cast<double>(inserted) /
           static_cast<double>(std::max<std::size_t>(eligible, 1));
}

std::vector<std::string> remove_insertions(
    const std::vector<std::string>& lines,
    const std::vector<std::vector<std::size_t>>& positions) {
    if (lines.size() != positions.size())
        throw consistency_error("remove_insertions: shape mismatch");

    std::vector<std::string> out;
    out.reserve(lines.size());
    for (std::size_t li = 0; li < lines.size(); ++li) {
        const std::string& line = lines[li];
        std::string clean;
        clean.reserve(line.size());
        std::size_t next = 0;
        for (std::size_t b = 0; b < line.size(); ++b) {
            if (next < positions[li].size() && positions[li][next] == b) {
                ++next;
                continue;
            }
            clean.push_back(line[b]);
        }
        if (next != positions[li].size())
            throw consistency_error("remove_insertions: position past end of line " +
                                    std::to_string(li));
        out.push_back(std::move(clean));
    }
    return out;
}

}  // namespace fragbench
