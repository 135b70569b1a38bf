#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fragbench {

enum class FragMode { random_slot, fixed_slot, nth_slot, interword_control };

std::string frag_mode_name(FragMode m);
FragMode frag_mode_from_name(const std::string& name);

struct FragmentationSpec {
    FragMode mode = FragMode::random_slot;
    double p = 0.0;         // insertion probability in [0, 1]
    std::size_t n = 1;      // slot index for nth_slot, 1-based
    std::uint64_t frag_seed = 0;
};

struct FragmentationResult {
    std::vector<std::string> lines;
    std::size_t inserted = 0;
    std::size_t eligible = 0;
    double measured_wfr = 0.0;  // inserted / max(eligible, 1)
    // Byte offsets of each inserted space within its fragmented line,
    // ascending. Erasing exactly these bytes reconstructs the input.
    std::vector<std::vector<std::size_t>> insertion_positions;
};

// Intra-word slots are positions between adjacent non-space scalar values
// inside a contiguous non-space sequence; a k-scalar sequence has k-1
// slots. Space and tab count as whitespace. Slots are counted between
// Unicode scalar values so multi-byte characters are never split.

// Independent Bernoulli(p) insertion at every intra-word slot. One seeded
// stream over all lines, slots left to right.
FragmentationResult random_slot_fragment(const std::vector<std::string>& lines,
                                         const FragmentationSpec& spec);

// At most one insertion per non-space sequence, after its first scalar,
// with probability p. eligible still counts every slot of sequences with
// length >= 2, so measured_wfr stays below p on multi-slot words.
FragmentationResult fixed_slot_fragment(const std::vector<std::string>& lines,
                                        const FragmentationSpec& spec);

// Fixed-slot variant inserting after the nth scalar. Sequences shorter
// than n+1 scalars are never modified; they still consume a Bernoulli
// draw when length >= 2 so the stream stays aligned with fixed_slot
// (n = 1 reproduces fixed_slot_fragment exactly for every seed).
FragmentationResult nth_slot_fragment(const std::vector<std::string>& lines,
                                      const FragmentationSpec& spec);

// Dispatch on spec.mode; interword_control is not a fragmentation mode
// and raises std::invalid_argument here.
FragmentationResult fragment_lines(const std::vector<std::string>& lines,
                                   const FragmentationSpec& spec);

// Control perturbation: each single inter-word space (one ' ' with
// non-space scalars on both sides) is replaced, with probability p, by
// either two spaces or a space and a tab, chosen uniformly. Non-space
// sequences are never modified.
std::vector<std::string> interword_perturb(const std::vector<std::string>& lines,
                                           const FragmentationSpec& spec);

// inserted / eligible with eligible counted on the original text. Throws
// consistency_error when fragmented is not derivable from original by
// space insertions at intra-word slots.
double measure_wfr(const std::vector<std::string>& original,
                   const std::vector<std::string>& fragmented);

// Erases the bytes recorded in insertion_positions; inverse of the
// fragmentation that produced them.
std::vector<std::string> remove_insertions(
    const std::vector<std::string>& lines,
    const std::vector<std::vector<std::size_t>>& positions);

// Sum over non-space sequences of max(len - 1, 0), in scalars.
std::size_t count_intra_word_slots(const std::vector<std::string>& lines);

// Stream seed for one document within a sweep: mix64(sweep_seed,
// fnv1a64(doc_id)). Documents fragment independently of each other while
// the whole sweep stays reproducible from one seed; the runner and the
// entropy curve share this derivation so both see the same fragmented
// text.
std::uint64_t doc_stream_seed(std::uint64_t sweep_seed, std::string_view doc_id);

}  // namespace fragbench
