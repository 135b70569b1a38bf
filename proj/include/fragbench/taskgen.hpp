#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fragbench/corpus.hpp"
#include "fragbench/perturb.hpp"

namespace fragbench {

enum class TargetMode { omit, insert };

// Task vocabulary shared with the runner; gen-tasks only produces the
// first two, math instances are built per problem by the runner.
enum class TaskKind { absence, insertion, math };

std::string task_name(TaskKind t);
TaskKind task_from_name(const std::string& name);

// Which lines are omitted (omit) or which gap positions 0..len receive an
// insertion (insert). Fixed by (doc, rate, target_seed, mode) and reused
// across every fragmentation level of a sweep.
struct TargetMask {
    std::string doc_id;
    TargetMode mode = TargetMode::omit;
    std::vector<std::size_t> indices;  // sorted, non-empty
    std::uint64_t target_seed = 0;
    double rate = 0.0;
};

struct TaskInstance {
    std::string doc_id;
    TaskKind task = TaskKind::absence;
    double wfr_level = 0.0;
    std::uint64_t frag_seed = 0;
    std::uint64_t target_seed = 0;
    std::vector<std::string> original_context;
    std::vector<std::string> modified_context;
    std::vector<std::string> truth_lines;
    // Byte offsets of inserted spaces per truth line; de-fragmenting with
    // these recovers the clean source lines.
    std::vector<std::vector<std::size_t>> truth_insertions;
    std::vector<std::size_t> mask_indices;
    std::vector<std::string> warnings;
};

struct NeedlePool {
    Domain domain = Domain::legal;
    std::vector<std::string> needles;
    // Per-line character-length histogram of the pool, 10 equal-width
    // buckets over [min_len, max_len] of the reference corpus.
    std::vector<std::size_t> length_histogram;
    std::size_t min_len = 0;
    std::size_t max_len = 0;
};

// Selects each line index (omit) or gap position (insert) independently
// with probability rate from a stream seeded by target_seed. When the
// draw selects nothing, one position is drawn uniformly so every mask has
// at least one target. rate must lie strictly inside (0, 1) and the
// document must have at least two lines.
TargetMask select_targets(const Document& doc, double rate,
                          std::uint64_t target_seed, TargetMode mode);

// Fragments the whole document once with spec (one stream over all
// lines), then removes the masked lines. A line is therefore fragmented
// identically in both contexts, which exact-match scoring requires.
TaskInstance build_absence_instance(const Document& doc, const TargetMask& mask,
                                    const FragmentationSpec& spec);

// Samples |mask.indices| needles from the pool (seeded by target_seed,
// without replacement while the pool allows, otherwise with replacement
// plus a warning), fragments document and needles in one stream with the
// needles appended after the document lines, and inserts the fragmented
// needles at the mask's gap positions.
TaskInstance build_insertion_instance(const Document& doc, const TargetMask& mask,
                                      const NeedlePool& pool,
                                      const FragmentationSpec& spec);

// Loads candidate needle lines (plain text, one per line) and selects n
// whose character-length histogram matches the corpus per-line histogram
// by greedy bucket filling. Throws validation_error naming the line when
// a candidate equals any corpus line case-insensitively.
NeedlePool build_needle_pool(const DocumentSet& corpus,
                             const std::string& candidate_file, std::size_t n);

// JSONL persistence for generated instances.
void save_instances(const std::vector<TaskInstance>& instances,
                    const std::string& path);
std::vector<TaskInstance> load_instances(const std::string& path);

}  // namespace fragbench
