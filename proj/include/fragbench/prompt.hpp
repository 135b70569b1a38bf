#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fragbench/taskgen.hpp"

namespace fragbench {

struct RenderedPrompt {
    std::string system_text;  // empty for the math task
    std::string user_text;
    bool icl_used = false;
    std::string domain_label;
};

// One worked demonstration for the ICL prefix, already fragmented at a
// stated level. answer_lines are exactly the lines present in
// original_context but absent from modified_context.
struct IclExample {
    std::vector<std::string> original_context;
    std::vector<std::string> modified_context;
    std::vector<std::string> answer_lines;
    double wfr_level = 0.0;
};

// Clean source for an ICL example as stored in the asset file.
struct IclSource {
    std::vector<std::string> lines;
    std::vector<std::size_t> omit_indices;
    double stated_wfr = 0.0;
};

std::vector<IclSource> load_icl_asset(const std::string& path);

// Fragments each source at wfr_override (when set) or its stated level,
// and builds the original/modified/answer triple from the omit indices.
// The internal fragmentation seed is fixed so rendered prompts are
// reproducible.
std::vector<IclExample> make_icl_examples(const std::vector<IclSource>& sources,
                                          std::optional<double> wfr_override,
                                          std::uint64_t seed);

RenderedPrompt render_absence_prompt(const TaskInstance& instance,
                                     const std::string& domain_label,
                                     const std::vector<IclExample>* icl = nullptr);

// No ICL prefix exists for the insertion task.
RenderedPrompt render_insertion_prompt(const TaskInstance& instance,
                                       const std::string& domain_label);

// User message only; the system text is empty.
RenderedPrompt render_math_prompt(const std::string& question_text);

// Template revision recorded in run manifests; bump when any template
// byte changes.
std::string template_version();

}  // namespace fragbench
