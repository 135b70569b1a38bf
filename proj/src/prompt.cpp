#include "fragbench/prompt.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "fragbench/errors.hpp"
#include "fragbench/rng.hpp"

namespace fragbench {

using nlohmann::json;

namespace {

const char* kAbsenceSystem =
    "You are helping someone identify missing components from a {document_type}. "
    "The person will provide their version of the {document_type}, but they may "
    "have missed some lines. Your task is to identify exactly which lines are "
    "missing from their version. List only the missing lines, nothing else.";

const char* kAbsenceUser =
    "Here is the complete original {document_type}:\n"
    "{original_context}\n"
    "Now, here is my recitation which may be missing some lines:\n"
    "{modified_context}\n"
    "What lines did I miss? Please list only the missing lines, nothing else.";

const char* kInsertionSystem =
    "You are helping someone identify components that were added to a "
    "{document_type}. The person will provide their version of the "
    "{document_type}, but they may have added some random lines that were not "
    "in the original text. Your task is to identify exactly which lines are not "
    "in the original {document_type}. List only the extra lines, nothing else.";

const char* kInsertionUser =
    "Here is the complete original {document_type}:\n"
    "{original_context}\n"
    "Now, here is my recitation with some extra lines that were not in the "
    "original {document_type}:\n"
    "{modified_context}\n"
    "What lines did I add to the {document_type}? Please list only the extra "
    "lines, nothing else.";

const char* kMathUser =
    "Question: {question}\n"
    "Solve the problem step by step and end with 'The answer is #### [result]'.";

const char* kIclHeader = "Below are some examples of the task:";

std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i) out.push_back('\n');
        out += lines[i];
    }
    return out;
}

// Single pass over the template; values are emitted verbatim, so
// placeholder-looking text inside document content is never re-expanded.
std::string fill_template(
    std::string_view tmpl,
    const std::vector<std::pair<std::string_view, const std::string*>>& values) {
    std::string out;
    out.reserve(tmpl.size() + 64);
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            bool matched = false;
            for (const auto& [name, value] : values) {
                if (tmpl.compare(i, name.size(), name) == 0) {
                    out += *value;
                    i += name.size();
                    matched = true;
                    break;
                }
            }
            if (matched) continue;
        }
        out.push_back(tmpl[i]);
        ++i;
    }
    return out;
}

std::string render_icl_prefix(const std::vector<IclExample>& examples) {
    std::string prefix = kIclHeader;
    prefix.push_back('\n');
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const IclExample& ex = examples[i];
        prefix += "Example " + std::to_string(i + 1) + ":\n";
        prefix += "Here is the complete original document:\n";
        prefix += join_lines(ex.original_context) + "\n";
        prefix += "Now, here is my recitation which may be missing some lines:\n";
        prefix += join_lines(ex.modified_context) + "\n";
        prefix += "What lines did I miss? Please list only the missing lines, nothing else.\n";
        prefix += "Answer:\n";
        prefix += join_lines(ex.answer_lines) + "\n";
        prefix += "---\n";
    }
    return prefix;
}

}  // namespace

std::string template_version() { return "templates-v1"; }

RenderedPrompt render_absence_prompt(const TaskInstance& instance,
                                     const std::string& domain_label,
                                     const std::vector<IclExample>* icl) {
    if (instance.task != TaskKind::absence)
        throw std::invalid_argument("render_absence_prompt: instance is not an absence task");

    RenderedPrompt prompt;
    prompt.domain_label = domain_label;
    prompt.system_text =
        fill_template(kAbsenceSystem, {{"{document_type}", &domain_label}});

    const std::string original = join_lines(instance.original_context);
    const std::string modified = join_lines(instance.modified_context);
    std::string user = fill_template(kAbsenceUser, {{"{document_type}", &domain_label},
                                                    {"{original_context}", &original},
                                                    {"{modified_context}", &modified}});

    if (icl && !icl->empty()) {
        prompt.icl_used = true;
        prompt.user_text = render_icl_prefix(*icl) + user;
    } else {
        prompt.user_text = std::move(user);
    }
    return prompt;
}

RenderedPrompt render_insertion_prompt(const TaskInstance& instance,
                                       const std::string& domain_label) {
    if (instance.task != TaskKind::insertion)
        throw std::invalid_argument(
            "render_insertion_prompt: instance is not an insertion task");

    RenderedPrompt prompt;
    prompt.domain_label = domain_label;
    prompt.system_text =
        fill_template(kInsertionSystem, {{"{document_type}", &domain_label}});

    const std::string original = join_lines(instance.original_context);
    const std::string modified = join_lines(instance.modified_context);
    prompt.user_text = fill_template(kInsertionUser, {{"{document_type}", &domain_label},
                                                      {"{original_context}", &original},
                                                      {"{modified_context}", &modified}});
    return prompt;
}

RenderedPrompt render_math_prompt(const std::string& question_text) {
    if (question_text.empty())
        throw std::invalid_argument("render_math_prompt: empty question");

    RenderedPrompt prompt;
    prompt.domain_label = "Mathematical Reasoning";
    prompt.user_text = fill_template(kMathUser, {{"{question}", &question_text}});
    return prompt;
}

std::vector<IclSource> load_icl_asset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open ICL asset: " + path);

    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("examples"))
        throw parse_error("ICL asset " + path + ": expected {\"examples\": [...]}");

    std::vector<IclSource> sources;
    for (const auto& entry : doc["examples"]) {
        IclSource src;
        for (const auto& line : entry.at("lines")) src.lines.push_back(line.get<std::string>());
        for (const auto& idx : entry.at("omit_indices"))
            src.omit_indices.push_back(idx.get<std::size_t>());
        src.stated_wfr = entry.at("stated_wfr").get<double>();
        if (src.lines.empty() || src.omit_indices.empty())
            throw parse_error("ICL asset " + path + ": example with no lines or targets");
        for (std::size_t idx : src.omit_indices)
            if (idx >= src.lines.size())
                throw parse_error("ICL asset " + path + ": omit index out of range");
        sources.push_back(std::move(src));
    }
    if (sources.empty()) throw parse_error("ICL asset " + path + ": no examples");
    return sources;
}

std::vector<IclExample> make_icl_examples(const std::vector<IclSource>& sources,
                                          std::optional<double> wfr_override,
                                          std::uint64_t seed) {
    std::vector<IclExample> examples;
    examples.reserve(sources.size());
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const IclSource& src = sources[i];
        FragmentationSpec spec;
        spec.mode = FragMode::random_slot;
        spec.p = wfr_override ? *wfr_override : src.stated_wfr;
        spec.frag_seed = mix64(seed, i);
        auto frag = random_slot_fragment(src.lines, spec);

        IclExample ex;
        ex.wfr_level = spec.p;
        ex.original_context = frag.lines;
        std::vector<bool> omitted(frag.lines.size(), false);
        for (std::size_t idx : src.omit_indices) omitted[idx] = true;
        for (std::size_t li = 0; li < frag.lines.size(); ++li) {
            if (omitted[li])
                ex.answer_lines.push_back(frag.lines[li]);
            else
                ex.modified_context.push_back(frag.lines[li]);
        }
        examples.push_back(std::move(ex));
    }
    return examples;
}

}  // namespace fragbench
