#include "fragbench/corpus.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "fragbench/errors.hpp"

using namespace fragbench;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& contents) {
    fs::path dir = fs::temp_directory_path() / "fragbench_corpus_test";
    fs::create_directories(dir);
    fs::path path = dir / name;
    std::ofstream out(path);
    out << contents;
    return path;
}

// Reference splitter used to cross-check split_period_lines: walks the
// text and records segment boundaries independently.
std::vector<std::string> reference_split(const std::string& text) {
    std::vector<std::string> out;
    std::string seg;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c == '\n') {
            if (!seg.empty()) out.push_back(seg);
            seg.clear();
            continue;
        }
        seg.push_back(c);
        bool splits = c == '.' && (i + 1 == text.size() || text[i + 1] == ' ' ||
                                   text[i + 1] == '\t' || text[i + 1] == '\r' ||
                                   text[i + 1] == '\n');
        if (splits) {
            out.push_back(seg);
            seg.clear();
            if (i + 1 < text.size()) ++i;
        }
    }
    if (!seg.empty()) out.push_back(seg);
    return out;
}

}  // namespace

TEST_SUITE_BEGIN("corpus");

TEST_CASE("load splits body on newlines and drops trailing empties") {
    auto path = temp_file("basic.jsonl",
                          R"({"id": "d1", "body": "A\nB\n"})"
                          "\n");
    auto set = load_documents(path.string(), Domain::legal);
    REQUIRE(set.documents.size() == 1);
    CHECK(set.documents[0].id == "d1");
    CHECK(set.documents[0].lines == std::vector<std::string>{"A", "B"});
}

TEST_CASE("empty file gives an empty set") {
    auto path = temp_file("empty.jsonl", "");
    auto set = load_documents(path.string(), Domain::legal);
    CHECK(set.documents.empty());
}

TEST_CASE("interior empty lines survive") {
    auto path = temp_file("interior.jsonl", R"({"id": "d", "body": "A\n\nB"})"
                                            "\n");
    auto set = load_documents(path.string(), Domain::legal);
    CHECK(set.documents[0].lines == std::vector<std::string>{"A", "", "B"});
}

TEST_CASE("duplicate id is a parse error") {
    auto path = temp_file("dup.jsonl",
                          R"({"id": "x", "body": "A"})"
                          "\n"
                          R"({"id": "x", "body": "B"})"
                          "\n");
    CHECK_THROWS_AS(load_documents(path.string(), Domain::legal), parse_error);
}

TEST_CASE("malformed record names its index") {
    auto path = temp_file("bad.jsonl",
                          R"({"id": "ok", "body": "A"})"
                          "\nnot json\n");
    try {
        load_documents(path.string(), Domain::legal);
        FAIL("expected parse_error");
    } catch (const parse_error& e) {
        CHECK(std::string(e.what()).find("record 2") != std::string::npos);
    }
}

TEST_CASE("missing fields and empty bodies are parse errors") {
    auto no_id = temp_file("noid.jsonl", R"({"body": "A"})"
                                         "\n");
    CHECK_THROWS_AS(load_documents(no_id.string(), Domain::legal), parse_error);

    auto empty_body = temp_file("emptybody.jsonl", R"({"id": "e", "body": ""})"
                                                   "\n");
    CHECK_THROWS_AS(load_documents(empty_body.string(), Domain::legal), parse_error);
}

TEST_CASE("unreadable file is an io error") {
    CHECK_THROWS_AS(load_documents("/nonexistent/nowhere.jsonl", Domain::legal), io_error);
}

TEST_CASE("save and load round trip") {
    DocumentSet set;
    set.documents.push_back({"a", Domain::github_pr, {"line 1", "line 2"}});
    set.documents.push_back({"b", Domain::github_pr, {"only"}});
    auto path = temp_file("roundtrip.jsonl", "");
    save_documents(set, path.string());
    auto loaded = load_documents(path.string(), Domain::github_pr);
    REQUIRE(loaded.documents.size() == 2);
    CHECK(loaded.documents[0].lines == set.documents[0].lines);
    CHECK(loaded.documents[1].lines == set.documents[1].lines);
}

TEST_CASE("period splitting keeps decimals intact") {
    auto lines = split_period_lines("I have 3.5 apples. I eat one.");
    CHECK(lines == std::vector<std::string>{"I have 3.5 apples.", "I eat one."});
}

TEST_CASE("period splitting handles newlines and end of text") {
    CHECK(split_period_lines("A.\nB") == std::vector<std::string>{"A.", "B"});
    CHECK(split_period_lines("one. two") == std::vector<std::string>{"one.", "two"});
    CHECK(split_period_lines("tail.") == std::vector<std::string>{"tail."});
    CHECK(split_period_lines("") == std::vector<std::string>{});
}

TEST_CASE("period splitting matches the reference implementation") {
    const std::string samples[] = {
        "Mary had 4.25 kg of flour. She used 1.5 kg.\nThen she bought more.",
        "No trailing period",
        "Multi.\n\nBlank lines. And more.",
        "Dots...everywhere. Even at the end...",
        "x. y. z.",
    };
    for (const auto& text : samples) CHECK(split_period_lines(text) == reference_split(text));
}

TEST_CASE("gsm8k grouping") {
    std::vector<GsmProblem> problems;
    for (int i = 0; i < 160; ++i)
        problems.push_back({"Question " + std::to_string(i) + " text. More.",
                            "Step one. The answer is #### " + std::to_string(i)});

    auto set = build_gsm8k_documents(problems, 80, 0);
    REQUIRE(set.documents.size() == 2);

    // Line count equals the sum of question and solution line counts.
    std::size_t expected = 0;
    for (int i = 0; i < 80; ++i)
        expected += split_period_lines(problems[i].question).size() +
                    split_period_lines(problems[i].solution).size();
    CHECK(set.documents[0].lines.size() == expected);
    CHECK(set.documents[0].domain == Domain::math);
}

TEST_CASE("gsm8k single problem document puts question lines before answer lines") {
    std::vector<GsmProblem> problems{{"First q line. Second q line.", "Answer line."}};
    auto set = build_gsm8k_documents(problems, 1, 0);
    REQUIRE(set.documents.size() == 1);
    CHECK(set.documents[0].lines ==
          std::vector<std::string>{"First q line.", "Second q line.", "Answer line."});
}

TEST_CASE("gsm8k reconstruction up to separators") {
    // Splitting loses only separator characters: joining the lines and
    // deleting whitespace reproduces the source with whitespace deleted.
    std::vector<GsmProblem> problems{
        {"Tom has 3 pens. He buys 2.5 more.\nHow many now?", "3 + 2.5 = 5.5. #### 5.5"}};
    auto set = build_gsm8k_documents(problems, 1, 0);
    auto strip_ws = [](const std::string& s) {
        std::string out;
        for (char c : s)
            if (c != ' ' && c != '\t' && c != '\n') out.push_back(c);
        return out;
    };
    std::string joined;
    for (const auto& line : set.documents[0].lines) joined += line;
    CHECK(strip_ws(joined) == strip_ws(problems[0].question + problems[0].solution));
}

TEST_CASE("gsm8k rejects bad group size and empty input") {
    std::vector<GsmProblem> problems{{"q", "a"}};
    CHECK_THROWS_AS(build_gsm8k_documents(problems, 0, 0), std::invalid_argument);
    CHECK_THROWS_AS(build_gsm8k_documents({}, 80, 0), std::invalid_argument);
}

TEST_CASE("sampling keeps order and is deterministic") {
    DocumentSet set;
    for (int i = 0; i < 600; ++i)
        set.documents.push_back({"doc-" + std::to_string(i), Domain::math, {"x"}});

    auto sample = sample_documents(set, 500, 42);
    CHECK(sample.documents.size() == 500);
    CHECK(sample.sample_seed == 42);

    // Relative order preserved, no repeats.
    std::size_t last = 0;
    bool first = true;
    std::set<std::string> seen;
    for (const auto& doc : sample.documents) {
        std::size_t idx = std::stoul(doc.id.substr(4));
        if (!first) CHECK(idx > last);
        last = idx;
        first = false;
        CHECK(seen.insert(doc.id).second);
    }

    auto again = sample_documents(set, 500, 42);
    for (std::size_t i = 0; i < sample.documents.size(); ++i)
        CHECK(sample.documents[i].id == again.documents[i].id);

    auto other_seed = sample_documents(set, 500, 43);
    bool any_diff = false;
    for (std::size_t i = 0; i < sample.documents.size(); ++i)
        any_diff = any_diff || sample.documents[i].id != other_seed.documents[i].id;
    CHECK(any_diff);
}

TEST_CASE("full sample returns the set unchanged") {
    DocumentSet set;
    for (int i = 0; i < 5; ++i)
        set.documents.push_back({"d" + std::to_string(i), Domain::legal, {"x"}});
    auto sample = sample_documents(set, 5, 7);
    REQUIRE(sample.documents.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(sample.documents[i].id == set.documents[i].id);
}

TEST_CASE("sample size out of range") {
    DocumentSet set;
    set.documents.push_back({"only", Domain::legal, {"x"}});
    CHECK_THROWS_AS(sample_documents(set, 2, 1), std::invalid_argument);
    CHECK_THROWS_AS(sample_documents(set, 0, 1), std::invalid_argument);
}

TEST_CASE("domain names round trip") {
    for (auto d : {Domain::legal, Domain::github_pr, Domain::math})
        CHECK(domain_from_name(domain_name(d)) == d);
    CHECK(domain_label(Domain::legal) == "Legal Documents");
    CHECK(domain_label(Domain::github_pr) == "Github PRs");
    CHECK(domain_label(Domain::math) == "Mathematical Reasoning");
    CHECK_THROWS_AS(domain_from_name("bogus"), std::invalid_argument);
}

TEST_SUITE_END();
