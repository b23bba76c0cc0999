#include "doctest.h"

#include "mathrag/errors.hpp"
#include "mathrag/templates.hpp"
#include "mathrag/util.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

using namespace mathrag;

namespace {

const TemplateStore& store() {
    static TemplateStore s(MATHRAG_REPO_DIR "/templates");
    return s;
}

// Frozen digests of the prompt set. Prompt text is part of the measured
// system: a drive-by edit here changes every downstream transcript, so any
// intentional change must update this table in the same commit.
const std::map<std::string, std::string>& frozen_checksums() {
    static const std::map<std::string, std::string> sums = {
        {"chat_llama3", "28294b2a606313d760fcf11372b8de8bccb2e9f9ac9bff59ec1b5966ff639c29"},
        {"integration_block", "9e28d926a93e91b02a94d4ff400f9282044ef4e8f165192d13e073ab2b3147c7"},
        {"summary_extract", "2dba59c291988d9e7558b41328d2a7a51718fb620987380ce59826918bc69191"},
        {"system_adaptive_rag", "72ecd6440e8b81af6a380d6596d6ea72c30d929d816ae3c21b071a1fcb6c87d8"},
        {"system_answer_only", "875a3a0718b028f01e1ec606707337fbc6f3c3b6fd292c26238cf288f38969b6"},
        {"system_cot", "ba596e890183e70be14be868e85a941240f5f7cac9acc4ee225ae76c7802e5e6"},
        {"system_static_rag", "c5d838fe0972568034a1ecb894ee93109b030471f908ef8d14f974b762e4aa2a"},
    };
    return sums;
}

} // namespace

TEST_CASE("every template matches its frozen checksum") {
    for (const auto& [id, want] : frozen_checksums()) {
        CAPTURE(id);
        REQUIRE(store().has(id));
        CHECK(store().checksum(id) == want);
        // the store's checksum is really over the bytes it serves
        CHECK(sha256_hex(store().get(id)) == want);
    }
}

TEST_CASE("the store contains exactly the expected templates") {
    auto ids = store().ids();
    REQUIRE(ids.size() == frozen_checksums().size());
    for (const auto& id : ids) {
        CHECK(frozen_checksums().count(id) == 1);
    }
}

TEST_CASE("structural facts the pipeline depends on") {
    const auto& chat = store().get(template_id::kChat);
    CHECK(contains(chat, "{system}"));
    CHECK(contains(chat, "{user}"));
    CHECK(contains(chat, "<|begin_of_text|>"));
    // the assistant header is last so a prefix can be appended directly
    CHECK(chat.find("assistant") > chat.find("user"));

    const auto& integration = store().get(template_id::kIntegrationBlock);
    CHECK(contains(integration, "{injected_text}"));
    CHECK(contains(integration, "<retrieved_knowledge>"));
    CHECK(contains(integration, "</retrieved_knowledge>"));

    const auto& summary = store().get(template_id::kSummaryExtract);
    CHECK(contains(summary, "UNHELPFUL"));

    const auto& adaptive = store().get(template_id::kSystemAdaptiveRag);
    CHECK(contains(adaptive, "<search>"));
    CHECK(contains(adaptive, "</search>"));
    CHECK(contains(adaptive, "<answer>"));

    const auto& cot = store().get(template_id::kSystemCot);
    CHECK(contains(cot, "<think>"));
    CHECK(contains(cot, "<answer>"));
    // plain CoT must not invite searches
    CHECK(!contains(cot, "<search>"));

    const auto& static_rag = store().get(template_id::kSystemStaticRag);
    CHECK(contains(static_rag, "<answer>"));
    CHECK(!contains(static_rag, "<search>"));
}

TEST_CASE("a store with a missing template is rejected") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "mathrag_templates_partial";
    fs::remove_all(dir);
    fs::create_directories(dir);
    // copy all but one required template
    for (const auto& entry : fs::directory_iterator(MATHRAG_REPO_DIR "/templates")) {
        if (entry.path().filename() == "system_cot.txt") continue;
        fs::copy_file(entry.path(), dir / entry.path().filename());
    }
    CHECK_THROWS_AS(TemplateStore{dir}, ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("loading preserves bytes exactly") {
    // write a template set with trailing whitespace, CR bytes, and no final
    // newline, then confirm the store returns the identical bytes
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "mathrag_templates_bytes";
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const auto& entry : fs::directory_iterator(MATHRAG_REPO_DIR "/templates")) {
        fs::copy_file(entry.path(), dir / entry.path().filename());
    }
    std::string tricky = "line one  \r\n\ttab\nno trailing newline";
    {
        std::ofstream out(dir / "extra_probe.txt", std::ios::binary);
        out << tricky;
    }
    TemplateStore s(dir);
    CHECK(s.get("extra_probe") == tricky);
    fs::remove_all(dir);
}
