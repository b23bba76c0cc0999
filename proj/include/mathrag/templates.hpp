#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mathrag {

// Well-known template ids. The store accepts any *.txt files but these
// must all be present for the harness to run.
namespace template_id {
inline constexpr const char* kChat = "chat_llama3";
inline constexpr const char* kSystemAnswerOnly = "system_answer_only";
inline constexpr const char* kSystemCot = "system_cot";
inline constexpr const char* kSystemStaticRag = "system_static_rag";
inline constexpr const char* kSystemAdaptiveRag = "system_adaptive_rag";
inline constexpr const char* kIntegrationBlock = "integration_block";
inline constexpr const char* kSummaryExtract = "summary_extract";
} // namespace template_id

// Loads every *.txt in a directory, keyed by filename stem. Templates are
// stored byte-for-byte; callers must not normalize whitespace, since the
// prompts' exact spacing is part of the experimental setup.
class TemplateStore {
public:
    explicit TemplateStore(const std::filesystem::path& dir);

    const std::string& get(const std::string& id) const;
    bool has(const std::string& id) const;

    // Lowercase hex SHA-256 of the raw template bytes.
    const std::string& checksum(const std::string& id) const;

    std::vector<std::string> ids() const;

private:
    std::map<std::string, std::string> texts_;
    std::map<std::string, std::string> checksums_;
};

} // namespace mathrag
