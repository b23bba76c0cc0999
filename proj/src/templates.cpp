#include "mathrag/templates.hpp"

#include "mathrag/errors.hpp"
#include "mathrag/util.hpp"

#include <algorithm>

namespace mathrag {

TemplateStore::TemplateStore(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
        throw IoError("template directory not found: " + dir.string());
    }
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        std::string id = entry.path().stem().string();
        std::string text = read_file(entry.path());
        checksums_[id] = sha256_hex(text);
        texts_[id] = std::move(text);
    }
    static const char* required[] = {
        template_id::kChat,         template_id::kSystemAnswerOnly,  template_id::kSystemCot,
        template_id::kSystemStaticRag, template_id::kSystemAdaptiveRag, template_id::kIntegrationBlock,
        template_id::kSummaryExtract,
    };
    for (const char* id : required) {
        if (!texts_.count(id)) {
            throw ConfigError("missing required template '" + std::string(id) + "' in " + dir.string());
        }
    }
}

const std::string& TemplateStore::get(const std::string& id) const {
    auto it = texts_.find(id);
    if (it == texts_.end()) throw ConfigError("unknown template id '" + id + "'");
    return it->second;
}

bool TemplateStore::has(const std::string& id) const {
    return texts_.count(id) != 0;
}

const std::string& TemplateStore::checksum(const std::string& id) const {
    auto it = checksums_.find(id);
    if (it == checksums_.end()) throw ConfigError("unknown template id '" + id + "'");
    return it->second;
}

std::vector<std::string> TemplateStore::ids() const {
    std::vector<std::string> out;
    out.reserve(texts_.size());
    for (const auto& [id, _] : texts_) out.push_back(id);
    return out;
}

} // namespace mathrag
