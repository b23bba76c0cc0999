#include "mathrag/document.hpp"

#include "mathrag/errors.hpp"
#include "mathrag/util.hpp"

#include "json.hpp"

#include <fstream>
#include <set>

namespace mathrag {

using nlohmann::json;

std::string serialize_document(const Document& doc) {
    json j;
    j["id"] = doc.id;
    j["text"] = doc.text;
    j["source"] = doc.source;
    if (!doc.metadata.empty()) j["metadata"] = doc.metadata;
    return j.dump();
}

Document deserialize_document(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw MalformedRecord(std::string("document line is not valid JSON: ") + e.what(),
                              static_cast<std::size_t>(e.byte), "");
    }
    Document d;
    try {
        d.id = j.at("id").get<std::string>();
        d.text = j.at("text").get<std::string>();
        d.source = j.at("source").get<std::string>();
        if (j.contains("metadata")) {
            d.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
        }
    } catch (const json::exception& e) {
        throw MalformedRecord(std::string("document field error: ") + e.what(), 0, "");
    }
    if (d.id.empty()) throw InvariantViolation("empty document id", 0, "/id");
    if (d.text.empty()) throw InvariantViolation("empty text for '" + d.id + "'", 0, "/text");
    return d;
}

std::vector<Document> load_documents(const std::string& path) {
    const std::string text = read_file(path);
    std::vector<Document> out;
    std::set<std::string> seen;
    for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        Document d;
        try {
            d = deserialize_document(line);
        } catch (const Error& e) {
            throw MalformedRecord(path + ":" + std::to_string(line_no) + ": " + e.what(), 0, "");
        }
        if (!seen.insert(d.id).second) {
            throw InvariantViolation(path + ":" + std::to_string(line_no) + ": duplicate document id '" + d.id + "'", 0, "/id");
        }
        out.push_back(std::move(d));
    });
    return out;
}

void save_documents(const std::string& path, std::span<const Document> docs) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const Document& d : docs) out << serialize_document(d) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

} // namespace mathrag
