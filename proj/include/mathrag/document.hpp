#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mathrag {

// A unit of retrievable knowledge. After ingestion every Document is a
// chunk; metadata carries parent/offset/overlap for chunks split out of a
// larger source document.
struct Document {
    std::string id;
    std::string text;
    std::string source; // e.g. "math_text", "qa_pair", "encyclopedia"
    std::map<std::string, std::string> metadata;

    bool operator==(const Document&) const = default;
};

// A document as it came out of retrieval, with both stage scores.
// dense_score is cosine similarity from the ANN stage; rerank_score is the
// cross-scorer value that determined the final ordering.
struct ScoredDocument {
    Document doc;
    double dense_score = 0.0;
    double rerank_score = 0.0;
    int rank = 0; // 1-based position in the final ranking

    bool operator==(const ScoredDocument&) const = default;
};

// One line of JSON, no trailing newline.
std::string serialize_document(const Document& doc);

// Throws MalformedRecord on syntax problems or missing fields.
Document deserialize_document(std::string_view line);

// Corpus files are line-delimited documents with unique ids. Loading an
// empty file yields an empty corpus (ingesting nothing is legal); a
// damaged line reports path and line number.
std::vector<Document> load_documents(const std::string& path);
void save_documents(const std::string& path, std::span<const Document> docs);

} // namespace mathrag
