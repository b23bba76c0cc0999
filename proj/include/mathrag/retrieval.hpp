#pragma once

#include "mathrag/document.hpp"
#include "mathrag/embedding.hpp"
#include "mathrag/hnsw.hpp"

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mathrag {

struct ChunkingConfig {
    int max_chunk_chars = 1000;
    int overlap_chars = 100;
};

struct IndexConfig {
    int dim = 256;
    int hnsw_m = 16;
    int ef_construction = 200;
    int ef_search = 128;
    int k_dense = 200;
    int k_final = 5;
    std::uint64_t seed = 42;
};

// Splits oversized documents into overlapping chunks. Documents at or
// under the limit pass through unchanged (same id); larger ones become
// "<id>#<n>" chunks whose metadata records parent, byte offset, and the
// overlap with the previous chunk. Chunk boundaries never split a UTF-8
// sequence. qa_pair documents are never split regardless of size, since a
// question torn from its answer is useless as retrieved knowledge.
// Output is ordered by (document id, offset).
std::vector<Document> chunk_corpus(std::span<const Document> docs, const ChunkingConfig& cfg);

// Drops chunks whose text exactly duplicates an earlier chunk's; the
// first occurrence in input order survives, which is deterministic given
// chunk_corpus's (id, offset) output ordering.
std::vector<Document> dedupe_chunks(std::vector<Document> chunks);

// Scores query/document pairs; higher is more relevant. Scores need not
// be bounded but must be deterministic.
class Reranker {
public:
    virtual ~Reranker() = default;
    virtual std::vector<double> score(const std::string& query, std::span<const Document> docs) = 0;
};

// Token-set Jaccard overlap between query and document. A stand-in
// cross-scorer with the right shape: deterministic, query-dependent, and
// monotone in lexical overlap.
class LexicalReranker : public Reranker {
public:
    std::vector<double> score(const std::string& query, std::span<const Document> docs) override;
};

// Remote cross-encoder speaking the rerank wire format:
//   request  {"query": ..., "documents": [texts...], "model"?: ...}
//   response {"results": [{"index": i, "relevance_score": s}, ...]}
class HttpReranker : public Reranker {
public:
    explicit HttpReranker(HttpEndpointConfig cfg);
    std::vector<double> score(const std::string& query, std::span<const Document> docs) override;

private:
    HttpEndpointConfig cfg_;
};

// Orders candidates by reranker score descending (ties by id ascending)
// and keeps the top k_final, assigning 1-based ranks. dense_score on the
// inputs is preserved.
std::vector<ScoredDocument> rerank(const std::string& query, std::vector<ScoredDocument> candidates,
                                   int k_final, Reranker& reranker);

// Embeds chunk texts (in id order) and builds the ANN index over them.
HnswIndex build_dense_index(std::span<const Document> chunks, Embedder& embedder, const IndexConfig& cfg);

class Retriever {
public:
    virtual ~Retriever() = default;
    virtual std::vector<ScoredDocument> retrieve(const std::string& query) = 0;
};

// Dense candidate generation over the ANN index followed by reranking:
// k_dense candidates in, k_final survivors out. Stage failures surface as
// PipelineError naming the stage.
class TwoStagePipeline : public Retriever {
public:
    // chunks must match the ids the index was built over.
    TwoStagePipeline(std::vector<Document> chunks, HnswIndex index, std::shared_ptr<Embedder> embedder,
                     std::shared_ptr<Reranker> reranker, IndexConfig cfg);

    std::vector<ScoredDocument> retrieve(const std::string& query) override;

    const IndexConfig& config() const { return cfg_; }
    std::size_t corpus_size() const { return by_id_.size(); }

private:
    std::map<std::string, Document> by_id_;
    HnswIndex index_;
    std::shared_ptr<Embedder> embedder_;
    std::shared_ptr<Reranker> reranker_;
    IndexConfig cfg_;
};

} // namespace mathrag
