#include "mathrag/retrieval.hpp"

#include "mathrag/errors.hpp"
#include "mathrag/util.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

namespace mathrag {

namespace {

bool is_utf8_continuation(unsigned char c) {
    return (c & 0xC0) == 0x80;
}

// Largest position <= pos that does not land inside a UTF-8 sequence.
std::size_t snap_back(const std::string& text, std::size_t pos) {
    while (pos > 0 && pos < text.size() && is_utf8_continuation(static_cast<unsigned char>(text[pos]))) {
        --pos;
    }
    return pos;
}

// Smallest position >= pos that does not land inside a UTF-8 sequence.
std::size_t snap_forward(const std::string& text, std::size_t pos) {
    while (pos < text.size() && is_utf8_continuation(static_cast<unsigned char>(text[pos]))) {
        ++pos;
    }
    return pos;
}

void append_chunks_for(const Document& doc, const ChunkingConfig& cfg, std::vector<Document>& out) {
    const std::string& text = doc.text;
    const auto max_chars = static_cast<std::size_t>(cfg.max_chunk_chars);

    if (doc.source == "qa_pair" || text.size() <= max_chars) {
        out.push_back(doc);
        return;
    }

    std::size_t start = 0;
    std::size_t prev_end = 0;
    int chunk_index = 0;
    while (start < text.size()) {
        std::size_t end = start + max_chars;
        if (end >= text.size()) {
            end = text.size();
        } else {
            end = snap_back(text, end);
            // Multibyte pile-up at the boundary; take at least one
            // codepoint so the loop always advances.
            if (end <= start) end = snap_forward(text, start + 1);
        }

        Document chunk;
        chunk.id = doc.id + "#" + std::to_string(chunk_index);
        chunk.text = text.substr(start, end - start);
        chunk.source = doc.source;
        chunk.metadata = doc.metadata;
        chunk.metadata["parent"] = doc.id;
        chunk.metadata["offset"] = std::to_string(start);
        chunk.metadata["overlap"] = std::to_string(chunk_index == 0 ? 0 : prev_end - start);
        out.push_back(std::move(chunk));

        if (end >= text.size()) break;
        prev_end = end;
        std::size_t next = end - std::min<std::size_t>(static_cast<std::size_t>(cfg.overlap_chars), end - start - 1);
        start = snap_forward(text, next);
        if (start >= end) start = end; // overlap swallowed by UTF-8 snapping
        ++chunk_index;
    }
}

} // namespace

std::vector<Document> chunk_corpus(std::span<const Document> docs, const ChunkingConfig& cfg) {
    if (cfg.max_chunk_chars < 16) throw ValidationError("chunking: max_chunk_chars must be at least 16");
    if (cfg.overlap_chars < 0) throw ValidationError("chunking: negative overlap");
    if (cfg.overlap_chars >= cfg.max_chunk_chars) {
        throw ValidationError("chunking: overlap must be smaller than max_chunk_chars");
    }

    std::vector<const Document*> sorted;
    sorted.reserve(docs.size());
    std::set<std::string> seen_ids;
    for (const Document& d : docs) {
        if (d.id.empty()) throw ValidationError("chunking: document with empty id");
        if (trim(d.text).empty()) throw ValidationError("chunking: document '" + d.id + "' has empty text");
        if (contains(d.id, "#")) {
            throw ValidationError("chunking: document id '" + d.id + "' contains reserved '#'");
        }
        if (!seen_ids.insert(d.id).second) throw ValidationError("chunking: duplicate document id '" + d.id + "'");
        sorted.push_back(&d);
    }
    std::sort(sorted.begin(), sorted.end(), [](const Document* a, const Document* b) { return a->id < b->id; });

    std::vector<Document> out;
    for (const Document* d : sorted) append_chunks_for(*d, cfg, out);
    return out;
}

std::vector<Document> dedupe_chunks(std::vector<Document> chunks) {
    std::unordered_set<std::string> seen_texts;
    std::vector<Document> out;
    out.reserve(chunks.size());
    for (auto& c : chunks) {
        if (seen_texts.insert(c.text).second) {
            out.push_back(std::move(c));
        }
    }
    return out;
}

std::vector<double> LexicalReranker::score(const std::string& query, std::span<const Document> docs) {
    auto qtok = alnum_tokens(query);
    std::set<std::string> qset(qtok.begin(), qtok.end());
    std::vector<double> out;
    out.reserve(docs.size());
    for (const Document& d : docs) {
        auto dtok = alnum_tokens(d.text);
        std::set<std::string> dset(dtok.begin(), dtok.end());
        std::size_t inter = 0;
        for (const auto& t : qset) inter += dset.count(t);
        std::size_t uni = qset.size() + dset.size() - inter;
        out.push_back(uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni));
    }
    return out;
}

std::vector<ScoredDocument> rerank(const std::string& query, std::vector<ScoredDocument> candidates,
                                   int k_final, Reranker& reranker) {
    if (k_final <= 0) throw ValidationError("rerank: k_final must be positive");
    if (candidates.empty()) return {};

    std::vector<Document> docs;
    docs.reserve(candidates.size());
    for (const auto& c : candidates) docs.push_back(c.doc);
    std::vector<double> scores = reranker.score(query, docs);
    if (scores.size() != candidates.size()) {
        throw BackendProtocol("reranker returned " + std::to_string(scores.size()) + " scores for " +
                              std::to_string(candidates.size()) + " documents");
    }
    for (std::size_t i = 0; i < candidates.size(); ++i) candidates[i].rerank_score = scores[i];

    std::sort(candidates.begin(), candidates.end(), [](const ScoredDocument& a, const ScoredDocument& b) {
        if (a.rerank_score != b.rerank_score) return a.rerank_score > b.rerank_score;
        return a.doc.id < b.doc.id;
    });
    if (candidates.size() > std::size_t(k_final)) candidates.resize(std::size_t(k_final));
    for (std::size_t i = 0; i < candidates.size(); ++i) candidates[i].rank = static_cast<int>(i) + 1;
    return candidates;
}

HnswIndex build_dense_index(std::span<const Document> chunks, Embedder& embedder, const IndexConfig& cfg) {
    if (chunks.empty()) throw EmptyCorpus("cannot build an index over an empty corpus");
    if (embedder.dim() != cfg.dim) {
        throw DimensionMismatch("embedder dim " + std::to_string(embedder.dim()) + " != index dim " +
                                std::to_string(cfg.dim));
    }

    HnswParams params;
    params.dim = cfg.dim;
    params.m = cfg.hnsw_m;
    params.ef_construction = cfg.ef_construction;
    params.ef_search = cfg.ef_search;
    params.seed = cfg.seed;
    HnswIndex index(params);

    // Insertion in id order keeps builds reproducible no matter how the
    // chunk list was produced.
    std::vector<const Document*> sorted;
    sorted.reserve(chunks.size());
    for (const Document& c : chunks) sorted.push_back(&c);
    std::sort(sorted.begin(), sorted.end(), [](const Document* a, const Document* b) { return a->id < b->id; });

    constexpr std::size_t kBatch = 64;
    std::vector<std::string> texts;
    std::vector<const Document*> batch;
    auto flush = [&] {
        if (batch.empty()) return;
        auto vecs = embedder.embed(texts);
        for (std::size_t i = 0; i < batch.size(); ++i) index.add(batch[i]->id, vecs[i]);
        texts.clear();
        batch.clear();
    };
    for (const Document* c : sorted) {
        texts.push_back(c->text);
        batch.push_back(c);
        if (batch.size() == kBatch) flush();
    }
    flush();
    return index;
}

TwoStagePipeline::TwoStagePipeline(std::vector<Document> chunks, HnswIndex index,
                                   std::shared_ptr<Embedder> embedder, std::shared_ptr<Reranker> reranker,
                                   IndexConfig cfg)
    : index_(std::move(index)), embedder_(std::move(embedder)), reranker_(std::move(reranker)), cfg_(cfg) {
    if (chunks.empty()) throw EmptyCorpus("pipeline: empty chunk list");
    if (!embedder_) throw ValidationError("pipeline: null embedder");
    if (!reranker_) throw ValidationError("pipeline: null reranker");
    if (cfg_.k_dense < cfg_.k_final) throw ValidationError("pipeline: k_dense must be >= k_final");
    for (auto& c : chunks) {
        std::string id = c.id;
        if (!by_id_.emplace(std::move(id), std::move(c)).second) {
            throw ValidationError("pipeline: duplicate chunk id");
        }
    }
    if (by_id_.size() != index_.size()) {
        throw ValidationError("pipeline: chunk list (" + std::to_string(by_id_.size()) +
                              ") and index (" + std::to_string(index_.size()) + ") disagree");
    }
}

std::vector<ScoredDocument> TwoStagePipeline::retrieve(const std::string& query) {
    if (trim(query).empty()) throw InvalidQuery("empty retrieval query");

    std::vector<std::vector<float>> qvec;
    try {
        qvec = embedder_->embed({query});
    } catch (const std::exception& e) {
        throw PipelineError(PipelineStage::Embed, e.what());
    }

    std::vector<DenseHit> hits;
    try {
        hits = index_.search(qvec.at(0), cfg_.k_dense);
    } catch (const std::exception& e) {
        throw PipelineError(PipelineStage::DenseSearch, e.what());
    }

    std::vector<ScoredDocument> candidates;
    candidates.reserve(hits.size());
    for (const DenseHit& h : hits) {
        auto it = by_id_.find(h.id);
        if (it == by_id_.end()) {
            throw PipelineError(PipelineStage::DenseSearch, "index returned unknown id '" + h.id + "'");
        }
        ScoredDocument sd;
        sd.doc = it->second;
        sd.dense_score = h.score;
        candidates.push_back(std::move(sd));
    }

    try {
        return rerank(query, std::move(candidates), cfg_.k_final, *reranker_);
    } catch (const std::exception& e) {
        throw PipelineError(PipelineStage::Rerank, e.what());
    }
}

} // namespace mathrag
