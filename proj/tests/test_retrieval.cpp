#include "doctest.h"

#include "mathrag/errors.hpp"
#include "mathrag/retrieval.hpp"
#include "mathrag/util.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <string>

using namespace mathrag;

namespace {

Document make_doc(std::string id, std::string text, std::string source = "corpus") {
    Document d;
    d.id = std::move(id);
    d.text = std::move(text);
    d.source = std::move(source);
    return d;
}

bool valid_utf8(const std::string& s) {
    std::size_t i = 0;
    while (i < s.size()) {
        auto c = static_cast<unsigned char>(s[i]);
        int len;
        if (c < 0x80) len = 1;
        else if ((c & 0xE0) == 0xC0) len = 2;
        else if ((c & 0xF0) == 0xE0) len = 3;
        else if ((c & 0xF8) == 0xF0) len = 4;
        else return false;
        if (i + std::size_t(len) > s.size()) return false;
        for (int j = 1; j < len; ++j) {
            if ((static_cast<unsigned char>(s[i + std::size_t(j)]) & 0xC0) != 0x80) return false;
        }
        i += std::size_t(len);
    }
    return true;
}

// Stitches a document back together from its chunks using the recorded
// overlaps. Exact reconstruction is the correctness bar for chunking.
std::string reconstruct(const std::vector<Document>& chunks, const std::string& parent_id) {
    std::string text;
    bool first = true;
    for (const auto& c : chunks) {
        if (c.metadata.count("parent") == 0 || c.metadata.at("parent") != parent_id) continue;
        auto overlap = std::stoul(c.metadata.at("overlap"));
        if (first) {
            REQUIRE(overlap == 0);
            text = c.text;
            first = false;
        } else {
            REQUIRE(overlap <= c.text.size());
            text += c.text.substr(overlap);
        }
    }
    return text;
}

struct ThrowingEmbedder : Embedder {
    int dim() const override { return 8; }
    std::vector<std::vector<float>> embed(const std::vector<std::string>&) override {
        throw std::runtime_error("embedder exploded");
    }
};

struct ThrowingReranker : Reranker {
    std::vector<double> score(const std::string&, std::span<const Document>) override {
        throw std::runtime_error("reranker exploded");
    }
};

struct ShortReranker : Reranker {
    std::vector<double> score(const std::string&, std::span<const Document> docs) override {
        return std::vector<double>(docs.size() > 0 ? docs.size() - 1 : 0, 0.5);
    }
};

std::vector<Document> small_corpus() {
    return {
        make_doc("alg_01", "The difference of squares identity states a^2 - b^2 = (a - b)(a + b)."),
        make_doc("alg_02", "Completing the square rewrites x^2 + bx + c as (x + b/2)^2 + c - b^2/4."),
        make_doc("alg_03", "The quadratic formula gives the roots of ax^2 + bx + c = 0."),
        make_doc("geo_01", "The Pythagorean theorem relates the legs and hypotenuse of a right triangle."),
        make_doc("geo_02", "The area of a circle with radius r is pi times r squared."),
        make_doc("num_01", "A prime number has exactly two positive divisors, one and itself."),
        make_doc("num_02", "The greatest common divisor can be computed with the Euclidean algorithm."),
        make_doc("ser_01", "A geometric series with ratio r converges when the absolute value of r is below one."),
        make_doc("ser_02", "The sum of the first n positive integers equals n(n+1)/2."),
        make_doc("tri_01", "The law of cosines generalizes the Pythagorean theorem to arbitrary triangles."),
    };
}

} // namespace

TEST_CASE("documents at or under the limit pass through untouched") {
    auto docs = std::vector<Document>{make_doc("b", "short text two"), make_doc("a", "short text one")};
    auto chunks = chunk_corpus(docs, {.max_chunk_chars = 64, .overlap_chars = 8});
    REQUIRE(chunks.size() == 2);
    // output is id-sorted
    CHECK(chunks[0].id == "a");
    CHECK(chunks[0].text == "short text one");
    CHECK(chunks[0].metadata.count("parent") == 0);
    CHECK(chunks[1].id == "b");
}

TEST_CASE("oversized documents split with exact reconstruction") {
    std::mt19937 rng(20240818);
    std::string text;
    for (int i = 0; i < 700; ++i) {
        text += "word" + std::to_string(rng() % 1000) + " ";
    }
    auto docs = std::vector<Document>{make_doc("big", text)};
    ChunkingConfig cfg{.max_chunk_chars = 300, .overlap_chars = 40};
    auto chunks = chunk_corpus(docs, cfg);

    REQUIRE(chunks.size() > 3);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        CHECK(chunks[i].id == "big#" + std::to_string(i));
        CHECK(chunks[i].text.size() <= 300);
        CHECK(chunks[i].metadata.at("parent") == "big");
        // offset points at the chunk's exact position in the parent
        auto off = std::stoul(chunks[i].metadata.at("offset"));
        CHECK(text.compare(off, chunks[i].text.size(), chunks[i].text) == 0);
    }
    CHECK(reconstruct(chunks, "big") == text);
}

TEST_CASE("chunk boundaries never split a UTF-8 sequence") {
    // 2-, 3-, and 4-byte codepoints interleaved so fixed-width windows
    // would land mid-sequence without snapping.
    std::string motif = "é€𝄞x";
    std::string text;
    for (int i = 0; i < 200; ++i) text += motif;
    REQUIRE(valid_utf8(text));

    for (int max_chars : {16, 17, 23, 31, 100}) {
        CAPTURE(max_chars);
        auto docs = std::vector<Document>{make_doc("uni", text)};
        auto chunks = chunk_corpus(docs, {.max_chunk_chars = max_chars, .overlap_chars = 5});
        for (const auto& c : chunks) CHECK(valid_utf8(c.text));
        CHECK(reconstruct(chunks, "uni") == text);
    }
}

TEST_CASE("qa_pair documents are never split") {
    std::string long_qa(5000, 'q');
    auto docs = std::vector<Document>{make_doc("pair_1", long_qa, "qa_pair")};
    auto chunks = chunk_corpus(docs, {.max_chunk_chars = 100, .overlap_chars = 10});
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].id == "pair_1");
    CHECK(chunks[0].text == long_qa);
}

TEST_CASE("chunking input validation") {
    auto ok = std::vector<Document>{make_doc("a", "text")};
    CHECK_THROWS_AS(chunk_corpus(ok, {.max_chunk_chars = 8, .overlap_chars = 0}), ValidationError);
    CHECK_THROWS_AS(chunk_corpus(ok, {.max_chunk_chars = 100, .overlap_chars = 100}), ValidationError);
    CHECK_THROWS_AS(chunk_corpus(ok, {.max_chunk_chars = 100, .overlap_chars = -1}), ValidationError);

    auto dup = std::vector<Document>{make_doc("a", "x"), make_doc("a", "y")};
    CHECK_THROWS_AS(chunk_corpus(dup, {}), ValidationError);
    auto hash_id = std::vector<Document>{make_doc("a#0", "x")};
    CHECK_THROWS_AS(chunk_corpus(hash_id, {}), ValidationError);
    auto blank = std::vector<Document>{make_doc("a", "   ")};
    CHECK_THROWS_AS(chunk_corpus(blank, {}), ValidationError);
    auto no_id = std::vector<Document>{make_doc("", "x")};
    CHECK_THROWS_AS(chunk_corpus(no_id, {}), ValidationError);
}

TEST_CASE("dedupe keeps the first occurrence of each text") {
    std::vector<Document> chunks = {
        make_doc("a", "same"),
        make_doc("b", "different"),
        make_doc("c", "same"),
        make_doc("d", "same"),
    };
    auto out = dedupe_chunks(std::move(chunks));
    REQUIRE(out.size() == 2);
    CHECK(out[0].id == "a");
    CHECK(out[1].id == "b");
}

TEST_CASE("lexical reranker computes token-set Jaccard") {
    LexicalReranker rr;
    std::vector<Document> docs = {
        make_doc("d1", "sum of squares"),           // {sum, of, squares}
        make_doc("d2", "product of primes"),        // {product, of, primes}
        make_doc("d3", "THE SUM, the sum of sums"), // {the, sum, of, sums}
    };
    auto scores = rr.score("sum of squares", docs);
    REQUIRE(scores.size() == 3);
    CHECK(scores[0] == doctest::Approx(1.0));
    CHECK(scores[1] == doctest::Approx(1.0 / 5.0));
    CHECK(scores[2] == doctest::Approx(2.0 / 5.0));
}

TEST_CASE("rerank sorts by score with id tiebreak and assigns ranks") {
    struct FixedReranker : Reranker {
        std::vector<double> score(const std::string&, std::span<const Document> docs) override {
            std::vector<double> s;
            for (const auto& d : docs) {
                if (d.id == "w") s.push_back(0.9);
                else s.push_back(0.5); // x, y, z tie
            }
            return s;
        }
    };
    std::vector<ScoredDocument> cands;
    for (const char* id : {"z", "w", "y", "x"}) {
        ScoredDocument sd;
        sd.doc = make_doc(id, std::string("text ") + id);
        sd.dense_score = id[0] / 1000.0f;
        cands.push_back(sd);
    }
    FixedReranker rr;
    auto out = rerank("q", cands, 3, rr);
    REQUIRE(out.size() == 3);
    CHECK(out[0].doc.id == "w");
    CHECK(out[1].doc.id == "x");
    CHECK(out[2].doc.id == "y");
    CHECK(out[0].rank == 1);
    CHECK(out[1].rank == 2);
    CHECK(out[2].rank == 3);
    // dense scores ride along
    CHECK(out[0].dense_score == doctest::Approx('w' / 1000.0));

    SUBCASE("k_final larger than candidate list keeps everything") {
        auto all = rerank("q", cands, 10, rr);
        CHECK(all.size() == 4);
        CHECK(all[3].rank == 4);
    }
    SUBCASE("score count mismatch is a protocol error") {
        ShortReranker bad;
        CHECK_THROWS_AS(rerank("q", cands, 3, bad), BackendProtocol);
    }
    SUBCASE("k_final must be positive") {
        CHECK_THROWS_AS(rerank("q", cands, 0, rr), ValidationError);
    }
}

TEST_CASE("two-stage pipeline matches a brute-force oracle on a small corpus") {
    auto corpus = small_corpus();
    IndexConfig cfg;
    cfg.dim = 64;
    cfg.hnsw_m = 4;
    cfg.ef_construction = 32;
    cfg.ef_search = 16;
    cfg.k_dense = 6;
    cfg.k_final = 3;

    auto embedder = std::make_shared<HashingEmbedder>(cfg.dim);
    auto reranker = std::make_shared<LexicalReranker>();
    auto index = build_dense_index(corpus, *embedder, cfg);
    TwoStagePipeline pipeline(corpus, std::move(index), embedder, reranker, cfg);

    std::vector<std::string> queries = {
        "how do I factor a difference of squares",
        "area of a circle given its radius",
        "sum of the first n integers",
        "when does a geometric series converge",
    };
    for (const auto& query : queries) {
        CAPTURE(query);
        auto got = pipeline.retrieve(query);
        REQUIRE(got.size() == std::size_t(cfg.k_final));

        // Oracle: exact dense top-k_dense, then Jaccard rerank.
        auto qv = embedder->embed_one(query);
        std::vector<std::pair<float, std::string>> dense;
        std::map<std::string, const Document*> by_id;
        for (const auto& d : corpus) {
            auto dv = embedder->embed_one(d.text);
            float dot = 0.0f;
            for (std::size_t i = 0; i < qv.size(); ++i) dot += qv[i] * dv[i];
            dense.push_back({dot, d.id});
            by_id[d.id] = &d;
        }
        std::sort(dense.begin(), dense.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        dense.resize(std::size_t(cfg.k_dense));
        std::vector<ScoredDocument> cands;
        for (const auto& [score, id] : dense) {
            ScoredDocument sd;
            sd.doc = *by_id[id];
            sd.dense_score = score;
            cands.push_back(sd);
        }
        auto want = rerank(query, std::move(cands), cfg.k_final, *reranker);

        for (int i = 0; i < cfg.k_final; ++i) {
            CHECK(got[std::size_t(i)].doc.id == want[std::size_t(i)].doc.id);
            CHECK(got[std::size_t(i)].rank == i + 1);
            CHECK(got[std::size_t(i)].rerank_score ==
                  doctest::Approx(want[std::size_t(i)].rerank_score));
        }
    }
}

TEST_CASE("pipeline retrieval is deterministic across rebuilds") {
    auto corpus = small_corpus();
    IndexConfig cfg;
    cfg.dim = 64;
    cfg.k_dense = 5;
    cfg.k_final = 2;

    auto run = [&] {
        auto embedder = std::make_shared<HashingEmbedder>(cfg.dim);
        auto index = build_dense_index(corpus, *embedder, cfg);
        TwoStagePipeline p(corpus, std::move(index), embedder, std::make_shared<LexicalReranker>(), cfg);
        return p.retrieve("pythagorean theorem for right triangles");
    };
    auto first = run();
    auto second = run();
    REQUIRE(first.size() == second.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
        CHECK(first[i].doc.id == second[i].doc.id);
        CHECK(first[i].rerank_score == second[i].rerank_score);
    }
}

TEST_CASE("pipeline error reporting") {
    auto corpus = small_corpus();
    IndexConfig cfg;
    cfg.dim = 64;
    cfg.k_dense = 5;
    cfg.k_final = 2;
    auto embedder = std::make_shared<HashingEmbedder>(cfg.dim);
    auto index = build_dense_index(corpus, *embedder, cfg);

    SUBCASE("blank query") {
        TwoStagePipeline p(corpus, std::move(index), embedder, std::make_shared<LexicalReranker>(), cfg);
        CHECK_THROWS_AS(p.retrieve("  \n "), InvalidQuery);
    }
    SUBCASE("embed stage failure") {
        TwoStagePipeline p(corpus, std::move(index), std::make_shared<ThrowingEmbedder>(),
                           std::make_shared<LexicalReranker>(), cfg);
        try {
            p.retrieve("anything");
            FAIL("expected PipelineError");
        } catch (const PipelineError& e) {
            CHECK(e.stage == PipelineStage::Embed);
            CHECK(contains(e.what(), "embedder exploded"));
        }
    }
    SUBCASE("rerank stage failure") {
        TwoStagePipeline p(corpus, std::move(index), embedder, std::make_shared<ThrowingReranker>(), cfg);
        try {
            p.retrieve("anything");
            FAIL("expected PipelineError");
        } catch (const PipelineError& e) {
            CHECK(e.stage == PipelineStage::Rerank);
            CHECK(contains(e.what(), "reranker exploded"));
        }
    }
    SUBCASE("dense stage failure on wrong query dimension") {
        struct WrongDimEmbedder : Embedder {
            int dim() const override { return 64; }
            std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override {
                // claims 64 but produces 8-dim vectors, tripping the index
                std::vector<std::vector<float>> out(texts.size(), std::vector<float>(8, 0.0f));
                for (auto& v : out) v[0] = 1.0f;
                return out;
            }
        };
        TwoStagePipeline p(corpus, std::move(index), std::make_shared<WrongDimEmbedder>(),
                           std::make_shared<LexicalReranker>(), cfg);
        try {
            p.retrieve("anything");
            FAIL("expected PipelineError");
        } catch (const PipelineError& e) {
            CHECK(e.stage == PipelineStage::DenseSearch);
        }
    }
}

TEST_CASE("pipeline construction validation") {
    auto corpus = small_corpus();
    IndexConfig cfg;
    cfg.dim = 64;
    auto embedder = std::make_shared<HashingEmbedder>(cfg.dim);
    auto reranker = std::make_shared<LexicalReranker>();

    SUBCASE("empty chunks") {
        HnswIndex idx({.dim = 64});
        CHECK_THROWS_AS(TwoStagePipeline({}, std::move(idx), embedder, reranker, cfg), EmptyCorpus);
    }
    SUBCASE("index and chunk list size mismatch") {
        auto partial = corpus;
        partial.pop_back();
        auto idx = build_dense_index(corpus, *embedder, cfg);
        CHECK_THROWS_AS(TwoStagePipeline(partial, std::move(idx), embedder, reranker, cfg),
                        ValidationError);
    }
    SUBCASE("k_dense below k_final") {
        auto bad = cfg;
        bad.k_dense = 2;
        bad.k_final = 5;
        auto idx = build_dense_index(corpus, *embedder, bad);
        CHECK_THROWS_AS(TwoStagePipeline(corpus, std::move(idx), embedder, reranker, bad),
                        ValidationError);
    }
    SUBCASE("empty corpus rejected at index build") {
        std::vector<Document> none;
        CHECK_THROWS_AS(build_dense_index(none, *embedder, cfg), EmptyCorpus);
    }
    SUBCASE("embedder dim must match index config") {
        HashingEmbedder small(16);
        CHECK_THROWS_AS(build_dense_index(corpus, small, cfg), DimensionMismatch);
    }
}
