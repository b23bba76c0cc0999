#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace mathrag {

struct HnswParams {
    int dim = 0;
    int m = 16;                // links per node on upper layers; layer 0 gets 2*m
    int ef_construction = 200; // beam width while inserting
    int ef_search = 128;       // default beam width while querying
    std::uint64_t seed = 42;   // level assignment RNG
};

struct DenseHit {
    std::string id;
    float score = 0.0f; // cosine similarity (vectors are unit length)

    bool operator==(const DenseHit&) const = default;
};

// In-memory HNSW graph over unit vectors, cosine similarity via dot
// product. Construction is sequential and seeded, so the same insertion
// order always yields the same graph and the same search results.
//
// Queries fall back to an exact scan whenever the beam would cover the
// whole collection anyway (n <= max(ef, k)), which also guarantees exact
// results on small corpora.
class HnswIndex {
public:
    explicit HnswIndex(HnswParams params);

    // id must be unique; vec must have params.dim entries and unit norm
    // (checked to a loose tolerance).
    void add(const std::string& id, std::span<const float> vec);

    // Top-k by cosine score, descending, ties broken by id ascending.
    // Returns fewer than k when the index is smaller. ef_override > 0
    // widens/narrows the beam for this query only.
    std::vector<DenseHit> search(std::span<const float> query, int k, int ef_override = 0) const;

    std::size_t size() const { return ids_.size(); }
    const HnswParams& params() const { return params_; }

    void save(const std::filesystem::path& path) const;
    static HnswIndex load(const std::filesystem::path& path);

    bool operator==(const HnswIndex& other) const;

private:
    struct Candidate {
        float dist;
        std::uint32_t node;
    };

    int random_level();
    float dist(std::span<const float> a, std::uint32_t node) const;
    std::span<const float> vec(std::uint32_t node) const;
    std::vector<std::uint32_t>& links(std::uint32_t node, int layer);
    const std::vector<std::uint32_t>& links(std::uint32_t node, int layer) const;
    int max_links(int layer) const;

    // Beam search on one layer from the given entry points; returns up to
    // ef nearest candidates (unsorted heap order).
    std::vector<Candidate> search_layer(std::span<const float> q, std::vector<Candidate> entries, int ef,
                                        int layer) const;

    // Heuristic neighbor selection over candidates carrying their distance
    // to the insertion point: keeps those closer to it than to any already-
    // selected neighbor, then backfills with the pruned ones.
    std::vector<std::uint32_t> select_neighbors(std::vector<Candidate> candidates, int m) const;

    HnswParams params_;
    std::mt19937_64 rng_;
    double level_mult_ = 0.0;

    std::vector<std::string> ids_;
    std::unordered_set<std::string> id_lookup_;
    std::vector<float> vectors_; // flat, size() * dim
    std::vector<int> levels_;
    // adjacency_[node][layer] = neighbor node indices
    std::vector<std::vector<std::vector<std::uint32_t>>> adjacency_;
    std::int64_t entry_point_ = -1;
    int top_level_ = -1;
};

} // namespace mathrag
