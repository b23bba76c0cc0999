#include "mathrag/hnsw.hpp"

#include "mathrag/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>
#include <unordered_set>

namespace mathrag {

namespace {

constexpr char kMagic[8] = {'M', 'R', 'A', 'G', 'H', 'N', 'S', 'W'};
constexpr std::uint32_t kFormatVersion = 1;

// Orders a max-heap by distance so the worst candidate is on top;
// node index breaks ties for fully deterministic heap behavior.
struct FartherFirst {
    bool operator()(const auto& a, const auto& b) const {
        if (a.dist != b.dist) return a.dist < b.dist;
        return a.node < b.node;
    }
};

struct CloserFirst {
    bool operator()(const auto& a, const auto& b) const {
        if (a.dist != b.dist) return a.dist > b.dist;
        return a.node > b.node;
    }
};

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    write_u32(out, static_cast<std::uint32_t>(v));
    write_u32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IoError("index file truncated");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

std::uint64_t read_u64(std::istream& in) {
    std::uint64_t lo = read_u32(in);
    std::uint64_t hi = read_u32(in);
    return lo | (hi << 32);
}

} // namespace

HnswIndex::HnswIndex(HnswParams params) : params_(params), rng_(params.seed) {
    if (params_.dim <= 0) throw ValidationError("hnsw: dim must be positive");
    if (params_.m < 2) throw ValidationError("hnsw: m must be at least 2");
    if (params_.ef_construction < params_.m) throw ValidationError("hnsw: ef_construction must be >= m");
    if (params_.ef_search < 1) throw ValidationError("hnsw: ef_search must be positive");
    level_mult_ = 1.0 / std::log(static_cast<double>(params_.m));
}

int HnswIndex::random_level() {
    // Geometric-ish level distribution; the standard -ln(U)*mL draw.
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double u = unif(rng_);
    if (u <= 0.0) u = 1e-300;
    return static_cast<int>(-std::log(u) * level_mult_);
}

std::span<const float> HnswIndex::vec(std::uint32_t node) const {
    return {vectors_.data() + std::size_t(node) * std::size_t(params_.dim), std::size_t(params_.dim)};
}

float HnswIndex::dist(std::span<const float> a, std::uint32_t node) const {
    std::span<const float> b = vec(node);
    float dot = 0.0f;
    for (int i = 0; i < params_.dim; ++i) dot += a[std::size_t(i)] * b[std::size_t(i)];
    return 1.0f - dot;
}

std::vector<std::uint32_t>& HnswIndex::links(std::uint32_t node, int layer) {
    return adjacency_[node][std::size_t(layer)];
}

const std::vector<std::uint32_t>& HnswIndex::links(std::uint32_t node, int layer) const {
    return adjacency_[node][std::size_t(layer)];
}

int HnswIndex::max_links(int layer) const {
    return layer == 0 ? 2 * params_.m : params_.m;
}

std::vector<HnswIndex::Candidate> HnswIndex::search_layer(std::span<const float> q,
                                                          std::vector<Candidate> entries, int ef,
                                                          int layer) const {
    std::priority_queue<Candidate, std::vector<Candidate>, CloserFirst> to_visit;
    std::priority_queue<Candidate, std::vector<Candidate>, FartherFirst> best;
    std::unordered_set<std::uint32_t> visited;

    for (const Candidate& c : entries) {
        if (visited.insert(c.node).second) {
            to_visit.push(c);
            best.push(c);
        }
    }
    while (best.size() > std::size_t(ef)) best.pop();

    while (!to_visit.empty()) {
        Candidate cur = to_visit.top();
        to_visit.pop();
        if (best.size() >= std::size_t(ef) && cur.dist > best.top().dist) break;
        for (std::uint32_t nb : links(cur.node, layer)) {
            if (!visited.insert(nb).second) continue;
            float d = dist(q, nb);
            if (best.size() < std::size_t(ef) || d < best.top().dist) {
                to_visit.push({d, nb});
                best.push({d, nb});
                if (best.size() > std::size_t(ef)) best.pop();
            }
        }
    }

    std::vector<Candidate> out;
    out.reserve(best.size());
    while (!best.empty()) {
        out.push_back(best.top());
        best.pop();
    }
    return out;
}

std::vector<std::uint32_t> HnswIndex::select_neighbors(std::vector<Candidate> candidates, int m) const {
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        return a.node < b.node;
    });

    std::vector<std::uint32_t> selected;
    std::vector<Candidate> pruned;
    for (const Candidate& c : candidates) {
        if (static_cast<int>(selected.size()) >= m) break;
        // Keep c only if it is closer to q than to every selected
        // neighbor; this spreads links in sparse directions.
        bool keep = true;
        for (std::uint32_t s : selected) {
            float d_cs = dist(vec(c.node), s);
            if (d_cs < c.dist) {
                keep = false;
                break;
            }
        }
        if (keep) {
            selected.push_back(c.node);
        } else {
            pruned.push_back(c);
        }
    }
    // Backfill from pruned candidates so nodes keep enough links to stay
    // reachable even in tight clusters.
    for (const Candidate& c : pruned) {
        if (static_cast<int>(selected.size()) >= m) break;
        selected.push_back(c.node);
    }
    return selected;
}

void HnswIndex::add(const std::string& id, std::span<const float> vec_in) {
    if (id.empty()) throw ValidationError("hnsw: empty id");
    if (static_cast<int>(vec_in.size()) != params_.dim) {
        throw DimensionMismatch("hnsw: vector for '" + id + "' has dim " + std::to_string(vec_in.size()) +
                                ", index expects " + std::to_string(params_.dim));
    }
    float norm_sq = 0.0f;
    for (float x : vec_in) norm_sq += x * x;
    if (std::abs(norm_sq - 1.0f) > 0.01f) {
        throw ValidationError("hnsw: vector for '" + id + "' is not unit length");
    }
    if (!id_lookup_.insert(id).second) throw ValidationError("hnsw: duplicate id '" + id + "'");

    const auto node = static_cast<std::uint32_t>(ids_.size());
    ids_.push_back(id);
    vectors_.insert(vectors_.end(), vec_in.begin(), vec_in.end());
    const int node_level = random_level();
    levels_.push_back(node_level);
    adjacency_.emplace_back(std::size_t(node_level) + 1);

    std::span<const float> q = vec(node);

    if (entry_point_ < 0) {
        entry_point_ = node;
        top_level_ = node_level;
        return;
    }

    auto ep = static_cast<std::uint32_t>(entry_point_);
    std::vector<Candidate> entries{{dist(q, ep), ep}};

    // Greedy descent through layers above the node's level.
    for (int layer = top_level_; layer > node_level; --layer) {
        bool improved = true;
        while (improved) {
            improved = false;
            for (std::uint32_t nb : links(entries[0].node, layer)) {
                float d = dist(q, nb);
                if (d < entries[0].dist || (d == entries[0].dist && nb < entries[0].node)) {
                    entries[0] = {d, nb};
                    improved = true;
                }
            }
        }
    }

    // Connect on each layer from min(top_level, node_level) down to 0.
    for (int layer = std::min(top_level_, node_level); layer >= 0; --layer) {
        std::vector<Candidate> found = search_layer(q, entries, params_.ef_construction, layer);
        std::vector<std::uint32_t> neighbors = select_neighbors(found, max_links(layer));

        for (std::uint32_t nb : neighbors) {
            links(node, layer).push_back(nb);
            links(nb, layer).push_back(node);
            // Shrink the neighbor's list if it overflowed.
            auto& nb_links = links(nb, layer);
            int cap = max_links(layer);
            if (static_cast<int>(nb_links.size()) > cap) {
                std::vector<Candidate> cands;
                cands.reserve(nb_links.size());
                std::span<const float> nb_vec = vec(nb);
                for (std::uint32_t x : nb_links) cands.push_back({dist(nb_vec, x), x});
                nb_links = select_neighbors(std::move(cands), cap);
            }
        }
        entries = std::move(found);
    }

    if (node_level > top_level_) {
        top_level_ = node_level;
        entry_point_ = node;
    }
}

std::vector<DenseHit> HnswIndex::search(std::span<const float> query, int k, int ef_override) const {
    if (k <= 0) throw ValidationError("hnsw: k must be positive");
    if (static_cast<int>(query.size()) != params_.dim) {
        throw DimensionMismatch("hnsw: query has dim " + std::to_string(query.size()) + ", index expects " +
                                std::to_string(params_.dim));
    }
    if (ids_.empty()) return {};

    const int ef = std::max(ef_override > 0 ? ef_override : params_.ef_search, k);
    const auto n = static_cast<std::uint32_t>(ids_.size());

    std::vector<Candidate> found;
    if (n <= std::uint32_t(ef)) {
        // The beam would touch everything; scan exactly instead.
        found.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) found.push_back({dist(query, i), i});
    } else {
        auto ep = static_cast<std::uint32_t>(entry_point_);
        std::vector<Candidate> entries{{dist(query, ep), ep}};
        for (int layer = top_level_; layer > 0; --layer) {
            bool improved = true;
            while (improved) {
                improved = false;
                for (std::uint32_t nb : links(entries[0].node, layer)) {
                    float d = dist(query, nb);
                    if (d < entries[0].dist || (d == entries[0].dist && nb < entries[0].node)) {
                        entries[0] = {d, nb};
                        improved = true;
                    }
                }
            }
        }
        found = search_layer(query, std::move(entries), ef, 0);
    }

    std::vector<DenseHit> hits;
    hits.reserve(found.size());
    for (const Candidate& c : found) {
        hits.push_back({ids_[c.node], 1.0f - c.dist});
    }
    std::sort(hits.begin(), hits.end(), [](const DenseHit& a, const DenseHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    if (hits.size() > std::size_t(k)) hits.resize(std::size_t(k));
    return hits;
}

void HnswIndex::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open index file for writing: " + path.string());

    out.write(kMagic, sizeof kMagic);
    write_u32(out, kFormatVersion);
    write_u32(out, static_cast<std::uint32_t>(params_.dim));
    write_u32(out, static_cast<std::uint32_t>(params_.m));
    write_u32(out, static_cast<std::uint32_t>(params_.ef_construction));
    write_u32(out, static_cast<std::uint32_t>(params_.ef_search));
    write_u64(out, params_.seed);
    write_u32(out, static_cast<std::uint32_t>(ids_.size()));
    write_u32(out, static_cast<std::uint32_t>(entry_point_ + 1)); // 0 means none
    write_u32(out, static_cast<std::uint32_t>(top_level_ + 1));

    for (const auto& id : ids_) {
        write_u32(out, static_cast<std::uint32_t>(id.size()));
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
    }
    for (int level : levels_) write_u32(out, static_cast<std::uint32_t>(level));
    for (const auto& node_layers : adjacency_) {
        for (const auto& layer_links : node_layers) {
            write_u32(out, static_cast<std::uint32_t>(layer_links.size()));
            for (std::uint32_t nb : layer_links) write_u32(out, nb);
        }
    }
    out.write(reinterpret_cast<const char*>(vectors_.data()),
              static_cast<std::streamsize>(vectors_.size() * sizeof(float)));
    if (!out) throw IoError("write failed: " + path.string());
}

HnswIndex HnswIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open index file: " + path.string());

    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
        throw IoError("not an index file: " + path.string());
    }
    std::uint32_t version = read_u32(in);
    if (version != kFormatVersion) {
        throw IoError("unsupported index format version " + std::to_string(version) + " in " + path.string());
    }

    HnswParams params;
    params.dim = static_cast<int>(read_u32(in));
    params.m = static_cast<int>(read_u32(in));
    params.ef_construction = static_cast<int>(read_u32(in));
    params.ef_search = static_cast<int>(read_u32(in));
    params.seed = read_u64(in);

    HnswIndex index(params);
    std::uint32_t count = read_u32(in);
    index.entry_point_ = static_cast<std::int64_t>(read_u32(in)) - 1;
    index.top_level_ = static_cast<int>(read_u32(in)) - 1;

    index.ids_.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t len = read_u32(in);
        std::string id(len, '\0');
        in.read(id.data(), static_cast<std::streamsize>(len));
        if (!in) throw IoError("index file truncated: " + path.string());
        index.id_lookup_.insert(id);
        index.ids_.push_back(std::move(id));
    }
    index.levels_.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) index.levels_.push_back(static_cast<int>(read_u32(in)));
    index.adjacency_.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        index.adjacency_[i].resize(std::size_t(index.levels_[i]) + 1);
        for (auto& layer_links : index.adjacency_[i]) {
            std::uint32_t cnt = read_u32(in);
            layer_links.reserve(cnt);
            for (std::uint32_t j = 0; j < cnt; ++j) {
                std::uint32_t nb = read_u32(in);
                if (nb >= count) throw IoError("index file corrupt (bad link): " + path.string());
                layer_links.push_back(nb);
            }
        }
    }
    index.vectors_.resize(std::size_t(count) * std::size_t(params.dim));
    in.read(reinterpret_cast<char*>(index.vectors_.data()),
            static_cast<std::streamsize>(index.vectors_.size() * sizeof(float)));
    if (!in) throw IoError("index file truncated: " + path.string());
    return index;
}

bool HnswIndex::operator==(const HnswIndex& other) const {
    return params_.dim == other.params_.dim && params_.m == other.params_.m &&
           params_.ef_construction == other.params_.ef_construction &&
           params_.ef_search == other.params_.ef_search && params_.seed == other.params_.seed &&
           ids_ == other.ids_ && vectors_ == other.vectors_ && levels_ == other.levels_ &&
           adjacency_ == other.adjacency_ && entry_point_ == other.entry_point_ &&
           top_level_ == other.top_level_;
}

} // namespace mathrag
