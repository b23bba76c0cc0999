#include "mathrag/embedding.hpp"

#include "mathrag/errors.hpp"
#include "mathrag/util.hpp"

#include <cmath>

namespace mathrag {

HashingEmbedder::HashingEmbedder(int dim, int ngram) : dim_(dim), ngram_(ngram) {
    if (dim <= 0) throw ValidationError("embedder dimension must be positive");
    if (ngram <= 0) throw ValidationError("embedder n-gram size must be positive");
}

std::vector<float> HashingEmbedder::embed_one(const std::string& text) {
    if (trim(text).empty()) throw ValidationError("cannot embed empty text");
    std::string lower = to_lower(text);

    std::vector<float> v(static_cast<std::size_t>(dim_), 0.0f);
    const std::size_t n = static_cast<std::size_t>(ngram_);
    if (lower.size() < n) {
        v[fnv1a64(lower) % static_cast<std::uint64_t>(dim_)] += 1.0f;
    } else {
        for (std::size_t i = 0; i + n <= lower.size(); ++i) {
            std::uint64_t h = fnv1a64(std::string_view(lower).substr(i, n));
            v[h % static_cast<std::uint64_t>(dim_)] += 1.0f;
        }
    }

    double norm_sq = 0.0;
    for (float x : v) norm_sq += double(x) * double(x);
    const float inv = static_cast<float>(1.0 / std::sqrt(norm_sq));
    for (float& x : v) x *= inv;
    return v;
}

std::vector<std::vector<float>> HashingEmbedder::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw ValidationError("embed: empty batch");
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
}

} // namespace mathrag
