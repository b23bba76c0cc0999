#pragma once

#include <string>
#include <vector>

namespace mathrag {

// Maps texts to fixed-dimension unit vectors. Batch-oriented because the
// remote implementations amortize per-request cost.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual int dim() const = 0;

    // One vector per input text, each L2-normalized, in input order.
    // Rejects empty batches and empty texts.
    virtual std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) = 0;
};

// Deterministic local embedder: hashed character n-gram counts, then L2
// normalization. No semantics, but similar strings land near each other,
// which is what index/pipeline tests and offline runs need.
class HashingEmbedder : public Embedder {
public:
    explicit HashingEmbedder(int dim = 256, int ngram = 3);

    int dim() const override { return dim_; }
    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;

    // Single-text convenience.
    std::vector<float> embed_one(const std::string& text);

private:
    int dim_;
    int ngram_;
};

// Shared connection settings for the HTTP backends. Credentials are never
// stored: api_key_env names an environment variable consulted per request.
struct HttpEndpointConfig {
    std::string url;         // e.g. "http://127.0.0.1:8000/v1/completions"
    std::string api_key_env; // empty means unauthenticated
    std::string model;       // optional model name passed through
    int connect_timeout_ms = 5000;
    int read_timeout_ms = 120000;
    int max_retries = 3;
    int retry_backoff_ms = 200;
};

// Remote bi-encoder speaking the embeddings wire format:
//   request  {"input": [texts...], "model"?: ...}
//   response {"data": [{"index": i, "embedding": [floats...]}, ...]}
class HttpEmbedder : public Embedder {
public:
    HttpEmbedder(HttpEndpointConfig cfg, int dim);

    int dim() const override { return dim_; }
    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;

private:
    HttpEndpointConfig cfg_;
    int dim_;
};

} // namespace mathrag
