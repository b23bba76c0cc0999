#pragma once

#include "mathrag/embedding.hpp"
#include "mathrag/generation.hpp"
#include "mathrag/orchestrator.hpp"
#include "mathrag/retrieval.hpp"

#include <filesystem>
#include <memory>
#include <string>

namespace mathrag {

// Backend selection. Every remote backend has a deterministic local
// stand-in so the full pipeline runs offline: scripted turns for
// generation, hashed n-grams for embedding, lexical overlap for
// reranking.
enum class GenerationBackendKind { Mock, Http };
enum class EmbeddingBackendKind { Hash, Http };
enum class RerankerBackendKind { Lexical, Http };

struct GenerationBackendConfig {
    GenerationBackendKind kind = GenerationBackendKind::Mock;
    std::string script; // mock: scripted-turns JSON file
    HttpEndpointConfig endpoint;
    // Deployment precision recorded in the resolved config for run
    // provenance; the serving side owns the actual dtype.
    std::string precision = "float16";
};

struct EmbeddingBackendConfig {
    EmbeddingBackendKind kind = EmbeddingBackendKind::Hash;
    HttpEndpointConfig endpoint;
};

struct RerankerBackendConfig {
    RerankerBackendKind kind = RerankerBackendKind::Lexical;
    HttpEndpointConfig endpoint;
};

// Everything one experiment run needs, loaded from a single JSON file.
// Parsing is strict: unknown keys anywhere are a ConfigError, so a typo
// can never silently fall back to a default. Credentials are never part
// of the file; api_key_env names an environment variable instead.
struct RunConfig {
    std::string problems;  // problems JSONL
    std::string corpus;    // corpus JSONL; required unless strategy is cot
    std::string index;     // prebuilt index file; empty builds in memory
    std::string run_dir;   // output directory for results and reports
    std::uint64_t seed = 42;
    int parallelism = 1;

    StrategyConfig strategy;
    GenerationBackendConfig generation_backend;

    ChunkingConfig chunking;
    IndexConfig retrieval;
    EmbeddingBackendConfig embedding;
    RerankerBackendConfig reranker;
};

// Strict parse of the JSON text. Unknown keys, wrong types, and bad enum
// strings all throw ConfigError naming the offending path; defaults fill
// whatever is absent. Runs validate_run_config before returning.
RunConfig parse_run_config(const std::string& json_text);

RunConfig load_run_config(const std::filesystem::path& path);

// Range and cross-field checks: positive knobs, k_final <= k_dense,
// overlap < chunk size, backend-specific required fields, corpus presence
// for the retrieval strategies. Throws ConfigError.
void validate_run_config(const RunConfig& config);

// Canonical JSON dump with every default materialized and keys sorted,
// suitable for the run-directory manifest. Parsing the dump yields the
// same config back.
std::string resolved_config_json(const RunConfig& config);

// SHA-256 of resolved_config_json, the run's identity for pairing and
// resumption checks.
std::string config_hash(const RunConfig& config);

// Factories from the validated config. The embedder dimension comes from
// retrieval.dim so index and embedder can never disagree.
std::unique_ptr<GenerationBackend> make_generation_backend(const GenerationBackendConfig& config);
std::shared_ptr<Embedder> make_embedder(const EmbeddingBackendConfig& config, int dim);
std::shared_ptr<Reranker> make_reranker(const RerankerBackendConfig& config);

} // namespace mathrag
