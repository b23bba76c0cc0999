#include "mathrag/config.hpp"

#include "mathrag/errors.hpp"
#include "mathrag/http_backend.hpp"
#include "mathrag/util.hpp"

#include "json.hpp"

#include <initializer_list>
#include <string_view>

namespace mathrag {

using nlohmann::json;

namespace {

// Strict object access: every key must be known at its level, so a typo
// fails loudly instead of silently selecting a default.
void check_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (auto a : allowed) {
            if (key == a) {
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

const json& member(const json& obj, const char* key) {
    static const json missing;
    auto it = obj.find(key);
    return it == obj.end() ? missing : *it;
}

std::string path_of(const std::string& where, const char* key) {
    return where.empty() ? key : where + "." + key;
}

std::string get_string(const json& obj, const std::string& where, const char* key,
                       const std::string& fallback) {
    const json& v = member(obj, key);
    if (v.is_null()) return fallback;
    if (!v.is_string()) throw ConfigError(path_of(where, key) + " must be a string");
    return v.get<std::string>();
}

std::int64_t get_integer(const json& obj, const std::string& where, const char* key,
                         std::int64_t fallback) {
    const json& v = member(obj, key);
    if (v.is_null()) return fallback;
    if (!v.is_number_integer()) throw ConfigError(path_of(where, key) + " must be an integer");
    return v.get<std::int64_t>();
}

int get_int(const json& obj, const std::string& where, const char* key, int fallback) {
    return static_cast<int>(get_integer(obj, where, key, fallback));
}

double get_double(const json& obj, const std::string& where, const char* key, double fallback) {
    const json& v = member(obj, key);
    if (v.is_null()) return fallback;
    if (!v.is_number()) throw ConfigError(path_of(where, key) + " must be a number");
    return v.get<double>();
}

const json& get_object(const json& obj, const std::string& where, const char* key) {
    const json& v = member(obj, key);
    if (v.is_null()) {
        static const json empty = json::object();
        return empty;
    }
    if (!v.is_object()) throw ConfigError(path_of(where, key) + " must be an object");
    return v;
}

Strategy parse_strategy_kind(const std::string& s, const std::string& where) {
    if (s == "cot") return Strategy::Cot;
    if (s == "static_rag") return Strategy::StaticRag;
    if (s == "adaptive_rag") return Strategy::AdaptiveRag;
    throw ConfigError(where + " must be one of cot|static_rag|adaptive_rag, got '" + s + "'");
}

InjectionMode parse_injection_mode(const std::string& s, const std::string& where) {
    if (s == "raw") return InjectionMode::Raw;
    if (s == "summarized") return InjectionMode::Summarized;
    throw ConfigError(where + " must be raw|summarized, got '" + s + "'");
}

constexpr const char* kDefaultGenerationModel = "meta-llama/Llama-3.1-8B-Instruct";
constexpr const char* kDefaultRetrievalModel = "BAAI/bge-m3";

HttpEndpointConfig parse_endpoint(const json& obj, const std::string& where,
                                  const std::string& default_model) {
    HttpEndpointConfig e;
    e.url = get_string(obj, where, "url", "");
    e.api_key_env = get_string(obj, where, "api_key_env", "");
    e.model = get_string(obj, where, "model", default_model);
    e.connect_timeout_ms = get_int(obj, where, "connect_timeout_ms", e.connect_timeout_ms);
    e.read_timeout_ms = get_int(obj, where, "read_timeout_ms", e.read_timeout_ms);
    e.max_retries = get_int(obj, where, "max_retries", e.max_retries);
    e.retry_backoff_ms = get_int(obj, where, "retry_backoff_ms", e.retry_backoff_ms);
    return e;
}

GenerationBackendConfig parse_generation_backend(const json& obj) {
    const std::string where = "generation_backend";
    GenerationBackendConfig c;
    std::string kind = get_string(obj, where, "kind", "mock");
    if (kind == "mock") {
        c.kind = GenerationBackendKind::Mock;
        check_keys(obj, where + " (mock)", {"kind", "script"});
        c.script = get_string(obj, where, "script", "");
    } else if (kind == "http") {
        c.kind = GenerationBackendKind::Http;
        check_keys(obj, where + " (http)",
                   {"kind", "precision", "url", "api_key_env", "model", "connect_timeout_ms",
                    "read_timeout_ms", "max_retries", "retry_backoff_ms"});
        c.endpoint = parse_endpoint(obj, where, kDefaultGenerationModel);
        c.precision = get_string(obj, where, "precision", c.precision);
    } else {
        throw ConfigError(where + ".kind must be mock|http, got '" + kind + "'");
    }
    return c;
}

EmbeddingBackendConfig parse_embedding_backend(const json& obj) {
    const std::string where = "retrieval.embedding";
    EmbeddingBackendConfig c;
    std::string kind = get_string(obj, where, "kind", "hash");
    if (kind == "hash") {
        c.kind = EmbeddingBackendKind::Hash;
        check_keys(obj, where + " (hash)", {"kind"});
    } else if (kind == "http") {
        c.kind = EmbeddingBackendKind::Http;
        std::initializer_list<std::string_view> allowed = {
            "kind", "url", "api_key_env", "model", "connect_timeout_ms", "read_timeout_ms",
            "max_retries", "retry_backoff_ms"};
        check_keys(obj, where + " (http)", allowed);
        c.endpoint = parse_endpoint(obj, where, kDefaultRetrievalModel);
    } else {
        throw ConfigError(where + ".kind must be hash|http, got '" + kind + "'");
    }
    return c;
}

RerankerBackendConfig parse_reranker_backend(const json& obj) {
    const std::string where = "retrieval.reranker";
    RerankerBackendConfig c;
    std::string kind = get_string(obj, where, "kind", "lexical");
    if (kind == "lexical") {
        c.kind = RerankerBackendKind::Lexical;
        check_keys(obj, where + " (lexical)", {"kind"});
    } else if (kind == "http") {
        c.kind = RerankerBackendKind::Http;
        std::initializer_list<std::string_view> allowed = {
            "kind", "url", "api_key_env", "model", "connect_timeout_ms", "read_timeout_ms",
            "max_retries", "retry_backoff_ms"};
        check_keys(obj, where + " (http)", allowed);
        c.endpoint = parse_endpoint(obj, where, kDefaultRetrievalModel);
    } else {
        throw ConfigError(where + ".kind must be lexical|http, got '" + kind + "'");
    }
    return c;
}

void require_positive(int value, const std::string& what) {
    if (value < 1) throw ConfigError(what + " must be >= 1, got " + std::to_string(value));
}

void validate_endpoint(const HttpEndpointConfig& e, const std::string& where) {
    if (e.url.empty()) throw ConfigError(where + ".url is required for the http backend");
    if (e.url.rfind("http://", 0) != 0) {
        throw ConfigError(where + ".url must start with http:// (TLS is out of scope), got '" +
                          e.url + "'");
    }
    if (e.connect_timeout_ms < 1 || e.read_timeout_ms < 1) {
        throw ConfigError(where + " timeouts must be >= 1 ms");
    }
    if (e.max_retries < 0 || e.retry_backoff_ms < 0) {
        throw ConfigError(where + " retry settings must be >= 0");
    }
}

json endpoint_json(const HttpEndpointConfig& e) {
    json j;
    j["url"] = e.url;
    j["api_key_env"] = e.api_key_env;
    j["model"] = e.model;
    j["connect_timeout_ms"] = e.connect_timeout_ms;
    j["read_timeout_ms"] = e.read_timeout_ms;
    j["max_retries"] = e.max_retries;
    j["retry_backoff_ms"] = e.retry_backoff_ms;
    return j;
}

} // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config root must be a JSON object");
    check_keys(root, "config",
               {"problems", "corpus", "index", "run_dir", "seed", "parallelism", "strategy",
                "generation_backend", "retrieval"});

    RunConfig c;
    c.problems = get_string(root, "", "problems", "");
    c.corpus = get_string(root, "", "corpus", "");
    c.index = get_string(root, "", "index", "");
    c.run_dir = get_string(root, "", "run_dir", "");
    std::int64_t seed = get_integer(root, "", "seed", static_cast<std::int64_t>(c.seed));
    if (seed < 0) throw ConfigError("seed must be >= 0");
    c.seed = static_cast<std::uint64_t>(seed);
    c.parallelism = get_int(root, "", "parallelism", c.parallelism);

    const json& strategy = get_object(root, "", "strategy");
    check_keys(strategy, "strategy",
               {"kind", "system_prompt_id", "max_retrieval_rounds", "injection_mode",
                "temperature", "max_new_tokens", "trace_token_budget"});
    c.strategy.strategy = parse_strategy_kind(get_string(strategy, "strategy", "kind", "cot"),
                                              "strategy.kind");
    c.strategy.system_prompt_id = get_string(strategy, "strategy", "system_prompt_id", "");
    c.strategy.max_retrieval_rounds =
        get_int(strategy, "strategy", "max_retrieval_rounds", c.strategy.max_retrieval_rounds);
    c.strategy.injection_mode = parse_injection_mode(
        get_string(strategy, "strategy", "injection_mode", "raw"), "strategy.injection_mode");
    c.strategy.per_call_params.temperature =
        get_double(strategy, "strategy", "temperature", c.strategy.per_call_params.temperature);
    c.strategy.per_call_params.max_new_tokens =
        get_int(strategy, "strategy", "max_new_tokens", c.strategy.per_call_params.max_new_tokens);
    c.strategy.trace_token_budget =
        get_integer(strategy, "strategy", "trace_token_budget", c.strategy.trace_token_budget);

    c.generation_backend = parse_generation_backend(get_object(root, "", "generation_backend"));

    const json& retrieval = get_object(root, "", "retrieval");
    check_keys(retrieval, "retrieval", {"chunking", "index", "embedding", "reranker"});

    const json& chunking = get_object(retrieval, "retrieval", "chunking");
    check_keys(chunking, "retrieval.chunking", {"max_chunk_chars", "overlap_chars"});
    c.chunking.max_chunk_chars =
        get_int(chunking, "retrieval.chunking", "max_chunk_chars", c.chunking.max_chunk_chars);
    c.chunking.overlap_chars =
        get_int(chunking, "retrieval.chunking", "overlap_chars", c.chunking.overlap_chars);

    const json& index = get_object(retrieval, "retrieval", "index");
    check_keys(index, "retrieval.index",
               {"type", "dim", "hnsw_m", "ef_construction", "ef_search", "k_dense", "k_final"});
    std::string index_type = get_string(index, "retrieval.index", "type", "hnsw");
    if (index_type != "hnsw") {
        throw ConfigError("retrieval.index.type: only 'hnsw' is implemented, got '" + index_type + "'");
    }
    c.retrieval.dim = get_int(index, "retrieval.index", "dim", c.retrieval.dim);
    c.retrieval.hnsw_m = get_int(index, "retrieval.index", "hnsw_m", c.retrieval.hnsw_m);
    c.retrieval.ef_construction =
        get_int(index, "retrieval.index", "ef_construction", c.retrieval.ef_construction);
    c.retrieval.ef_search = get_int(index, "retrieval.index", "ef_search", c.retrieval.ef_search);
    c.retrieval.k_dense = get_int(index, "retrieval.index", "k_dense", c.retrieval.k_dense);
    c.retrieval.k_final = get_int(index, "retrieval.index", "k_final", c.retrieval.k_final);
    c.retrieval.seed = c.seed;

    c.embedding = parse_embedding_backend(get_object(retrieval, "retrieval", "embedding"));
    c.reranker = parse_reranker_backend(get_object(retrieval, "retrieval", "reranker"));

    validate_run_config(c);
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    return parse_run_config(read_file(path));
}

void validate_run_config(const RunConfig& config) {
    if (config.run_dir.empty()) throw ConfigError("run_dir is required");
    if (config.problems.empty()) throw ConfigError("problems is required");
    require_positive(config.parallelism, "parallelism");

    require_positive(config.strategy.max_retrieval_rounds, "strategy.max_retrieval_rounds");
    if (config.strategy.per_call_params.temperature < 0.0) {
        throw ConfigError("strategy.temperature must be >= 0");
    }
    require_positive(config.strategy.per_call_params.max_new_tokens, "strategy.max_new_tokens");
    if (config.strategy.trace_token_budget < 0) {
        throw ConfigError("strategy.trace_token_budget must be >= 0");
    }

    if (config.strategy.strategy != Strategy::Cot && config.corpus.empty()) {
        throw ConfigError("corpus is required for the retrieval strategies");
    }

    switch (config.generation_backend.kind) {
    case GenerationBackendKind::Mock:
        if (config.generation_backend.script.empty()) {
            throw ConfigError("generation_backend.script is required for the mock backend");
        }
        break;
    case GenerationBackendKind::Http:
        validate_endpoint(config.generation_backend.endpoint, "generation_backend");
        break;
    }
    if (config.embedding.kind == EmbeddingBackendKind::Http) {
        validate_endpoint(config.embedding.endpoint, "retrieval.embedding");
    }
    if (config.reranker.kind == RerankerBackendKind::Http) {
        validate_endpoint(config.reranker.endpoint, "retrieval.reranker");
    }

    require_positive(config.chunking.max_chunk_chars, "retrieval.chunking.max_chunk_chars");
    if (config.chunking.overlap_chars < 0 ||
        config.chunking.overlap_chars >= config.chunking.max_chunk_chars) {
        throw ConfigError("retrieval.chunking.overlap_chars must be in [0, max_chunk_chars)");
    }
    require_positive(config.retrieval.dim, "retrieval.index.dim");
    if (config.retrieval.hnsw_m < 2) throw ConfigError("retrieval.index.hnsw_m must be >= 2");
    require_positive(config.retrieval.ef_construction, "retrieval.index.ef_construction");
    require_positive(config.retrieval.ef_search, "retrieval.index.ef_search");
    require_positive(config.retrieval.k_dense, "retrieval.index.k_dense");
    require_positive(config.retrieval.k_final, "retrieval.index.k_final");
    if (config.retrieval.k_final > config.retrieval.k_dense) {
        throw ConfigError("retrieval.index.k_final must be <= k_dense");
    }
}

std::string resolved_config_json(const RunConfig& config) {
    json root;
    root["problems"] = config.problems;
    root["corpus"] = config.corpus;
    root["index"] = config.index;
    root["run_dir"] = config.run_dir;
    root["seed"] = config.seed;
    root["parallelism"] = config.parallelism;

    json strategy;
    strategy["kind"] = to_string(config.strategy.strategy);
    strategy["system_prompt_id"] = config.strategy.system_prompt_id;
    strategy["max_retrieval_rounds"] = config.strategy.max_retrieval_rounds;
    strategy["injection_mode"] = to_string(config.strategy.injection_mode);
    strategy["temperature"] = config.strategy.per_call_params.temperature;
    strategy["max_new_tokens"] = config.strategy.per_call_params.max_new_tokens;
    strategy["trace_token_budget"] = config.strategy.trace_token_budget;
    root["strategy"] = std::move(strategy);

    json generation;
    switch (config.generation_backend.kind) {
    case GenerationBackendKind::Mock:
        generation["kind"] = "mock";
        generation["script"] = config.generation_backend.script;
        break;
    case GenerationBackendKind::Http:
        generation = endpoint_json(config.generation_backend.endpoint);
        generation["kind"] = "http";
        generation["precision"] = config.generation_backend.precision;
        break;
    }
    root["generation_backend"] = std::move(generation);

    json retrieval;
    retrieval["chunking"] = {{"max_chunk_chars", config.chunking.max_chunk_chars},
                             {"overlap_chars", config.chunking.overlap_chars}};
    retrieval["index"] = {{"type", "hnsw"},
                          {"dim", config.retrieval.dim},
                          {"hnsw_m", config.retrieval.hnsw_m},
                          {"ef_construction", config.retrieval.ef_construction},
                          {"ef_search", config.retrieval.ef_search},
                          {"k_dense", config.retrieval.k_dense},
                          {"k_final", config.retrieval.k_final}};
    json embedding;
    if (config.embedding.kind == EmbeddingBackendKind::Hash) {
        embedding["kind"] = "hash";
    } else {
        embedding = endpoint_json(config.embedding.endpoint);
        embedding["kind"] = "http";
    }
    retrieval["embedding"] = std::move(embedding);
    json reranker;
    if (config.reranker.kind == RerankerBackendKind::Lexical) {
        reranker["kind"] = "lexical";
    } else {
        reranker = endpoint_json(config.reranker.endpoint);
        reranker["kind"] = "http";
    }
    retrieval["reranker"] = std::move(reranker);
    root["retrieval"] = std::move(retrieval);

    return root.dump(2) + "\n";
}

std::string config_hash(const RunConfig& config) {
    return sha256_hex(resolved_config_json(config));
}

std::unique_ptr<GenerationBackend> make_generation_backend(const GenerationBackendConfig& config) {
    switch (config.kind) {
    case GenerationBackendKind::Mock: return ScriptedBackend::from_file(config.script);
    case GenerationBackendKind::Http: return std::make_unique<HttpGenerationBackend>(config.endpoint);
    }
    throw ConfigError("unknown generation backend kind");
}

std::shared_ptr<Embedder> make_embedder(const EmbeddingBackendConfig& config, int dim) {
    switch (config.kind) {
    case EmbeddingBackendKind::Hash: return std::make_shared<HashingEmbedder>(dim);
    case EmbeddingBackendKind::Http: return std::make_shared<HttpEmbedder>(config.endpoint, dim);
    }
    throw ConfigError("unknown embedding backend kind");
}

std::shared_ptr<Reranker> make_reranker(const RerankerBackendConfig& config) {
    switch (config.kind) {
    case RerankerBackendKind::Lexical: return std::make_shared<LexicalReranker>();
    case RerankerBackendKind::Http: return std::make_shared<HttpReranker>(config.endpoint);
    }
    throw ConfigError("unknown reranker backend kind");
}

} // namespace mathrag
