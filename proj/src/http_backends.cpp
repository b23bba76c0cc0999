#include "mathrag/http_backend.hpp"

#include "mathrag/errors.hpp"
#include "mathrag/retrieval.hpp"
#include "mathrag/util.hpp"

#include "httplib.h"
#include "json.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

namespace mathrag {

using nlohmann::json;

namespace {

struct ParsedUrl {
    std::string base; // scheme://host:port
    std::string path;
};

ParsedUrl parse_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("backend url '" + url + "' has no scheme");
    }
    std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http") {
        throw ConfigError("backend url '" + url + "': only http endpoints are supported");
    }
    auto path_start = url.find('/', scheme_end + 3);
    ParsedUrl out;
    if (path_start == std::string::npos) {
        out.base = url;
        out.path = "/";
    } else {
        out.base = url.substr(0, path_start);
        out.path = url.substr(path_start);
    }
    if (out.base.size() <= scheme_end + 3) throw ConfigError("backend url '" + url + "' has no host");
    return out;
}

httplib::Headers auth_headers(const std::string& api_key_env) {
    httplib::Headers headers;
    if (!api_key_env.empty()) {
        const char* key = std::getenv(api_key_env.c_str());
        if (key == nullptr || *key == '\0') {
            throw ConfigError("api key environment variable '" + api_key_env + "' is not set");
        }
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    return headers;
}

std::unique_ptr<httplib::Client> make_client(const ParsedUrl& url, const HttpEndpointConfig& cfg) {
    auto cli = std::make_unique<httplib::Client>(url.base);
    cli->set_connection_timeout(0, cfg.connect_timeout_ms * 1000);
    cli->set_read_timeout(cfg.read_timeout_ms / 1000, (cfg.read_timeout_ms % 1000) * 1000);
    cli->set_write_timeout(5, 0);
    return cli;
}

bool retryable_status(int status) {
    return status == 429 || (status >= 500 && status < 600);
}

void backoff_sleep(const HttpEndpointConfig& cfg, int attempt) {
    auto ms = cfg.retry_backoff_ms * (1 << attempt);
    std::this_thread::sleep_for(std::chrono::milliseconds(ms));
}

// Retries fn up to cfg.max_retries times on BackendUnreachable. Only for
// idempotent requests (embeddings, rerank, unstarted generations).
template <typename Fn>
auto with_retries(const HttpEndpointConfig& cfg, Fn&& fn) {
    int attempt = 0;
    for (;;) {
        try {
            return fn();
        } catch (const BackendUnreachable&) {
            if (attempt + 1 >= cfg.max_retries) throw;
            backoff_sleep(cfg, attempt);
            ++attempt;
        }
    }
}

// Accumulates a streamed completion and watches for stop sequences.
struct StreamAssembler {
    explicit StreamAssembler(const std::vector<std::string>& stops) : stops(stops) {}

    const std::vector<std::string>& stops;
    std::string sse_buffer;
    std::string text;
    std::string finish_reason;
    bool saw_sse = false;
    bool done = false;
    bool stopped = false;
    std::string matched_stop;
    std::int64_t prompt_tokens = -1;
    std::int64_t completion_tokens = -1;

    // Returns false to abort the stream (stop sequence satisfied). SSE is
    // handled line-wise: every complete "data:" line carries one JSON
    // chunk, which covers the \n\n and \r\n\r\n event framings alike.
    bool feed(const char* data, std::size_t len) {
        sse_buffer.append(data, len);
        for (;;) {
            auto eol = sse_buffer.find('\n');
            if (eol == std::string::npos) return true;
            std::string line = sse_buffer.substr(0, eol);
            sse_buffer.erase(0, eol + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!handle_line(line)) return false;
        }
    }

    bool handle_line(const std::string& line) {
        if (!line.starts_with("data:")) return true;
        saw_sse = true;
        std::string payload = trim(std::string_view(line).substr(5));
        if (payload == "[DONE]") {
            done = true;
            return true;
        }
        json j;
        try {
            j = json::parse(payload);
        } catch (const json::parse_error& e) {
            throw BackendProtocol(std::string("bad SSE chunk: ") + e.what());
        }
        absorb_chunk(j);
        return !check_stops();
    }

    void absorb_chunk(const json& j) {
        try {
            if (j.contains("choices") && !j.at("choices").empty()) {
                const auto& choice = j.at("choices").at(0);
                if (choice.contains("text")) {
                    text += choice.at("text").get<std::string>();
                } else if (choice.contains("delta") && choice.at("delta").contains("content")) {
                    text += choice.at("delta").at("content").get<std::string>();
                }
                if (choice.contains("finish_reason") && choice.at("finish_reason").is_string()) {
                    finish_reason = choice.at("finish_reason").get<std::string>();
                }
            }
            if (j.contains("usage") && j.at("usage").is_object()) {
                const auto& u = j.at("usage");
                if (u.contains("prompt_tokens")) prompt_tokens = u.at("prompt_tokens").get<std::int64_t>();
                if (u.contains("completion_tokens")) completion_tokens = u.at("completion_tokens").get<std::int64_t>();
            }
        } catch (const json::exception& e) {
            throw BackendProtocol(std::string("bad completion chunk: ") + e.what());
        }
    }

    bool check_stops() {
        for (const auto& stop : stops) {
            if (stop.empty()) continue;
            auto pos = text.find(stop);
            if (pos != std::string::npos) {
                text.resize(pos + stop.size());
                stopped = true;
                matched_stop = stop;
                return true;
            }
        }
        return false;
    }
};

} // namespace

HttpGenerationBackend::HttpGenerationBackend(HttpEndpointConfig cfg) : cfg_(std::move(cfg)) {
    parse_url(cfg_.url); // validate eagerly
}

GenerationResult HttpGenerationBackend::generate(const std::string& prompt, const GenerationParams& params) {
    ParsedUrl url = parse_url(cfg_.url);

    json body;
    body["prompt"] = prompt;
    body["temperature"] = params.temperature;
    body["max_tokens"] = params.max_new_tokens;
    if (!params.stop_sequences.empty()) body["stop"] = params.stop_sequences;
    body["stream"] = true;
    if (!cfg_.model.empty()) body["model"] = cfg_.model;
    const std::string body_str = body.dump();

    int attempt = 0;
    for (;;) {
        StreamAssembler assembler(params.stop_sequences);
        std::size_t received_bytes = 0;
        int status = 0;
        std::string raw_body;

        auto cli = make_client(url, cfg_);
        httplib::Request req;
        req.method = "POST";
        req.path = url.path;
        req.headers = auth_headers(cfg_.api_key_env);
        req.set_header("Content-Type", "application/json");
        req.set_header("Accept", "text/event-stream, application/json");
        req.body = body_str;
        req.response_handler = [&](const httplib::Response& res) {
            status = res.status;
            return true;
        };
        req.content_receiver = [&](const char* data, std::size_t len, std::uint64_t, std::uint64_t) {
            received_bytes += len;
            if (status != 200) {
                // Error bodies are small; keep them for the message.
                raw_body.append(data, len);
                return true;
            }
            raw_body.append(data, len);
            return assembler.feed(data, len);
        };

        httplib::Result result = cli->send(req);
        httplib::Error err = result.error();

        if (err == httplib::Error::Canceled && assembler.stopped) {
            // We hung up on purpose after the stop sequence completed.
        } else if (err != httplib::Error::Success) {
            std::string msg = "generation endpoint " + cfg_.url + ": " + httplib::to_string(err);
            if (received_bytes > 0) {
                throw BackendUnreachable(msg + " (after partial stream; not retried)");
            }
            if (attempt + 1 >= cfg_.max_retries) throw BackendUnreachable(msg);
            backoff_sleep(cfg_, attempt);
            ++attempt;
            continue;
        }

        if (status != 200) {
            std::string msg = "generation endpoint returned HTTP " + std::to_string(status) +
                              (raw_body.empty() ? "" : (": " + raw_body.substr(0, 300)));
            if (retryable_status(status)) {
                if (attempt + 1 >= cfg_.max_retries) throw BackendUnreachable(msg);
                backoff_sleep(cfg_, attempt);
                ++attempt;
                continue;
            }
            throw BackendProtocol(msg);
        }

        if (!assembler.saw_sse && !assembler.stopped) {
            // Non-streaming server: a single JSON completion body.
            json j;
            try {
                j = json::parse(raw_body);
            } catch (const json::parse_error& e) {
                throw BackendProtocol(std::string("generation response is neither SSE nor JSON: ") + e.what());
            }
            assembler.absorb_chunk(j);
            assembler.check_stops();
        }

        GenerationResult res;
        res.text = assembler.text;
        if (assembler.stopped) {
            res.stop_reason = {StopKind::StopSequence, assembler.matched_stop};
        } else if (assembler.finish_reason == "length") {
            res.stop_reason = {StopKind::MaxTokens, ""};
        } else {
            // A server that cut on a stop without keeping the text in-band
            // still leaves the matched sequence as our suffix when it
            // includes it; otherwise this is an ordinary end of turn.
            res.stop_reason = {StopKind::EndOfTurn, ""};
            for (const auto& stop : params.stop_sequences) {
                if (!stop.empty() && res.text.ends_with(stop)) {
                    res.stop_reason = {StopKind::StopSequence, stop};
                    break;
                }
            }
        }
        if (assembler.prompt_tokens >= 0 || assembler.completion_tokens >= 0) {
            res.tokens.prompt = std::max<std::int64_t>(assembler.prompt_tokens, 0);
            res.tokens.completion = std::max<std::int64_t>(assembler.completion_tokens, 0);
            res.tokens.approximate = false;
        } else {
            res.tokens.prompt = static_cast<std::int64_t>(count_whitespace_pieces(prompt));
            res.tokens.completion = static_cast<std::int64_t>(count_whitespace_pieces(res.text));
            res.tokens.approximate = true;
        }
        return res;
    }
}

HttpEmbedder::HttpEmbedder(HttpEndpointConfig cfg, int dim) : cfg_(std::move(cfg)), dim_(dim) {
    if (dim <= 0) throw ValidationError("embedder dimension must be positive");
    parse_url(cfg_.url);
}

std::vector<std::vector<float>> HttpEmbedder::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw ValidationError("embed: empty batch");
    for (const auto& t : texts) {
        if (trim(t).empty()) throw ValidationError("cannot embed empty text");
    }
    ParsedUrl url = parse_url(cfg_.url);

    json body;
    body["input"] = texts;
    if (!cfg_.model.empty()) body["model"] = cfg_.model;
    const std::string body_str = body.dump();

    return with_retries(cfg_, [&]() -> std::vector<std::vector<float>> {
        auto cli = make_client(url, cfg_);
        auto res = cli->Post(url.path, auth_headers(cfg_.api_key_env), body_str, "application/json");
        if (!res) {
            throw BackendUnreachable("embedding endpoint " + cfg_.url + ": " + httplib::to_string(res.error()));
        }
        if (res->status != 200) {
            std::string msg = "embedding endpoint returned HTTP " + std::to_string(res->status) + ": " +
                              res->body.substr(0, 300);
            if (retryable_status(res->status)) throw BackendUnreachable(msg);
            throw BackendProtocol(msg);
        }
        json j;
        try {
            j = json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw BackendProtocol(std::string("embedding response is not JSON: ") + e.what());
        }
        std::vector<std::vector<float>> out(texts.size());
        std::vector<bool> filled(texts.size(), false);
        try {
            for (const auto& item : j.at("data")) {
                auto idx = item.at("index").get<std::size_t>();
                if (idx >= out.size()) throw BackendProtocol("embedding response index out of range");
                out[idx] = item.at("embedding").get<std::vector<float>>();
                filled[idx] = true;
            }
        } catch (const json::exception& e) {
            throw BackendProtocol(std::string("bad embedding response: ") + e.what());
        }
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (!filled[i]) throw BackendProtocol("embedding response missing index " + std::to_string(i));
            if (static_cast<int>(out[i].size()) != dim_) {
                throw DimensionMismatch("embedding for item " + std::to_string(i) + " has dim " +
                                        std::to_string(out[i].size()) + ", expected " + std::to_string(dim_));
            }
        }
        return out;
    });
}

HttpReranker::HttpReranker(HttpEndpointConfig cfg) : cfg_(std::move(cfg)) {
    parse_url(cfg_.url);
}

std::vector<double> HttpReranker::score(const std::string& query, std::span<const Document> docs) {
    if (docs.empty()) return {};
    ParsedUrl url = parse_url(cfg_.url);

    json body;
    body["query"] = query;
    json texts = json::array();
    for (const Document& d : docs) texts.push_back(d.text);
    body["documents"] = std::move(texts);
    if (!cfg_.model.empty()) body["model"] = cfg_.model;
    const std::string body_str = body.dump();

    return with_retries(cfg_, [&]() -> std::vector<double> {
        auto cli = make_client(url, cfg_);
        auto res = cli->Post(url.path, auth_headers(cfg_.api_key_env), body_str, "application/json");
        if (!res) {
            throw BackendUnreachable("rerank endpoint " + cfg_.url + ": " + httplib::to_string(res.error()));
        }
        if (res->status != 200) {
            std::string msg = "rerank endpoint returned HTTP " + std::to_string(res->status) + ": " +
                              res->body.substr(0, 300);
            if (retryable_status(res->status)) throw BackendUnreachable(msg);
            throw BackendProtocol(msg);
        }
        json j;
        try {
            j = json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw BackendProtocol(std::string("rerank response is not JSON: ") + e.what());
        }
        std::vector<double> scores(docs.size(), 0.0);
        std::vector<bool> filled(docs.size(), false);
        try {
            for (const auto& item : j.at("results")) {
                auto idx = item.at("index").get<std::size_t>();
                if (idx >= scores.size()) throw BackendProtocol("rerank response index out of range");
                scores[idx] = item.at("relevance_score").get<double>();
                filled[idx] = true;
            }
        } catch (const json::exception& e) {
            throw BackendProtocol(std::string("bad rerank response: ") + e.what());
        }
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (!filled[i]) throw BackendProtocol("rerank response missing index " + std::to_string(i));
        }
        return scores;
    });
}

} // namespace mathrag
