#pragma once

#include "mathrag/embedding.hpp"
#include "mathrag/generation.hpp"

#include <string>

namespace mathrag {

// Completion-endpoint client. Sends
//   {"prompt": ..., "temperature": ..., "max_tokens": ..., "stop": [...],
//    "stream": true, "model"?: ...}
// and consumes either an SSE stream of {"choices":[{"text": ...}]} deltas
// or a single JSON body of the same shape.
//
// Stop sequences are enforced client-side against the accumulated text so
// the result always ends exactly at (and includes) the matched sequence;
// when a stop fires mid-stream the connection is dropped, which is the
// "pause generation" half of the retrieval loop. The server is expected to
// stream raw continuations (it may apply the stop itself only if it keeps
// the matched text in-band).
//
// Transport failures retry with exponential backoff, but never after part
// of a stream has been consumed: a half-consumed generation is not
// idempotent, so it surfaces as BackendUnreachable immediately.
class HttpGenerationBackend : public GenerationBackend {
public:
    explicit HttpGenerationBackend(HttpEndpointConfig cfg);

    GenerationResult generate(const std::string& prompt, const GenerationParams& params) override;

private:
    HttpEndpointConfig cfg_;
};

} // namespace mathrag
