#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mathrag {

// Base class for all library errors. Subclasses partition the failure
// space so the CLI can map categories to distinct exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// -- configuration / filesystem --------------------------------------------

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

// -- record (de)serialization -----------------------------------------------

// Syntactically broken record line. byte_offset points at the parse
// failure within the line; field_path is a JSON pointer when known.
class MalformedRecord : public Error {
public:
    MalformedRecord(const std::string& what, std::size_t byte_offset, std::string field_path)
        : Error(what + " (offset " + std::to_string(byte_offset) + ", field '" + field_path + "')"),
          byte_offset(byte_offset),
          field_path(std::move(field_path)) {}

    std::size_t byte_offset = 0;
    std::string field_path;
};

// Syntactically valid record whose content breaks a domain invariant.
class InvariantViolation : public Error {
public:
    InvariantViolation(const std::string& what, std::size_t byte_offset, std::string field_path)
        : Error(what + " (offset " + std::to_string(byte_offset) + ", field '" + field_path + "')"),
          byte_offset(byte_offset),
          field_path(std::move(field_path)) {}

    std::size_t byte_offset = 0;
    std::string field_path;
};

// -- backends ----------------------------------------------------------------

// Transport-level failure talking to a remote backend. Retryable.
class BackendUnreachable : public Error {
public:
    using Error::Error;
};

// The backend answered but the response is malformed. Not retryable.
class BackendProtocol : public Error {
public:
    using Error::Error;
};

// The scripted mock ran out of turns; indicates a test bug.
class ScriptExhausted : public Error {
public:
    using Error::Error;
};

class SummarizerFailed : public Error {
public:
    using Error::Error;
};

// -- retrieval ----------------------------------------------------------------

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class EmptyCorpus : public Error {
public:
    using Error::Error;
};

class InvalidQuery : public Error {
public:
    using Error::Error;
};

enum class PipelineStage { Embed, DenseSearch, Rerank };

inline const char* to_string(PipelineStage s) {
    switch (s) {
    case PipelineStage::Embed: return "embed";
    case PipelineStage::DenseSearch: return "dense-search";
    case PipelineStage::Rerank: return "rerank";
    }
    return "?";
}

// Wraps a stage failure inside the two-stage pipeline so callers can see
// which stage broke without losing the original message.
class PipelineError : public Error {
public:
    PipelineError(PipelineStage stage, const std::string& cause)
        : Error(std::string("pipeline stage '") + to_string(stage) + "' failed: " + cause),
          stage(stage) {}

    PipelineStage stage;
};

// -- evaluation ----------------------------------------------------------------

class EmptyInput : public Error {
public:
    using Error::Error;
};

class IdMismatch : public Error {
public:
    using Error::Error;
};

} // namespace mathrag
