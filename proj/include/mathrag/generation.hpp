#pragma once

#include "mathrag/templates.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace mathrag {

struct GenerationParams {
    double temperature = 0.0;
    int max_new_tokens = 1024;
    std::vector<std::string> stop_sequences;
};

// The pieces a chat render is built from. assistant_prefix is the partial
// assistant turn appended after the header, used to resume generation
// mid-transcript after a knowledge injection.
struct ChatPrompt {
    std::string system;
    std::string user;
    std::string assistant_prefix;
};

enum class StopKind { StopSequence, MaxTokens, EndOfTurn };

std::string to_string(StopKind k);

struct StopReason {
    StopKind kind = StopKind::EndOfTurn;
    std::string matched; // the stop sequence that fired, when kind is StopSequence
};

struct TokenCounts {
    std::int64_t prompt = 0;
    std::int64_t completion = 0;
    // True when counts are whitespace-piece estimates rather than backend-
    // reported token counts.
    bool approximate = false;
};

// text is everything generated up to and including the stop sequence when
// one fired, so transcript reconstruction can splice at the exact cut.
struct GenerationResult {
    std::string text;
    StopReason stop_reason;
    TokenCounts tokens;
};

// Renders a full completion-style prompt string in the store's chat
// format. system and user must be non-empty.
std::string render_chat(const TemplateStore& store, const ChatPrompt& prompt);

class GenerationBackend {
public:
    virtual ~GenerationBackend() = default;
    virtual GenerationResult generate(const std::string& prompt, const GenerationParams& params) = 0;
};

// Deterministic mock backend driven by scripted turns.
//
// Two layers of scripting: keyed entries match when their `match` string
// occurs in the prompt (first matching entry wins, in file order), each
// with an independent turn cursor; plus an optional unkeyed turn list used
// when no entry matches. Keyed matching keeps runs deterministic under
// parallel execution, where the interleaving of generate() calls is not.
//
// Stop sequences and max_new_tokens are applied to the scripted text the
// same way a real backend would: the earliest stop match cuts the turn
// (inclusively), and token budgeting counts whitespace pieces.
class ScriptedBackend : public GenerationBackend {
public:
    struct Entry {
        std::string match;
        std::vector<std::string> turns;
    };

    explicit ScriptedBackend(std::vector<std::string> turns);
    ScriptedBackend(std::vector<Entry> entries, std::vector<std::string> fallback_turns = {});

    // JSON file: {"turns": [...]} and/or {"keyed": [{"match": ..., "turns": [...]}]}.
    // Heap-allocated because the internal mutex makes the type immovable.
    static std::unique_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

    GenerationResult generate(const std::string& prompt, const GenerationParams& params) override;

    // Prompts seen so far, in call order. For assertions in tests.
    std::vector<std::string> calls() const;

private:
    struct EntryState {
        Entry entry;
        std::size_t cursor = 0;
    };

    mutable std::mutex mu_;
    std::vector<EntryState> entries_;
    std::vector<std::string> fallback_;
    std::size_t fallback_cursor_ = 0;
    std::vector<std::string> call_log_;
};

// Applies stop-sequence and max-token trimming to raw backend text.
// Exposed for reuse by backends and tests.
GenerationResult apply_generation_limits(std::string raw, const GenerationParams& params);

} // namespace mathrag
