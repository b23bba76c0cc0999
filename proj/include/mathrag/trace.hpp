#pragma once

#include "mathrag/document.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mathrag {

// Bumped whenever the serialized trace layout changes shape.
inline constexpr int kTraceSchemaVersion = 1;

enum class Dataset { Gsm8k, Math };

std::string to_string(Dataset d);
Dataset dataset_from_string(const std::string& s);

enum class Strategy { Cot, StaticRag, AdaptiveRag };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

enum class InjectionMode { Raw, Summarized };

std::string to_string(InjectionMode m);
InjectionMode injection_mode_from_string(const std::string& s);

enum class TerminalStatus { Answered, NoAnswer, BudgetExhausted };

std::string to_string(TerminalStatus s);
TerminalStatus terminal_status_from_string(const std::string& s);

// One benchmark item. difficulty is present for datasets with a level
// annotation and absent otherwise; a problems file must be consistent
// about which.
struct Problem {
    std::string id;
    Dataset dataset = Dataset::Gsm8k;
    std::string statement;
    std::string gold_answer;
    std::optional<int> difficulty;

    bool operator==(const Problem&) const = default;
};

// -- trace events ---------------------------------------------------------------

// Text the model produced inside a <think> block.
struct ThinkText {
    std::string text;
    bool operator==(const ThinkText&) const = default;
};

// A completed <search> tag that actually triggered retrieval. round is
// 1-based and matches the paired InjectedKnowledge.
struct SearchCall {
    std::string query;
    int round = 0;
    bool operator==(const SearchCall&) const = default;
};

// Knowledge spliced into the transcript. For the adaptive strategy this
// pairs with the SearchCall of the same round; for the static strategy it
// stands alone with round 0 and the trace's static_injected flag set.
struct InjectedKnowledge {
    std::vector<ScoredDocument> docs;
    std::string rendered;
    InjectionMode mode = InjectionMode::Raw;
    int round = 0;
    bool operator==(const InjectedKnowledge&) const = default;
};

// Contents of the first completed <answer> tag.
struct Answer {
    std::string raw;
    bool operator==(const Answer&) const = default;
};

// Model output outside any recognized tag.
struct PlainText {
    std::string text;
    bool operator==(const PlainText&) const = default;
};

using TraceEvent = std::variant<ThinkText, SearchCall, InjectedKnowledge, Answer, PlainText>;

struct TokenUsage {
    std::int64_t prompt = 0;
    std::int64_t completion = 0;
    bool operator==(const TokenUsage&) const = default;
};

// Complete record of one strategy run on one problem.
struct Trace {
    std::string problem_id;
    Strategy strategy = Strategy::Cot;
    std::vector<TraceEvent> events;
    int retrieval_count = 0;
    TerminalStatus terminal_status = TerminalStatus::NoAnswer;
    TokenUsage token_usage;
    // True when a static up-front injection produced the (unpaired,
    // round 0) InjectedKnowledge event at the head of events.
    bool static_injected = false;
    // Failure note when the run aborted on a backend/retrieval error.
    std::optional<std::string> error;

    bool operator==(const Trace&) const = default;
};

// Checks the cross-field invariants that serialization relies on:
// SearchCall/InjectedKnowledge pairing and alternation, round numbering,
// retrieval_count consistency, at most one Answer (and only as the last
// event), static_injected <-> a single round-0 injection at the front.
// Throws InvariantViolation naming the offending field.
void validate_trace(const Trace& trace);

// One line of JSON, no trailing newline. Validates first.
std::string serialize_trace(const Trace& trace);

// Parses and validates one line. Throws MalformedRecord on syntax or
// unknown-enum problems, InvariantViolation on semantic ones.
Trace deserialize_trace(std::string_view line);

std::string serialize_problem(const Problem& problem);
Problem deserialize_problem(std::string_view line);

// Loaders for line-delimited files. Problems must have unique ids and
// all-or-none difficulty; traces must each validate.
std::vector<Problem> load_problems(const std::string& path);
std::vector<Trace> load_traces(const std::string& path);

// Convenience views over a trace.
const Answer* final_answer(const Trace& trace);
int count_search_calls(const Trace& trace);

} // namespace mathrag
