#pragma once

#include "mathrag/trace.hpp"

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mathrag {

// Canonical form used for exact-match comparison. Numeric-style answers
// (the GSM8K shape) are stripped of currency marks, thousands separators,
// whitespace, and trailing periods, then rendered canonically when they
// parse as a rational; competition-style answers (the MATH shape) lose
// outer math-mode delimiters and \boxed wrappers and have whitespace
// collapsed. Anything unparseable falls back to the stripped string.
// Idempotent by construction.
std::string normalize_answer(const std::string& raw, Dataset dataset);

bool exact_match(const std::string& predicted, const std::string& gold, Dataset dataset);

// Per-problem grading result; the unit the evaluator aggregates.
struct Outcome {
    std::string problem_id;
    bool correct = false;
    bool retrieved = false; // at least one agentic search ran
    std::optional<int> difficulty;
    std::optional<std::string> predicted; // raw answer text, when present
    TerminalStatus status = TerminalStatus::NoAnswer;

    bool operator==(const Outcome&) const = default;
};

Outcome grade(const Trace& trace, const Problem& problem);

// Joins traces to problems by id. Every trace needs its problem; problems
// without a trace are an error too, so metrics always cover the full set.
std::vector<Outcome> grade_all(std::span<const Trace> traces, std::span<const Problem> problems);

// Counts are the source of truth; percentages are derived at render time.
struct SplitCounts {
    int n = 0;
    int correct = 0;
    int retrieved = 0;
    int correct_retrieved = 0;
    int correct_not_retrieved = 0;

    int not_retrieved() const { return n - retrieved; }

    bool operator==(const SplitCounts&) const = default;
};

struct Metrics {
    SplitCounts overall;
    // Populated when the outcomes carry difficulty annotations.
    std::map<int, SplitCounts> per_difficulty;

    bool operator==(const Metrics&) const = default;
};

Metrics aggregate(std::span<const Outcome> outcomes);

// Cross-tabulation of baseline correctness x retrieval usage x adaptive
// correctness. Retrieval usage is the adaptive run's, since the baseline
// never searches.
struct ContingencyTable {
    // c[baseline correct][retrieved][adaptive correct]
    std::array<std::array<std::array<int, 2>, 2>, 2> c{};
    int n = 0;

    int helped() const { return c[0][1][1]; } // baseline wrong, retrieved, now right
    int hurt() const { return c[1][1][0]; }   // baseline right, retrieved, now wrong

    int baseline_correct() const;
    int adaptive_correct() const;
    int retrieved() const;

    // The two-row appendix layout: rows baseline correct/incorrect, columns
    // (retrieved ? adaptive correct/incorrect : adaptive correct/incorrect).
    std::array<std::array<int, 4>, 2> appendix_rows() const;

    bool operator==(const ContingencyTable&) const = default;
};

// Pairs the two outcome lists by problem id; the id sets must coincide.
ContingencyTable contingency(std::span<const Outcome> baseline, std::span<const Outcome> adaptive);

enum class ReportFormat { Markdown, Csv, Json };

// One dataset's evaluation: per-strategy metrics plus an optional
// baseline-vs-adaptive contingency analysis.
struct Report {
    std::string dataset;
    std::vector<std::pair<std::string, Metrics>> strategies;
    // (baseline label, adaptive label, table)
    std::optional<std::tuple<std::string, std::string, ContingencyTable>> contingency;
};

// Deterministic rendering; all percentages are half-up at one decimal.
std::string render_report(const Report& report, ReportFormat format);

} // namespace mathrag
