#pragma once

#include "mathrag/generation.hpp"
#include "mathrag/injection.hpp"
#include "mathrag/retrieval.hpp"
#include "mathrag/templates.hpp"
#include "mathrag/trace.hpp"

#include <filesystem>
#include <functional>
#include <ostream>
#include <span>

namespace mathrag {

// Per-strategy knobs. Stop sequences are owned by the strategy (</answer>
// always, plus </search> for the adaptive loop); anything set in
// per_call_params.stop_sequences is ignored.
struct StrategyConfig {
    Strategy strategy = Strategy::Cot;
    // Template id of the system prompt. Empty selects the strategy's
    // default prompt.
    std::string system_prompt_id;
    int max_retrieval_rounds = 3;
    GenerationParams per_call_params;
    // Completion-token ceiling across all generation calls of one trace.
    // 0 selects 4x max_new_tokens, enough for a few pause/resume segments
    // without letting a degenerate loop run forever.
    std::int64_t trace_token_budget = 0;
    InjectionMode injection_mode = InjectionMode::Raw;
};

// Plain chain-of-thought: one generation, no retrieval anywhere. The
// signature is the isolation guarantee, since no retriever is reachable.
Trace run_cot(const Problem& problem, GenerationBackend& backend, const TemplateStore& store,
              const StrategyConfig& config);

// Static retrieve-then-read: one retrieval with the problem statement as
// the query, the rendered block prepended to the user message, then a
// single generation. Records a round-0 InjectedKnowledge event and sets
// static_injected; retrieval_count stays 0 because no agentic search ran.
Trace run_static(const Problem& problem, GenerationBackend& backend, Retriever& retriever,
                 const KnowledgeInjector& injector, const TemplateStore& store,
                 const StrategyConfig& config);

// Adaptive loop: generation pauses at </search>, the query is retrieved,
// the rendered knowledge block is spliced into the transcript, and
// generation resumes, up to max_retrieval_rounds times. In Summarized
// mode the same backend doubles as the summarizer.
Trace run_adaptive(const Problem& problem, GenerationBackend& backend, Retriever& retriever,
                   const KnowledgeInjector& injector, const TemplateStore& store,
                   const StrategyConfig& config);

struct SuiteOptions {
    std::filesystem::path results_path;
    int parallelism = 1;
    // Progress lines land here (one per finished item); null silences them.
    std::ostream* progress = nullptr;
};

struct SuiteResult {
    int executed = 0;
    int skipped = 0; // already present in the results file
    int errored = 0; // executed but recorded with an error note
};

using TraceRunner = std::function<Trace(const Problem&)>;

// Runs `runner` over every problem not yet present in the results file,
// appending one serialized trace per line. Workers share an atomic work
// queue; one writer holds back out-of-order completions so lines land in
// problem order, which makes results files byte-identical across
// parallelism levels. A truncated final line (interrupted earlier run)
// is repaired by dropping it. Per-item failures are recorded in the
// trace; only I/O and configuration problems abort the suite.
SuiteResult run_suite(std::span<const Problem> problems, const TraceRunner& runner,
                      const SuiteOptions& options);

} // namespace mathrag
