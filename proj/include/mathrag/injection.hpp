#pragma once

#include "mathrag/document.hpp"
#include "mathrag/generation.hpp"
#include "mathrag/templates.hpp"
#include "mathrag/trace.hpp"

#include <span>
#include <string>
#include <vector>

namespace mathrag {

// The summarizer's refusal token: evidence from which no single canonical
// method could be extracted.
inline constexpr const char* kUnhelpfulSentinel = "UNHELPFUL";

struct InjectionBlock {
    std::string rendered;
    InjectionMode mode = InjectionMode::Raw;
    std::vector<ScoredDocument> source_docs;
};

// Renders retrieved documents into the block spliced into the transcript:
// the integration wrapper with either the raw per-document texts or a
// one-sentence summary inside the <retrieved_knowledge> region.
class KnowledgeInjector {
public:
    explicit KnowledgeInjector(const TemplateStore& store);

    // Raw mode needs no backend. Summarized mode distills the doc texts
    // through `summarizer`; a backend failure there surfaces as
    // SummarizerFailed. docs must be non-empty and rank-ordered.
    InjectionBlock format(std::vector<ScoredDocument> docs, InjectionMode mode,
                          GenerationBackend* summarizer = nullptr) const;

    // Block injected when a search legitimately found nothing (e.g. an
    // empty query): the wrapper around an explicit no-results line, so the
    // model can take its "retrieval not helpful" branch.
    InjectionBlock no_results_block(InjectionMode mode) const;

    // The distillation call itself: evidence texts in, one trimmed line
    // out (possibly the UNHELPFUL sentinel). Backend errors propagate.
    std::string summarize(std::span<const ScoredDocument> docs, GenerationBackend& summarizer) const;

private:
    std::string wrap(const std::string& injected_text) const;

    const TemplateStore& store_;
};

} // namespace mathrag
