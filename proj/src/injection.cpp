#include "mathrag/injection.hpp"

#include "mathrag/errors.hpp"
#include "mathrag/util.hpp"

#include <sstream>

namespace mathrag {

KnowledgeInjector::KnowledgeInjector(const TemplateStore& store) : store_(store) {}

std::string KnowledgeInjector::wrap(const std::string& injected_text) const {
    return replace_once(store_.get(template_id::kIntegrationBlock), "{injected_text}", injected_text);
}

std::string KnowledgeInjector::summarize(std::span<const ScoredDocument> docs,
                                         GenerationBackend& summarizer) const {
    if (docs.empty()) throw ValidationError("summarize: no documents");

    std::string evidence;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (i > 0) evidence += "\n\n";
        evidence += docs[i].doc.text;
    }

    ChatPrompt prompt;
    prompt.system = store_.get(template_id::kSummaryExtract);
    prompt.user = evidence;
    GenerationParams params;
    params.temperature = 0.0;
    params.max_new_tokens = 128;
    GenerationResult res = summarizer.generate(render_chat(store_, prompt), params);

    // Keep the first non-empty line; a chatty summarizer may pad with
    // blank lines but the contract is one sentence.
    std::istringstream lines(res.text);
    std::string line;
    while (std::getline(lines, line)) {
        std::string trimmed = trim(line);
        if (!trimmed.empty()) return trimmed;
    }
    throw SummarizerFailed("summarizer returned no usable line");
}

InjectionBlock KnowledgeInjector::no_results_block(InjectionMode mode) const {
    InjectionBlock block;
    block.mode = mode;
    block.rendered = wrap("No results were retrieved for this query.");
    return block;
}

InjectionBlock KnowledgeInjector::format(std::vector<ScoredDocument> docs, InjectionMode mode,
                                         GenerationBackend* summarizer) const {
    InjectionBlock block;
    block.mode = mode;

    if (docs.empty()) throw ValidationError("format: no documents (use no_results_block)");
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (docs[i].rank != static_cast<int>(i) + 1) {
            throw ValidationError("format: docs must arrive rank-ordered");
        }
    }

    std::string body;
    if (mode == InjectionMode::Raw) {
        std::ostringstream out;
        out.setf(std::ios::fixed);
        out.precision(4);
        for (std::size_t i = 0; i < docs.size(); ++i) {
            if (i > 0) out << "\n---\n";
            out << "[source:" << docs[i].doc.source << " rank:" << docs[i].rank
                << " score:" << docs[i].rerank_score << "]\n"
                << docs[i].doc.text;
        }
        body = out.str();
    } else {
        if (!summarizer) throw ValidationError("format: summarized mode needs a backend");
        try {
            body = summarize(docs, *summarizer);
        } catch (const SummarizerFailed&) {
            throw;
        } catch (const std::exception& e) {
            throw SummarizerFailed(std::string("summarization backend failed: ") + e.what());
        }
    }

    block.rendered = wrap(body);
    block.source_docs = std::move(docs);
    return block;
}

} // namespace mathrag
