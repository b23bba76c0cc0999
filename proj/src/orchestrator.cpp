#include "mathrag/orchestrator.hpp"

#include "mathrag/errors.hpp"
#include "mathrag/tag_parser.hpp"
#include "mathrag/util.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

namespace mathrag {

namespace {

// True for failures that belong in the trace's error field rather than
// aborting the whole run: transient backends, bad remote payloads,
// exhausted scripts, retrieval-stage trouble. Configuration and invariant
// errors stay fatal.
bool is_item_error(const std::exception& e) {
    return dynamic_cast<const BackendUnreachable*>(&e) != nullptr ||
           dynamic_cast<const BackendProtocol*>(&e) != nullptr ||
           dynamic_cast<const ScriptExhausted*>(&e) != nullptr ||
           dynamic_cast<const SummarizerFailed*>(&e) != nullptr ||
           dynamic_cast<const PipelineError*>(&e) != nullptr ||
           dynamic_cast<const EmptyCorpus*>(&e) != nullptr ||
           dynamic_cast<const InvalidQuery*>(&e) != nullptr;
}

std::string default_prompt_id(Strategy s) {
    switch (s) {
    case Strategy::Cot: return template_id::kSystemCot;
    case Strategy::StaticRag: return template_id::kSystemStaticRag;
    case Strategy::AdaptiveRag: return template_id::kSystemAdaptiveRag;
    }
    throw ValidationError("unknown strategy");
}

void check_config(const StrategyConfig& config, Strategy expected) {
    if (config.strategy != expected) {
        throw ValidationError("strategy config says " + to_string(config.strategy) + " but " +
                              to_string(expected) + " was invoked");
    }
    if (config.max_retrieval_rounds < 0) throw ValidationError("max_retrieval_rounds must be >= 0");
    if (config.per_call_params.max_new_tokens <= 0) throw ValidationError("max_new_tokens must be positive");
}

std::int64_t effective_budget(const StrategyConfig& config) {
    if (config.trace_token_budget > 0) return config.trace_token_budget;
    return std::int64_t(4) * config.per_call_params.max_new_tokens;
}

// Folds parser events into trace events. Tracks the think region so text
// lands in the right event kind, merges adjacent text of the same kind,
// and ignores everything after the first answer.
struct Collector {
    explicit Collector(std::vector<TraceEvent>& events_ref, bool searches_as_text_flag = false)
        : events(events_ref), searches_as_text(searches_as_text_flag) {}

    std::vector<TraceEvent>& events;
    // Strategies without an agentic loop keep search tags inline as text,
    // preserving their position in the stream.
    bool searches_as_text = false;
    bool in_think = false;
    bool answered = false;
    // Search queries completed in the segment just fed, in order. The
    // orchestrator decides whether each becomes a SearchCall or is
    // downgraded to text.
    std::vector<std::string> completed_searches;
    std::optional<parse_event::UnterminatedTag> unterminated;

    void text(std::string t) {
        if (t.empty() || answered) return;
        if (in_think) {
            if (!events.empty() && std::holds_alternative<ThinkText>(events.back())) {
                std::get<ThinkText>(events.back()).text += t;
                return;
            }
            events.push_back(ThinkText{std::move(t)});
        } else {
            if (!events.empty() && std::holds_alternative<PlainText>(events.back())) {
                std::get<PlainText>(events.back()).text += t;
                return;
            }
            events.push_back(PlainText{std::move(t)});
        }
    }

    void absorb(std::vector<ParseEvent> parsed) {
        for (auto& ev : parsed) {
            if (answered) break;
            std::visit(
                [&](auto& e) {
                    using T = std::decay_t<decltype(e)>;
                    if constexpr (std::is_same_v<T, parse_event::Text>) {
                        text(std::move(e.text));
                    } else if constexpr (std::is_same_v<T, parse_event::ThinkOpen>) {
                        in_think = true;
                    } else if constexpr (std::is_same_v<T, parse_event::ThinkClose>) {
                        in_think = false;
                    } else if constexpr (std::is_same_v<T, parse_event::SearchComplete>) {
                        if (searches_as_text) {
                            downgrade_search(e.query);
                        } else {
                            completed_searches.push_back(std::move(e.query));
                        }
                    } else if constexpr (std::is_same_v<T, parse_event::AnswerComplete>) {
                        events.push_back(Answer{std::move(e.value)});
                        answered = true;
                    } else if constexpr (std::is_same_v<T, parse_event::UnterminatedTag>) {
                        unterminated = std::move(e);
                    }
                },
                ev);
        }
    }

    // Renders a tag that fired but will not execute back into the text
    // stream, so the trace still shows what the model wrote.
    void downgrade_search(const std::string& query) {
        text(tag_open(TagKind::Search) + query + tag_close(TagKind::Search));
    }

    // Flushes parser leftovers at finalization. Partial tags reappear as
    // the text the model actually emitted.
    void finalize(StreamTagParser& parser) {
        absorb(parser.finish());
        if (unterminated) {
            text(tag_open(unterminated->kind) + unterminated->partial);
        }
    }
};

GenerationParams strategy_params(const StrategyConfig& config, Strategy strategy) {
    GenerationParams params = config.per_call_params;
    params.stop_sequences = {tag_close(TagKind::Answer)};
    if (strategy == Strategy::AdaptiveRag) {
        params.stop_sequences = {tag_close(TagKind::Search), tag_close(TagKind::Answer)};
    }
    return params;
}

Trace make_trace_shell(const Problem& problem, Strategy strategy) {
    Trace trace;
    trace.problem_id = problem.id;
    trace.strategy = strategy;
    return trace;
}

// Shared tail of the single-generation strategies: one call, parse, and
// status selection.
void run_single_generation(Trace& trace, const ChatPrompt& prompt, GenerationBackend& backend,
                           const TemplateStore& store, const GenerationParams& params) {
    GenerationResult result;
    try {
        result = backend.generate(render_chat(store, prompt), params);
    } catch (const std::exception& e) {
        if (!is_item_error(e)) throw;
        trace.error = e.what();
        trace.terminal_status = TerminalStatus::NoAnswer;
        return;
    }
    trace.token_usage.prompt += result.tokens.prompt;
    trace.token_usage.completion += result.tokens.completion;

    StreamTagParser parser;
    // No retrieval here: a search tag the model emitted anyway is inert
    // and stays in the trace as text, in place.
    Collector col(trace.events, /*searches_as_text=*/true);
    col.absorb(parser.feed(result.text));
    col.finalize(parser);

    if (col.answered) {
        trace.terminal_status = TerminalStatus::Answered;
    } else if (result.stop_reason.kind == StopKind::MaxTokens) {
        trace.terminal_status = TerminalStatus::BudgetExhausted;
    } else {
        trace.terminal_status = TerminalStatus::NoAnswer;
    }
}

} // namespace

Trace run_cot(const Problem& problem, GenerationBackend& backend, const TemplateStore& store,
              const StrategyConfig& config) {
    check_config(config, Strategy::Cot);
    Trace trace = make_trace_shell(problem, Strategy::Cot);

    ChatPrompt prompt;
    prompt.system = store.get(config.system_prompt_id.empty() ? default_prompt_id(config.strategy)
                                                              : config.system_prompt_id);
    prompt.user = problem.statement;
    run_single_generation(trace, prompt, backend, store, strategy_params(config, Strategy::Cot));
    validate_trace(trace);
    return trace;
}

Trace run_static(const Problem& problem, GenerationBackend& backend, Retriever& retriever,
                 const KnowledgeInjector& injector, const TemplateStore& store,
                 const StrategyConfig& config) {
    check_config(config, Strategy::StaticRag);
    Trace trace = make_trace_shell(problem, Strategy::StaticRag);

    InjectionBlock block;
    try {
        auto docs = retriever.retrieve(problem.statement);
        block = docs.empty() ? injector.no_results_block(config.injection_mode)
                             : injector.format(std::move(docs), config.injection_mode,
                                               config.injection_mode == InjectionMode::Summarized
                                                   ? &backend
                                                   : nullptr);
    } catch (const std::exception& e) {
        if (!is_item_error(e)) throw;
        trace.error = e.what();
        trace.terminal_status = TerminalStatus::NoAnswer;
        validate_trace(trace);
        return trace;
    }

    InjectedKnowledge injected;
    injected.docs = block.source_docs;
    injected.rendered = block.rendered;
    injected.mode = block.mode;
    injected.round = 0;
    trace.events.push_back(std::move(injected));
    trace.static_injected = true;

    ChatPrompt prompt;
    prompt.system = store.get(config.system_prompt_id.empty() ? default_prompt_id(config.strategy)
                                                              : config.system_prompt_id);
    // The block ends with a blank line, so the statement reads as its own
    // paragraph.
    prompt.user = block.rendered + problem.statement;
    run_single_generation(trace, prompt, backend, store, strategy_params(config, Strategy::StaticRag));
    validate_trace(trace);
    return trace;
}

Trace run_adaptive(const Problem& problem, GenerationBackend& backend, Retriever& retriever,
                   const KnowledgeInjector& injector, const TemplateStore& store,
                   const StrategyConfig& config) {
    check_config(config, Strategy::AdaptiveRag);
    Trace trace = make_trace_shell(problem, Strategy::AdaptiveRag);

    const GenerationParams params = strategy_params(config, Strategy::AdaptiveRag);
    const std::int64_t budget = effective_budget(config);
    const std::string system = store.get(
        config.system_prompt_id.empty() ? default_prompt_id(config.strategy) : config.system_prompt_id);

    StreamTagParser parser;
    Collector col(trace.events);
    std::string transcript;
    int rounds = 0;
    std::int64_t completion_tokens = 0;

    for (;;) {
        ChatPrompt prompt;
        prompt.system = system;
        prompt.user = problem.statement;
        prompt.assistant_prefix = transcript;

        GenerationResult result;
        try {
            result = backend.generate(render_chat(store, prompt), params);
        } catch (const std::exception& e) {
            if (!is_item_error(e)) throw;
            trace.error = e.what();
            col.finalize(parser);
            trace.terminal_status = TerminalStatus::NoAnswer;
            break;
        }
        transcript += result.text;
        trace.token_usage.prompt += result.tokens.prompt;
        trace.token_usage.completion += result.tokens.completion;
        completion_tokens += result.tokens.completion;

        col.absorb(parser.feed(result.text));

        if (col.answered) {
            trace.terminal_status = TerminalStatus::Answered;
            break;
        }

        if (!col.completed_searches.empty()) {
            // Stop sequences guarantee at most one completed search per
            // segment; a scripted backend can only violate that by
            // misconfiguration, which validate_trace would flag anyway.
            std::string query = std::move(col.completed_searches.front());
            col.completed_searches.clear();

            if (rounds >= config.max_retrieval_rounds) {
                col.downgrade_search(query);
                trace.terminal_status = TerminalStatus::BudgetExhausted;
                break;
            }

            InjectionBlock block;
            try {
                if (trim(query).empty()) {
                    block = injector.no_results_block(config.injection_mode);
                } else {
                    auto docs = retriever.retrieve(query);
                    block = docs.empty()
                                ? injector.no_results_block(config.injection_mode)
                                : injector.format(std::move(docs), config.injection_mode,
                                                  config.injection_mode == InjectionMode::Summarized
                                                      ? &backend
                                                      : nullptr);
                }
            } catch (const std::exception& e) {
                if (!is_item_error(e)) throw;
                // The search cannot be honored, so it reverts to text and
                // the item ends with the failure on record.
                col.downgrade_search(query);
                trace.error = e.what();
                trace.terminal_status = TerminalStatus::NoAnswer;
                break;
            }

            rounds += 1;
            trace.retrieval_count = rounds;
            trace.events.push_back(SearchCall{query, rounds});
            InjectedKnowledge injected;
            injected.docs = block.source_docs;
            injected.rendered = block.rendered;
            injected.mode = block.mode;
            injected.round = rounds;
            trace.events.push_back(std::move(injected));

            transcript += "\n" + block.rendered;

            if (completion_tokens >= budget) {
                trace.terminal_status = TerminalStatus::BudgetExhausted;
                break;
            }
            continue;
        }

        if (result.stop_reason.kind == StopKind::MaxTokens) {
            col.finalize(parser);
            if (col.unterminated && col.unterminated->kind == TagKind::Search) {
                // A truncated query must not be executed; treating the cut
                // as no-answer keeps noise out of the context.
                trace.terminal_status = TerminalStatus::NoAnswer;
            } else {
                trace.terminal_status = TerminalStatus::BudgetExhausted;
            }
            break;
        }
        if (result.stop_reason.kind == StopKind::EndOfTurn) {
            col.finalize(parser);
            trace.terminal_status = TerminalStatus::NoAnswer;
            break;
        }

        // A stop sequence fired without producing an event: the literal
        // sat inside an opaque region (e.g. a fake retrieved_knowledge
        // block). Resume unless the token budget is gone.
        if (completion_tokens >= budget) {
            col.finalize(parser);
            trace.terminal_status = TerminalStatus::BudgetExhausted;
            break;
        }
    }

    // Text flushing is idempotent-safe here: finalize ran on every exit
    // path that left the parser mid-stream, and answered exits leave
    // nothing behind by construction.
    if (!parser.finished() && !col.answered) col.finalize(parser);
    validate_trace(trace);
    return trace;
}

namespace {

// Scans an existing results file for finished problem ids. A final line
// that does not parse as JSON is treated as an interrupted append and
// truncated away; any earlier damage is a real error.
std::vector<std::string> existing_ids_with_repair(const std::filesystem::path& path) {
    std::vector<std::string> ids;
    if (!std::filesystem::exists(path)) return ids;
    std::string content = read_file(path.string());
    if (content.empty()) return ids;

    std::size_t pos = 0;
    while (pos < content.size()) {
        std::size_t eol = content.find('\n', pos);
        bool last = eol == std::string::npos;
        std::string_view line(content.data() + pos, (last ? content.size() : eol) - pos);
        std::size_t next = last ? content.size() : eol + 1;

        if (!trim(std::string(line)).empty()) {
            try {
                Trace t = deserialize_trace(line);
                ids.push_back(t.problem_id);
            } catch (const std::exception& e) {
                if (last) {
                    // Unterminated final line: an interrupted append, since
                    // the writer emits the newline with the record. Drop it.
                    std::filesystem::resize_file(path, pos);
                    return ids;
                }
                throw MalformedRecord(path.string() + ": damaged record: " + e.what(),
                                      static_cast<std::int64_t>(pos), "");
            }
        }
        pos = next;
    }
    return ids;
}

} // namespace

SuiteResult run_suite(std::span<const Problem> problems, const TraceRunner& runner,
                      const SuiteOptions& options) {
    if (options.results_path.empty()) throw ConfigError("run_suite: results_path is empty");
    if (options.parallelism < 1) throw ConfigError("run_suite: parallelism must be >= 1");

    auto done_ids = existing_ids_with_repair(options.results_path);
    std::set<std::string> done(done_ids.begin(), done_ids.end());

    std::vector<const Problem*> todo;
    for (const Problem& p : problems) {
        if (!done.count(p.id)) todo.push_back(&p);
    }

    SuiteResult summary;
    summary.skipped = static_cast<int>(problems.size() - todo.size());

    if (options.results_path.has_parent_path()) {
        std::filesystem::create_directories(options.results_path.parent_path());
    }
    // If a repaired file lost its trailing newline, restore it before
    // appending.
    bool needs_newline = false;
    if (std::filesystem::exists(options.results_path) &&
        std::filesystem::file_size(options.results_path) > 0) {
        std::ifstream probe(options.results_path, std::ios::binary);
        probe.seekg(-1, std::ios::end);
        needs_newline = probe.get() != '\n';
    }
    std::ofstream out(options.results_path, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot open results file " + options.results_path.string());
    if (needs_newline) out << '\n';

    std::mutex write_mu;
    // Guarded by write_mu: completions that arrived ahead of their turn,
    // and the index of the next line due. Holding lines back keeps the
    // file in problem order, so identical configs produce byte-identical
    // results files at any parallelism.
    std::map<std::size_t, std::string> held_back;
    std::size_t write_next = 0;
    std::atomic<std::size_t> next{0};
    std::atomic<int> finished{0};
    std::atomic<int> errored{0};
    std::mutex failure_mu;
    std::exception_ptr first_failure;

    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= todo.size()) return;
            const Problem& p = *todo[i];
            try {
                Trace trace = runner(p);
                if (trace.problem_id != p.id) {
                    throw ValidationError("runner returned trace for '" + trace.problem_id +
                                          "' while executing '" + p.id + "'");
                }
                std::string line = serialize_trace(trace);
                bool has_error = trace.error.has_value();
                if (has_error) errored.fetch_add(1);
                {
                    std::lock_guard<std::mutex> lock(write_mu);
                    held_back.emplace(i, std::move(line));
                    while (!held_back.empty() && held_back.begin()->first == write_next) {
                        out << held_back.begin()->second << '\n';
                        held_back.erase(held_back.begin());
                        ++write_next;
                    }
                    out.flush();
                    int done_now = finished.fetch_add(1) + 1;
                    if (options.progress) {
                        (*options.progress)
                            << "[" << done_now << "/" << todo.size() << "] " << p.id << " "
                            << to_string(trace.terminal_status)
                            << (has_error ? " (error: " + *trace.error + ")" : "") << "\n";
                    }
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mu);
                if (!first_failure) first_failure = std::current_exception();
                return;
            }
        }
    };

    int n_workers =
        std::min(options.parallelism, static_cast<int>(std::max<std::size_t>(todo.size(), 1)));
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(n_workers));
    for (int i = 0; i < n_workers; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_failure) std::rethrow_exception(first_failure);

    summary.executed = finished.load();
    summary.errored = errored.load();
    return summary;
}

} // namespace mathrag
