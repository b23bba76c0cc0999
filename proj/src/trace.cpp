#include "mathrag/trace.hpp"

#include "mathrag/errors.hpp"
#include "mathrag/util.hpp"

#include "json.hpp"

#include <set>
#include <utility>

namespace mathrag {

using nlohmann::json;

std::string to_string(Dataset d) {
    switch (d) {
    case Dataset::Gsm8k: return "gsm8k";
    case Dataset::Math: return "math";
    }
    return "?";
}

Dataset dataset_from_string(const std::string& s) {
    if (s == "gsm8k") return Dataset::Gsm8k;
    if (s == "math") return Dataset::Math;
    throw MalformedRecord("unknown dataset '" + s + "'", 0, "/dataset");
}

std::string to_string(Strategy s) {
    switch (s) {
    case Strategy::Cot: return "cot";
    case Strategy::StaticRag: return "static_rag";
    case Strategy::AdaptiveRag: return "adaptive_rag";
    }
    return "?";
}

Strategy strategy_from_string(const std::string& s) {
    if (s == "cot") return Strategy::Cot;
    if (s == "static_rag") return Strategy::StaticRag;
    if (s == "adaptive_rag") return Strategy::AdaptiveRag;
    throw MalformedRecord("unknown strategy '" + s + "'", 0, "/strategy");
}

std::string to_string(InjectionMode m) {
    switch (m) {
    case InjectionMode::Raw: return "raw";
    case InjectionMode::Summarized: return "summarized";
    }
    return "?";
}

InjectionMode injection_mode_from_string(const std::string& s) {
    if (s == "raw") return InjectionMode::Raw;
    if (s == "summarized") return InjectionMode::Summarized;
    throw MalformedRecord("unknown injection mode '" + s + "'", 0, "/mode");
}

std::string to_string(TerminalStatus s) {
    switch (s) {
    case TerminalStatus::Answered: return "answered";
    case TerminalStatus::NoAnswer: return "no_answer";
    case TerminalStatus::BudgetExhausted: return "budget_exhausted";
    }
    return "?";
}

TerminalStatus terminal_status_from_string(const std::string& s) {
    if (s == "answered") return TerminalStatus::Answered;
    if (s == "no_answer") return TerminalStatus::NoAnswer;
    if (s == "budget_exhausted") return TerminalStatus::BudgetExhausted;
    throw MalformedRecord("unknown terminal status '" + s + "'", 0, "/terminal_status");
}

// -- validation -------------------------------------------------------------------

void validate_trace(const Trace& trace) {
    auto fail = [&](const std::string& what, const std::string& field) {
        throw InvariantViolation("trace '" + trace.problem_id + "': " + what, 0, field);
    };

    if (trace.problem_id.empty()) fail("empty problem_id", "/problem_id");

    int searches = 0;
    int injections_paired = 0;
    int expected_round = 0;
    bool awaiting_injection = false;
    bool saw_answer = false;
    bool saw_static_injection = false;

    for (std::size_t i = 0; i < trace.events.size(); ++i) {
        const TraceEvent& ev = trace.events[i];
        std::string field = "/events/" + std::to_string(i);
        if (saw_answer) fail("event after answer", field);

        if (const auto* sc = std::get_if<SearchCall>(&ev)) {
            if (awaiting_injection) fail("search call while previous one is unanswered", field);
            ++searches;
            ++expected_round;
            if (sc->round != expected_round) {
                fail("search round " + std::to_string(sc->round) + ", expected " + std::to_string(expected_round), field);
            }
            awaiting_injection = true;
        } else if (const auto* ik = std::get_if<InjectedKnowledge>(&ev)) {
            if (ik->round == 0) {
                if (i != 0) fail("round-0 injection not at the start", field);
                saw_static_injection = true;
            } else {
                if (!awaiting_injection) fail("injection without preceding search call", field);
                if (ik->round != expected_round) {
                    fail("injection round " + std::to_string(ik->round) + ", expected " + std::to_string(expected_round), field);
                }
                awaiting_injection = false;
                ++injections_paired;
            }
            for (std::size_t d = 0; d < ik->docs.size(); ++d) {
                if (ik->docs[d].rank != static_cast<int>(d) + 1) {
                    fail("injected doc rank out of order", field + "/docs/" + std::to_string(d));
                }
            }
        } else if (std::holds_alternative<Answer>(ev)) {
            saw_answer = true;
        }
    }

    if (awaiting_injection) fail("search call without paired injection", "/events");
    if (searches != injections_paired) fail("search/injection count mismatch", "/events");
    if (trace.retrieval_count != searches) {
        fail("retrieval_count " + std::to_string(trace.retrieval_count) + " != search calls " + std::to_string(searches),
             "/retrieval_count");
    }
    if (trace.static_injected != saw_static_injection) fail("static_injected flag inconsistent with events", "/static_injected");
    if (saw_static_injection && trace.strategy != Strategy::StaticRag) {
        fail("round-0 injection outside static strategy", "/events/0");
    }
    if (trace.strategy == Strategy::Cot && searches > 0) fail("search call in cot trace", "/events");
    if (trace.strategy == Strategy::StaticRag && searches > 0) fail("search call in static trace", "/events");
    if (saw_answer != (trace.terminal_status == TerminalStatus::Answered)) {
        fail("terminal_status inconsistent with answer event", "/terminal_status");
    }
    if (trace.token_usage.prompt < 0 || trace.token_usage.completion < 0) {
        fail("negative token usage", "/token_usage");
    }
}

// -- serialization ------------------------------------------------------------------

namespace {

json scored_doc_to_json(const ScoredDocument& sd) {
    json j;
    j["id"] = sd.doc.id;
    j["text"] = sd.doc.text;
    j["source"] = sd.doc.source;
    if (!sd.doc.metadata.empty()) j["metadata"] = sd.doc.metadata;
    j["dense_score"] = sd.dense_score;
    j["rerank_score"] = sd.rerank_score;
    j["rank"] = sd.rank;
    return j;
}

ScoredDocument scored_doc_from_json(const json& j) {
    ScoredDocument sd;
    sd.doc.id = j.at("id").get<std::string>();
    sd.doc.text = j.at("text").get<std::string>();
    sd.doc.source = j.at("source").get<std::string>();
    if (j.contains("metadata")) sd.doc.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
    sd.dense_score = j.at("dense_score").get<double>();
    sd.rerank_score = j.at("rerank_score").get<double>();
    sd.rank = j.at("rank").get<int>();
    return sd;
}

json event_to_json(const TraceEvent& ev) {
    json j;
    std::visit(
        [&](const auto& e) {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, ThinkText>) {
                j["type"] = "think";
                j["text"] = e.text;
            } else if constexpr (std::is_same_v<T, SearchCall>) {
                j["type"] = "search";
                j["query"] = e.query;
                j["round"] = e.round;
            } else if constexpr (std::is_same_v<T, InjectedKnowledge>) {
                j["type"] = "injected";
                json docs = json::array();
                for (const auto& d : e.docs) docs.push_back(scored_doc_to_json(d));
                j["docs"] = std::move(docs);
                j["rendered"] = e.rendered;
                j["mode"] = to_string(e.mode);
                j["round"] = e.round;
            } else if constexpr (std::is_same_v<T, Answer>) {
                j["type"] = "answer";
                j["raw"] = e.raw;
            } else {
                j["type"] = "text";
                j["text"] = e.text;
            }
        },
        ev);
    return j;
}

TraceEvent event_from_json(const json& j, const std::string& field) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "think") return ThinkText{j.at("text").get<std::string>()};
    if (type == "search") return SearchCall{j.at("query").get<std::string>(), j.at("round").get<int>()};
    if (type == "injected") {
        InjectedKnowledge ik;
        for (const auto& dj : j.at("docs")) ik.docs.push_back(scored_doc_from_json(dj));
        ik.rendered = j.at("rendered").get<std::string>();
        ik.mode = injection_mode_from_string(j.at("mode").get<std::string>());
        ik.round = j.at("round").get<int>();
        return ik;
    }
    if (type == "answer") return Answer{j.at("raw").get<std::string>()};
    if (type == "text") return PlainText{j.at("text").get<std::string>()};
    throw MalformedRecord("unknown event type '" + type + "'", 0, field + "/type");
}

} // namespace

std::string serialize_trace(const Trace& trace) {
    validate_trace(trace);
    json j;
    j["schema_version"] = kTraceSchemaVersion;
    j["problem_id"] = trace.problem_id;
    j["strategy"] = to_string(trace.strategy);
    json events = json::array();
    for (const auto& ev : trace.events) events.push_back(event_to_json(ev));
    j["events"] = std::move(events);
    j["retrieval_count"] = trace.retrieval_count;
    j["terminal_status"] = to_string(trace.terminal_status);
    j["token_usage"] = {{"prompt", trace.token_usage.prompt}, {"completion", trace.token_usage.completion}};
    if (trace.static_injected) j["static_injected"] = true;
    if (trace.error) j["error"] = *trace.error;
    return j.dump();
}

Trace deserialize_trace(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw MalformedRecord(std::string("trace line is not valid JSON: ") + e.what(),
                              static_cast<std::size_t>(e.byte), "");
    }
    Trace t;
    try {
        int version = j.at("schema_version").get<int>();
        if (version != kTraceSchemaVersion) {
            throw MalformedRecord("unsupported schema_version " + std::to_string(version), 0, "/schema_version");
        }
        t.problem_id = j.at("problem_id").get<std::string>();
        t.strategy = strategy_from_string(j.at("strategy").get<std::string>());
        const auto& events = j.at("events");
        for (std::size_t i = 0; i < events.size(); ++i) {
            t.events.push_back(event_from_json(events[i], "/events/" + std::to_string(i)));
        }
        t.retrieval_count = j.at("retrieval_count").get<int>();
        t.terminal_status = terminal_status_from_string(j.at("terminal_status").get<std::string>());
        t.token_usage.prompt = j.at("token_usage").at("prompt").get<std::int64_t>();
        t.token_usage.completion = j.at("token_usage").at("completion").get<std::int64_t>();
        t.static_injected = j.value("static_injected", false);
        if (j.contains("error")) t.error = j.at("error").get<std::string>();
    } catch (const json::exception& e) {
        throw MalformedRecord(std::string("trace field error: ") + e.what(), 0, "");
    }
    validate_trace(t);
    return t;
}

std::string serialize_problem(const Problem& problem) {
    json j;
    j["id"] = problem.id;
    j["dataset"] = to_string(problem.dataset);
    j["statement"] = problem.statement;
    j["gold_answer"] = problem.gold_answer;
    if (problem.difficulty) j["difficulty"] = *problem.difficulty;
    return j.dump();
}

Problem deserialize_problem(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw MalformedRecord(std::string("problem line is not valid JSON: ") + e.what(),
                              static_cast<std::size_t>(e.byte), "");
    }
    Problem p;
    try {
        p.id = j.at("id").get<std::string>();
        p.dataset = dataset_from_string(j.at("dataset").get<std::string>());
        p.statement = j.at("statement").get<std::string>();
        p.gold_answer = j.at("gold_answer").get<std::string>();
        if (j.contains("difficulty")) p.difficulty = j.at("difficulty").get<int>();
    } catch (const json::exception& e) {
        throw MalformedRecord(std::string("problem field error: ") + e.what(), 0, "");
    }
    if (p.id.empty()) throw InvariantViolation("empty problem id", 0, "/id");
    if (p.statement.empty()) throw InvariantViolation("empty statement for '" + p.id + "'", 0, "/statement");
    return p;
}

std::vector<Problem> load_problems(const std::string& path) {
    const std::string text = read_file(path);
    std::vector<Problem> out;
    std::set<std::string> seen;
    for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        Problem p;
        try {
            p = deserialize_problem(line);
        } catch (const Error& e) {
            throw MalformedRecord(path + ":" + std::to_string(line_no) + ": " + e.what(), 0, "");
        }
        if (!seen.insert(p.id).second) {
            throw InvariantViolation(path + ":" + std::to_string(line_no) + ": duplicate problem id '" + p.id + "'", 0, "/id");
        }
        out.push_back(std::move(p));
    });
    if (out.empty()) throw EmptyInput("no problems in " + path);
    bool first_has_difficulty = out.front().difficulty.has_value();
    for (const auto& p : out) {
        if (p.difficulty.has_value() != first_has_difficulty) {
            throw InvariantViolation("mixed difficulty annotation in " + path + " at problem '" + p.id + "'", 0, "/difficulty");
        }
    }
    return out;
}

std::vector<Trace> load_traces(const std::string& path) {
    const std::string text = read_file(path);
    std::vector<Trace> out;
    for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        try {
            out.push_back(deserialize_trace(line));
        } catch (const Error& e) {
            throw MalformedRecord(path + ":" + std::to_string(line_no) + ": " + e.what(), 0, "");
        }
    });
    return out;
}

const Answer* final_answer(const Trace& trace) {
    if (trace.events.empty()) return nullptr;
    return std::get_if<Answer>(&trace.events.back());
}

int count_search_calls(const Trace& trace) {
    int n = 0;
    for (const auto& ev : trace.events) {
        if (std::holds_alternative<SearchCall>(ev)) ++n;
    }
    return n;
}

} // namespace mathrag
