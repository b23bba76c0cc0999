#include "mathrag/generation.hpp"

#include "mathrag/errors.hpp"
#include "mathrag/util.hpp"

#include "json.hpp"

namespace mathrag {

using nlohmann::json;

std::string to_string(StopKind k) {
    switch (k) {
    case StopKind::StopSequence: return "stop_sequence";
    case StopKind::MaxTokens: return "max_tokens";
    case StopKind::EndOfTurn: return "end_of_turn";
    }
    return "?";
}

std::string render_chat(const TemplateStore& store, const ChatPrompt& prompt) {
    if (prompt.system.empty()) throw ValidationError("render_chat: empty system message");
    if (prompt.user.empty()) throw ValidationError("render_chat: empty user message");
    std::string out = replace_once(store.get(template_id::kChat), "{system}", prompt.system);
    out = replace_once(out, "{user}", prompt.user);
    out += prompt.assistant_prefix;
    return out;
}

GenerationResult apply_generation_limits(std::string raw, const GenerationParams& params) {
    if (params.max_new_tokens <= 0) throw ValidationError("max_new_tokens must be positive");

    std::string text = truncate_whitespace_pieces(raw, static_cast<std::size_t>(params.max_new_tokens));
    bool truncated = text.size() < raw.size();

    // Earliest stop occurrence wins; the match is kept in the text.
    std::size_t best_pos = std::string::npos;
    std::string_view best_seq;
    for (const auto& seq : params.stop_sequences) {
        if (seq.empty()) continue;
        std::size_t pos = text.find(seq);
        if (pos != std::string::npos && (best_pos == std::string::npos || pos < best_pos)) {
            best_pos = pos;
            best_seq = seq;
        }
    }

    GenerationResult res;
    if (best_pos != std::string::npos) {
        res.text = text.substr(0, best_pos + best_seq.size());
        res.stop_reason = {StopKind::StopSequence, std::string(best_seq)};
    } else if (truncated) {
        res.text = std::move(text);
        res.stop_reason = {StopKind::MaxTokens, ""};
    } else {
        res.text = std::move(text);
        res.stop_reason = {StopKind::EndOfTurn, ""};
    }
    res.tokens.completion = static_cast<std::int64_t>(count_whitespace_pieces(res.text));
    res.tokens.approximate = true;
    return res;
}

ScriptedBackend::ScriptedBackend(std::vector<std::string> turns) : fallback_(std::move(turns)) {}

ScriptedBackend::ScriptedBackend(std::vector<Entry> entries, std::vector<std::string> fallback_turns)
    : fallback_(std::move(fallback_turns)) {
    entries_.reserve(entries.size());
    for (auto& e : entries) {
        if (e.match.empty()) throw ValidationError("scripted backend: keyed entry with empty match");
        entries_.push_back(EntryState{std::move(e), 0});
    }
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("script file " + path.string() + " is not valid JSON: " + e.what());
    }
    std::vector<Entry> entries;
    std::vector<std::string> fallback;
    try {
        if (j.contains("keyed")) {
            for (const auto& ej : j.at("keyed")) {
                Entry e;
                e.match = ej.at("match").get<std::string>();
                e.turns = ej.at("turns").get<std::vector<std::string>>();
                entries.push_back(std::move(e));
            }
        }
        if (j.contains("turns")) fallback = j.at("turns").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw ConfigError("script file " + path.string() + ": " + e.what());
    }
    if (entries.empty() && fallback.empty()) {
        throw ConfigError("script file " + path.string() + " has no turns");
    }
    return std::make_unique<ScriptedBackend>(std::move(entries), std::move(fallback));
}

GenerationResult ScriptedBackend::generate(const std::string& prompt, const GenerationParams& params) {
    std::string turn;
    {
        std::lock_guard<std::mutex> lock(mu_);
        call_log_.push_back(prompt);
        EntryState* hit = nullptr;
        for (auto& es : entries_) {
            if (contains(prompt, es.entry.match)) {
                hit = &es;
                break;
            }
        }
        if (hit) {
            if (hit->cursor >= hit->entry.turns.size()) {
                throw ScriptExhausted("scripted backend: entry '" + hit->entry.match + "' has no turn " +
                                      std::to_string(hit->cursor + 1));
            }
            turn = hit->entry.turns[hit->cursor++];
        } else {
            if (fallback_cursor_ >= fallback_.size()) {
                throw ScriptExhausted("scripted backend: out of unkeyed turns at call " +
                                      std::to_string(fallback_cursor_ + 1));
            }
            turn = fallback_[fallback_cursor_++];
        }
    }
    GenerationResult res = apply_generation_limits(std::move(turn), params);
    res.tokens.prompt = static_cast<std::int64_t>(count_whitespace_pieces(prompt));
    return res;
}

std::vector<std::string> ScriptedBackend::calls() const {
    std::lock_guard<std::mutex> lock(mu_);
    return call_log_;
}

} // namespace mathrag
