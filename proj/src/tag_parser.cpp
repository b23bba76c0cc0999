#include "mathrag/tag_parser.hpp"

#include "mathrag/errors.hpp"

#include <array>

namespace mathrag {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kSearchOpen = "<search>";
constexpr std::string_view kSearchClose = "</search>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";
constexpr std::string_view kRetrievedOpen = "<retrieved_knowledge>";
constexpr std::string_view kRetrievedClose = "</retrieved_knowledge>";

enum class Lit {
    ThinkOpen,
    ThinkClose,
    SearchOpen,
    SearchClose,
    AnswerOpen,
    AnswerClose,
    RetrievedOpen,
    RetrievedClose,
};

std::string_view lit_text(Lit l) {
    switch (l) {
    case Lit::ThinkOpen: return kThinkOpen;
    case Lit::ThinkClose: return kThinkClose;
    case Lit::SearchOpen: return kSearchOpen;
    case Lit::SearchClose: return kSearchClose;
    case Lit::AnswerOpen: return kAnswerOpen;
    case Lit::AnswerClose: return kAnswerClose;
    case Lit::RetrievedOpen: return kRetrievedOpen;
    case Lit::RetrievedClose: return kRetrievedClose;
    }
    return {};
}

} // namespace

std::string tag_open(TagKind kind) {
    switch (kind) {
    case TagKind::Think: return std::string(kThinkOpen);
    case TagKind::Search: return std::string(kSearchOpen);
    case TagKind::Answer: return std::string(kAnswerOpen);
    case TagKind::RetrievedKnowledge: return std::string(kRetrievedOpen);
    }
    return {};
}

std::string tag_close(TagKind kind) {
    switch (kind) {
    case TagKind::Think: return std::string(kThinkClose);
    case TagKind::Search: return std::string(kSearchClose);
    case TagKind::Answer: return std::string(kAnswerClose);
    case TagKind::RetrievedKnowledge: return std::string(kRetrievedClose);
    }
    return {};
}

std::string render_event(const ParseEvent& ev) {
    using namespace parse_event;
    return std::visit(
        [](const auto& e) -> std::string {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, Text>) {
                return e.text;
            } else if constexpr (std::is_same_v<T, ThinkOpen>) {
                return std::string(kThinkOpen);
            } else if constexpr (std::is_same_v<T, ThinkClose>) {
                return std::string(kThinkClose);
            } else if constexpr (std::is_same_v<T, SearchComplete>) {
                return std::string(kSearchOpen) + e.query + std::string(kSearchClose);
            } else if constexpr (std::is_same_v<T, AnswerComplete>) {
                return std::string(kAnswerOpen) + e.value + std::string(kAnswerClose);
            } else {
                return tag_open(e.kind) + e.partial;
            }
        },
        ev);
}

void StreamTagParser::flush_text(std::vector<ParseEvent>& out) {
    if (!text_.empty()) {
        out.push_back(parse_event::Text{std::move(text_)});
        text_.clear();
    }
}

std::vector<ParseEvent> StreamTagParser::feed(std::string_view chunk) {
    if (finished_) throw ValidationError("StreamTagParser: feed after finish");
    std::vector<ParseEvent> out;

    std::string input;
    if (!pending_.empty()) {
        input = std::move(pending_);
        pending_.clear();
        input.append(chunk);
    } else {
        input.assign(chunk);
    }

    // Non-tag bytes accumulate as emit-able text in Top/Retrieved regions
    // and as tag body in Search/Answer regions. Resolved per append since
    // the region changes as literals complete.
    auto acc = [&]() -> std::string& {
        return (region_ == Region::Search || region_ == Region::Answer) ? body_ : text_;
    };

    std::size_t i = 0;
    while (i < input.size()) {
        // Everything up to the next '<' can't start a tag.
        std::size_t lt = input.find('<', i);
        if (lt == std::string_view::npos) {
            acc().append(input, i, input.size() - i);
            break;
        }
        if (lt > i) acc().append(input, i, lt - i);
        i = lt;

        // Literals recognizable at this point. Within each set the names
        // are prefix-free, so at most one can match.
        std::array<Lit, 4> relevant{};
        std::size_t relevant_count = 0;
        switch (region_) {
        case Region::Top:
            relevant[relevant_count++] = in_think_ ? Lit::ThinkClose : Lit::ThinkOpen;
            relevant[relevant_count++] = Lit::SearchOpen;
            relevant[relevant_count++] = Lit::AnswerOpen;
            relevant[relevant_count++] = Lit::RetrievedOpen;
            break;
        case Region::Search: relevant[relevant_count++] = Lit::SearchClose; break;
        case Region::Answer: relevant[relevant_count++] = Lit::AnswerClose; break;
        case Region::Retrieved: relevant[relevant_count++] = Lit::RetrievedClose; break;
        }

        std::string_view rest(input.data() + i, input.size() - i);
        bool matched = false;
        bool held = false;
        for (std::size_t r = 0; r < relevant_count; ++r) {
            std::string_view lit = lit_text(relevant[r]);
            if (rest.size() >= lit.size()) {
                if (rest.substr(0, lit.size()) != lit) continue;
                matched = true;
                switch (relevant[r]) {
                case Lit::ThinkOpen:
                    flush_text(out);
                    out.push_back(parse_event::ThinkOpen{});
                    in_think_ = true;
                    break;
                case Lit::ThinkClose:
                    flush_text(out);
                    out.push_back(parse_event::ThinkClose{});
                    in_think_ = false;
                    break;
                case Lit::SearchOpen:
                    flush_text(out);
                    region_ = Region::Search;
                    body_.clear();
                    break;
                case Lit::SearchClose:
                    out.push_back(parse_event::SearchComplete{std::move(body_)});
                    body_.clear();
                    region_ = Region::Top;
                    break;
                case Lit::AnswerOpen:
                    flush_text(out);
                    region_ = Region::Answer;
                    body_.clear();
                    break;
                case Lit::AnswerClose:
                    out.push_back(parse_event::AnswerComplete{std::move(body_)});
                    body_.clear();
                    region_ = Region::Top;
                    break;
                case Lit::RetrievedOpen:
                    // Retrieved regions stay text; recognition of other
                    // tags is suspended until the close literal.
                    text_.append(lit);
                    region_ = Region::Retrieved;
                    break;
                case Lit::RetrievedClose:
                    text_.append(lit);
                    region_ = Region::Top;
                    break;
                }
                i += lit.size();
                break;
            }
            // rest is shorter than the literal; hold it if it could still
            // grow into this literal with more input.
            if (lit.substr(0, rest.size()) == rest) {
                pending_.assign(rest);
                i = input.size();
                held = true;
                break;
            }
        }
        if (matched) {
            // Region switches change which accumulator receives text.
            continue;
        }
        if (held) break;
        // A '<' that starts no recognizable literal is ordinary text.
        acc().push_back('<');
        i += 1;
    }
    return out;
}

std::vector<ParseEvent> StreamTagParser::finish() {
    if (finished_) throw ValidationError("StreamTagParser: finish called twice");
    finished_ = true;
    std::vector<ParseEvent> out;

    // A partial tag literal that never completed is just bytes.
    if (!pending_.empty()) {
        if (region_ == Region::Search || region_ == Region::Answer) {
            body_.append(pending_);
        } else {
            text_.append(pending_);
        }
        pending_.clear();
    }

    switch (region_) {
    case Region::Search:
        out.push_back(parse_event::UnterminatedTag{TagKind::Search, std::move(body_)});
        break;
    case Region::Answer:
        out.push_back(parse_event::UnterminatedTag{TagKind::Answer, std::move(body_)});
        break;
    case Region::Top:
    case Region::Retrieved:
        flush_text(out);
        break;
    }
    body_.clear();
    return out;
}

} // namespace mathrag
