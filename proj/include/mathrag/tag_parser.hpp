#pragma once

#include <string>
#include <variant>
#include <vector>

namespace mathrag {

// The four tag names the parser recognizes. Any other angle-bracket
// construct is plain text, since math output legitimately contains < and >.
enum class TagKind { Think, Search, Answer, RetrievedKnowledge };

std::string tag_open(TagKind kind);
std::string tag_close(TagKind kind);

namespace parse_event {

// Coalesced run of text. Emitted lazily: adjacent text is buffered and
// flushed as a single event when a tag event fires or the stream finishes,
// so the event sequence is independent of how the input was chunked.
struct Text {
    std::string text;
    bool operator==(const Text&) const = default;
};

struct ThinkOpen {
    bool operator==(const ThinkOpen&) const = default;
};

struct ThinkClose {
    bool operator==(const ThinkClose&) const = default;
};

// A fully closed <search>...</search>. query is the raw body.
struct SearchComplete {
    std::string query;
    bool operator==(const SearchComplete&) const = default;
};

// A fully closed <answer>...</answer>. value is the raw body.
struct AnswerComplete {
    std::string value;
    bool operator==(const AnswerComplete&) const = default;
};

// Stream ended inside an open search/answer tag.
struct UnterminatedTag {
    TagKind kind;
    std::string partial;
    bool operator==(const UnterminatedTag&) const = default;
};

} // namespace parse_event

using ParseEvent = std::variant<parse_event::Text, parse_event::ThinkOpen, parse_event::ThinkClose,
                                parse_event::SearchComplete, parse_event::AnswerComplete,
                                parse_event::UnterminatedTag>;

// Renders the event back to the byte sequence it was parsed from.
// Concatenating the renderings of a finished parse reproduces the input.
std::string render_event(const ParseEvent& ev);

// Incremental parser over a token/byte stream. feed() accepts arbitrary
// chunks, including ones that split tag literals; at most one partial tag
// literal (never more than 21 bytes) is held between calls.
//
// Tag semantics:
//   - <search>/<answer> bodies are opaque: nothing nests inside them.
//   - <retrieved_knowledge> regions pass through as text, with recognition
//     of other tags suspended until the region closes.
//   - <think> regions emit ThinkOpen/ThinkClose around their text; a think
//     inside a think is plain text.
class StreamTagParser {
public:
    std::vector<ParseEvent> feed(std::string_view chunk);

    // Flushes held state: pending partial literals become text (or search/
    // answer body), an open search/answer becomes UnterminatedTag, and any
    // buffered text is emitted. The parser must not be fed afterwards.
    std::vector<ParseEvent> finish();

    bool finished() const { return finished_; }

    // Bytes of partial tag literal currently held between feeds. Bounded
    // by the longest literal; exposed so tests can pin that bound.
    std::size_t pending_size() const { return pending_.size(); }

private:
    enum class Region { Top, Search, Answer, Retrieved };

    void flush_text(std::vector<ParseEvent>& out);

    Region region_ = Region::Top;
    bool in_think_ = false;
    bool finished_ = false;
    std::string pending_; // partial tag literal carried across feeds
    std::string text_;    // coalesced unflushed text (Top/Retrieved regions)
    std::string body_;    // body accumulator (Search/Answer regions)
};

} // namespace mathrag
