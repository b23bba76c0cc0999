#include "mathrag/evaluation.hpp"

#include "mathrag/errors.hpp"
#include "mathrag/util.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <sstream>

namespace mathrag {

using nlohmann::json;

namespace {

// Bytes removed wholesale from numeric-style answers before parsing:
// dollar marks, thousands separators, and whitespace. The multi-byte
// entries are the UTF-8 encodings of other common currency signs.
const std::vector<std::string>& numeric_noise() {
    static const std::vector<std::string> noise = {
        "$", ",", " ", "\t", "\r", "\n",
        "\xC2\xA3",     // pound
        "\xC2\xA5",     // yen
        "\xE2\x82\xAC", // euro
    };
    return noise;
}

std::string strip_numeric_noise(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        bool skipped = false;
        for (const auto& tok : numeric_noise()) {
            if (s.compare(i, tok.size(), tok) == 0) {
                i += tok.size();
                skipped = true;
                break;
            }
        }
        if (!skipped) out.push_back(s[i++]);
    }
    return out;
}

bool all_digits(std::string_view s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string strip_leading_zeros(std::string_view digits) {
    std::size_t i = 0;
    while (i + 1 < digits.size() && digits[i] == '0') ++i;
    return std::string(digits.substr(i));
}

// Canonical rendering for strings that parse as a signed decimal or a
// simple integer fraction. Works lexically so digit counts beyond int64
// are still handled; returns empty optional when the shape doesn't match.
std::optional<std::string> canonical_rational(const std::string& s) {
    if (s.empty()) return std::nullopt;
    std::string_view v = s;
    bool negative = false;
    if (v.front() == '+' || v.front() == '-') {
        negative = v.front() == '-';
        v.remove_prefix(1);
    }

    auto slash = v.find('/');
    if (slash != std::string_view::npos) {
        auto num = v.substr(0, slash);
        auto den = v.substr(slash + 1);
        if (!all_digits(num) || !all_digits(den)) return std::nullopt;
        // reduce when both sides fit a 64-bit integer; otherwise keep the
        // lexical form with zeros trimmed
        if (num.size() <= 18 && den.size() <= 18) {
            std::int64_t a = std::stoll(std::string(num));
            std::int64_t b = std::stoll(std::string(den));
            if (b == 0) return std::nullopt; // not a number; compare as text
            std::int64_t g = std::gcd(a, b);
            if (g > 0) {
                a /= g;
                b /= g;
            }
            if (a == 0) return std::string("0");
            std::string out = negative ? "-" : "";
            out += std::to_string(a);
            if (b != 1) out += "/" + std::to_string(b);
            return out;
        }
        std::string out = negative ? "-" : "";
        out += strip_leading_zeros(num) + "/" + strip_leading_zeros(den);
        return out;
    }

    auto dot = v.find('.');
    std::string_view int_part = dot == std::string_view::npos ? v : v.substr(0, dot);
    std::string_view frac_part = dot == std::string_view::npos ? std::string_view{} : v.substr(dot + 1);
    if (dot != std::string_view::npos && v.find('.', dot + 1) != std::string_view::npos) {
        return std::nullopt; // two dots; not numeric
    }
    if (int_part.empty() && frac_part.empty()) return std::nullopt;
    if (!int_part.empty() && !all_digits(int_part)) return std::nullopt;
    if (!frac_part.empty() && !all_digits(frac_part)) return std::nullopt;

    std::string ip = int_part.empty() ? "0" : strip_leading_zeros(int_part);
    std::string fp(frac_part);
    while (!fp.empty() && fp.back() == '0') fp.pop_back();

    bool is_zero = ip == "0" && fp.empty();
    std::string out = (negative && !is_zero) ? "-" : "";
    out += ip;
    if (!fp.empty()) out += "." + fp;
    return out;
}

std::string normalize_numeric(const std::string& raw) {
    std::string s = strip_numeric_noise(trim(raw));
    while (!s.empty() && s.back() == '.') s.pop_back();
    if (auto canon = canonical_rational(s)) return *canon;
    return s;
}

// One unwrap step for competition-style answers. Returns the input
// unchanged when no recognized wrapper encloses the whole string.
std::string strip_one_wrapper(const std::string& s) {
    auto inner_if_unique = [&](std::size_t lead, std::size_t tail,
                               std::string_view marker) -> std::optional<std::string> {
        std::string inner = s.substr(lead, s.size() - lead - tail);
        // refuse when the marker reappears inside: "$a$ + $b$" is not one
        // wrapped expression
        if (!marker.empty() && inner.find(marker) != std::string::npos) return std::nullopt;
        return trim(inner);
    };

    if (s.size() >= 2 && s.front() == '$' && s.back() == '$') {
        if (auto inner = inner_if_unique(1, 1, "$")) return *inner;
    }
    if (s.size() >= 4 && s.starts_with("\\(") && s.ends_with("\\)")) {
        if (auto inner = inner_if_unique(2, 2, "\\(")) return *inner;
    }
    if (s.size() >= 4 && s.starts_with("\\[") && s.ends_with("\\]")) {
        if (auto inner = inner_if_unique(2, 2, "\\[")) return *inner;
    }
    constexpr std::string_view boxed = "\\boxed{";
    if (s.starts_with(boxed) && s.back() == '}') {
        // the closing brace must be the partner of the opener
        int depth = 0;
        std::size_t close = std::string::npos;
        for (std::size_t i = boxed.size() - 1; i < s.size(); ++i) {
            if (s[i] == '{') ++depth;
            else if (s[i] == '}' && --depth == 0) {
                close = i;
                break;
            }
        }
        if (close == s.size() - 1) {
            return trim(s.substr(boxed.size(), close - boxed.size()));
        }
    }
    return s;
}

std::string collapse_whitespace(const std::string& s) {
    std::string out;
    bool in_space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out.push_back(' ');
        in_space = false;
        out.push_back(c);
    }
    return out;
}

std::string normalize_competition(const std::string& raw) {
    std::string s = trim(raw);
    for (;;) {
        std::string next = strip_one_wrapper(s);
        if (next == s) break;
        s = std::move(next);
    }
    return collapse_whitespace(s);
}

} // namespace

std::string normalize_answer(const std::string& raw, Dataset dataset) {
    switch (dataset) {
    case Dataset::Gsm8k: return normalize_numeric(raw);
    case Dataset::Math: return normalize_competition(raw);
    }
    throw ValidationError("unknown dataset");
}

bool exact_match(const std::string& predicted, const std::string& gold, Dataset dataset) {
    return normalize_answer(predicted, dataset) == normalize_answer(gold, dataset);
}

Outcome grade(const Trace& trace, const Problem& problem) {
    if (trace.problem_id != problem.id) {
        throw IdMismatch("grading trace '" + trace.problem_id + "' against problem '" + problem.id + "'");
    }
    Outcome o;
    o.problem_id = problem.id;
    o.retrieved = trace.retrieval_count > 0;
    o.difficulty = problem.difficulty;
    o.status = trace.terminal_status;
    if (const Answer* answer = final_answer(trace)) {
        o.predicted = answer->raw;
        o.correct = exact_match(answer->raw, problem.gold_answer, problem.dataset);
    }
    return o;
}

std::vector<Outcome> grade_all(std::span<const Trace> traces, std::span<const Problem> problems) {
    std::map<std::string, const Trace*> by_id;
    for (const Trace& t : traces) {
        if (!by_id.emplace(t.problem_id, &t).second) {
            throw IdMismatch("duplicate trace for problem '" + t.problem_id + "'");
        }
    }
    if (traces.size() != problems.size()) {
        throw IdMismatch("have " + std::to_string(traces.size()) + " traces for " +
                         std::to_string(problems.size()) + " problems");
    }
    std::vector<Outcome> out;
    out.reserve(problems.size());
    for (const Problem& p : problems) {
        auto it = by_id.find(p.id);
        if (it == by_id.end()) throw IdMismatch("no trace for problem '" + p.id + "'");
        out.push_back(grade(*it->second, p));
    }
    return out;
}

namespace {

void accumulate(SplitCounts& counts, const Outcome& o) {
    counts.n += 1;
    if (o.correct) counts.correct += 1;
    if (o.retrieved) counts.retrieved += 1;
    if (o.correct && o.retrieved) counts.correct_retrieved += 1;
    if (o.correct && !o.retrieved) counts.correct_not_retrieved += 1;
}

} // namespace

Metrics aggregate(std::span<const Outcome> outcomes) {
    if (outcomes.empty()) throw EmptyInput("aggregate: no outcomes");
    const bool with_difficulty = outcomes.front().difficulty.has_value();
    Metrics m;
    for (const Outcome& o : outcomes) {
        if (o.difficulty.has_value() != with_difficulty) {
            throw ValidationError("aggregate: mixed difficulty annotations");
        }
        accumulate(m.overall, o);
        if (with_difficulty) accumulate(m.per_difficulty[*o.difficulty], o);
    }
    return m;
}

int ContingencyTable::baseline_correct() const {
    int total = 0;
    for (int r = 0; r < 2; ++r)
        for (int a = 0; a < 2; ++a) total += c[1][r][a];
    return total;
}

int ContingencyTable::adaptive_correct() const {
    int total = 0;
    for (int b = 0; b < 2; ++b)
        for (int r = 0; r < 2; ++r) total += c[b][r][1];
    return total;
}

int ContingencyTable::retrieved() const {
    int total = 0;
    for (int b = 0; b < 2; ++b)
        for (int a = 0; a < 2; ++a) total += c[b][1][a];
    return total;
}

std::array<std::array<int, 4>, 2> ContingencyTable::appendix_rows() const {
    // column order: retrieved+correct, retrieved+incorrect, not-retrieved+
    // correct, not-retrieved+incorrect
    return {{{c[1][1][1], c[1][1][0], c[1][0][1], c[1][0][0]},
             {c[0][1][1], c[0][1][0], c[0][0][1], c[0][0][0]}}};
}

ContingencyTable contingency(std::span<const Outcome> baseline, std::span<const Outcome> adaptive) {
    std::map<std::string, const Outcome*> base_by_id;
    for (const Outcome& o : baseline) {
        if (!base_by_id.emplace(o.problem_id, &o).second) {
            throw IdMismatch("duplicate baseline outcome '" + o.problem_id + "'");
        }
    }
    if (baseline.size() != adaptive.size()) {
        throw IdMismatch("baseline has " + std::to_string(baseline.size()) + " outcomes, adaptive " +
                         std::to_string(adaptive.size()));
    }
    ContingencyTable table;
    std::size_t seen = 0;
    for (const Outcome& a : adaptive) {
        auto it = base_by_id.find(a.problem_id);
        if (it == base_by_id.end()) {
            throw IdMismatch("adaptive outcome '" + a.problem_id + "' has no baseline counterpart");
        }
        const Outcome& b = *it->second;
        table.c[b.correct ? 1 : 0][a.retrieved ? 1 : 0][a.correct ? 1 : 0] += 1;
        ++seen;
    }
    table.n = static_cast<int>(seen);
    return table;
}

namespace {

const char* kAppendixColumns[4] = {"retrieved, correct", "retrieved, incorrect",
                                   "not retrieved, correct", "not retrieved, incorrect"};

std::string markdown_report(const Report& report) {
    std::ostringstream out;
    out << "# Evaluation: " << report.dataset << "\n\n";

    out << "## Overall\n\n";
    out << "| strategy | n | accuracy | retrieval rate | accuracy w/ retrieval | accuracy w/o retrieval |\n";
    out << "| --- | --- | --- | --- | --- | --- |\n";
    for (const auto& [label, m] : report.strategies) {
        const SplitCounts& s = m.overall;
        out << "| " << label << " | " << s.n << " | " << format_percent(s.correct, s.n) << " | "
            << format_percent(s.retrieved, s.n) << " | "
            << format_percent(s.correct_retrieved, s.retrieved) << " | "
            << format_percent(s.correct_not_retrieved, s.not_retrieved()) << " |\n";
    }
    out << "\n";

    bool any_difficulty = false;
    for (const auto& entry : report.strategies) {
        if (!entry.second.per_difficulty.empty()) any_difficulty = true;
    }
    if (any_difficulty) {
        std::map<int, int> level_n;
        for (const auto& entry : report.strategies) {
            for (const auto& [level, counts] : entry.second.per_difficulty) level_n[level] = counts.n;
        }
        out << "## By difficulty\n\n";
        out << "| level | n |";
        for (const auto& [label, m] : report.strategies) {
            out << " " << label << " accuracy | " << label << " retrieval rate |";
        }
        out << "\n| --- | --- |";
        for (std::size_t i = 0; i < report.strategies.size(); ++i) out << " --- | --- |";
        out << "\n";
        for (const auto& [level, n] : level_n) {
            out << "| " << level << " | " << n << " |";
            for (const auto& [label, m] : report.strategies) {
                auto it = m.per_difficulty.find(level);
                if (it == m.per_difficulty.end()) {
                    out << " n/a | n/a |";
                } else {
                    out << " " << format_percent(it->second.correct, it->second.n) << " | "
                        << format_percent(it->second.retrieved, it->second.n) << " |";
                }
            }
            out << "\n";
        }
        out << "\n";
    }

    if (report.contingency) {
        const auto& [base_label, adaptive_label, table] = *report.contingency;
        auto rows = table.appendix_rows();
        out << "## Contingency: " << base_label << " vs " << adaptive_label << "\n\n";
        out << "| " << base_label << " outcome |";
        for (const char* col : kAppendixColumns) out << " " << col << " |";
        out << " total |\n|---|---|---|---|---|---|\n";
        const char* row_names[2] = {"correct", "incorrect"};
        for (int r = 0; r < 2; ++r) {
            int total = rows[r][0] + rows[r][1] + rows[r][2] + rows[r][3];
            out << "| " << row_names[r] << " |";
            for (int col = 0; col < 4; ++col) out << " " << rows[r][col] << " |";
            out << " " << total << " |\n";
        }
        out << "\n";
        int not_retrieved = table.n - table.retrieved();
        int adaptive_correct_no_retrieval = table.c[1][0][1] + table.c[0][0][1];
        out << "- helped (baseline wrong, retrieved, now correct): " << table.helped() << " ("
            << format_percent(table.helped(), table.n) << ")\n";
        out << "- hurt (baseline correct, retrieved, now wrong): " << table.hurt() << " ("
            << format_percent(table.hurt(), table.n) << ")\n";
        out << "- retrieval rate: " << table.retrieved() << "/" << table.n << " ("
            << format_percent(table.retrieved(), table.n) << ")\n";
        out << "- " << base_label << " accuracy: " << table.baseline_correct() << "/" << table.n
            << " (" << format_percent(table.baseline_correct(), table.n) << ")\n";
        out << "- " << adaptive_label << " accuracy: " << table.adaptive_correct() << "/" << table.n
            << " (" << format_percent(table.adaptive_correct(), table.n) << ")\n";
        out << "- " << adaptive_label << " accuracy without retrieval: " << adaptive_correct_no_retrieval
            << "/" << not_retrieved << " (" << format_percent(adaptive_correct_no_retrieval, not_retrieved)
            << ")\n";
    }
    return out.str();
}

void csv_metric_row(std::ostringstream& out, const std::string& dataset, const std::string& section,
                    const std::string& strategy, const std::string& level, const std::string& metric,
                    std::int64_t count, std::int64_t denom) {
    out << section << "," << dataset << "," << strategy << "," << level << "," << metric << ","
        << count << "," << denom << ",";
    if (denom > 0) {
        auto tenths = percent_tenths(count, denom);
        out << tenths / 10 << "." << tenths % 10;
    }
    out << "\n";
}

std::string csv_report(const Report& report) {
    std::ostringstream out;
    out << "section,dataset,strategy,level,metric,count,denom,percent\n";
    for (const auto& [label, m] : report.strategies) {
        const SplitCounts& s = m.overall;
        csv_metric_row(out, report.dataset, "overall", label, "", "accuracy", s.correct, s.n);
        csv_metric_row(out, report.dataset, "overall", label, "", "retrieval_rate", s.retrieved, s.n);
        csv_metric_row(out, report.dataset, "overall", label, "", "accuracy_with_retrieval",
                       s.correct_retrieved, s.retrieved);
        csv_metric_row(out, report.dataset, "overall", label, "", "accuracy_without_retrieval",
                       s.correct_not_retrieved, s.not_retrieved());
        for (const auto& [level, counts] : m.per_difficulty) {
            csv_metric_row(out, report.dataset, "difficulty", label, std::to_string(level), "accuracy",
                           counts.correct, counts.n);
            csv_metric_row(out, report.dataset, "difficulty", label, std::to_string(level),
                           "retrieval_rate", counts.retrieved, counts.n);
        }
    }
    if (report.contingency) {
        const auto& [base_label, adaptive_label, table] = *report.contingency;
        std::string pair = base_label + "|" + adaptive_label;
        for (int b = 0; b < 2; ++b) {
            for (int r = 0; r < 2; ++r) {
                for (int a = 0; a < 2; ++a) {
                    std::string cell = std::string(b ? "baseline_correct" : "baseline_incorrect") +
                                       (r ? "|retrieved|" : "|not_retrieved|") +
                                       (a ? "adaptive_correct" : "adaptive_incorrect");
                    csv_metric_row(out, report.dataset, "contingency_cell", pair, "", cell,
                                   table.c[b][r][a], table.n);
                }
            }
        }
        csv_metric_row(out, report.dataset, "contingency", pair, "", "helped", table.helped(), table.n);
        csv_metric_row(out, report.dataset, "contingency", pair, "", "hurt", table.hurt(), table.n);
    }
    return out.str();
}

json counts_to_json(const SplitCounts& s) {
    json j;
    j["n"] = s.n;
    j["correct"] = s.correct;
    j["retrieved"] = s.retrieved;
    j["correct_retrieved"] = s.correct_retrieved;
    j["correct_not_retrieved"] = s.correct_not_retrieved;
    j["accuracy_percent"] = format_percent(s.correct, s.n);
    j["retrieval_rate_percent"] = format_percent(s.retrieved, s.n);
    return j;
}

std::string json_report(const Report& report) {
    json j;
    j["dataset"] = report.dataset;
    j["strategies"] = json::array();
    for (const auto& [label, m] : report.strategies) {
        json s;
        s["label"] = label;
        s["overall"] = counts_to_json(m.overall);
        if (!m.per_difficulty.empty()) {
            json levels;
            for (const auto& [level, counts] : m.per_difficulty) {
                levels[std::to_string(level)] = counts_to_json(counts);
            }
            s["per_difficulty"] = std::move(levels);
        }
        j["strategies"].push_back(std::move(s));
    }
    if (report.contingency) {
        const auto& [base_label, adaptive_label, table] = *report.contingency;
        json c;
        c["baseline"] = base_label;
        c["adaptive"] = adaptive_label;
        c["n"] = table.n;
        auto rows = table.appendix_rows();
        c["rows"] = {{"baseline_correct", rows[0]}, {"baseline_incorrect", rows[1]}};
        c["helped"] = table.helped();
        c["hurt"] = table.hurt();
        c["helped_percent"] = format_percent(table.helped(), table.n);
        c["hurt_percent"] = format_percent(table.hurt(), table.n);
        j["contingency"] = std::move(c);
    }
    return j.dump(2) + "\n";
}

} // namespace

std::string render_report(const Report& report, ReportFormat format) {
    switch (format) {
    case ReportFormat::Markdown: return markdown_report(report);
    case ReportFormat::Csv: return csv_report(report);
    case ReportFormat::Json: return json_report(report);
    }
    throw ValidationError("unknown report format");
}

} // namespace mathrag
