#include "forge/referent.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <regex>

namespace forge {

std::string_view to_string(ReferentKind k) {
    switch (k) {
    case ReferentKind::shape: return "shape";
    case ReferentKind::color: return "color";
    case ReferentKind::position: return "position";
    case ReferentKind::relative_position: return "relative_position";
    }
    return "?";
}

std::string_view to_string(LintFailure f) {
    switch (f) {
    case LintFailure::none: return "none";
    case LintFailure::ungrounded_mention: return "ungrounded-mention";
    case LintFailure::contradicted_referent: return "contradicted-referent";
    }
    return "?";
}

nlohmann::json to_json(const LintVerdict& v) {
    nlohmann::json refs = nlohmann::json::array();
    for (auto r : v.referents_found) refs.push_back(to_string(r));
    return {{"answer_id", v.answer_id},
            {"mentions_element", v.mentions_element},
            {"referents", std::move(refs)},
            {"pass", v.pass},
            {"failure_kind", to_string(v.failure_kind)},
            {"mentioned", v.mentioned_ids}};
}

LintVerdict lint_verdict_from_json(const nlohmann::json& j) {
    LintVerdict v;
    v.answer_id = j.value("answer_id", "");
    v.mentions_element = j.value("mentions_element", false);
    v.pass = j.value("pass", true);
    for (const auto& r : j.value("referents", nlohmann::json::array())) {
        for (auto k : {ReferentKind::shape, ReferentKind::color, ReferentKind::position, ReferentKind::relative_position})
            if (r.get<std::string>() == to_string(k)) v.referents_found.insert(k);
    }
    const auto fk = j.value("failure_kind", std::string("none"));
    v.failure_kind = fk == "ungrounded-mention"      ? LintFailure::ungrounded_mention
                     : fk == "contradicted-referent" ? LintFailure::contradicted_referent
                                                     : LintFailure::none;
    v.mentioned_ids = j.value("mentioned", std::vector<std::string>{});
    return v;
}

std::optional<std::string> element_label(const Element& e) {
    auto trimmed = [](const std::optional<std::string>& s) -> std::optional<std::string> {
        if (!s) return std::nullopt;
        const auto b = s->find_first_not_of(" \t\n\r");
        if (b == std::string::npos) return std::nullopt;
        const auto en = s->find_last_not_of(" \t\n\r");
        return s->substr(b, en - b + 1);
    };
    if (auto t = trimmed(e.text)) return t;
    return trimmed(e.content_desc);
}

namespace {

std::string fold(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string trim_fold(const std::optional<std::string>& s) {
    if (!s) return {};
    auto f = fold(*s);
    const auto b = f.find_first_not_of(" \t\n\r");
    if (b == std::string::npos) return {};
    return f.substr(b, f.find_last_not_of(" \t\n\r") - b + 1);
}

bool near(double a, double b, double tol) { return std::fabs(a - b) <= tol + 1e-9; }

bool literal_matches(const CoordLiteral& lit, const Element& e, double tol) {
    if (lit.values.size() == 4) {
        const auto& b = e.bounds;
        return near(lit.values[0], b.x1, tol) && near(lit.values[1], b.y1, tol) && near(lit.values[2], b.x2, tol) &&
               near(lit.values[3], b.y2, tol);
    }
    if (lit.values.size() == 2 && e.click_point)
        return near(lit.values[0], e.click_point->x, tol) && near(lit.values[1], e.click_point->y, tol);
    return false;
}

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// First occurrence of `needle` not glued to surrounding letters or digits.
std::size_t find_word(const std::string& hay, const std::string& needle) {
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) {
        const bool left_ok = pos == 0 || !word_char(hay[pos - 1]) || !word_char(needle.front());
        const auto end = pos + needle.size();
        const bool right_ok = end >= hay.size() || !word_char(hay[end]) || !word_char(needle.back());
        if (left_ok && right_ok) return pos;
    }
    return std::string::npos;
}

struct Mention {
    std::size_t element_index;
    std::size_t offset;
};

struct MentionScan {
    std::vector<Mention> mentions; // sorted by offset, one entry per element
    bool literal_unmatched = false;
    bool literal_matched = false;
};

MentionScan scan_mentions(std::string_view text, const ScreenRecord& screen, const LintOptions& opts) {
    const std::string lower = fold(text);
    std::map<std::size_t, std::size_t> first_seen; // element index -> offset
    for (std::size_t i = 0; i < screen.elements.size(); ++i) {
        const auto& e = screen.elements[i];
        for (const auto& label : {trim_fold(e.text), trim_fold(e.content_desc)}) {
            if (label.size() < opts.min_mention_chars) continue;
            const auto pos = find_word(lower, label);
            if (pos == std::string::npos) continue;
            auto [it, inserted] = first_seen.emplace(i, pos);
            if (!inserted) it->second = std::min(it->second, pos);
        }
    }
    MentionScan scan;
    for (const auto& lit : find_coord_literals(text)) {
        bool any = false;
        for (std::size_t i = 0; i < screen.elements.size(); ++i) {
            if (!literal_matches(lit, screen.elements[i], opts.literal_tolerance)) continue;
            any = true;
            auto [it, inserted] = first_seen.emplace(i, lit.offset);
            if (!inserted) it->second = std::min(it->second, lit.offset);
        }
        (any ? scan.literal_matched : scan.literal_unmatched) = true;
    }
    for (auto [idx, off] : first_seen) scan.mentions.push_back({idx, off});
    std::sort(scan.mentions.begin(), scan.mentions.end(), [](const Mention& a, const Mention& b) {
        return a.offset != b.offset ? a.offset < b.offset : a.element_index < b.element_index;
    });
    return scan;
}

// Nouns that signal the answer is pointing at an on-screen control.
bool has_element_cue(const std::string& lower) {
    static const std::regex cue(
        R"(\b(button|buttons|icon|icons|tab|tabs|field|menu|link|checkbox|toggle|switch|slider|dropdown|textbox|text box|search bar|toolbar|navigation bar|option)\b)");
    static const std::regex quoted(R"(["“][^"”]{1,60}["”]|(^|[\s(])'[^']{1,60}'|`[^`']{1,60}')");
    return std::regex_search(lower, cue) || std::regex_search(lower, quoted);
}

const std::map<std::string, std::string>& color_words() {
    static const std::map<std::string, std::string> words = [] {
        std::map<std::string, std::string> m;
        for (const auto& p : basic_palette()) m.emplace(std::string(p.name), std::string(p.name));
        m.emplace("grey", "gray");
        m.emplace("cyan", "aqua");
        m.emplace("magenta", "fuchsia");
        return m;
    }();
    return words;
}

std::vector<std::string> colors_in(const std::string& lower) {
    std::vector<std::string> out;
    static const std::regex word(R"([a-z]+)");
    for (auto it = std::sregex_iterator(lower.begin(), lower.end(), word); it != std::sregex_iterator(); ++it) {
        auto c = color_words().find(it->str());
        if (c != color_words().end()) out.push_back(c->second);
    }
    return out;
}

std::vector<std::vector<ShapeLabel>> shapes_in(const std::string& lower) {
    static const std::vector<std::pair<std::regex, std::vector<ShapeLabel>>> words = {
        {std::regex(R"(\bicons?\b)"), {ShapeLabel::icon}},
        {std::regex(R"(\b(circle|circular|round)\b)"), {ShapeLabel::circle}},
        {std::regex(R"(\brounded\b)"), {ShapeLabel::rounded_rectangle}},
        {std::regex(R"(\b(rectangle|rectangular)\b)"), {ShapeLabel::rectangle, ShapeLabel::rounded_rectangle}},
        {std::regex(R"(\bsquare\b)"), {ShapeLabel::square, ShapeLabel::icon}},
        {std::regex(R"(\bbar\b)"), {ShapeLabel::bar}},
    };
    std::vector<std::vector<ShapeLabel>> out;
    for (const auto& [re, labels] : words)
        if (std::regex_search(lower, re)) out.push_back(labels);
    return out;
}

struct RegionClaim {
    std::optional<VerticalBand> vertical;
    std::optional<HorizontalBand> horizontal;
    bool either_center = false; // a lone "middle"/"center": accept vertical middle or horizontal center
};

std::vector<RegionClaim> regions_in(const std::string& lower) {
    static const std::regex re(
        R"(\b(?:at|in|on|near)\s+the\s+(top|bottom|middle|center|centre|upper|lower|left|right)(?:[\s-]+(left|right|center|centre|middle))?\b)");
    std::vector<RegionClaim> out;
    for (auto it = std::sregex_iterator(lower.begin(), lower.end(), re); it != std::sregex_iterator(); ++it) {
        const std::string a = (*it)[1].str();
        const std::string b = (*it)[2].matched ? (*it)[2].str() : "";
        // "on the left of the X" names a relation to X, not a page region.
        const auto tail = lower.substr(static_cast<std::size_t>(it->position(0) + it->length(0)));
        const bool page_tail = tail.find(" of the page") == 0 || tail.find(" of the screen") == 0;
        if (b.empty() && (a == "left" || a == "right") && tail.find(" of ") == 0 && !page_tail) continue;
        RegionClaim c;
        auto vert = [](const std::string& w) -> std::optional<VerticalBand> {
            if (w == "top" || w == "upper") return VerticalBand::top;
            if (w == "bottom" || w == "lower") return VerticalBand::bottom;
            if (w == "middle" || w == "center" || w == "centre") return VerticalBand::middle;
            return std::nullopt;
        };
        auto horiz = [](const std::string& w) -> std::optional<HorizontalBand> {
            if (w == "left") return HorizontalBand::left;
            if (w == "right") return HorizontalBand::right;
            if (w == "middle" || w == "center" || w == "centre") return HorizontalBand::center;
            return std::nullopt;
        };
        if (!b.empty()) {
            c.vertical = vert(a);
            c.horizontal = horiz(b);
            if (!c.vertical) { // "left center" style; read as horizontal + vertical
                c.horizontal = horiz(a);
                c.vertical = vert(b);
            }
        } else if (a == "middle" || a == "center" || a == "centre") {
            c.either_center = true;
        } else if (a == "left" || a == "right") {
            c.horizontal = horiz(a);
        } else {
            c.vertical = vert(a);
        }
        out.push_back(c);
    }
    return out;
}

bool region_agrees(const RegionClaim& c, const Bounds& b) {
    if (c.either_center) return vertical_band(b) == VerticalBand::middle || horizontal_band(b) == HorizontalBand::center;
    if (c.vertical && *c.vertical != vertical_band(b)) return false;
    if (c.horizontal && *c.horizontal != horizontal_band(b)) return false;
    return true;
}

struct RelationClaim {
    RelationKind kind;
    std::size_t object_search_from;
};

std::vector<RelationClaim> relations_in(const std::string& lower) {
    static const std::vector<std::pair<std::regex, RelationKind>> words = {
        {std::regex(R"(\b(above|on top of|over)\s+the\b)"), RelationKind::above},
        {std::regex(R"(\b(below|under|underneath|beneath)\s+the\b)"), RelationKind::below},
        {std::regex(R"(\b(to the left of|left of)\s+the\b)"), RelationKind::left_of},
        {std::regex(R"(\b(to the right of|right of)\s+the\b)"), RelationKind::right_of},
        {std::regex(R"(\b(inside|within)\s+the\b)"), RelationKind::inside},
    };
    std::vector<RelationClaim> out;
    for (const auto& [re, kind] : words)
        for (auto it = std::sregex_iterator(lower.begin(), lower.end(), re); it != std::sregex_iterator(); ++it)
            out.push_back({kind, static_cast<std::size_t>(it->position(0) + it->length(0))});
    return out;
}

} // namespace

std::vector<std::string> resolve_mentions(std::string_view text, const ScreenRecord& screen, const FactsIndex&,
                                          const LintOptions& opts) {
    std::vector<std::string> out;
    for (const auto& m : scan_mentions(text, screen, opts).mentions) out.push_back(screen.elements[m.element_index].id);
    return out;
}

LintVerdict lint_answer(std::string_view answer_text, const ScreenRecord& screen, const FactsIndex& facts,
                        std::string answer_id, const LintOptions& opts) {
    LintVerdict v;
    v.answer_id = std::move(answer_id);
    const std::string lower = fold(answer_text);
    const MentionScan scan = scan_mentions(answer_text, screen, opts);
    for (const auto& m : scan.mentions) v.mentioned_ids.push_back(screen.elements[m.element_index].id);

    v.mentions_element = !scan.mentions.empty() || scan.literal_unmatched || has_element_cue(lower);
    bool contradicted = false;
    if (scan.literal_unmatched) {
        contradicted = true;
        v.notes.push_back("coordinate literal matches no element");
    }

    if (!scan.mentions.empty()) {
        if (scan.literal_matched) v.referents_found.insert(ReferentKind::position);

        std::vector<const Element*> mentioned;
        std::vector<const ElementFacts*> mentioned_facts;
        for (const auto& m : scan.mentions) {
            mentioned.push_back(&screen.elements[m.element_index]);
            mentioned_facts.push_back(facts.find(screen.elements[m.element_index].id));
        }

        for (const auto& color : colors_in(lower)) {
            for (const auto* f : mentioned_facts)
                if (f && std::find(f->color_names.begin(), f->color_names.end(), color) != f->color_names.end())
                    v.referents_found.insert(ReferentKind::color);
        }
        for (const auto& labels : shapes_in(lower)) {
            for (const auto* f : mentioned_facts)
                if (f && std::find(labels.begin(), labels.end(), f->shape) != labels.end())
                    v.referents_found.insert(ReferentKind::shape);
        }
        for (const auto& claim : regions_in(lower)) {
            const bool ok = std::any_of(mentioned.begin(), mentioned.end(),
                                        [&](const Element* e) { return region_agrees(claim, e->bounds); });
            if (ok) {
                v.referents_found.insert(ReferentKind::relative_position);
            } else {
                contradicted = true;
                v.notes.push_back("page region disagrees with every mentioned element");
            }
        }
        for (const auto& claim : relations_in(lower)) {
            // The object is the first element mentioned after the relation word.
            const Mention* object = nullptr;
            for (const auto& m : scan.mentions)
                if (m.offset >= claim.object_search_from && m.offset <= claim.object_search_from + 60) {
                    object = &m;
                    break;
                }
            if (!object) continue;
            const Element& obj = screen.elements[object->element_index];
            bool any_subject = false, holds = false;
            for (const auto* subj : mentioned) {
                if (subj->id == obj.id) continue;
                any_subject = true;
                if (relate(subj->bounds, obj.bounds, opts.relations).count(claim.kind)) holds = true;
            }
            if (!any_subject) continue;
            if (holds) {
                v.referents_found.insert(ReferentKind::relative_position);
            } else {
                contradicted = true;
                v.notes.push_back(std::string("stated relation '") + std::string(to_string(claim.kind)) +
                                  "' does not hold");
            }
        }
    }

    if (!v.mentions_element) {
        v.pass = true;
    } else if (contradicted) {
        v.pass = false;
        v.failure_kind = LintFailure::contradicted_referent;
    } else if (v.referents_found.empty()) {
        v.pass = false;
        v.failure_kind = LintFailure::ungrounded_mention;
    } else {
        v.pass = true;
    }
    return v;
}

} // namespace forge
