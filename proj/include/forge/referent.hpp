#pragma once

#include "forge/geometry.hpp"
#include "forge/image.hpp"
#include "forge/ingest.hpp"

#include <array>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace forge {

enum class RelationKind { above, below, left_of, right_of, contains, inside, overlaps };

std::string_view to_string(RelationKind k);
RelationKind dual(RelationKind k);

struct SpatialRelation {
    std::string subject_id;
    std::string object_id;
    RelationKind kind;
    friend auto operator<=>(const SpatialRelation&, const SpatialRelation&) = default;
};

struct RelationParams {
    double overlap_eps = 0.01;
    double containment_eps = 0.0;
};

/// Relations of `a` (subject) with respect to `b` (object), from interval arithmetic on bounds.
std::set<RelationKind> relate(const Bounds& a, const Bounds& b, const RelationParams& params = {});
std::vector<SpatialRelation> relate(const Element& a, const Element& b, const RelationParams& params = {});

enum class ShapeLabel { rounded_rectangle, rectangle, square, circle, icon, bar };

std::string_view to_string(ShapeLabel s);
std::optional<ShapeLabel> shape_from_string(std::string_view s);

struct PaletteEntry {
    std::string_view name;
    Rgb rgb;
};

/// The 16 basic CSS colors.
const std::array<PaletteEntry, 16>& basic_palette();
std::string_view nearest_palette_name(Rgb c);

struct VisualReferents {
    std::vector<std::string> color_names; // most frequent first
    std::optional<ShapeLabel> shape;
    bool empty() const { return color_names.empty() && !shape; }
};

struct VisualParams {
    std::size_t top_k = 3;
    double min_share = 0.1;         // a color must cover this fraction of the crop
    double icon_max_side = 0.08;    // of screen width
    double bar_min_aspect = 6.0;
};

/// Dominant palette colors and a shape guess for the element's crop; empty result when the crop is empty.
VisualReferents extract_visual_referents(const Image& screen_image, const Element& element,
                                         const VisualParams& params = {});

/// Shape from geometry alone, used when no screenshot is available.
ShapeLabel geometric_shape(const Element& element, ScreenSize screen, const VisualParams& params = {});

/// "top right of the page", "center of the page", ... from a 3x3 grid over the element center.
std::string position_phrase(const Bounds& b);

enum class VerticalBand { top, middle, bottom };
enum class HorizontalBand { left, center, right };
VerticalBand vertical_band(const Bounds& b);
HorizontalBand horizontal_band(const Bounds& b);

struct ElementFacts {
    std::string element_id;
    std::vector<std::string> color_names;
    ShapeLabel shape = ShapeLabel::rectangle;
    std::string position_phrase;
    std::string bounds_literal;
    std::optional<std::string> click_literal;
    std::vector<SpatialRelation> relations;
};

/// Per-screen facts, aligned with ScreenRecord::elements.
class FactsIndex {
public:
    FactsIndex() = default;
    explicit FactsIndex(std::vector<ElementFacts> facts);

    const ElementFacts* find(std::string_view element_id) const;
    const std::vector<ElementFacts>& all() const { return facts_; }
    std::size_t size() const { return facts_.size(); }

private:
    std::vector<ElementFacts> facts_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

struct FactsOptions {
    RelationParams relations;
    VisualParams visual;
    bool compute_relations = true;
};

/// Builds facts for every element; `image` may be null, in which case shapes are geometric and colors empty.
FactsIndex build_facts(const ScreenRecord& screen, const Image* image, const FactsOptions& opts = {});

/// Loads the screenshot when present and readable, then builds facts.
FactsIndex build_facts_from_disk(const ScreenRecord& screen, const FactsOptions& opts = {});

nlohmann::json to_json(const ElementFacts& facts);

// ---- answer lint ----

enum class ReferentKind { shape, color, position, relative_position };
std::string_view to_string(ReferentKind k);

enum class LintFailure { none, ungrounded_mention, contradicted_referent };
std::string_view to_string(LintFailure f);

struct LintVerdict {
    std::string answer_id;
    bool mentions_element = false;
    std::set<ReferentKind> referents_found;
    bool pass = true;
    LintFailure failure_kind = LintFailure::none;
    std::vector<std::string> mentioned_ids; // resolved element mentions, in order of first appearance
    std::vector<std::string> notes;
};

nlohmann::json to_json(const LintVerdict& v);
LintVerdict lint_verdict_from_json(const nlohmann::json& j);

struct LintOptions {
    double literal_tolerance = 0.01;
    std::size_t min_mention_chars = 3;
    RelationParams relations;
};

/// Checks that an answer mentioning screen elements grounds them with at least one true referent.
LintVerdict lint_answer(std::string_view answer_text, const ScreenRecord& screen, const FactsIndex& facts,
                        std::string answer_id = {}, const LintOptions& opts = {});

/// Element ids the text refers to, by label substring or coordinate literal.
std::vector<std::string> resolve_mentions(std::string_view text, const ScreenRecord& screen, const FactsIndex& facts,
                                          const LintOptions& opts = {});

/// Best human-readable label of an element: its text, else its content description.
std::optional<std::string> element_label(const Element& e);

} // namespace forge
