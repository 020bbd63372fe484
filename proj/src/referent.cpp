#include "forge/referent.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

namespace forge {

std::string_view to_string(RelationKind k) {
    switch (k) {
    case RelationKind::above: return "above";
    case RelationKind::below: return "below";
    case RelationKind::left_of: return "left_of";
    case RelationKind::right_of: return "right_of";
    case RelationKind::contains: return "contains";
    case RelationKind::inside: return "inside";
    case RelationKind::overlaps: return "overlaps";
    }
    return "?";
}

RelationKind dual(RelationKind k) {
    switch (k) {
    case RelationKind::above: return RelationKind::below;
    case RelationKind::below: return RelationKind::above;
    case RelationKind::left_of: return RelationKind::right_of;
    case RelationKind::right_of: return RelationKind::left_of;
    case RelationKind::contains: return RelationKind::inside;
    case RelationKind::inside: return RelationKind::contains;
    case RelationKind::overlaps: return RelationKind::overlaps;
    }
    return k;
}

namespace {

double interval_overlap(double a1, double a2, double b1, double b2) { return std::min(a2, b2) - std::max(a1, b1); }

bool encloses(const Bounds& outer, const Bounds& inner, double eps) {
    return inner.x1 - outer.x1 >= eps && outer.x2 - inner.x2 >= eps && inner.y1 - outer.y1 >= eps &&
           outer.y2 - inner.y2 >= eps;
}

} // namespace

std::set<RelationKind> relate(const Bounds& a, const Bounds& b, const RelationParams& p) {
    std::set<RelationKind> out;
    if (!a.degenerate() && !b.degenerate()) {
        const double h_overlap = interval_overlap(a.x1, a.x2, b.x1, b.x2);
        const double v_overlap = interval_overlap(a.y1, a.y2, b.y1, b.y2);
        if (h_overlap > p.overlap_eps) {
            if (a.y2 <= b.y1) out.insert(RelationKind::above);
            if (b.y2 <= a.y1) out.insert(RelationKind::below);
        }
        if (v_overlap > p.overlap_eps) {
            if (a.x2 <= b.x1) out.insert(RelationKind::left_of);
            if (b.x2 <= a.x1) out.insert(RelationKind::right_of);
        }
    }
    const bool a_contains_b = encloses(a, b, p.containment_eps);
    const bool b_contains_a = encloses(b, a, p.containment_eps);
    if (a_contains_b) out.insert(RelationKind::contains);
    if (b_contains_a) out.insert(RelationKind::inside);
    if (!a_contains_b && !b_contains_a) {
        const double w = interval_overlap(a.x1, a.x2, b.x1, b.x2);
        const double h = interval_overlap(a.y1, a.y2, b.y1, b.y2);
        if (w > 0 && h > 0 && w * h > 0) out.insert(RelationKind::overlaps);
    }
    return out;
}

std::vector<SpatialRelation> relate(const Element& a, const Element& b, const RelationParams& params) {
    std::vector<SpatialRelation> out;
    for (auto k : relate(a.bounds, b.bounds, params)) out.push_back({a.id, b.id, k});
    return out;
}

std::string_view to_string(ShapeLabel s) {
    switch (s) {
    case ShapeLabel::rounded_rectangle: return "rounded-rectangle";
    case ShapeLabel::rectangle: return "rectangle";
    case ShapeLabel::square: return "square";
    case ShapeLabel::circle: return "circle";
    case ShapeLabel::icon: return "icon";
    case ShapeLabel::bar: return "bar";
    }
    return "?";
}

std::optional<ShapeLabel> shape_from_string(std::string_view s) {
    for (auto l : {ShapeLabel::rounded_rectangle, ShapeLabel::rectangle, ShapeLabel::square, ShapeLabel::circle,
                   ShapeLabel::icon, ShapeLabel::bar})
        if (to_string(l) == s) return l;
    return std::nullopt;
}

const std::array<PaletteEntry, 16>& basic_palette() {
    static const std::array<PaletteEntry, 16> palette{{
        {"black", {0, 0, 0}},       {"silver", {192, 192, 192}}, {"gray", {128, 128, 128}}, {"white", {255, 255, 255}},
        {"maroon", {128, 0, 0}},    {"red", {255, 0, 0}},        {"purple", {128, 0, 128}}, {"fuchsia", {255, 0, 255}},
        {"green", {0, 128, 0}},     {"lime", {0, 255, 0}},       {"olive", {128, 128, 0}},  {"yellow", {255, 255, 0}},
        {"navy", {0, 0, 128}},      {"blue", {0, 0, 255}},       {"teal", {0, 128, 128}},   {"aqua", {0, 255, 255}},
    }};
    return palette;
}

namespace {

std::size_t nearest_palette_index(Rgb c) {
    const auto& pal = basic_palette();
    std::size_t best = 0;
    int best_d = -1;
    for (std::size_t i = 0; i < pal.size(); ++i) {
        const int dr = int(c.r) - pal[i].rgb.r, dg = int(c.g) - pal[i].rgb.g, db = int(c.b) - pal[i].rgb.b;
        const int d = dr * dr + dg * dg + db * db;
        if (best_d < 0 || d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

struct PixelRect {
    int x0, y0, x1, y1;
    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    bool empty() const { return width() <= 0 || height() <= 0; }
};

PixelRect crop_rect(const Image& img, const Bounds& b) {
    auto px = [](double v, int size) { return std::clamp(static_cast<int>(std::lround(v * size)), 0, size); };
    return {px(b.x1, img.width()), px(b.y1, img.height()), px(b.x2, img.width()), px(b.y2, img.height())};
}

// Palette index of the most common color in a small patch centred on (cx, cy).
std::size_t patch_color(const Image& img, int cx, int cy) {
    std::array<int, 16> counts{};
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
            const int x = std::clamp(cx + dx, 0, img.width() - 1), y = std::clamp(cy + dy, 0, img.height() - 1);
            ++counts[nearest_palette_index(img.at(x, y))];
        }
    return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

int background_corners(const Image& img, const PixelRect& r, double inset_frac, std::size_t interior) {
    const int ix = std::max(1, static_cast<int>(std::lround(r.width() * inset_frac)));
    const int iy = std::max(1, static_cast<int>(std::lround(r.height() * inset_frac)));
    const std::array<std::pair<int, int>, 4> corners{{{r.x0 + ix, r.y0 + iy},
                                                      {r.x1 - 1 - ix, r.y0 + iy},
                                                      {r.x0 + ix, r.y1 - 1 - iy},
                                                      {r.x1 - 1 - ix, r.y1 - 1 - iy}}};
    int n = 0;
    for (auto [x, y] : corners)
        if (patch_color(img, x, y) != interior) ++n;
    return n;
}

std::optional<ShapeLabel> size_shape(double w_px, double h_px, double screen_w_px, const VisualParams& p) {
    if (w_px <= 0 || h_px <= 0) return std::nullopt;
    const double aspect = w_px / h_px;
    if (aspect >= 0.75 && aspect <= 1.0 / 0.75 && std::max(w_px, h_px) < p.icon_max_side * screen_w_px)
        return ShapeLabel::icon;
    if (aspect >= p.bar_min_aspect || aspect <= 1.0 / p.bar_min_aspect) return ShapeLabel::bar;
    return std::nullopt;
}

bool near_square(double w, double h) { return w / h >= 0.9 && w / h <= 1.0 / 0.9; }

} // namespace

std::string_view nearest_palette_name(Rgb c) { return basic_palette()[nearest_palette_index(c)].name; }

VisualReferents extract_visual_referents(const Image& img, const Element& element, const VisualParams& params) {
    VisualReferents out;
    if (img.empty()) return out;
    const PixelRect r = crop_rect(img, element.bounds);
    if (r.empty()) return out;

    const long long area = static_cast<long long>(r.width()) * r.height();
    const int stride = std::max(1, static_cast<int>(std::ceil(std::sqrt(double(area) / 40000.0))));
    std::array<long long, 16> counts{};
    long long total = 0;
    for (int y = r.y0; y < r.y1; y += stride)
        for (int x = r.x0; x < r.x1; x += stride) {
            ++counts[nearest_palette_index(img.at(x, y))];
            ++total;
        }
    std::array<std::size_t, 16> order{};
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
    for (std::size_t i : order) {
        if (out.color_names.size() >= params.top_k) break;
        if (counts[i] == 0 || double(counts[i]) / double(total) < params.min_share) break;
        out.color_names.emplace_back(basic_palette()[i].name);
    }

    const double w = r.width(), h = r.height();
    if (auto s = size_shape(w, h, img.width(), params)) {
        out.shape = s;
        return out;
    }
    const std::size_t interior = patch_color(img, (r.x0 + r.x1) / 2, (r.y0 + r.y1) / 2);
    if (near_square(w, h)) {
        out.shape = background_corners(img, r, 0.12, interior) >= 3 ? ShapeLabel::circle : ShapeLabel::square;
    } else {
        out.shape = background_corners(img, r, 0.02, interior) >= 3 ? ShapeLabel::rounded_rectangle
                                                                     : ShapeLabel::rectangle;
    }
    return out;
}

ShapeLabel geometric_shape(const Element& e, ScreenSize screen, const VisualParams& params) {
    const double w = e.bounds.width() * screen.width, h = e.bounds.height() * screen.height;
    if (auto s = size_shape(w, h, screen.width, params)) return *s;
    if (w > 0 && h > 0 && near_square(w, h)) return ShapeLabel::square;
    return ShapeLabel::rectangle;
}

VerticalBand vertical_band(const Bounds& b) {
    const double c = b.center_y();
    return c < 1.0 / 3.0 ? VerticalBand::top : c < 2.0 / 3.0 ? VerticalBand::middle : VerticalBand::bottom;
}

HorizontalBand horizontal_band(const Bounds& b) {
    const double c = b.center_x();
    return c < 1.0 / 3.0 ? HorizontalBand::left : c < 2.0 / 3.0 ? HorizontalBand::center : HorizontalBand::right;
}

std::string position_phrase(const Bounds& b) {
    static constexpr std::array<std::string_view, 3> v{"top", "middle", "bottom"};
    static constexpr std::array<std::string_view, 3> h{"left", "center", "right"};
    const auto vb = vertical_band(b);
    const auto hb = horizontal_band(b);
    if (vb == VerticalBand::middle && hb == HorizontalBand::center) return "center of the page";
    return std::string(v[std::size_t(vb)]) + " " + std::string(h[std::size_t(hb)]) + " of the page";
}

FactsIndex::FactsIndex(std::vector<ElementFacts> facts) : facts_(std::move(facts)) {
    for (std::size_t i = 0; i < facts_.size(); ++i) by_id_.emplace(facts_[i].element_id, i);
}

const ElementFacts* FactsIndex::find(std::string_view element_id) const {
    auto it = by_id_.find(std::string(element_id));
    return it == by_id_.end() ? nullptr : &facts_[it->second];
}

FactsIndex build_facts(const ScreenRecord& screen, const Image* image, const FactsOptions& opts) {
    std::vector<ElementFacts> facts;
    facts.reserve(screen.elements.size());
    for (const auto& e : screen.elements) {
        ElementFacts f;
        f.element_id = e.id;
        f.position_phrase = position_phrase(e.bounds);
        f.bounds_literal = bounds_literal(e.bounds);
        if (e.click_point) f.click_literal = click_literal(*e.click_point);
        f.shape = geometric_shape(e, screen.screen_size, opts.visual);
        if (image) {
            auto v = extract_visual_referents(*image, e, opts.visual);
            f.color_names = std::move(v.color_names);
            if (v.shape) f.shape = *v.shape;
        }
        facts.push_back(std::move(f));
    }
    if (opts.compute_relations) {
        for (std::size_t i = 0; i < screen.elements.size(); ++i)
            for (std::size_t j = 0; j < screen.elements.size(); ++j) {
                if (i == j) continue;
                auto rel = relate(screen.elements[i], screen.elements[j], opts.relations);
                facts[i].relations.insert(facts[i].relations.end(), rel.begin(), rel.end());
            }
    }
    return FactsIndex(std::move(facts));
}

FactsIndex build_facts_from_disk(const ScreenRecord& screen, const FactsOptions& opts) {
    std::error_code ec;
    if (!screen.image_path.empty() && std::filesystem::exists(screen.image_path, ec)) {
        try {
            const Image img = read_jpeg(screen.image_path);
            return build_facts(screen, &img, opts);
        } catch (const ImageError&) {
            // unreadable screenshot: fall back to geometry-only facts
        }
    }
    return build_facts(screen, nullptr, opts);
}

nlohmann::json to_json(const ElementFacts& f) {
    nlohmann::json rel = nlohmann::json::array();
    for (const auto& r : f.relations) rel.push_back({{"object", r.object_id}, {"kind", to_string(r.kind)}});
    nlohmann::json j = {{"element_id", f.element_id},
                        {"colors", f.color_names},
                        {"shape", to_string(f.shape)},
                        {"position", f.position_phrase},
                        {"bounds_literal", f.bounds_literal},
                        {"relations", std::move(rel)}};
    if (f.click_literal) j["click_literal"] = *f.click_literal;
    return j;
}

} // namespace forge
