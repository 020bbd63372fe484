#include "forge/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <regex>

namespace forge {

std::string format_coord(double v) {
    double r = std::round(v * 1000.0) / 1000.0;
    if (r == 0.0) r = 0.0; // drop negative zero
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", r);
    std::string s(buf);
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}

std::string bounds_literal(const Bounds& b) {
    return "<" + format_coord(b.x1) + ", " + format_coord(b.y1) + ", " + format_coord(b.x2) + ", " +
           format_coord(b.y2) + ">";
}

std::string click_literal(const ClickPoint& p) {
    return "<" + format_coord(p.x) + ", " + format_coord(p.y) + ">";
}

std::vector<CoordLiteral> find_coord_literals(std::string_view text) {
    static const std::regex re(
        R"(<\s*(-?\d*\.?\d+)\s*,\s*(-?\d*\.?\d+)(?:\s*,\s*(-?\d*\.?\d+)\s*,\s*(-?\d*\.?\d+))?\s*>)");
    std::vector<CoordLiteral> out;
    const std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        CoordLiteral lit;
        lit.offset = static_cast<std::size_t>(m.position(0));
        lit.length = static_cast<std::size_t>(m.length(0));
        for (std::size_t g = 1; g <= 4; ++g) {
            if (m[g].matched) lit.values.push_back(std::stod(m[g].str()));
        }
        out.push_back(std::move(lit));
    }
    return out;
}

std::optional<Bounds> parse_bounds_literal(std::string_view literal) {
    auto lits = find_coord_literals(literal);
    if (lits.size() != 1 || lits[0].values.size() != 4) return std::nullopt;
    const auto& v = lits[0].values;
    return Bounds{v[0], v[1], v[2], v[3]};
}

std::optional<ClickPoint> parse_click_literal(std::string_view literal) {
    auto lits = find_coord_literals(literal);
    if (lits.size() != 1 || lits[0].values.size() != 2) return std::nullopt;
    return ClickPoint{lits[0].values[0], lits[0].values[1]};
}

} // namespace forge
