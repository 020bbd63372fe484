#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

/// Normalized element bounds; every coordinate is a fraction of the screen size.
struct Bounds {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    double center_x() const { return (x1 + x2) / 2; }
    double center_y() const { return (y1 + y2) / 2; }
    bool degenerate() const { return !(width() > 0.0) || !(height() > 0.0); }
    bool valid() const {
        return 0.0 <= x1 && x1 <= x2 && x2 <= 1.0 && 0.0 <= y1 && y1 <= y2 && y2 <= 1.0;
    }

    friend bool operator==(const Bounds&, const Bounds&) = default;
};

struct ClickPoint {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const ClickPoint&, const ClickPoint&) = default;
};

inline ClickPoint midpoint(const Bounds& b) { return {(b.x1 + b.x2) / 2, (b.y1 + b.y2) / 2}; }

/// Display rounding for coordinates: 3 decimals, trailing zeros trimmed ("0.7", "0.762", "1").
std::string format_coord(double v);

std::string bounds_literal(const Bounds& b);   // "<x1, y1, x2, y2>"
std::string click_literal(const ClickPoint& p); // "<x, y>"

/// A coordinate literal found in free text, either 2 or 4 components.
struct CoordLiteral {
    std::vector<double> values;
    std::size_t offset = 0;
    std::size_t length = 0;
};

/// Every `<a, b>` or `<a, b, c, d>` literal in `text`, in order of appearance.
std::vector<CoordLiteral> find_coord_literals(std::string_view text);

std::optional<Bounds> parse_bounds_literal(std::string_view literal);
std::optional<ClickPoint> parse_click_literal(std::string_view literal);

/// Rounding quantum of the display format.
inline constexpr double kCoordQuantum = 0.0005;

} // namespace forge
