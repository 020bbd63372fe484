#pragma once

#include "forge/ingest.hpp"
#include "forge/referent.hpp"
#include "forge/synth.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace forge::testing {

/// Temporary directory removed on destruction.
class TempDir {
public:
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "forge-test-XXXXXX").string();
        if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline Element make_element(const std::string& path, const std::string& cls, Bounds b, bool clickable,
                            std::optional<std::string> text = std::nullopt,
                            std::optional<std::string> desc = std::nullopt, int depth = 1) {
    Element e;
    e.path = path;
    e.id = element_id_for_path(path);
    e.class_name = cls;
    e.bounds = b;
    if (clickable) e.click_point = midpoint(b);
    e.text = std::move(text);
    e.content_desc = std::move(desc);
    e.depth = depth;
    e.degenerate = b.degenerate();
    return e;
}

inline ScreenRecord make_screen(const std::string& id, std::vector<Element> elements) {
    ScreenRecord s;
    s.screen_id = id;
    s.screen_size = {1440, 2560};
    s.elements = std::move(elements);
    return s;
}

/// Random view hierarchy in Rico layout with invisible subtrees, out-of-screen and inverted bounds,
/// list-valued content descriptions and occasional missing bounds.
inline nlohmann::json fuzz_node(std::mt19937_64& rng, int depth, int W, int H) {
    auto coin = [&](double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; };
    auto coord = [&](int extent) { return std::uniform_int_distribution<int>(-extent / 8, extent + extent / 8)(rng); };
    nlohmann::json n;
    static const char* classes[] = {"android.widget.FrameLayout", "android.widget.LinearLayout", "android.widget.TextView",
                                    "android.widget.Button", "android.widget.ImageView", "android.widget.EditText"};
    n["class"] = classes[rng() % 6];
    if (!coin(0.03)) {
        int x1 = coord(W), x2 = coord(W), y1 = coord(H), y2 = coord(H);
        if (!coin(0.1)) {
            if (x1 > x2) std::swap(x1, x2);
            if (y1 > y2) std::swap(y1, y2);
        }
        n["bounds"] = {x1, y1, x2, y2};
    }
    n["visible-to-user"] = !coin(0.15);
    n["clickable"] = coin(0.4);
    if (coin(0.5)) n["text"] = "label " + std::to_string(rng() % 1000);
    n["content-desc"] = coin(0.5) ? nlohmann::json::array({nullptr}) : nlohmann::json::array({"desc"});
    n["children"] = nlohmann::json::array();
    if (depth < 5) {
        const int kids = static_cast<int>(rng() % 4);
        for (int k = 0; k < kids; ++k) n["children"].push_back(fuzz_node(rng, depth + 1, W, H));
    }
    return n;
}

inline nlohmann::json fuzz_hierarchy(std::mt19937_64& rng, int W = 1440, int H = 2560) {
    nlohmann::json root = fuzz_node(rng, 0, W, H);
    root["bounds"] = {0, 0, W, H};
    root["visible-to-user"] = true;
    return {{"activity_name", "fuzz/.Main"}, {"activity", {{"root", root}}}};
}

/// Tree-walk oracle: child-index paths of nodes that have usable bounds and no invisible ancestor-or-self.
inline void visible_paths(const nlohmann::json& node, const std::string& path, bool hidden, std::set<std::string>& visible,
                          std::set<std::string>& invisible) {
    const bool here_hidden = hidden || (node.contains("visible-to-user") && node["visible-to-user"] == false);
    const bool has_bounds = node.contains("bounds") && node["bounds"].is_array() && node["bounds"].size() == 4;
    if (!has_bounds) return; // dropped with its subtree
    (here_hidden ? invisible : visible).insert(path);
    if (!node.contains("children")) return;
    int i = 0;
    for (const auto& c : node["children"]) visible_paths(c, path + "." + std::to_string(i++), here_hidden, visible, invisible);
}

// ---- relation oracles ----

/// Integer rectangle on a lattice of `n` cells per side; closed point set [x1, x2] x [y1, y2].
struct LatticeRect {
    int x1, y1, x2, y2;
};

/// Brute force over lattice points, rows and columns; eps is in lattice units.
inline std::set<RelationKind> lattice_oracle(const LatticeRect& a, const LatticeRect& b, double eps_units) {
    std::set<RelationKind> out;
    auto columns = [](const LatticeRect& r) {
        int n = 0;
        for (int x = 0; x < 64; ++x) n += r.x1 <= x && x < r.x2;
        return n;
    };
    auto rows = [](const LatticeRect& r) {
        int n = 0;
        for (int y = 0; y < 64; ++y) n += r.y1 <= y && y < r.y2;
        return n;
    };
    auto in = [](const LatticeRect& r, int x, int y) { return r.x1 <= x && x <= r.x2 && r.y1 <= y && y <= r.y2; };
    // every coordinate value of the first range compared with every value of the second
    auto all_pairs = [](int lo1, int hi1, int lo2, int hi2, auto pred) {
        for (int u = lo1; u <= hi1; ++u)
            for (int v = lo2; v <= hi2; ++v)
                if (!pred(u, v)) return false;
        return true;
    };
    const bool a_deg = columns(a) * rows(a) == 0, b_deg = columns(b) * rows(b) == 0;
    int shared_columns = 0, shared_rows = 0;
    for (int x = 0; x < 64; ++x) shared_columns += a.x1 <= x && x < a.x2 && b.x1 <= x && x < b.x2;
    for (int y = 0; y < 64; ++y) shared_rows += a.y1 <= y && y < a.y2 && b.y1 <= y && y < b.y2;
    const auto le = [](int u, int v) { return u <= v; };
    const auto ge = [](int u, int v) { return u >= v; };
    if (!a_deg && !b_deg) {
        if (shared_columns > eps_units) {
            if (all_pairs(a.y1, a.y2, b.y1, b.y2, le)) out.insert(RelationKind::above);
            if (all_pairs(a.y1, a.y2, b.y1, b.y2, ge)) out.insert(RelationKind::below);
        }
        if (shared_rows > eps_units) {
            if (all_pairs(a.x1, a.x2, b.x1, b.x2, le)) out.insert(RelationKind::left_of);
            if (all_pairs(a.x1, a.x2, b.x1, b.x2, ge)) out.insert(RelationKind::right_of);
        }
    }
    bool a_has_b = true, b_has_a = true;
    for (int x = b.x1; x <= b.x2; ++x)
        for (int y = b.y1; y <= b.y2; ++y) a_has_b = a_has_b && in(a, x, y);
    for (int x = a.x1; x <= a.x2; ++x)
        for (int y = a.y1; y <= a.y2; ++y) b_has_a = b_has_a && in(b, x, y);
    if (a_has_b) out.insert(RelationKind::contains);
    if (b_has_a) out.insert(RelationKind::inside);
    if (!a_has_b && !b_has_a && shared_columns > 0 && shared_rows > 0) out.insert(RelationKind::overlaps);
    return out;
}

/// Predicate-definition oracle on real coordinates.
inline std::set<RelationKind> predicate_oracle(const Bounds& a, const Bounds& b, double eps) {
    std::set<RelationKind> out;
    const bool a_area = a.x2 > a.x1 && a.y2 > a.y1;
    const bool b_area = b.x2 > b.x1 && b.y2 > b.y1;
    const double xs = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double ys = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    if (a_area && b_area) {
        if (xs > eps && a.y2 <= b.y1) out.insert(RelationKind::above);
        if (xs > eps && b.y2 <= a.y1) out.insert(RelationKind::below);
        if (ys > eps && a.x2 <= b.x1) out.insert(RelationKind::left_of);
        if (ys > eps && b.x2 <= a.x1) out.insert(RelationKind::right_of);
    }
    const bool c = a.x1 <= b.x1 && a.y1 <= b.y1 && b.x2 <= a.x2 && b.y2 <= a.y2;
    const bool i = b.x1 <= a.x1 && b.y1 <= a.y1 && a.x2 <= b.x2 && a.y2 <= b.y2;
    if (c) out.insert(RelationKind::contains);
    if (i) out.insert(RelationKind::inside);
    if (!c && !i && xs * ys > 0) out.insert(RelationKind::overlaps);
    return out;
}

inline Bounds lattice_bounds(const LatticeRect& r) { return {r.x1 / 64.0, r.y1 / 64.0, r.x2 / 64.0, r.y2 / 64.0}; }

inline LatticeRect random_lattice_rect(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> d(0, 64);
    int x1 = d(rng), x2 = d(rng), y1 = d(rng), y2 = d(rng);
    if (x1 > x2) std::swap(x1, x2);
    if (y1 > y2) std::swap(y1, y2);
    if (rng() % 16 == 0) x2 = x1; // degenerate now and then
    return {x1, y1, x2, y2};
}

// ---- composition oracle ----

/// Largest-remainder apportionment computed with exact integer arithmetic, independent of the library.
inline std::vector<long long> apportion_oracle(long long total, const std::vector<long long>& weights) {
    long long wsum = 0;
    for (auto w : weights) wsum += w;
    std::vector<long long> q(weights.size());
    std::vector<std::pair<long long, std::size_t>> rema;
    long long given = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        q[i] = (total * weights[i]) / wsum;
        given += q[i];
        rema.push_back({-((total * weights[i]) % wsum), i});
    }
    std::sort(rema.begin(), rema.end());
    for (long long k = 0; k < total - given; ++k) ++q[rema[static_cast<std::size_t>(k)].second];
    return q;
}

// ---- synthetic corpus ----

/// Writes `n` synthetic screens into dir/raw and ingests them.
inline std::vector<ScreenRecord> synth_corpus(const std::filesystem::path& dir, std::size_t n, std::uint64_t seed = 0) {
    SynthOptions so;
    so.seed = seed;
    write_synth_screens(dir / "raw", n, so);
    IngestReport rep;
    return ingest_directory(dir / "raw", IngestOptions{}, rep);
}

} // namespace forge::testing
