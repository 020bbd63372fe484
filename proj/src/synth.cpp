#include "forge/synth.hpp"

#include "forge/jsonl.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <random>

namespace forge {

using nlohmann::json;

namespace {

struct App {
    const char* package;
    const char* title;
    std::array<const char*, 8> rows;
    std::array<const char*, 4> tabs;
    std::array<const char*, 3> actions;
};

const std::array<App, 8>& apps() {
    static const std::array<App, 8> a{{
        {"com.example.notes", "Notebook", {"Recent notes", "Favorites", "Shared with me", "Archive", "Trash", "Reminders", "Tags", "Templates"},
         {"Home", "Folders", "Profile", "Help"}, {"Create", "Save", "Continue"}},
        {"com.example.weather", "Forecast", {"Hourly forecast", "Weekly outlook", "Air quality", "Sunrise times", "Wind speed", "Humidity", "Radar view", "Alerts"},
         {"Today", "Cities", "Account", "About"}, {"Refresh", "Add city", "Continue"}},
        {"com.example.fitness", "Workout", {"Daily steps", "Running log", "Heart rate", "Sleep score", "Water intake", "Goals", "Achievements", "Friends"},
         {"Dashboard", "Activity", "Profile", "Tips"}, {"Start", "Pause", "Finish"}},
        {"com.example.recipes", "Cookbook", {"Breakfast ideas", "Quick dinners", "Desserts", "Vegetarian", "Shopping list", "Meal planner", "Saved recipes", "Pantry"},
         {"Discover", "Saved", "Profile", "Planner"}, {"Cook now", "Save recipe", "Next"}},
        {"com.example.bank", "Wallet", {"Checking account", "Savings account", "Transfers", "Statements", "Cards", "Budgets", "Rewards", "Contacts"},
         {"Overview", "Accounts", "Profile", "Support"}, {"Transfer", "Confirm", "Next"}},
        {"com.example.reader", "Library", {"Continue reading", "Bookmarks", "Collections", "Downloads", "Highlights", "Authors", "Genres", "History"},
         {"Home", "Browse", "Profile", "Store"}, {"Open book", "Sync", "Continue"}},
        {"com.example.travel", "Journeys", {"Upcoming trips", "Boarding passes", "Hotels", "Car rentals", "Itinerary", "Loyalty points", "Passport info", "Packing list"},
         {"Explore", "Trips", "Profile", "Offers"}, {"Book trip", "Check in", "Next"}},
        {"com.example.language", "Lingo", {"Daily lesson", "Vocabulary", "Grammar tips", "Listening practice", "Flashcards", "Leaderboard", "Streak", "Review words"},
         {"Learn", "Practice", "Profile", "League"}, {"Start lesson", "Check answer", "Continue"}},
    }};
    return a;
}

// Colors drawn from the basic palette so extraction can name them.
constexpr std::array<Rgb, 8> kAccents{{{0, 0, 255}, {0, 128, 0}, {255, 0, 0}, {128, 0, 128}, {0, 128, 128}, {0, 0, 128}, {128, 0, 0}, {128, 128, 0}}};
constexpr Rgb kWhite{255, 255, 255};
constexpr Rgb kBlack{0, 0, 0};
constexpr Rgb kGray{128, 128, 128};
constexpr Rgb kSilver{192, 192, 192};

struct Canvas {
    Image img;
    double sx, sy;
    void rect(int x1, int y1, int x2, int y2, Rgb c) {
        img.fill_rect(int(x1 * sx), int(y1 * sy), int(x2 * sx), int(y2 * sy), c);
    }
    void ellipse(int x1, int y1, int x2, int y2, Rgb c) {
        img.fill_ellipse(int(x1 * sx), int(y1 * sy), int(x2 * sx), int(y2 * sy), c);
    }
    void rounded(int x1, int y1, int x2, int y2, Rgb c, Rgb bg) {
        rect(x1, y1, x2, y2, c);
        const int r = std::max(2, int((y2 - y1) * sy * 0.25));
        const int X1 = int(x1 * sx), Y1 = int(y1 * sy), X2 = int(x2 * sx), Y2 = int(y2 * sy);
        for (int dy = 0; dy < r; ++dy)
            for (int dx = 0; dx < r; ++dx) {
                const int ox = r - dx, oy = r - dy;
                if (ox * ox + oy * oy <= r * r) continue;
                img.fill_rect(X1 + dx, Y1 + dy, X1 + dx + 1, Y1 + dy + 1, bg);
                img.fill_rect(X2 - dx - 1, Y1 + dy, X2 - dx, Y1 + dy + 1, bg);
                img.fill_rect(X1 + dx, Y2 - dy - 1, X1 + dx + 1, Y2 - dy, bg);
                img.fill_rect(X2 - dx - 1, Y2 - dy - 1, X2 - dx, Y2 - dy, bg);
            }
    }
};

json node(const char* cls, std::array<int, 4> b, bool clickable, const std::string& package) {
    return {{"class", cls},
            {"bounds", b},
            {"visible-to-user", true},
            {"clickable", clickable},
            {"content-desc", json::array({nullptr})},
            {"package", package},
            {"children", json::array()}};
}

} // namespace

SynthScreen synth_screen(std::size_t index, const SynthOptions& opts) {
    std::mt19937_64 rng(opts.seed * 0x9e3779b97f4a7c15ull + index * 0xbf58476d1ce4e5b9ull + 1);
    auto below = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
    const App& app = apps()[below(apps().size())];
    const std::string pkg = app.package;
    const int W = opts.screen.width, H = opts.screen.height;
    const auto sc = [&](double f, int total) { return static_cast<int>(f * total); };

    Canvas cv{Image(opts.image_width, opts.image_height, kWhite), double(opts.image_width) / W,
              double(opts.image_height) / H};
    const Rgb accent = kAccents[below(kAccents.size())];

    SynthScreen out;
    char name[64];
    std::snprintf(name, sizeof name, "screen_%05zu", index);
    out.name = name;

    json root = node("com.android.internal.policy.PhoneWindow$DecorView", {0, 0, W, H}, false, pkg);

    // Toolbar with title and an action icon.
    const int bar_h = sc(0.0875, H);
    json bar = node("android.support.v7.widget.Toolbar", {0, 0, W, bar_h}, false, pkg);
    cv.rect(0, 0, W, bar_h, accent);
    json title = node("android.widget.TextView", {sc(0.033, W), sc(0.025, H), sc(0.55, W), sc(0.0625, H)}, false, pkg);
    title["text"] = app.title;
    title["resource-id"] = pkg + ":id/title";
    cv.rect(sc(0.033, W), sc(0.035, H), sc(0.3, W), sc(0.052, H), kWhite);
    bar["children"].push_back(title);
    static const std::array<const char*, 4> icons{"Search", "Menu", "Share", "More options"};
    const int icon = sc(0.0667, W);
    json action = node("android.widget.ImageButton", {W - icon - sc(0.033, W), sc(0.025, H), W - sc(0.033, W), sc(0.025, H) + icon}, true, pkg);
    action["content-desc"] = json::array({icons[below(icons.size())]});
    cv.rect(W - icon - sc(0.033, W), sc(0.025, H), W - sc(0.033, W), sc(0.025, H) + icon, kWhite);
    bar["children"].push_back(action);
    root["children"].push_back(bar);

    // Scrolling list of rows, some with a trailing toggle.
    const int list_top = bar_h, list_bottom = sc(0.875, H);
    json list = node("android.widget.ListView", {0, list_top, W, list_bottom}, false, pkg);
    list["resource-id"] = pkg + ":id/list";
    const int rows = 3 + static_cast<int>(below(4));
    const int row_h = sc(0.075, H);
    std::array<int, 8> order{0, 1, 2, 3, 4, 5, 6, 7};
    std::shuffle(order.begin(), order.end(), rng);
    int y = list_top + sc(0.02, H);
    for (int r = 0; r < rows; ++r) {
        json row = node("android.widget.LinearLayout", {0, y, W, y + row_h}, true, pkg);
        json label = node("android.widget.TextView", {sc(0.044, W), y + row_h / 4, sc(0.7, W), y + 3 * row_h / 4}, false, pkg);
        label["text"] = app.rows[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])];
        cv.rect(sc(0.044, W), y + row_h / 3, sc(0.4, W), y + 2 * row_h / 3, kBlack);
        row["children"].push_back(label);
        if (below(2) == 0) {
            const int s = sc(0.06, W);
            json toggle = node(below(2) ? "android.widget.Switch" : "android.widget.CheckBox",
                               {W - s - sc(0.06, W), y + (row_h - s) / 2, W - sc(0.06, W), y + (row_h + s) / 2}, true, pkg);
            cv.rect(W - s - sc(0.06, W), y + (row_h - s) / 2, W - sc(0.06, W), y + (row_h + s) / 2, accent);
            row["children"].push_back(toggle);
        }
        cv.rect(0, y + row_h - 4, W, y + row_h, kSilver);
        list["children"].push_back(row);
        y += row_h;
    }
    root["children"].push_back(list);

    // Primary action button below the list.
    const int bw = sc(0.42, W), bh = sc(0.0625, H);
    const int bx = (W - bw) / 2, by = y + sc(0.06, H);
    json button = node("android.widget.Button", {bx, by, bx + bw, by + bh}, true, pkg);
    button["text"] = app.actions[below(app.actions.size())];
    button["resource-id"] = pkg + ":id/primary";
    if (below(2)) cv.rounded(bx, by, bx + bw, by + bh, accent, kWhite);
    else cv.rect(bx, by, bx + bw, by + bh, accent);
    root["children"].push_back(button);

    // Floating action button.
    const int fab = sc(0.111, W);
    const int fx = W - fab - sc(0.05, W), fy = list_bottom - fab - sc(0.02, H);
    json fab_node = node("android.widget.ImageButton", {fx, fy, fx + fab, fy + fab}, true, pkg);
    fab_node["content-desc"] = json::array({"Add"});
    cv.ellipse(fx, fy, fx + fab, fy + fab, kAccents[(below(kAccents.size()))]);
    root["children"].push_back(fab_node);

    // Bottom navigation.
    json nav = node("android.widget.LinearLayout", {0, list_bottom, W, H}, false, pkg);
    cv.rect(0, list_bottom, W, H, kSilver);
    const int tabs = 3 + static_cast<int>(below(2));
    for (int t = 0; t < tabs; ++t) {
        const int tx1 = W * t / tabs, tx2 = W * (t + 1) / tabs;
        json tab = node("android.widget.ImageView", {tx1, list_bottom, tx2, H}, true, pkg);
        tab["content-desc"] = json::array({app.tabs[static_cast<std::size_t>(t)]});
        const int cx = (tx1 + tx2) / 2, cy = (list_bottom + H) / 2, s = sc(0.03, W);
        cv.rect(cx - s, cy - s, cx + s, cy + s, kGray);
        nav["children"].push_back(tab);
    }
    root["children"].push_back(nav);

    // Hidden dialog left in the hierarchy, as real dumps often have.
    if (below(3) == 0) {
        json dialog = node("android.widget.FrameLayout", {sc(0.1, W), sc(0.3, H), sc(0.9, W), sc(0.6, H)}, false, pkg);
        dialog["visible-to-user"] = false;
        json ok = node("android.widget.Button", {sc(0.6, W), sc(0.5, H), sc(0.85, W), sc(0.57, H)}, true, pkg);
        ok["text"] = "Dismiss";
        dialog["children"].push_back(ok);
        root["children"].push_back(dialog);
    }

    out.hierarchy = {{"activity_name", pkg + "/.MainActivity"}, {"activity", {{"root", root}}}};
    out.screenshot = std::move(cv.img);
    return out;
}

std::vector<std::string> write_synth_screens(const std::filesystem::path& dir, std::size_t count, const SynthOptions& opts) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < count; ++i) {
        auto s = synth_screen(i, opts);
        write_file_atomic(dir / (s.name + ".json"), s.hierarchy.dump(1) + "\n");
        write_jpeg(dir / (s.name + ".jpg"), s.screenshot, opts.jpeg_quality);
        names.push_back(s.name);
    }
    return names;
}

} // namespace forge
