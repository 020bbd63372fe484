#pragma once

#include "forge/image.hpp"
#include "forge/referent.hpp"
#include "support.hpp"

namespace forge::testing {

/// Video feed with an avatar on the right and a heart button just below it.
inline ScreenRecord like_screen() {
    return make_screen("like", {
        make_element("0", "android.widget.FrameLayout", {0, 0, 1, 1}, false, std::nullopt, std::nullopt, 0),
        make_element("0.0", "android.widget.VideoView", {0, 0, 1, 1}, true, std::nullopt, "Video"),
        make_element("0.1", "android.widget.ImageView", {0.85, 0.40, 0.95, 0.45}, true, std::nullopt, "Person's image"),
        make_element("0.2", "android.widget.ImageButton", {0.87, 0.48, 0.93, 0.51}, true, std::nullopt, "Heart"),
        make_element("0.3", "android.widget.TextView", {0.05, 0.90, 0.60, 0.95}, false, "Great trip to the lake"),
    });
}

/// Drawing app start page with a blue Start button in the center; returns the screenshot too.
inline std::pair<ScreenRecord, Image> draw_screen() {
    auto screen = make_screen("draw", {
        make_element("0", "android.widget.FrameLayout", {0, 0, 1, 1}, false, std::nullopt, std::nullopt, 0),
        make_element("0.0", "android.widget.TextView", {0.1, 0.05, 0.9, 0.12}, false, "Coloring Book"),
        make_element("0.1", "android.widget.Button", {0.3, 0.45, 0.7, 0.53}, true, "Start"),
        make_element("0.2", "android.widget.Button", {0.05, 0.85, 0.35, 0.93}, true, "Draw"),
        make_element("0.3", "android.widget.Button", {0.65, 0.85, 0.95, 0.93}, true, "My Work"),
    });
    Image img(360, 640, {255, 255, 255});
    img.fill_rect(36, 32, 324, 77, {0, 0, 0});
    img.fill_rect(108, 288, 252, 339, {0, 0, 255});
    img.fill_rect(160, 305, 200, 322, {255, 255, 255});
    img.fill_rect(18, 544, 126, 595, {255, 0, 0});
    img.fill_rect(234, 544, 342, 595, {0, 128, 0});
    return {screen, img};
}

/// Quiz page: four answer options, the top left one being "dictado".
inline ScreenRecord score_screen() {
    return make_screen("score", {
        make_element("0", "android.widget.FrameLayout", {0, 0, 1, 1}, false, std::nullopt, std::nullopt, 0),
        make_element("0.0", "android.widget.TextView", {0.1, 0.1, 0.9, 0.2}, false, "Choose the right word"),
        make_element("0.1", "android.widget.Button", {0.05, 0.40, 0.45, 0.48}, true, "dictado"),
        make_element("0.2", "android.widget.Button", {0.55, 0.40, 0.95, 0.48}, true, "horrible"),
        make_element("0.3", "android.widget.Button", {0.05, 0.52, 0.45, 0.60}, true, "dictador"),
        make_element("0.4", "android.widget.Button", {0.55, 0.52, 0.95, 0.60}, true, "dictamen"),
    });
}

/// Home screen with a camera shortcut and a settings tile.
inline ScreenRecord camera_screen() {
    return make_screen("camera", {
        make_element("0", "android.widget.FrameLayout", {0, 0, 1, 1}, false, std::nullopt, std::nullopt, 0),
        make_element("0.0", "android.widget.ImageView", {0.28, 0.66, 0.40, 0.74}, true, std::nullopt, "Camera"),
        make_element("0.1", "android.widget.ImageView", {0.762, 0.566, 0.922, 0.692}, true, std::nullopt, "Settings"),
    });
}

struct LintCase {
    const char* name;
    const char* answer;
    bool expect_pass;
    std::set<ReferentKind> must_have; // only checked for passing cases
};

} // namespace forge::testing
