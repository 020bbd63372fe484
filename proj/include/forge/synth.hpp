#pragma once

#include "forge/image.hpp"
#include "forge/ingest.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace forge {

struct SynthOptions {
    std::uint64_t seed = 0;
    ScreenSize screen{1440, 2560};
    int image_width = 360;
    int image_height = 640;
    int jpeg_quality = 90;
};

/// A generated app screen: Rico-style view hierarchy plus a matching screenshot.
struct SynthScreen {
    std::string name;
    nlohmann::json hierarchy;
    Image screenshot;
};

SynthScreen synth_screen(std::size_t index, const SynthOptions& opts = {});

/// Writes {name}.json and {name}.jpg for `count` screens; returns the names in order.
std::vector<std::string> write_synth_screens(const std::filesystem::path& dir, std::size_t count,
                                             const SynthOptions& opts = {});

} // namespace forge
