#pragma once

#include "forge/geometry.hpp"

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace forge {

struct ScreenSize {
    int width = 0;
    int height = 0;
    friend bool operator==(const ScreenSize&, const ScreenSize&) = default;
};

/// One node of a view hierarchy as it appears in the raw dump, pixel coordinates.
struct RawViewNode {
    std::string class_name;
    std::array<int, 4> bounds_px{}; // x1, y1, x2, y2
    bool visible_to_user = true;
    bool clickable = false;
    std::optional<std::string> text;
    std::optional<std::string> resource_id;
    std::optional<std::string> content_desc;
    std::vector<RawViewNode> children;
    /// Position among the parent's children in the source document; feeds the element id.
    int child_index = 0;
};

struct ParsedScreen {
    std::optional<RawViewNode> root; // empty when the root itself had no usable bounds
    std::optional<std::string> app_package;
    std::string image_path;
    ScreenSize screen_size;
    int dropped_nodes = 0; // nodes without usable bounds
};

struct ParseError : std::runtime_error {
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what), byte_offset(offset) {}
    std::size_t byte_offset;
};

struct Element {
    std::string id;
    std::string path; // child-index path from the root, e.g. "0.2.1"
    std::string class_name;
    Bounds bounds;
    std::optional<ClickPoint> click_point;
    std::optional<std::string> text;
    std::optional<std::string> resource_id;
    std::optional<std::string> content_desc;
    int depth = 0;
    bool degenerate = false;

    friend bool operator==(const Element&, const Element&) = default;
};

struct ScreenRecord {
    std::string screen_id;
    std::string image_path;
    ScreenSize screen_size;
    std::vector<Element> elements; // pre-order
    std::optional<std::string> app_package;

    const Element* find(std::string_view element_id) const;
    friend bool operator==(const ScreenRecord&, const ScreenRecord&) = default;
};

struct RecordRejected : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PreprocessStats {
    int removed_invisible = 0;   // nodes removed with an invisible ancestor-or-self
    int rejected_inverted = 0;   // negative extent after clamping
    int inverted_before_clamp = 0;
    int degenerate = 0;
};

/// Parses a view-hierarchy JSON document (Rico layout or a bare root node).
ParsedScreen parse_screen(std::string_view hierarchy_json, std::string image_path, ScreenSize screen_size);

/// Filters invisible subtrees, normalizes bounds, adds click points and flattens pre-order.
/// Throws RecordRejected when nothing survives.
ScreenRecord preprocess(const ParsedScreen& parsed, std::string screen_id, PreprocessStats* stats = nullptr);

std::string element_id_for_path(std::string_view path);

/// Rebuilds a pixel-space tree from a record; preprocess() on it reproduces the record.
ParsedScreen to_parsed(const ScreenRecord& record);

inline constexpr std::string_view kScreenSchema = "screen/v1";

nlohmann::json to_json(const ScreenRecord& record);
ScreenRecord screen_from_json(const nlohmann::json& j);

struct IngestReport {
    int screens_ok = 0;
    int screens_rejected = 0;
    int dropped_nodes = 0;
    int degenerate = 0;
    int warnings() const { return dropped_nodes + screens_rejected; }
    std::vector<std::string> messages;
};

struct IngestOptions {
    ScreenSize screen_size{1440, 2560};
    bool strict = false;
    int workers = 0; // 0 = hardware concurrency
};

/// Reads every {id}.json (+ {id}.jpg) in `dir`, sorted by id.
std::vector<ScreenRecord> ingest_directory(const std::filesystem::path& dir, const IngestOptions& opts,
                                           IngestReport& report);

std::vector<ScreenRecord> read_screens(const std::filesystem::path& jsonl);
void write_screens(const std::filesystem::path& jsonl, const std::vector<ScreenRecord>& screens);

} // namespace forge
