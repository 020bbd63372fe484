#include "forge/ingest.hpp"

#include "forge/jsonl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <future>
#include <thread>

namespace forge {

using nlohmann::json;

const Element* ScreenRecord::find(std::string_view element_id) const {
    for (const auto& e : elements)
        if (e.id == element_id) return &e;
    return nullptr;
}

namespace {

std::optional<std::string> string_field(const json& node, std::initializer_list<const char*> keys) {
    for (const char* key : keys) {
        auto it = node.find(key);
        if (it == node.end() || it->is_null()) continue;
        if (it->is_string()) return it->get<std::string>();
        // Rico stores content-desc as a one-element list, often [null].
        if (it->is_array()) {
            for (const auto& v : *it)
                if (v.is_string()) return v.get<std::string>();
        }
    }
    return std::nullopt;
}

bool bool_field(const json& node, std::initializer_list<const char*> keys, bool fallback) {
    for (const char* key : keys) {
        auto it = node.find(key);
        if (it != node.end() && it->is_boolean()) return it->get<bool>();
    }
    return fallback;
}

std::optional<std::array<int, 4>> bounds_field(const json& node) {
    auto it = node.find("bounds");
    if (it == node.end() || !it->is_array() || it->size() != 4) return std::nullopt;
    std::array<int, 4> b{};
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& v = (*it)[i];
        if (!v.is_number()) return std::nullopt;
        b[i] = static_cast<int>(std::llround(v.get<double>()));
    }
    return b;
}

std::optional<RawViewNode> parse_node(const json& node, int child_index, int& dropped) {
    if (!node.is_object()) {
        ++dropped;
        return std::nullopt;
    }
    auto bounds = bounds_field(node);
    if (!bounds) {
        ++dropped;
        return std::nullopt;
    }
    RawViewNode out;
    out.class_name = string_field(node, {"class", "class_name"}).value_or("");
    out.bounds_px = *bounds;
    out.visible_to_user = bool_field(node, {"visible-to-user", "visible_to_user"}, true);
    out.clickable = bool_field(node, {"clickable"}, false);
    out.text = string_field(node, {"text"});
    out.resource_id = string_field(node, {"resource-id", "resource_id"});
    out.content_desc = string_field(node, {"content-desc", "content_desc"});
    out.child_index = child_index;
    if (auto it = node.find("children"); it != node.end() && it->is_array()) {
        int idx = 0;
        for (const auto& child : *it) {
            if (child.is_null()) {
                ++idx;
                continue;
            }
            if (auto c = parse_node(child, idx, dropped)) out.children.push_back(std::move(*c));
            ++idx;
        }
    }
    return out;
}

struct Flattener {
    ScreenSize size;
    PreprocessStats stats;
    std::vector<Element> out;

    void count_subtree(const RawViewNode& n, int& counter) {
        ++counter;
        for (const auto& c : n.children) count_subtree(c, counter);
    }

    void visit(const RawViewNode& n, const std::string& path, int depth) {
        if (!n.visible_to_user) {
            count_subtree(n, stats.removed_invisible);
            return;
        }
        auto [x1, y1, x2, y2] = n.bounds_px;
        if (x1 > x2 || y1 > y2) ++stats.inverted_before_clamp;
        x1 = std::clamp(x1, 0, size.width);
        x2 = std::clamp(x2, 0, size.width);
        y1 = std::clamp(y1, 0, size.height);
        y2 = std::clamp(y2, 0, size.height);
        if (x1 > x2 || y1 > y2) {
            count_subtree(n, stats.rejected_inverted);
            return;
        }
        const double w = size.width, h = size.height;
        Element e;
        e.path = path;
        e.id = element_id_for_path(path);
        e.class_name = n.class_name;
        e.bounds = {x1 / w, y1 / h, x2 / w, y2 / h};
        if (n.clickable) e.click_point = midpoint(e.bounds);
        e.text = n.text;
        e.resource_id = n.resource_id;
        e.content_desc = n.content_desc;
        e.depth = depth;
        e.degenerate = e.bounds.degenerate();
        if (e.degenerate) ++stats.degenerate;
        out.push_back(std::move(e));
        for (const auto& c : n.children) visit(c, path + "." + std::to_string(c.child_index), depth + 1);
    }
};

} // namespace

std::string element_id_for_path(std::string_view path) {
    // FNV-1a, 64 bit.
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : path) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ParsedScreen parse_screen(std::string_view hierarchy_json, std::string image_path, ScreenSize screen_size) {
    if (screen_size.width <= 0 || screen_size.height <= 0)
        throw std::invalid_argument("screen dimensions must be positive");
    json doc;
    try {
        doc = json::parse(hierarchy_json.begin(), hierarchy_json.end());
    } catch (const json::parse_error& e) {
        throw ParseError("malformed view hierarchy at byte " + std::to_string(e.byte) + ": " + e.what(), e.byte);
    }
    ParsedScreen out;
    out.image_path = std::move(image_path);
    out.screen_size = screen_size;

    const json* root = &doc;
    if (auto act = doc.find("activity"); act != doc.end() && act->is_object() && act->contains("root"))
        root = &(*act)["root"];
    else if (auto r = doc.find("root"); r != doc.end() && r->is_object())
        root = &*r;

    if (root->is_object()) out.app_package = string_field(*root, {"package"});
    if (!out.app_package) out.app_package = string_field(doc, {"package", "app_package"});
    out.root = parse_node(*root, 0, out.dropped_nodes);
    return out;
}

ScreenRecord preprocess(const ParsedScreen& parsed, std::string screen_id, PreprocessStats* stats) {
    Flattener f{parsed.screen_size, {}, {}};
    if (parsed.root) f.visit(*parsed.root, std::to_string(parsed.root->child_index), 0);
    if (stats) *stats = f.stats;
    if (f.out.empty()) throw RecordRejected("empty-after-filter: " + screen_id);
    ScreenRecord rec;
    rec.screen_id = std::move(screen_id);
    rec.image_path = parsed.image_path;
    rec.screen_size = parsed.screen_size;
    rec.elements = std::move(f.out);
    rec.app_package = parsed.app_package;
    return rec;
}

ParsedScreen to_parsed(const ScreenRecord& record) {
    ParsedScreen out;
    out.image_path = record.image_path;
    out.screen_size = record.screen_size;
    out.app_package = record.app_package;
    const double w = record.screen_size.width, h = record.screen_size.height;

    // Rebuild the tree from pre-order + depth; `chain` holds the path of open ancestors.
    std::vector<RawViewNode*> chain;
    for (const auto& e : record.elements) {
        RawViewNode n;
        n.class_name = e.class_name;
        n.bounds_px = {static_cast<int>(std::llround(e.bounds.x1 * w)), static_cast<int>(std::llround(e.bounds.y1 * h)),
                       static_cast<int>(std::llround(e.bounds.x2 * w)), static_cast<int>(std::llround(e.bounds.y2 * h))};
        n.clickable = e.click_point.has_value();
        n.text = e.text;
        n.resource_id = e.resource_id;
        n.content_desc = e.content_desc;
        const auto dot = e.path.rfind('.');
        n.child_index = std::stoi(dot == std::string::npos ? e.path : e.path.substr(dot + 1));
        if (e.depth == 0) {
            out.root = std::move(n);
            chain.assign(1, &*out.root);
            continue;
        }
        if (chain.size() < static_cast<std::size_t>(e.depth))
            throw std::invalid_argument("element depth sequence is not a pre-order traversal");
        chain.resize(static_cast<std::size_t>(e.depth));
        auto& parent = *chain.back();
        parent.children.push_back(std::move(n));
        chain.push_back(&parent.children.back());
    }
    return out;
}

json to_json(const ScreenRecord& record) {
    json elements = json::array();
    for (const auto& e : record.elements) {
        json je = {{"id", e.id},
                   {"path", e.path},
                   {"class", e.class_name},
                   {"bounds", {e.bounds.x1, e.bounds.y1, e.bounds.x2, e.bounds.y2}},
                   {"depth", e.depth}};
        if (e.click_point) je["click"] = {e.click_point->x, e.click_point->y};
        if (e.text) je["text"] = *e.text;
        if (e.resource_id) je["resource_id"] = *e.resource_id;
        if (e.content_desc) je["content_desc"] = *e.content_desc;
        if (e.degenerate) je["degenerate"] = true;
        elements.push_back(std::move(je));
    }
    json j = {{"schema", kScreenSchema},
              {"screen_id", record.screen_id},
              {"image", record.image_path},
              {"width", record.screen_size.width},
              {"height", record.screen_size.height},
              {"elements", std::move(elements)}};
    if (record.app_package) j["app_package"] = *record.app_package;
    return j;
}

ScreenRecord screen_from_json(const json& j) {
    if (j.value("schema", "") != kScreenSchema)
        throw std::runtime_error("unsupported screen schema: " + j.value("schema", std::string("<missing>")));
    ScreenRecord r;
    r.screen_id = j.at("screen_id").get<std::string>();
    r.image_path = j.value("image", "");
    r.screen_size = {j.at("width").get<int>(), j.at("height").get<int>()};
    r.app_package = optional_field<std::string>(j, "app_package");
    for (const auto& je : j.at("elements")) {
        Element e;
        e.id = je.at("id").get<std::string>();
        e.path = je.value("path", "");
        e.class_name = je.value("class", "");
        const auto& b = je.at("bounds");
        e.bounds = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
        if (auto it = je.find("click"); it != je.end())
            e.click_point = ClickPoint{(*it)[0].get<double>(), (*it)[1].get<double>()};
        e.text = optional_field<std::string>(je, "text");
        e.resource_id = optional_field<std::string>(je, "resource_id");
        e.content_desc = optional_field<std::string>(je, "content_desc");
        e.depth = je.value("depth", 0);
        e.degenerate = je.value("degenerate", false);
        r.elements.push_back(std::move(e));
    }
    return r;
}

std::vector<ScreenRecord> read_screens(const std::filesystem::path& jsonl) {
    std::vector<ScreenRecord> out;
    for (const auto& j : read_jsonl(jsonl)) out.push_back(screen_from_json(j));
    return out;
}

void write_screens(const std::filesystem::path& jsonl, const std::vector<ScreenRecord>& screens) {
    std::vector<json> lines;
    lines.reserve(screens.size());
    for (const auto& s : screens) lines.push_back(to_json(s));
    write_jsonl_atomic(jsonl, lines);
}

namespace {

struct ScreenOutcome {
    std::optional<ScreenRecord> record;
    int dropped = 0;
    int degenerate = 0;
    std::string message;
};

ScreenOutcome ingest_one(const std::filesystem::path& json_path, const IngestOptions& opts) {
    ScreenOutcome out;
    const auto id = json_path.stem().string();
    auto image = json_path;
    image.replace_extension(".jpg");
    try {
        auto parsed = parse_screen(read_text_file(json_path), image.string(), opts.screen_size);
        out.dropped = parsed.dropped_nodes;
        if (parsed.dropped_nodes > 0)
            out.message = id + ": dropped " + std::to_string(parsed.dropped_nodes) + " node(s) without bounds";
        PreprocessStats stats;
        out.record = preprocess(parsed, id, &stats);
        out.degenerate = stats.degenerate;
    } catch (const ParseError& e) {
        out.message = id + ": " + e.what();
    } catch (const RecordRejected& e) {
        out.message = id + ": rejected (" + e.what() + ")";
    }
    return out;
}

} // namespace

std::vector<ScreenRecord> ingest_directory(const std::filesystem::path& dir, const IngestOptions& opts,
                                           IngestReport& report) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::size_t workers = opts.workers > 0 ? std::size_t(opts.workers) : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, std::max<std::size_t>(files.size(), 1));
    std::vector<ScreenOutcome> outcomes(files.size());
    std::vector<std::future<void>> jobs;
    for (std::size_t w = 0; w < workers; ++w) {
        jobs.push_back(std::async(std::launch::async, [&, w] {
            for (std::size_t i = w; i < files.size(); i += workers) outcomes[i] = ingest_one(files[i], opts);
        }));
    }
    for (auto& j : jobs) j.get();

    std::vector<ScreenRecord> records;
    for (auto& o : outcomes) {
        report.dropped_nodes += o.dropped;
        report.degenerate += o.degenerate;
        if (!o.message.empty()) report.messages.push_back(o.message);
        if (o.record) {
            ++report.screens_ok;
            records.push_back(std::move(*o.record));
        } else {
            ++report.screens_rejected;
        }
    }
    if (opts.strict && report.warnings() > 0)
        throw std::runtime_error("strict ingest: " + std::to_string(report.warnings()) + " warning(s); first: " +
                                 report.messages.front());
    return records;
}

} // namespace forge
