#include "forge/curriculum.hpp"

#include "forge/jsonl.hpp"

#include <algorithm>
#include <unordered_map>

namespace forge {

using nlohmann::json;

std::string_view to_string(StageLabel s) { return s == StageLabel::foundation ? "foundation" : "advanced"; }

StageLabel stage_of(TaskKind k) {
    return info(k).category == TaskCategory::instruction ? StageLabel::foundation : StageLabel::advanced;
}

json to_json(const TrainingSample& s) {
    return {{"id", s.sample_id},
            {"screen", s.screen_id},
            {"image", s.image},
            {"task", to_string(s.task)},
            {"stage", to_string(s.stage)},
            {"complexity_rank", s.complexity_rank},
            {"reinforced", s.reinforced},
            {"prefix_turns", s.prefix_turns},
            {"conversations", turns_to_json(s.turns)}};
}

namespace {

TrainingSample base_sample(const QAPair& pair) {
    TrainingSample s;
    s.sample_id = pair.pair_id;
    s.screen_id = pair.screen_id;
    s.image = pair.image;
    s.task = pair.task;
    s.turns = pair.turns;
    s.stage = stage_of(pair.task);
    s.complexity_rank = info(pair.task).complexity_rank;
    return s;
}

bool reinforcement_kind(TaskKind k) { return k == TaskKind::conv_complex || k == TaskKind::conv_4o_long; }

const std::string* last_answer(const std::vector<Turn>& turns) {
    for (auto it = turns.rbegin(); it != turns.rend(); ++it)
        if (it->role == Role::assistant) return &it->text;
    return nullptr;
}

} // namespace

TrainingSample reinforce_sample(const QAPair& pair, const ScreenRecord& screen, const FactsIndex& facts) {
    TrainingSample s = base_sample(pair);
    if (!reinforcement_kind(pair.task)) return s;

    const std::string* answer = last_answer(pair.turns);
    std::vector<std::string> ids;
    if (answer) ids = resolve_mentions(*answer, screen, facts);
    for (const auto& id : ids) {
        const Element* e = screen.find(id);
        const ElementFacts* f = facts.find(id);
        if (!e || !f) continue;
        const auto description = render_template(frozen_templates(TaskKind::description_inst).front(), *e, *f, true);
        if (!description) continue;
        std::vector<Turn> turns{{Role::user, description->first}, {Role::assistant, description->second}};
        if (auto bounds = render_template(frozen_templates(TaskKind::bound_inst).front(), *e, *f, true)) {
            turns.push_back({Role::user, bounds->first});
            turns.push_back({Role::assistant, bounds->second});
        }
        s.prefix_turns = turns.size();
        turns.insert(turns.end(), pair.turns.begin(), pair.turns.end());
        s.turns = std::move(turns);
        s.reinforced = true;
        return s;
    }
    s.reinforcement_skipped = true;
    return s;
}

std::optional<std::vector<Turn>> freeze_exchange(const QAPair& pair, const ScreenRecord& screen, const FactsIndex& facts) {
    if (pair.turns.size() != 2) return std::nullopt;
    if (matches_frozen_question(pair.task, pair.turns[0].text)) return pair.turns;
    const bool coords = info(pair.task).mode == TaskMode::text_only;
    for (const auto& id : resolve_mentions(pair.turns[1].text, screen, facts)) {
        const Element* e = screen.find(id);
        const ElementFacts* f = facts.find(id);
        if (!e || !f) continue;
        for (const auto& t : frozen_templates(pair.task))
            if (auto r = render_template(t, *e, *f, coords))
                return std::vector<Turn>{{Role::user, r->first}, {Role::assistant, r->second}};
    }
    return std::nullopt;
}

json PackStats::to_json() const {
    return {{"input", input},
            {"packed", packed},
            {"excluded_by_review", excluded_by_review},
            {"unknown_kind", unknown_kind},
            {"malformed", malformed},
            {"missing_screen", missing_screen},
            {"retemplated", retemplated},
            {"template_rejected", template_rejected},
            {"reinforced", reinforced},
            {"reinforcement_skipped", reinforcement_skipped}};
}

PackResult pack_stages(const std::vector<json>& corpus_lines, const std::vector<ScreenRecord>& screens,
                       const PackOptions& opts) {
    PackResult out;
    auto& st = out.stats;
    std::unordered_map<std::string, const ScreenRecord*> by_id;
    for (const auto& s : screens) by_id.emplace(s.screen_id, &s);
    std::unordered_map<std::string, FactsIndex> facts_cache;
    FactsOptions fo;
    fo.compute_relations = false;
    auto facts_for = [&](const ScreenRecord& s) -> const FactsIndex& {
        auto it = facts_cache.find(s.screen_id);
        if (it == facts_cache.end()) it = facts_cache.emplace(s.screen_id, build_facts_from_disk(s, fo)).first;
        return it->second;
    };

    for (const auto& line : corpus_lines) {
        ++st.input;
        if (!line.is_object() || !line.contains("task") || !line["task"].is_string()) {
            ++st.malformed;
            continue;
        }
        if (!task_from_string(line["task"].get<std::string>())) {
            ++st.unknown_kind;
            continue;
        }
        QAPair pair;
        try {
            pair = qa_pair_from_json(line);
        } catch (const std::exception&) {
            ++st.malformed;
            continue;
        }
        if (!well_formed(pair)) {
            ++st.malformed;
            continue;
        }
        bool keep = pair.review == ReviewState::accepted || pair.review == ReviewState::edited;
        if (pair.review == ReviewState::pending && opts.include_pending)
            keep = !opts.pending_requires_lint || (pair.lint && pair.lint->pass);
        if (!keep) {
            ++st.excluded_by_review;
            continue;
        }

        auto sit = by_id.find(pair.screen_id);
        const ScreenRecord* screen = sit == by_id.end() ? nullptr : sit->second;
        if (!screen) ++st.missing_screen;

        if (stage_of(pair.task) == StageLabel::foundation) {
            std::optional<std::vector<Turn>> frozen;
            if (matches_frozen_question(pair.task, pair.turns[0].text)) frozen = pair.turns;
            else if (screen) {
                frozen = freeze_exchange(pair, *screen, facts_for(*screen));
                if (frozen) ++st.retemplated;
            }
            if (!frozen) {
                ++st.template_rejected;
                continue;
            }
            TrainingSample s = base_sample(pair);
            s.turns = std::move(*frozen);
            out.foundation.push_back(std::move(s));
        } else {
            TrainingSample s = base_sample(pair);
            if (reinforcement_kind(pair.task)) {
                if (screen) s = reinforce_sample(pair, *screen, facts_for(*screen));
                else s.reinforcement_skipped = true;
                if (s.reinforced) ++st.reinforced;
                if (s.reinforcement_skipped) ++st.reinforcement_skipped;
            }
            out.advanced.push_back(std::move(s));
        }
        ++st.packed;
    }

    auto order = [](const TrainingSample& a, const TrainingSample& b) {
        if (a.complexity_rank != b.complexity_rank) return a.complexity_rank < b.complexity_rank;
        return a.sample_id < b.sample_id;
    };
    std::sort(out.foundation.begin(), out.foundation.end(), order);
    std::sort(out.advanced.begin(), out.advanced.end(), order);
    return out;
}

namespace {

void apply_overrides(StageHyperparameters& h, const json& j, const std::string& stage) {
    if (!j.is_object()) return;
    for (const auto& [key, value] : j.items()) {
        if (key == "learning_rate") h.learning_rate = value.get<double>();
        else if (key == "batch_size") h.batch_size = value.get<int>();
        else if (key == "trained_components") h.trained_components = value.get<std::string>();
        else if (key == "hardware") h.hardware = value.get<std::string>();
        else if (key == "expected_wall_time") h.expected_wall_time = value.get<std::string>();
        else throw std::invalid_argument("unknown manifest override: " + stage + "." + key);
    }
}

json stage_record(const char* stage, const char* name, const char* file, long long count, const StageHyperparameters& h) {
    return {{"stage", stage},
            {"name", name},
            {"file", file},
            {"data_size", count},
            {"trained_components", h.trained_components},
            {"learning_rate", h.learning_rate},
            {"batch_size", h.batch_size},
            {"hardware", h.hardware},
            {"expected_wall_time", h.expected_wall_time}};
}

json recorded_overrides(const ManifestConfig& cfg) {
    const ManifestConfig defaults;
    json out = json::object();
    auto diff = [&](const StageHyperparameters& a, const StageHyperparameters& d, const char* stage) {
        if (a.learning_rate != d.learning_rate) out[stage]["learning_rate"] = a.learning_rate;
        if (a.batch_size != d.batch_size) out[stage]["batch_size"] = a.batch_size;
        if (a.trained_components != d.trained_components) out[stage]["trained_components"] = a.trained_components;
        if (a.hardware != d.hardware) out[stage]["hardware"] = a.hardware;
        if (a.expected_wall_time != d.expected_wall_time) out[stage]["expected_wall_time"] = a.expected_wall_time;
    };
    diff(cfg.stage1, defaults.stage1, "stage1");
    diff(cfg.stage2, defaults.stage2, "stage2");
    return out;
}

} // namespace

ManifestConfig manifest_config_from_json(const json& j) {
    ManifestConfig cfg;
    if (j.contains("stage1")) apply_overrides(cfg.stage1, j["stage1"], "stage1");
    if (j.contains("stage2")) apply_overrides(cfg.stage2, j["stage2"], "stage2");
    return cfg;
}

json emit_training_manifest(long long stage1_count, long long stage2_count, const ManifestConfig& cfg) {
    json m;
    m["stages"] = json::array({stage_record("stage1", "foundation", "stage1.jsonl", stage1_count, cfg.stage1),
                               stage_record("stage2", "advanced", "stage2.jsonl", stage2_count, cfg.stage2)});
    // Values differing from the default training recipe.
    m["overrides"] = recorded_overrides(cfg);
    json warnings = json::array();
    if (stage1_count == 0) warnings.push_back("stage1 is empty");
    if (stage2_count == 0) warnings.push_back("stage2 is empty");
    m["warning"] = !warnings.empty();
    m["warnings"] = warnings;
    return m;
}

json write_stages(const std::filesystem::path& out_dir, const PackResult& packed, const ManifestConfig& cfg) {
    std::filesystem::create_directories(out_dir);
    auto lines = [](const std::vector<TrainingSample>& v) {
        std::vector<json> out;
        out.reserve(v.size());
        for (const auto& s : v) out.push_back(to_json(s));
        return out;
    };
    write_jsonl_atomic(out_dir / "stage1.jsonl", lines(packed.foundation));
    write_jsonl_atomic(out_dir / "stage2.jsonl", lines(packed.advanced));
    json manifest = emit_training_manifest(static_cast<long long>(packed.foundation.size()),
                                           static_cast<long long>(packed.advanced.size()), cfg);
    manifest["pack"] = packed.stats.to_json();
    write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

} // namespace forge
