#pragma once

#include "forge/taskgen.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace forge {

enum class StageLabel { foundation, advanced };
std::string_view to_string(StageLabel s);
StageLabel stage_of(TaskKind k);

struct TrainingSample {
    std::string sample_id;
    std::string screen_id;
    std::string image;
    TaskKind task = TaskKind::description_inst;
    std::vector<Turn> turns;
    StageLabel stage = StageLabel::foundation;
    int complexity_rank = 0;
    bool reinforced = false;
    bool reinforcement_skipped = false; // eligible kind, but no resolvable element to reinforce
    std::size_t prefix_turns = 0;       // leading turns added by reinforcement
};

nlohmann::json to_json(const TrainingSample& s);

/// Prefixes complex conversations with a templated description and bounds exchange about the element the final
/// answer references. Other kinds are returned unchanged.
TrainingSample reinforce_sample(const QAPair& pair, const ScreenRecord& screen, const FactsIndex& facts);

/// Keeps a foundation pair whose question follows its kind's frozen template; otherwise re-renders the exchange from
/// the template for the element the answer references. nullopt when neither is possible.
std::optional<std::vector<Turn>> freeze_exchange(const QAPair& pair, const ScreenRecord& screen, const FactsIndex& facts);

struct PackOptions {
    bool include_pending = false;         // also pack pending pairs
    bool pending_requires_lint = true;    // ... but only those whose stored lint verdict passed
};

struct PackStats {
    long long input = 0;
    long long packed = 0;
    long long excluded_by_review = 0;
    long long unknown_kind = 0;
    long long malformed = 0;
    long long missing_screen = 0;
    long long retemplated = 0;
    long long template_rejected = 0;
    long long reinforced = 0;
    long long reinforcement_skipped = 0;
    nlohmann::json to_json() const;
};

struct PackResult {
    std::vector<TrainingSample> foundation;
    std::vector<TrainingSample> advanced;
    PackStats stats;
};

/// Splits corpus lines into the two stages, each sorted by (complexity rank, sample id).
PackResult pack_stages(const std::vector<nlohmann::json>& corpus_lines, const std::vector<ScreenRecord>& screens,
                       const PackOptions& opts = {});

struct StageHyperparameters {
    double learning_rate = 2e-6;
    int batch_size = 16;
    std::string trained_components = "Connector & LLM";
    std::string hardware = "1xA100 80G";
    std::string expected_wall_time = "16h";
};

struct ManifestConfig {
    StageHyperparameters stage1{2e-6, 16};
    StageHyperparameters stage2{2e-6, 32};
};

/// Reads optional overrides {"stage1": {...}, "stage2": {...}} with keys learning_rate, batch_size,
/// trained_components, hardware, expected_wall_time.
ManifestConfig manifest_config_from_json(const nlohmann::json& j);

nlohmann::json emit_training_manifest(long long stage1_count, long long stage2_count, const ManifestConfig& cfg = {});

/// Writes stage1.jsonl, stage2.jsonl and manifest.json atomically; returns the manifest.
nlohmann::json write_stages(const std::filesystem::path& out_dir, const PackResult& packed,
                            const ManifestConfig& cfg = {});

} // namespace forge
