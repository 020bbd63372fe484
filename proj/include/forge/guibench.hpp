#pragma once

#include "forge/ingest.hpp"
#include "forge/llm.hpp"
#include "forge/referent.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace forge {

struct BenchItem {
    std::string item_id;
    std::string screen_id;
    std::string image;
    std::string question;
    std::string reference_answer;
    friend bool operator==(const BenchItem&, const BenchItem&) = default;
};

nlohmann::json to_json(const BenchItem& b);
BenchItem bench_item_from_json(const nlohmann::json& j);
std::vector<BenchItem> read_bench(const std::filesystem::path& jsonl);
void write_bench(const std::filesystem::path& jsonl, const std::vector<BenchItem>& items);

struct InsufficientScreens : std::runtime_error {
    InsufficientScreens(std::size_t needed, std::size_t available)
        : std::runtime_error("bench needs " + std::to_string(needed) + " screens disjoint from training data, only " +
                             std::to_string(available) + " available (short by " + std::to_string(needed - available) +
                             ")"),
          needed(needed), available(available) {}
    std::size_t needed;
    std::size_t available;
};

/// Curated question: {"screen_id", "question", "reference_answer"} per line.
struct CuratedQuestion {
    std::string screen_id;
    std::string question;
    std::string reference_answer;
};
std::vector<CuratedQuestion> read_curated_questions(const std::filesystem::path& jsonl);

struct BenchBuildOptions {
    std::size_t n_images = 22;
    std::size_t questions_per_image = 2;
    std::uint64_t seed = 0;
    std::optional<std::vector<CuratedQuestion>> curated;
};

/// Samples screens outside the training set and attaches curated or backend-synthesized questions.
std::vector<BenchItem> build_bench(const std::vector<ScreenRecord>& screens, const std::set<std::string>& training_screens,
                                   const BenchBuildOptions& opts, LlmClient* client);

/// Screen ids referenced by training stage files.
std::set<std::string> training_screen_ids(const std::vector<std::filesystem::path>& stage_files);

struct JudgeVerdict {
    std::string item_id;
    int run_index = 1;
    std::optional<double> score; // missing when the judge output could not be parsed
    std::string rationale;
};

/// Scores one candidate answer. Backend failures propagate.
JudgeVerdict judge(const BenchItem& item, const std::string& candidate, LlmClient& client, int run_index);

/// Extracts a 0-100 score from a judge reply.
std::optional<double> parse_judge_score(const std::string& reply);

/// Rounds half-to-even at two decimals; values within 1e-9 of a tie count as ties.
double round_half_even_2(double x);

/// Overall average of per-run means.
double aggregate_runs(const std::array<double, 3>& run_means);

struct FailureTally {
    long long ungrounded = 0;
    long long text_over_reliance = 0;
    long long word_to_image_coincidence = 0;
};

struct BenchReport {
    std::string judge;
    std::array<double, 3> run_means{};
    std::array<long long, 3> scored{};
    double average = 0;
    std::vector<std::string> item_ids;
    std::vector<std::array<std::optional<double>, 3>> item_scores;
    std::map<std::string, std::string> item_failures; // item id -> category
    FailureTally failures;
    std::optional<bool> training_disjoint;
    std::vector<std::string> training_overlap;
    std::vector<std::string> notes;
    nlohmann::json to_json() const;
};

struct RunOptions {
    int workers = 0; // 0 = backend max_inflight
    const std::vector<ScreenRecord>* screens = nullptr;          // enables failure categories
    const std::set<std::string>* training_screens = nullptr;     // enables the disjointness check
};

/// Three judge runs over every item; missing answers are scored as empty.
BenchReport run_and_aggregate(const std::vector<BenchItem>& bench, const std::map<std::string, std::string>& answers,
                              LlmClient& client, const RunOptions& opts = {});

std::map<std::string, std::string> read_answers(const std::filesystem::path& jsonl);

} // namespace forge
