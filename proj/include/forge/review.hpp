#pragma once

#include "forge/ingest.hpp"
#include "forge/referent.hpp"
#include "forge/taskgen.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace forge {

enum class Decision { accept, reject, edit };
std::string_view to_string(Decision d);
Decision decision_from_string(std::string_view s);

struct ReviewVerdict {
    std::string pair_id;
    Decision decision = Decision::accept;
    std::optional<std::vector<Turn>> edited_turns; // required iff decision is edit
    std::string reviewer;
    std::string timestamp; // ISO-8601 UTC, filled on submit when empty
    long long seq = 0;     // position in the verdict log, assigned on submit
};

nlohmann::json to_json(const ReviewVerdict& v);
ReviewVerdict verdict_from_json(const nlohmann::json& j);

struct UnknownPair : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InvalidVerdict : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Applies verdicts in order (latest per pair wins) and returns accepted and edited pairs in corpus order,
/// with edited turns substituted. Verdicts for unknown pairs are ignored.
std::vector<QAPair> apply_verdicts(const std::vector<QAPair>& corpus, const std::vector<ReviewVerdict>& log);

struct ReviewStats {
    long long pending = 0;
    long long accepted = 0;
    long long edited = 0;
    long long rejected = 0;
    long long linted = 0;
    long long lint_pass = 0;
    nlohmann::json to_json() const;
};

struct PendingItem {
    QAPair pair;
    const ScreenRecord* screen = nullptr; // null when the screen is not loaded
    FactsIndex facts;
};

/// Corpus plus append-only verdict log. Verdicts are fsynced before submit() returns.
class ReviewStore {
public:
    ReviewStore(std::vector<QAPair> corpus, std::vector<ScreenRecord> screens, std::filesystem::path log_path);

    std::optional<PendingItem> next_pending(std::optional<TaskKind> filter = std::nullopt) const;
    ReviewVerdict submit(ReviewVerdict v);
    std::vector<QAPair> export_corpus() const;
    ReviewStats stats() const;

    /// Rewrites the log to the live verdict per pair; the full previous log is appended to `<log>.history`.
    void compact();

    const ScreenRecord* screen(std::string_view screen_id) const;
    std::vector<ReviewVerdict> log() const;
    long long replayed_lines() const { return replayed_; }
    bool torn_tail_dropped() const { return torn_tail_; }

private:
    void replay();
    void apply(const ReviewVerdict& v);

    std::vector<QAPair> corpus_;
    std::vector<ScreenRecord> screens_;
    std::unordered_map<std::string, std::size_t> pair_index_;
    std::unordered_map<std::string, std::size_t> screen_index_;
    std::filesystem::path log_path_;

    mutable std::shared_mutex mu_;
    std::vector<ReviewVerdict> log_;
    std::vector<std::optional<std::size_t>> live_; // per pair: index into log_
    long long next_seq_ = 1;
    long long replayed_ = 0;
    bool torn_tail_ = false;
    std::mutex write_mu_;
};

} // namespace forge
