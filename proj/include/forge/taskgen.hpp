#pragma once

#include "forge/ingest.hpp"
#include "forge/llm.hpp"
#include "forge/referent.hpp"

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

enum class TaskKind {
    description_inst,
    bound_inst,
    function_inst,
    testing_inst,
    function_inst_4o,
    conv_simple,
    conv_complex,
    conv_4o_long,
    conv_4o_short,
    conv_4o_miss,
};

inline constexpr std::size_t kTaskKindCount = 10;

enum class TaskMode { text_only, image_based };
enum class TaskCategory { instruction, conversation };

struct TaskInfo {
    TaskKind kind;
    std::string_view name;
    TaskMode mode;
    TaskCategory category;
    std::string_view generator; // generator family the kind was designed for
    int weight;                 // itemized dataset count, in hundreds of samples
    int complexity_rank;        // ordering key within the kind's training stage
};

const std::array<TaskInfo, kTaskKindCount>& task_table();
const TaskInfo& info(TaskKind k);
std::string_view to_string(TaskKind k);
std::optional<TaskKind> task_from_string(std::string_view s);

struct CompositionPlan {
    long long total = 0;
    std::array<long long, kTaskKindCount> quotas{};

    long long quota(TaskKind k) const { return quotas[static_cast<std::size_t>(k)]; }
};

/// Largest-remainder apportionment of `total` over the itemized per-kind weights.
CompositionPlan plan_composition(long long total);

// ---- QA pairs ----

enum class Role { user, assistant };

struct Turn {
    Role role;
    std::string text;
    friend bool operator==(const Turn&, const Turn&) = default;
};

enum class ReviewState { pending, accepted, edited, rejected };
std::string_view to_string(ReviewState s);
ReviewState review_state_from_string(std::string_view s);

struct QAPair {
    std::string pair_id;
    std::string screen_id;
    std::string image;
    TaskKind task = TaskKind::description_inst;
    std::vector<Turn> turns;
    std::string generator;
    std::optional<LintVerdict> lint;
    ReviewState review = ReviewState::pending;
};

/// Turns alternate starting with the user; instruction pairs have exactly two.
bool well_formed(const QAPair& p);

nlohmann::json to_json(const QAPair& p);
QAPair qa_pair_from_json(const nlohmann::json& j);
nlohmann::json turns_to_json(const std::vector<Turn>& turns);
std::vector<Turn> turns_from_json(const nlohmann::json& j);

std::vector<QAPair> read_corpus(const std::filesystem::path& jsonl);
void write_corpus(const std::filesystem::path& jsonl, const std::vector<QAPair>& pairs);

// ---- prompts ----

/// Fixed question/answer formats of an instruction kind; empty for conversation kinds.
struct FrozenTemplate {
    std::string_view question;
    std::string_view answer;
};
const std::vector<FrozenTemplate>& frozen_templates(TaskKind k);

/// How prompts and answers name an element, e.g. 'Login' button.
std::string element_target(const Element& e, bool allow_coordinates);
std::string element_function(const Element& e);
std::string_view class_noun(std::string_view class_name);

/// Fills a frozen template for one element; nullopt when a placeholder has no value for it.
std::optional<std::pair<std::string, std::string>> render_template(const FrozenTemplate& t, const Element& e,
                                                                   const ElementFacts& f, bool allow_coordinates);

/// True when `question` is an instance of one of the kind's frozen question templates.
bool matches_frozen_question(TaskKind k, std::string_view question);

struct MissingInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PromptOptions {
    int pairs = 3;
    std::size_t max_elements = 60;
    double temperature = 0.7;
    int max_output_tokens = 1500;
};

GenerationRequest build_prompt(const ScreenRecord& screen, const FactsIndex& facts, TaskKind task,
                               const PromptOptions& opts = {});

/// Lenient parse of a backend reply into (question, answer) exchanges; nullopt when not a JSON array of such objects.
std::optional<std::vector<std::pair<std::string, std::string>>> parse_exchanges(const std::string& reply);

// ---- generation ----

struct GenerationOptions {
    std::uint64_t seed = 0;
    int max_pairs_per_screen = 3; // per kind
    int retry_limit = 2;          // regenerations after a failed parse
    int workers = 0;              // 0 = backend max_inflight
};

struct KindReport {
    long long quota = 0;
    long long produced = 0;
    long long parse_failures = 0;
    long long dropped = 0;
    long long backend_errors = 0;
    long long missing_input = 0;
    long long shortfall() const { return quota - produced; }
};

struct GenerationReport {
    std::map<TaskKind, KindReport> kinds;
    long long lint_pass = 0;
    long long lint_total = 0;
    std::vector<std::string> messages;
    nlohmann::json to_json() const;
};

std::vector<QAPair> generate_corpus(const std::vector<ScreenRecord>& screens, const CompositionPlan& plan,
                                    LlmClient& client, const GenerationOptions& opts, GenerationReport& report);

/// Combined verdict over every assistant turn of a pair.
LintVerdict lint_pair(const QAPair& pair, const ScreenRecord& screen, const FactsIndex& facts);

} // namespace forge
