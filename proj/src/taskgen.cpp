#include "forge/taskgen.hpp"

#include "forge/jsonl.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <regex>
#include <thread>

namespace forge {

using nlohmann::json;

const std::array<TaskInfo, kTaskKindCount>& task_table() {
    using M = TaskMode;
    using C = TaskCategory;
    static const std::array<TaskInfo, kTaskKindCount> table{{
        {TaskKind::description_inst, "description_inst", M::text_only, C::instruction, "gpt-4", 30, 0},
        {TaskKind::bound_inst, "bound_inst", M::text_only, C::instruction, "gpt-4", 43, 1},
        {TaskKind::function_inst, "function_inst", M::text_only, C::instruction, "gpt-4", 20, 2},
        {TaskKind::testing_inst, "testing_inst", M::text_only, C::instruction, "gpt-4", 50, 3},
        {TaskKind::function_inst_4o, "function_inst_4o", M::image_based, C::instruction, "gpt-4o", 80, 2},
        {TaskKind::conv_simple, "conv_simple", M::text_only, C::conversation, "gpt-4", 54, 0},
        {TaskKind::conv_complex, "conv_complex", M::text_only, C::conversation, "gpt-4", 110, 1},
        {TaskKind::conv_4o_long, "conv_4o_long", M::image_based, C::conversation, "gpt-4o", 100, 2},
        {TaskKind::conv_4o_short, "conv_4o_short", M::image_based, C::conversation, "gpt-4o", 100, 2},
        {TaskKind::conv_4o_miss, "conv_4o_miss", M::image_based, C::conversation, "gpt-4o", 50, 2},
    }};
    return table;
}

const TaskInfo& info(TaskKind k) { return task_table()[static_cast<std::size_t>(k)]; }
std::string_view to_string(TaskKind k) { return info(k).name; }

std::optional<TaskKind> task_from_string(std::string_view s) {
    for (const auto& t : task_table())
        if (t.name == s) return t.kind;
    return std::nullopt;
}

CompositionPlan plan_composition(long long total) {
    if (total < 0) throw std::invalid_argument("total must be >= 0");
    const auto& table = task_table();
    long long weight_sum = 0;
    for (const auto& t : table) weight_sum += t.weight;

    CompositionPlan plan;
    plan.total = total;
    std::array<long long, kTaskKindCount> remainder{};
    long long assigned = 0;
    for (std::size_t i = 0; i < table.size(); ++i) {
        const long long scaled = total * table[i].weight;
        plan.quotas[i] = scaled / weight_sum;
        remainder[i] = scaled % weight_sum;
        assigned += plan.quotas[i];
    }
    std::array<std::size_t, kTaskKindCount> order{};
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (long long k = 0; k < total - assigned; ++k) ++plan.quotas[order[static_cast<std::size_t>(k)]];
    return plan;
}

std::string_view to_string(ReviewState s) {
    switch (s) {
    case ReviewState::pending: return "pending";
    case ReviewState::accepted: return "accepted";
    case ReviewState::edited: return "edited";
    case ReviewState::rejected: return "rejected";
    }
    return "?";
}

ReviewState review_state_from_string(std::string_view s) {
    if (s == "accepted") return ReviewState::accepted;
    if (s == "edited") return ReviewState::edited;
    if (s == "rejected") return ReviewState::rejected;
    if (s == "pending") return ReviewState::pending;
    throw std::invalid_argument("unknown review state: " + std::string(s));
}

bool well_formed(const QAPair& p) {
    if (p.turns.empty() || p.turns.size() % 2 != 0) return false;
    for (std::size_t i = 0; i < p.turns.size(); ++i)
        if (p.turns[i].role != (i % 2 == 0 ? Role::user : Role::assistant)) return false;
    if (info(p.task).category == TaskCategory::instruction && p.turns.size() != 2) return false;
    return true;
}

json turns_to_json(const std::vector<Turn>& turns) {
    json arr = json::array();
    for (const auto& t : turns) arr.push_back({{"from", t.role == Role::user ? "human" : "gpt"}, {"value", t.text}});
    return arr;
}

std::vector<Turn> turns_from_json(const json& j) {
    std::vector<Turn> out;
    for (const auto& t : j) {
        const auto from = t.at("from").get<std::string>();
        Role r;
        if (from == "human" || from == "user") r = Role::user;
        else if (from == "gpt" || from == "assistant") r = Role::assistant;
        else throw std::invalid_argument("unknown turn role: " + from);
        out.push_back({r, t.at("value").get<std::string>()});
    }
    return out;
}

json to_json(const QAPair& p) {
    json j = {{"id", p.pair_id},
              {"screen", p.screen_id},
              {"image", p.image},
              {"task", to_string(p.task)},
              {"conversations", turns_to_json(p.turns)},
              {"generator", p.generator},
              {"review", to_string(p.review)}};
    if (p.lint) j["lint"] = to_json(*p.lint);
    return j;
}

QAPair qa_pair_from_json(const json& j) {
    QAPair p;
    p.pair_id = j.at("id").get<std::string>();
    p.screen_id = j.value("screen", "");
    p.image = j.value("image", "");
    const auto task = j.at("task").get<std::string>();
    auto k = task_from_string(task);
    if (!k) throw std::invalid_argument("unknown task kind: " + task);
    p.task = *k;
    p.turns = turns_from_json(j.at("conversations"));
    p.generator = j.value("generator", "");
    p.review = review_state_from_string(j.value("review", std::string("pending")));
    if (auto it = j.find("lint"); it != j.end() && it->is_object()) p.lint = lint_verdict_from_json(*it);
    return p;
}

std::vector<QAPair> read_corpus(const std::filesystem::path& jsonl) {
    std::vector<QAPair> out;
    for (const auto& j : read_jsonl(jsonl)) out.push_back(qa_pair_from_json(j));
    return out;
}

void write_corpus(const std::filesystem::path& jsonl, const std::vector<QAPair>& pairs) {
    std::vector<json> lines;
    lines.reserve(pairs.size());
    for (const auto& p : pairs) lines.push_back(to_json(p));
    write_jsonl_atomic(jsonl, lines);
}

// ---------------------------------------------------------------------------

const std::vector<FrozenTemplate>& frozen_templates(TaskKind k) {
    static const std::vector<FrozenTemplate> none;
    static const std::vector<FrozenTemplate> description{
        {"Describe the {target}.", "The {target} is a {shape} in the {position}, with bounds {bounds}."}};
    static const std::vector<FrozenTemplate> bounds{
        {"What are the bounds of the {target}?", "The {target} bounds are {bounds}."},
        {"Where should I tap to use the {target}?", "Tap the {target} at {click}."}};
    static const std::vector<FrozenTemplate> function{
        {"What is the function of the {target}?", "The {target} in the {position} lets you {function}."}};
    static const std::vector<FrozenTemplate> testing{
        {"How can I verify that the {target} works?",
         "Tap the {target} at {click} and verify that the app responds by letting you {function}."}};
    static const std::vector<FrozenTemplate> function_4o{
        {"What does the {target} do?", "The {color} {shape} {target} in the {position} lets you {function}."}};
    switch (k) {
    case TaskKind::description_inst: return description;
    case TaskKind::bound_inst: return bounds;
    case TaskKind::function_inst: return function;
    case TaskKind::testing_inst: return testing;
    case TaskKind::function_inst_4o: return function_4o;
    default: return none;
    }
}

std::string_view class_noun(std::string_view cls) {
    const auto dot = cls.rfind('.');
    const auto simple = dot == std::string_view::npos ? cls : cls.substr(dot + 1);
    auto has = [&](std::string_view s) { return simple.find(s) != std::string_view::npos; };
    if (has("EditText") || has("SearchView")) return "text field";
    if (has("CheckBox")) return "checkbox";
    if (has("Switch") || has("Toggle")) return "switch";
    if (has("Button")) return "button";
    if (has("Tab")) return "tab";
    if (has("ImageView")) return "image";
    if (has("TextView")) return "text";
    return "element";
}

std::string element_target(const Element& e, bool allow_coordinates) {
    if (auto label = element_label(e)) {
        std::string l = *label;
        std::replace(l.begin(), l.end(), '\'', '`');
        std::replace(l.begin(), l.end(), '"', '`');
        std::replace(l.begin(), l.end(), '\n', ' ');
        if (l.size() > 60) l = l.substr(0, 60);
        return "'" + l + "' " + std::string(class_noun(e.class_name));
    }
    if (!allow_coordinates) return {};
    return std::string(class_noun(e.class_name)) + " at " +
           (e.click_point ? click_literal(*e.click_point) : bounds_literal(e.bounds));
}

std::string element_function(const Element& e) {
    const auto noun = class_noun(e.class_name);
    const auto label = element_label(e);
    const std::string quoted = label ? "'" + *label + "'" : std::string();
    if (noun == "text field") return "enter text";
    if (noun == "checkbox" || noun == "switch") return label ? "toggle " + quoted : "toggle a setting";
    if (e.click_point) return label ? "open " + quoted : "trigger this action";
    if (noun == "image") return "see the picture";
    return label ? "read " + quoted : "see this part of the page";
}

std::optional<std::pair<std::string, std::string>> render_template(const FrozenTemplate& t, const Element& e,
                                                                   const ElementFacts& f, bool allow_coordinates) {
    PromptElement pe;
    pe.target = element_target(e, allow_coordinates);
    if (pe.target.empty()) return std::nullopt;
    pe.bounds = f.bounds_literal;
    if (f.click_literal) pe.click = *f.click_literal;
    pe.shape = std::string(to_string(f.shape));
    pe.colors = f.color_names;
    pe.position = f.position_phrase;
    pe.function = element_function(e);
    const std::string all = std::string(t.question) + std::string(t.answer);
    if (all.find("{click}") != std::string::npos && pe.click.empty()) return std::nullopt;
    // A target already named by its coordinates would repeat them.
    const bool coords = all.find("{bounds}") != std::string::npos || all.find("{click}") != std::string::npos;
    if (coords && pe.target.find('<') != std::string::npos) return std::nullopt;
    if (all.find("{color}") != std::string::npos && pe.colors.empty()) return std::nullopt;
    return std::make_pair(fill_template(std::string(t.question), pe), fill_template(std::string(t.answer), pe));
}

bool matches_frozen_question(TaskKind k, std::string_view question) {
    for (const auto& t : frozen_templates(k)) {
        std::string pattern;
        const std::string q(t.question);
        for (std::size_t i = 0; i < q.size();) {
            if (q[i] == '{') {
                const auto close = q.find('}', i);
                pattern += ".+";
                i = close + 1;
                continue;
            }
            if (std::string_view("\\^$.|?*+()[]{}").find(q[i]) != std::string_view::npos) pattern += '\\';
            pattern += q[i++];
        }
        if (std::regex_match(question.begin(), question.end(), std::regex(pattern))) return true;
    }
    return false;
}

namespace {

std::string_view kind_instructions(TaskKind k) {
    switch (k) {
    case TaskKind::description_inst:
        return "Describe individual elements: what each one is and where it is placed on the page. Use the templates exactly.";
    case TaskKind::bound_inst:
        return "Ask where an element is and answer with its bounds or its click coordinate. Use the templates exactly.";
    case TaskKind::function_inst:
        return "Ask what an element is for; take its position relative to other elements into account. Use the templates exactly.";
    case TaskKind::testing_inst:
        return "Write GUI-testing directives over clickable elements: how to verify that tapping the element navigates to or "
               "enables the expected behaviour. Use the templates exactly.";
    case TaskKind::function_inst_4o:
        return "Look at the screenshot and ask what a visible element does. Use the templates exactly.";
    case TaskKind::conv_simple:
        return "Write a short conversation (one or two exchanges) between a user and an assistant about this screen.";
    case TaskKind::conv_complex:
        return "Write a conversation of two or more exchanges with complex, multi-step questions that need several elements "
               "of the screen to answer.";
    case TaskKind::conv_4o_long:
        return "Look at the screenshot and write a long conversation (three or more exchanges) about the visible elements.";
    case TaskKind::conv_4o_short:
        return "Look at the screenshot and write a single question and a short answer about a visible element.";
    case TaskKind::conv_4o_miss:
        return "Look at the screenshot. Ask about a function that is NOT present on this screen, and answer with a grounded "
               "denial that says what the page is for instead, in the style \"it doesn't appear to have a login function\".";
    }
    return "";
}

constexpr std::string_view kSystemText =
    "You write question/answer training data for a model that must understand mobile app screens.\n"
    "Every answer that mentions a screen element must ground it with at least one referent:\n"
    "- Shape: e.g. a rectangular button with rounded corners.\n"
    "- Color: e.g. a blue button with white text.\n"
    "- Position: exact normalized coordinates written as <x,y> for a point or <x1,y1,x2,y2> for bounds, each in [0,1].\n"
    "- Relative position: where the element is relative to other elements or to the page, e.g. below the text input field.\n"
    "Never mention elements that are not on the screen.\n"
    "Respond only with a JSON array of objects with the keys \"question\" and \"answer\".";

} // namespace

GenerationRequest build_prompt(const ScreenRecord& screen, const FactsIndex& facts, TaskKind task,
                               const PromptOptions& opts) {
    const auto& ti = info(task);
    const bool image_based = ti.mode == TaskMode::image_based;
    GenerationRequest req;
    req.tag = std::string(ti.name);
    req.temperature = opts.temperature;
    req.max_output_tokens = opts.max_output_tokens;
    req.system_text = std::string(kSystemText);

    if (image_based) {
        std::error_code ec;
        if (screen.image_path.empty() || !std::filesystem::exists(screen.image_path, ec))
            throw MissingInput("screenshot missing for image-based task " + std::string(ti.name) + " on screen " +
                               screen.screen_id);
        req.image = ImageAttachment{screen.image_path, base64_encode(read_file_bytes(screen.image_path)), "image/jpeg"};
    }

    std::string u;
    u += "task: " + std::string(ti.name) + "\n";
    u += std::string("mode: ") + (image_based ? "image_based" : "text_only") + "\n";
    u += "screen: " + screen.screen_id + "\n";
    u += "pairs: " + std::to_string(ti.category == TaskCategory::instruction ? opts.pairs : 1) + "\n";
    u += "instructions: " + std::string(kind_instructions(task)) + "\n";
    if (image_based)
        u += "instructions: Reference the relative positions, shapes, and colors of the visual elements rather than exact "
             "coordinates.\n";
    for (const auto& t : frozen_templates(task))
        u += "template: " + std::string(t.question) + " => " + std::string(t.answer) + "\n";

    u += image_based ? "<visual-hints>\n" : "<elements>\n";
    std::size_t listed = 0;
    for (const auto& e : screen.elements) {
        if (listed >= opts.max_elements) break;
        if (e.degenerate) continue;
        if (!element_label(e) && !e.click_point) continue;
        const auto* f = facts.find(e.id);
        PromptElement pe;
        pe.id = e.id;
        pe.class_name = e.class_name;
        pe.target = element_target(e, !image_based);
        if (auto l = element_label(e)) pe.label = *l;
        if (!image_based) {
            pe.bounds = bounds_literal(e.bounds);
            if (e.click_point) pe.click = click_literal(*e.click_point);
        }
        pe.shape = f ? std::string(to_string(f->shape)) : "rectangle";
        if (f && image_based) pe.colors = f->color_names;
        pe.position = f ? f->position_phrase : position_phrase(e.bounds);
        pe.function = element_function(e);
        u += format_element_line(pe) + "\n";
        ++listed;
    }
    u += image_based ? "</visual-hints>\n" : "</elements>\n";
    req.user_text = std::move(u);
    return req;
}

std::optional<std::vector<std::pair<std::string, std::string>>> parse_exchanges(const std::string& reply) {
    const auto a = reply.find('[');
    const auto b = reply.rfind(']');
    if (a == std::string::npos || b == std::string::npos || b < a) return std::nullopt;
    json arr;
    try {
        arr = json::parse(reply.substr(a, b - a + 1));
    } catch (const json::parse_error&) {
        return std::nullopt;
    }
    if (!arr.is_array() || arr.empty()) return std::nullopt;
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& o : arr) {
        if (!o.is_object() || !o.contains("question") || !o.contains("answer")) return std::nullopt;
        if (!o["question"].is_string() || !o["answer"].is_string()) return std::nullopt;
        auto q = o["question"].get<std::string>(), an = o["answer"].get<std::string>();
        if (q.empty() || an.empty()) return std::nullopt;
        out.emplace_back(std::move(q), std::move(an));
    }
    return out;
}

LintVerdict lint_pair(const QAPair& pair, const ScreenRecord& screen, const FactsIndex& facts) {
    LintVerdict combined;
    combined.answer_id = pair.pair_id;
    for (std::size_t i = 0; i < pair.turns.size(); ++i) {
        if (pair.turns[i].role != Role::assistant) continue;
        auto v = lint_answer(pair.turns[i].text, screen, facts, pair.pair_id);
        combined.mentions_element = combined.mentions_element || v.mentions_element;
        combined.referents_found.insert(v.referents_found.begin(), v.referents_found.end());
        for (auto& id : v.mentioned_ids)
            if (std::find(combined.mentioned_ids.begin(), combined.mentioned_ids.end(), id) == combined.mentioned_ids.end())
                combined.mentioned_ids.push_back(id);
        if (!v.pass && combined.pass) {
            combined.pass = false;
            combined.failure_kind = v.failure_kind;
        }
    }
    return combined;
}

json GenerationReport::to_json() const {
    json kinds_json = json::object();
    long long quota = 0, produced = 0;
    for (const auto& [k, r] : kinds) {
        kinds_json[std::string(forge::to_string(k))] = {{"quota", r.quota},
                                                        {"produced", r.produced},
                                                        {"shortfall", r.shortfall()},
                                                        {"parse_failures", r.parse_failures},
                                                        {"dropped", r.dropped},
                                                        {"backend_errors", r.backend_errors},
                                                        {"missing_input", r.missing_input}};
        quota += r.quota;
        produced += r.produced;
    }
    return {{"quota", quota},
            {"produced", produced},
            {"shortfall", quota - produced},
            {"kinds", kinds_json},
            {"lint_pass_rate", lint_total ? double(lint_pass) / double(lint_total) : 1.0},
            {"messages", messages}};
}

namespace {

struct Job {
    std::size_t screen;
    int pairs;
};

struct JobResult {
    std::vector<std::pair<std::string, std::string>> exchanges;
    std::string generator;
    int parse_failures = 0;
    bool dropped = false;
    bool backend_error = false;
    bool missing_input = false;
    std::string message;
};

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
    std::uint64_t s = seed;
    for (std::size_t i = v.size(); i > 1; --i) {
        s = mix(s);
        std::swap(v[i - 1], v[s % i]);
    }
}

// Interleaves apps so consecutive picks come from different packages where possible.
std::vector<std::size_t> stratified_order(const std::vector<ScreenRecord>& screens, const std::vector<std::size_t>& eligible,
                                          std::uint64_t seed) {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (auto i : eligible) groups[screens[i].app_package.value_or("")].push_back(i);
    std::vector<std::vector<std::size_t>> lists;
    std::uint64_t g = 0;
    for (auto& [pkg, members] : groups) {
        seeded_shuffle(members, mix(seed ^ fnv1a(pkg)) + g++);
        lists.push_back(std::move(members));
    }
    seeded_shuffle(lists, mix(seed + 17));
    std::vector<std::size_t> out;
    for (std::size_t round = 0; out.size() < eligible.size(); ++round)
        for (auto& l : lists)
            if (round < l.size()) out.push_back(l[round]);
    return out;
}

JobResult run_job(const ScreenRecord& screen, const FactsIndex& facts, TaskKind task, int pairs, LlmClient& client,
                  const GenerationOptions& opts) {
    JobResult r;
    GenerationRequest base;
    try {
        PromptOptions po;
        po.pairs = pairs;
        base = build_prompt(screen, facts, task, po);
    } catch (const MissingInput& e) {
        r.missing_input = true;
        r.message = e.what();
        return r;
    } catch (const ImageError& e) {
        r.missing_input = true;
        r.message = e.what();
        return r;
    }
    for (int attempt = 0; attempt <= opts.retry_limit; ++attempt) {
        GenerationRequest req = base;
        if (attempt > 0) req.user_text += "regeneration: " + std::to_string(attempt) + "\n";
        try {
            Completion c = client.complete(req);
            r.generator = c.backend;
            auto ex = parse_exchanges(c.text);
            if (!ex) {
                GenerationRequest reformat;
                reformat.tag = "reformat";
                reformat.system_text = "Convert the text into a JSON array of objects with keys \"question\" and \"answer\". "
                                       "Output only the JSON.";
                reformat.user_text = c.text;
                reformat.temperature = 0.0;
                ex = parse_exchanges(client.complete(reformat).text);
            }
            if (!ex) {
                ++r.parse_failures;
                continue;
            }
            r.exchanges = std::move(*ex);
            return r;
        } catch (const std::exception& e) { // RoutingError, BackendError, RetriesExhausted
            r.backend_error = true;
            r.message = screen.screen_id + ": " + e.what();
            return r;
        }
    }
    r.dropped = true;
    r.message = screen.screen_id + ": unparseable output after " + std::to_string(opts.retry_limit + 1) + " attempt(s)";
    return r;
}

} // namespace

std::vector<QAPair> generate_corpus(const std::vector<ScreenRecord>& screens, const CompositionPlan& plan,
                                    LlmClient& client, const GenerationOptions& opts, GenerationReport& report) {
    const std::size_t workers =
        static_cast<std::size_t>(opts.workers > 0 ? opts.workers : std::max(1, client.config().max_inflight));

    // Facts without relations are enough for prompts; lint computes relations itself.
    std::vector<FactsIndex> facts(screens.size());
    std::vector<char> has_image(screens.size(), 0);
    {
        FactsOptions fo;
        fo.compute_relations = false;
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < std::min(workers, std::max<std::size_t>(screens.size(), 1)); ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < screens.size(); i = next++) {
                    std::error_code ec;
                    has_image[i] = !screens[i].image_path.empty() && std::filesystem::exists(screens[i].image_path, ec);
                    facts[i] = build_facts_from_disk(screens[i], fo);
                }
            });
        for (auto& t : pool) t.join();
    }

    std::vector<QAPair> corpus;
    for (const auto& ti : task_table()) {
        KindReport& kr = report.kinds[ti.kind];
        kr.quota = plan.quota(ti.kind);
        if (kr.quota == 0) continue;
        const bool instruction = ti.category == TaskCategory::instruction;

        std::vector<std::size_t> eligible;
        for (std::size_t i = 0; i < screens.size(); ++i) {
            if (ti.mode == TaskMode::image_based && !has_image[i]) {
                ++kr.missing_input;
                continue;
            }
            eligible.push_back(i);
        }
        const auto order = stratified_order(screens, eligible, mix(opts.seed ^ fnv1a(ti.name)));
        std::vector<std::size_t> visits;
        const int cycles = instruction ? 1 : opts.max_pairs_per_screen;
        for (int c = 0; c < cycles; ++c) visits.insert(visits.end(), order.begin(), order.end());

        std::size_t cursor = 0;
        long long seq = 0;
        while (kr.produced < kr.quota && cursor < visits.size()) {
            std::vector<Job> batch;
            long long planned = 0;
            while (kr.produced + planned < kr.quota && cursor < visits.size()) {
                const int n = instruction ? static_cast<int>(std::min<long long>(opts.max_pairs_per_screen,
                                                                                  kr.quota - kr.produced - planned))
                                          : 1;
                batch.push_back({visits[cursor++], n});
                planned += n;
            }
            std::vector<JobResult> results(batch.size());
            std::atomic<std::size_t> next{0};
            std::vector<std::thread> pool;
            for (std::size_t w = 0; w < std::min(workers, batch.size()); ++w)
                pool.emplace_back([&] {
                    for (std::size_t i = next++; i < batch.size(); i = next++)
                        results[i] = run_job(screens[batch[i].screen], facts[batch[i].screen], ti.kind, batch[i].pairs,
                                             client, opts);
                });
            for (auto& t : pool) t.join();

            for (std::size_t i = 0; i < batch.size(); ++i) {
                auto& r = results[i];
                const auto& screen = screens[batch[i].screen];
                kr.parse_failures += r.parse_failures;
                if (r.dropped) ++kr.dropped;
                if (r.backend_error) ++kr.backend_errors;
                if (r.missing_input) ++kr.missing_input;
                if (!r.message.empty()) report.messages.push_back(std::string(ti.name) + ": " + r.message);
                if (r.exchanges.empty()) continue;

                auto make_pair = [&](std::vector<Turn> turns) {
                    QAPair p;
                    char id[64];
                    std::snprintf(id, sizeof id, "%s-%06lld", std::string(ti.name).c_str(), seq++);
                    p.pair_id = id;
                    p.screen_id = screen.screen_id;
                    p.image = screen.image_path;
                    p.task = ti.kind;
                    p.turns = std::move(turns);
                    p.generator = r.generator;
                    p.lint = lint_pair(p, screen, facts[batch[i].screen]);
                    ++report.lint_total;
                    if (p.lint->pass) ++report.lint_pass;
                    corpus.push_back(std::move(p));
                    ++kr.produced;
                };
                if (instruction) {
                    const auto take = std::min<std::size_t>(r.exchanges.size(), static_cast<std::size_t>(batch[i].pairs));
                    for (std::size_t k = 0; k < take && kr.produced < kr.quota; ++k)
                        make_pair({{Role::user, r.exchanges[k].first}, {Role::assistant, r.exchanges[k].second}});
                } else if (kr.produced < kr.quota) {
                    std::vector<Turn> turns;
                    for (auto& [q, a] : r.exchanges) {
                        turns.push_back({Role::user, q});
                        turns.push_back({Role::assistant, a});
                    }
                    make_pair(std::move(turns));
                }
            }
        }
        if (kr.shortfall() > 0)
            report.messages.push_back(std::string(ti.name) + ": shortfall of " + std::to_string(kr.shortfall()));
    }
    return corpus;
}

} // namespace forge
