#include "forge/guibench.hpp"

#include "forge/jsonl.hpp"
#include "forge/taskgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <regex>
#include <thread>

namespace forge {

using nlohmann::json;

json to_json(const BenchItem& b) {
    return {{"item_id", b.item_id},
            {"screen_id", b.screen_id},
            {"image", b.image},
            {"question", b.question},
            {"reference_answer", b.reference_answer}};
}

BenchItem bench_item_from_json(const json& j) {
    return {j.at("item_id").get<std::string>(), j.at("screen_id").get<std::string>(), j.value("image", ""),
            j.at("question").get<std::string>(), j.at("reference_answer").get<std::string>()};
}

std::vector<BenchItem> read_bench(const std::filesystem::path& jsonl) {
    std::vector<BenchItem> out;
    for (const auto& j : read_jsonl(jsonl)) out.push_back(bench_item_from_json(j));
    return out;
}

void write_bench(const std::filesystem::path& jsonl, const std::vector<BenchItem>& items) {
    std::vector<json> lines;
    for (const auto& b : items) lines.push_back(to_json(b));
    write_jsonl_atomic(jsonl, lines);
}

std::vector<CuratedQuestion> read_curated_questions(const std::filesystem::path& jsonl) {
    std::vector<CuratedQuestion> out;
    for (const auto& j : read_jsonl(jsonl))
        out.push_back({j.at("screen_id").get<std::string>(), j.at("question").get<std::string>(),
                       j.at("reference_answer").get<std::string>()});
    return out;
}

std::set<std::string> training_screen_ids(const std::vector<std::filesystem::path>& stage_files) {
    std::set<std::string> ids;
    for (const auto& f : stage_files)
        for (const auto& j : read_jsonl(f))
            if (auto it = j.find("screen"); it != j.end() && it->is_string()) ids.insert(it->get<std::string>());
    return ids;
}

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

constexpr std::string_view kBenchSystem =
    "You write evaluation questions about a mobile app screen that can only be answered by looking at the screen. "
    "Each reference answer must ground the element it mentions with its relative position and its exact normalized "
    "coordinates (<x,y> or <x1,y1,x2,y2>). Respond only with a JSON array of objects with the keys \"question\" and "
    "\"answer\".";

GenerationRequest bench_prompt(const ScreenRecord& screen, std::size_t questions, int attempt) {
    const FactsIndex facts = build_facts_from_disk(screen, FactsOptions{{}, {}, false});
    GenerationRequest req;
    req.tag = "bench";
    req.temperature = 0.7;
    req.system_text = std::string(kBenchSystem);
    std::string u = "task: bench\nscreen: " + screen.screen_id + "\npairs: " + std::to_string(questions) + "\n";
    if (attempt > 0) u += "regeneration: " + std::to_string(attempt) + "\n";
    u += "template: How can I {function} on this screen? => Tap the {target} in the {position}, at {click}.\n";
    u += "template: Where is the {target}? => The {target} is in the {position}, with bounds {bounds}.\n";
    u += "<elements>\n";
    for (const auto& e : screen.elements) {
        if (e.degenerate || (!element_label(e) && !e.click_point)) continue;
        const auto* f = facts.find(e.id);
        PromptElement pe;
        pe.id = e.id;
        pe.class_name = e.class_name;
        pe.target = element_target(e, true);
        if (auto l = element_label(e)) pe.label = *l;
        pe.bounds = bounds_literal(e.bounds);
        if (e.click_point) pe.click = click_literal(*e.click_point);
        pe.shape = f ? std::string(to_string(f->shape)) : "rectangle";
        pe.position = f ? f->position_phrase : position_phrase(e.bounds);
        pe.function = element_function(e);
        u += format_element_line(pe) + "\n";
    }
    u += "</elements>\n";
    req.user_text = std::move(u);
    return req;
}

bool usable_screen(const ScreenRecord& s) {
    return std::any_of(s.elements.begin(), s.elements.end(),
                       [](const Element& e) { return !e.degenerate && (element_label(e) || e.click_point); });
}

} // namespace

std::vector<BenchItem> build_bench(const std::vector<ScreenRecord>& screens, const std::set<std::string>& training_screens,
                                   const BenchBuildOptions& opts, LlmClient* client) {
    if (opts.n_images == 0) return {};
    if (opts.questions_per_image == 0) throw std::invalid_argument("questions_per_image must be >= 1");

    std::map<std::string, std::vector<const CuratedQuestion*>> curated;
    if (opts.curated)
        for (const auto& q : *opts.curated) curated[q.screen_id].push_back(&q);
    else if (!client)
        throw std::invalid_argument("bench questions need a curated file or a backend");

    std::vector<const ScreenRecord*> eligible;
    for (const auto& s : screens) {
        if (training_screens.count(s.screen_id)) continue;
        if (opts.curated) {
            auto it = curated.find(s.screen_id);
            if (it == curated.end() || it->second.size() < opts.questions_per_image) continue;
        } else if (!usable_screen(s)) {
            continue;
        }
        eligible.push_back(&s);
    }
    std::sort(eligible.begin(), eligible.end(),
              [](const ScreenRecord* a, const ScreenRecord* b) { return a->screen_id < b->screen_id; });
    eligible.erase(std::unique(eligible.begin(), eligible.end(),
                               [](const ScreenRecord* a, const ScreenRecord* b) { return a->screen_id == b->screen_id; }),
                   eligible.end());
    if (eligible.size() < opts.n_images) throw InsufficientScreens(opts.n_images, eligible.size());

    std::uint64_t s = opts.seed;
    for (std::size_t i = eligible.size(); i > 1; --i) {
        s = mix(s);
        std::swap(eligible[i - 1], eligible[s % i]);
    }
    eligible.resize(opts.n_images);
    std::sort(eligible.begin(), eligible.end(),
              [](const ScreenRecord* a, const ScreenRecord* b) { return a->screen_id < b->screen_id; });

    std::vector<BenchItem> items;
    for (const auto* screen : eligible) {
        std::vector<std::pair<std::string, std::string>> qa;
        if (opts.curated) {
            for (const auto* q : curated[screen->screen_id]) qa.emplace_back(q->question, q->reference_answer);
        } else {
            for (int attempt = 0; attempt < 3 && qa.size() < opts.questions_per_image; ++attempt) {
                auto ex = parse_exchanges(client->complete(bench_prompt(*screen, opts.questions_per_image, attempt)).text);
                if (!ex) continue;
                for (auto& p : *ex)
                    if (std::none_of(qa.begin(), qa.end(), [&](const auto& o) { return o.first == p.first; }))
                        qa.push_back(std::move(p));
            }
            if (qa.size() < opts.questions_per_image)
                throw std::runtime_error("backend produced only " + std::to_string(qa.size()) + " distinct question(s) for " +
                                         screen->screen_id);
        }
        for (std::size_t k = 0; k < opts.questions_per_image; ++k)
            items.push_back({screen->screen_id + "-q" + std::to_string(k + 1), screen->screen_id, screen->image_path,
                             qa[k].first, qa[k].second});
    }
    return items;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kRubric =
    "You are grading an assistant's answer to a question about a mobile app screen against a reference answer. "
    "Score from 0 to 100 considering: whether the answer identifies the correct element, whether its grounding "
    "(shape, color, position, relative position) is present and true, and whether the user could act on it. "
    "Respond only with JSON: {\"score\": <0-100>, \"rationale\": \"...\"}.";

GenerationRequest judge_request(const BenchItem& item, const std::string& candidate, int run_index, bool strict) {
    GenerationRequest req;
    req.tag = "judge";
    req.temperature = 0.0;
    req.max_output_tokens = 400;
    req.system_text = std::string(kRubric);
    std::string u = "run: " + std::to_string(run_index) + "\n";
    if (strict) u += "format: reply with the JSON object only\n";
    u += "<question>\n" + item.question + "\n</question>\n";
    u += "<reference>\n" + item.reference_answer + "\n</reference>\n";
    u += "<candidate>\n" + candidate + "\n</candidate>\n";
    req.user_text = std::move(u);
    return req;
}

} // namespace

std::optional<double> parse_judge_score(const std::string& reply) {
    std::optional<double> score;
    const auto a = reply.find('{');
    const auto b = reply.rfind('}');
    if (a != std::string::npos && b != std::string::npos && b > a) {
        try {
            const auto j = json::parse(reply.substr(a, b - a + 1));
            if (j.is_object() && j.contains("score") && j["score"].is_number()) score = j["score"].get<double>();
        } catch (const json::parse_error&) {
        }
    }
    if (!score) {
        static const std::regex re(R"(score\W{0,3}\s*[:=]?\s*(-?\d+(?:\.\d+)?))", std::regex::icase);
        std::smatch m;
        if (std::regex_search(reply, m, re)) score = std::stod(m[1].str());
    }
    if (score && (!std::isfinite(*score) || *score < 0 || *score > 100)) return std::nullopt;
    return score;
}

JudgeVerdict judge(const BenchItem& item, const std::string& candidate, LlmClient& client, int run_index) {
    JudgeVerdict v;
    v.item_id = item.item_id;
    v.run_index = run_index;
    for (int attempt = 0; attempt < 2; ++attempt) {
        const auto c = client.complete(judge_request(item, candidate, run_index, attempt > 0));
        if (auto s = parse_judge_score(c.text)) {
            v.score = s;
            try {
                const auto a = c.text.find('{'), b = c.text.rfind('}');
                v.rationale = json::parse(c.text.substr(a, b - a + 1)).value("rationale", "");
            } catch (const std::exception&) {
                v.rationale = c.text;
            }
            return v;
        }
        v.rationale = c.text;
    }
    return v;
}

double round_half_even_2(double x) {
    const double v = x * 100.0;
    const double f = std::floor(v);
    const double diff = v - f;
    double r;
    if (std::fabs(diff - 0.5) <= 1e-9 * std::max(1.0, std::fabs(v)))
        r = std::fmod(f, 2.0) == 0.0 ? f : f + 1.0;
    else
        r = std::round(v);
    return r / 100.0;
}

double aggregate_runs(const std::array<double, 3>& run_means) {
    return round_half_even_2((run_means[0] + run_means[1] + run_means[2]) / 3.0);
}

std::map<std::string, std::string> read_answers(const std::filesystem::path& jsonl) {
    std::map<std::string, std::string> out;
    for (const auto& j : read_jsonl(jsonl)) out[j.at("item_id").get<std::string>()] = j.at("answer").get<std::string>();
    return out;
}

json BenchReport::to_json() const {
    json runs = json::array();
    for (int r = 0; r < 3; ++r) runs.push_back({{"run", r + 1}, {"mean", run_means[r]}, {"scored", scored[r]}});
    json items = json::array();
    for (std::size_t i = 0; i < item_ids.size(); ++i) {
        json scores = json::array();
        for (const auto& s : item_scores[i]) scores.push_back(s ? json(*s) : json(nullptr));
        json it = {{"item_id", item_ids[i]}, {"scores", scores}};
        if (auto f = item_failures.find(item_ids[i]); f != item_failures.end()) it["failure"] = f->second;
        items.push_back(std::move(it));
    }
    json j = {{"judge", judge},
              {"runs", runs},
              {"average", average},
              {"rounding", "mean of per-run means (each rounded to 2 decimals), rounded half-to-even to 2 decimals"},
              {"items", items},
              {"failure_categories",
               {{"ungrounded", failures.ungrounded},
                {"text_over_reliance", failures.text_over_reliance},
                {"word_to_image_coincidence", failures.word_to_image_coincidence}}},
              {"notes", notes}};
    if (training_disjoint)
        j["training_disjointness"] = {{"pass", *training_disjoint}, {"overlapping_screens", training_overlap}};
    return j;
}

BenchReport run_and_aggregate(const std::vector<BenchItem>& bench, const std::map<std::string, std::string>& answers,
                              LlmClient& client, const RunOptions& opts) {
    BenchReport rep;
    rep.judge = client.backend().name();
    const std::size_t n = bench.size();
    rep.item_ids.reserve(n);
    for (const auto& b : bench) rep.item_ids.push_back(b.item_id);
    rep.item_scores.assign(n, {});

    std::vector<std::string> candidates(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto it = answers.find(bench[i].item_id);
        if (it != answers.end()) candidates[i] = it->second;
        else rep.notes.push_back(bench[i].item_id + ": no answer supplied, scored as empty");
    }

    // All judge calls first so a backend failure leaves no partial report.
    const std::size_t jobs = n * 3;
    const std::size_t workers =
        std::min<std::size_t>(jobs, static_cast<std::size_t>(opts.workers > 0 ? opts.workers : client.config().max_inflight));
    std::vector<JudgeVerdict> verdicts(jobs);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::max<std::size_t>(workers, 1) && jobs > 0; ++w)
        pool.emplace_back([&] {
            for (std::size_t k = next++; k < jobs; k = next++) {
                try {
                    verdicts[k] = judge(bench[k % n], candidates[k % n], client, static_cast<int>(k / n) + 1);
                } catch (...) {
                    std::lock_guard lk(failure_mu);
                    if (!failure) failure = std::current_exception();
                    next = jobs;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    for (int r = 0; r < 3; ++r) {
        double sum = 0;
        long long count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& v = verdicts[static_cast<std::size_t>(r) * n + i];
            rep.item_scores[i][r] = v.score;
            if (v.score) {
                sum += *v.score;
                ++count;
            } else {
                rep.notes.push_back(bench[i].item_id + ": run " + std::to_string(r + 1) +
                                    " judge output unparseable, excluded from the mean");
            }
        }
        rep.scored[r] = count;
        rep.run_means[r] = count ? round_half_even_2(sum / double(count)) : 0.0;
    }
    rep.average = aggregate_runs(rep.run_means);

    if (opts.screens) {
        std::map<std::string, const ScreenRecord*> by_id;
        for (const auto& s : *opts.screens) by_id[s.screen_id] = &s;
        std::map<std::string, FactsIndex> facts;
        for (std::size_t i = 0; i < n; ++i) {
            auto it = by_id.find(bench[i].screen_id);
            if (it == by_id.end()) continue;
            const auto& screen = *it->second;
            auto fit = facts.find(screen.screen_id);
            if (fit == facts.end()) fit = facts.emplace(screen.screen_id, build_facts_from_disk(screen)).first;
            const auto cand = lint_answer(candidates[i], screen, fit->second, bench[i].item_id);
            const auto ref_ids = resolve_mentions(bench[i].reference_answer, screen, fit->second);
            std::string category;
            if (cand.mentions_element && !cand.pass) {
                category = "ungrounded";
                ++rep.failures.ungrounded;
            } else if (cand.mentioned_ids.empty() && !ref_ids.empty()) {
                category = "text_over_reliance";
                ++rep.failures.text_over_reliance;
            } else if (!cand.mentioned_ids.empty() && !ref_ids.empty() &&
                       std::none_of(cand.mentioned_ids.begin(), cand.mentioned_ids.end(), [&](const std::string& id) {
                           return std::find(ref_ids.begin(), ref_ids.end(), id) != ref_ids.end();
                       })) {
                category = "word_to_image_coincidence";
                ++rep.failures.word_to_image_coincidence;
            }
            if (!category.empty()) rep.item_failures[bench[i].item_id] = category;
        }
    }
    if (opts.training_screens) {
        std::set<std::string> overlap;
        for (const auto& b : bench)
            if (opts.training_screens->count(b.screen_id)) overlap.insert(b.screen_id);
        rep.training_overlap.assign(overlap.begin(), overlap.end());
        rep.training_disjoint = overlap.empty();
    }
    return rep;
}

} // namespace forge
