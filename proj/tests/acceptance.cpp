// One PASS/FAIL line per acceptance criterion.

#include "forge/attnstat.hpp"
#include "forge/curriculum.hpp"
#include "forge/guibench.hpp"
#include "forge/jsonl.hpp"
#include "forge/review.hpp"

#include "fixtures.hpp"
#include "support.hpp"

#include <chrono>
#include <csignal>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

using namespace forge;
using namespace forge::testing;
using nlohmann::json;

namespace {

/// Collects failed checks for one criterion.
struct Criterion {
    std::vector<std::string> failures;
    std::vector<std::string> facts;

    void check(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
    void note(const std::string& s) { facts.push_back(s); }
};

int run_criterion(const std::string& name, const std::function<void(Criterion&)>& body) {
    Criterion c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(c);
    } catch (const std::exception& e) {
        c.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream line;
    line << (c.failures.empty() ? "PASS" : "FAIL") << "  " << name << "  (";
    for (const auto& f : c.facts) line << f << "; ";
    char t[32];
    std::snprintf(t, sizeof t, "%.2fs", secs);
    line << t << ")";
    std::cout << line.str() << "\n";
    for (std::size_t i = 0; i < c.failures.size() && i < 10; ++i) std::cout << "      - " << c.failures[i] << "\n";
    if (c.failures.size() > 10) std::cout << "      - ... " << c.failures.size() - 10 << " more\n";
    std::cout.flush();
    return c.failures.empty() ? 0 : 1;
}

std::string fmt(double v, int decimals = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

// ---- preprocessing ----

/// Paths of nodes the preprocessing rules keep: usable bounds, no invisible ancestor-or-self, not inverted after clamping.
void kept_paths(const json& node, const std::string& path, bool dropped, int W, int H, std::set<std::string>& kept,
                std::set<std::string>& hidden) {
    if (!node.contains("bounds") || !node["bounds"].is_array() || node["bounds"].size() != 4) return;
    const bool invisible = node.contains("visible-to-user") && node["visible-to-user"] == false;
    const auto& b = node["bounds"];
    const int x1 = std::clamp(b[0].get<int>(), 0, W), y1 = std::clamp(b[1].get<int>(), 0, H);
    const int x2 = std::clamp(b[2].get<int>(), 0, W), y2 = std::clamp(b[3].get<int>(), 0, H);
    const bool here_dropped = dropped || invisible || x1 > x2 || y1 > y2;
    if (dropped || invisible) hidden.insert(path);
    if (!here_dropped) kept.insert(path);
    int i = 0;
    for (const auto& c : node.value("children", json::array())) kept_paths(c, path + "." + std::to_string(i++), here_dropped, W, H, kept, hidden);
}

void preprocessing(Criterion& c) {
    std::mt19937_64 rng(20240601);
    const int W = 1440, H = 2560;
    int screens = 0, elements = 0, rejected = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (int n = 0; n < 1200; ++n) {
        const json doc = fuzz_hierarchy(rng, W, H);
        std::set<std::string> kept, hidden;
        kept_paths(doc["activity"]["root"], "0", false, W, H, kept, hidden);
        ScreenRecord rec;
        try {
            rec = preprocess(parse_screen(doc.dump(), "", {W, H}), "fuzz" + std::to_string(n));
        } catch (const RecordRejected&) {
            ++rejected;
            c.check(kept.empty(), "screen " + std::to_string(n) + " rejected but the oracle keeps nodes");
            continue;
        }
        ++screens;
        std::set<std::string> got;
        for (const auto& e : rec.elements) {
            ++elements;
            got.insert(e.path);
            const auto& b = e.bounds;
            c.check(0 <= b.x1 && b.x1 <= b.x2 && b.x2 <= 1 && 0 <= b.y1 && b.y1 <= b.y2 && b.y2 <= 1,
                    "bounds out of order or range at " + e.path);
            if (e.click_point)
                c.check(e.click_point->x == (b.x1 + b.x2) / 2 && e.click_point->y == (b.y1 + b.y2) / 2,
                        "click point is not the exact midpoint at " + e.path);
            c.check(!hidden.count(e.path), "invisible-subtree element survived: " + e.path);
        }
        c.check(got == kept, "surviving set differs from the tree-walk oracle on screen " + std::to_string(n));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.check(screens + rejected >= 1000, "fewer than 1000 hierarchies");
    c.check(secs < 10.0, "runtime " + fmt(secs) + "s >= 10s");
    c.note(std::to_string(screens + rejected) + " hierarchies, " + std::to_string(elements) + " elements, " +
           std::to_string(rejected) + " rejected, " + fmt(secs) + "s");
}

// ---- relations ----

void relations(Criterion& c) {
    std::mt19937_64 rng(77);
    int mismatches = 0, dual_failures = 0, containment_failures = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto a = random_lattice_rect(rng), b = random_lattice_rect(rng);
        const auto ab = relate(lattice_bounds(a), lattice_bounds(b));
        const auto ba = relate(lattice_bounds(b), lattice_bounds(a));
        if (ab != lattice_oracle(a, b, 0.01 * 64)) ++mismatches;
        std::set<RelationKind> flipped;
        for (auto k : ba) flipped.insert(dual(k));
        if (flipped != ab) ++dual_failures;
        if (ab.count(RelationKind::overlaps) && (ab.count(RelationKind::contains) || ab.count(RelationKind::inside)))
            ++containment_failures;
    }
    c.check(mismatches == 0, std::to_string(mismatches) + " oracle mismatches");
    c.check(dual_failures == 0, std::to_string(dual_failures) + " duality failures");
    c.check(containment_failures == 0, "overlaps reported alongside containment");
    c.note("10000 pairs, " + std::to_string(mismatches) + " mismatches, " + std::to_string(dual_failures) + " duality failures");
}

// ---- composition ----

void composition(Criterion& c) {
    const std::vector<long long> expected{3000, 4300, 2000, 5000, 8000, 5400, 11000, 10000, 10000, 5000};
    const auto plan = plan_composition(63700);
    for (std::size_t i = 0; i < kTaskKindCount; ++i)
        c.check(plan.quotas[i] == expected[i], std::string(task_table()[i].name) + " quota " + std::to_string(plan.quotas[i]));
    std::vector<long long> w;
    for (const auto& t : task_table()) w.push_back(t.weight);
    std::mt19937_64 rng(5);
    for (int n = 0; n < 200; ++n) {
        const long long total = static_cast<long long>(rng() % 1'000'000);
        const auto p = plan_composition(total);
        const auto o = apportion_oracle(total, w);
        long long sum = 0;
        for (std::size_t i = 0; i < kTaskKindCount; ++i) {
            sum += p.quotas[i];
            c.check(p.quotas[i] == o[i], "oracle mismatch at total " + std::to_string(total));
            c.check(std::abs(double(p.quotas[i]) - double(total) * double(w[i]) / 637.0) < 1.0,
                    "quota off by >= 1 at total " + std::to_string(total));
        }
        c.check(sum == total, "quotas do not sum to " + std::to_string(total));
    }
    c.note("63700 -> expected counts; 200 random totals checked");
}

// ---- curriculum ----

std::vector<QAPair> mock_corpus(const std::filesystem::path& dir, std::size_t screens, long long total, std::uint64_t seed,
                                std::vector<ScreenRecord>& out_screens, GenerationReport& report) {
    out_screens = synth_corpus(dir, screens, seed);
    auto cfg = resolve_backend({}, "mock");
    LlmClient client(make_backend(cfg), cfg);
    GenerationOptions opts;
    opts.seed = seed;
    return generate_corpus(out_screens, plan_composition(total), client, opts, report);
}

void curriculum(Criterion& c) {
    for (auto [total, n_screens] : {std::pair<long long, std::size_t>{637, 40}, {1000, 60}}) {
        TempDir dir;
        std::vector<ScreenRecord> screens;
        GenerationReport rep;
        auto pairs = mock_corpus(dir.path(), n_screens, total, 13, screens, rep);
        c.check(static_cast<long long>(pairs.size()) == total, "generation shortfall at " + std::to_string(total));
        std::vector<json> lines;
        for (auto p : pairs) {
            p.review = ReviewState::accepted;
            lines.push_back(to_json(p));
        }
        auto packed = pack_stages(lines, screens);
        TempDir out;
        write_stages(out.path(), packed);
        const auto s1 = read_jsonl(out / "stage1.jsonl"), s2 = read_jsonl(out / "stage2.jsonl");
        const double n = double(s1.size() + s2.size());
        const double e1 = n * 22.3 / 63.7, e2 = n * 41.4 / 63.7;
        c.check(std::abs(double(s1.size()) - e1) <= 1.0, "stage1 " + std::to_string(s1.size()) + " vs " + fmt(e1));
        c.check(std::abs(double(s2.size()) - e2) <= 1.0, "stage2 " + std::to_string(s2.size()) + " vs " + fmt(e2));
        c.note(std::to_string(total) + " pairs -> " + std::to_string(s1.size()) + ":" + std::to_string(s2.size()) +
               " (exact " + fmt(e1) + ":" + fmt(e2) + ")");

        for (const auto* stage : {&s1, &s2})
            for (std::size_t i = 1; i < stage->size(); ++i)
                c.check((*stage)[i - 1]["complexity_rank"].get<int>() <= (*stage)[i]["complexity_rank"].get<int>(),
                        "complexity rank decreases");

        std::map<std::string, const ScreenRecord*> by_id;
        for (const auto& s : screens) by_id[s.screen_id] = &s;
        long long reinforced = 0, prefix_turns = 0;
        for (const auto& line : s2) {
            if (!line["reinforced"].get<bool>()) continue;
            ++reinforced;
            const auto& screen = *by_id.at(line["screen"].get<std::string>());
            const auto facts = build_facts_from_disk(screen);
            const auto& conv = line["conversations"];
            for (std::size_t t = 0; t < line["prefix_turns"].get<std::size_t>(); ++t) {
                if (conv[t]["from"] != "gpt") continue;
                ++prefix_turns;
                c.check(lint_answer(conv[t]["value"].get<std::string>(), screen, facts).pass,
                        "reinforcement prefix fails lint in " + line["id"].get<std::string>());
            }
        }
        c.check(reinforced > 0, "no reinforced samples");
        c.note(std::to_string(reinforced) + " reinforced samples, " + std::to_string(prefix_turns) + " prefix answers linted");
    }
}

// ---- lint ----

void lint_fixtures(Criterion& c) {
    auto expect = [&](const std::string& answer, const ScreenRecord& s, const Image* img, bool pass) {
        const auto v = lint_answer(answer, s, build_facts(s, img));
        c.check(v.pass == pass, std::string(pass ? "should pass: " : "should fail: ") + answer);
    };
    const auto like = like_screen();
    const auto [draw, draw_img] = draw_screen();
    const auto score = score_screen();
    const auto cam = camera_screen();
    expect("You can click the heart-shaped icon located on the right side of the screen, just below the person's image.",
           like, nullptr, true);
    expect("Open the video you want to like. Look for a thumbs-up or heart icon, which is usually located near the bottom "
           "of the screen...",
           like, nullptr, false);
    expect("...there should be a heart icon or similar button typically found below the video or in a sidebar.", like,
           nullptr, false);
    expect("Open the website or app of the social media platform you want to log in to. Look for the \"Login\" or "
           "\"Sign In\" button, which is usually located at the top right corner of the page.",
           like, nullptr, false);
    expect("This page seems to be focused on displaying content and interacting with it, but it doesn't appear to have a "
           "login function.",
           like, nullptr, true);
    expect("You can click the blue 'Start' button in the center of the page to begin drawing a picture.", draw, &draw_img, true);
    expect("To start drawing, you can use the Draw app on your device, which is available in the app store.", draw,
           &draw_img, false);
    expect("The click to score is the one that says \"horrible\"", score, nullptr, false);
    expect("To get the score, you should click on the \"Score\" button.", score, nullptr, false);
    expect("To open the camera, tap on the screen at <0.34, 0.7>.", cam, nullptr, true);
    expect("The setting bounds are <0.762, 0.566, 0.922, 0.692>.", cam, nullptr, true);
    c.note("11 fixture answers");

    TempDir dir;
    std::vector<ScreenRecord> screens;
    GenerationReport rep;
    auto pairs = mock_corpus(dir.path(), 40, 500, 21, screens, rep);
    std::map<std::string, const ScreenRecord*> by_id;
    for (const auto& s : screens) by_id[s.screen_id] = &s;
    long long pass = 0;
    for (const auto& p : pairs) {
        const auto& s = *by_id.at(p.screen_id);
        pass += lint_pair(p, s, build_facts_from_disk(s)).pass;
    }
    const double rate = pairs.empty() ? 0 : double(pass) / double(pairs.size());
    c.check(pairs.size() == 500, "mock corpus has " + std::to_string(pairs.size()) + " pairs");
    c.check(rate >= 0.9, "mock lint pass rate " + fmt(rate, 3));
    c.note("mock corpus " + std::to_string(pass) + "/" + std::to_string(pairs.size()) + " pass (" + fmt(rate, 3) + ")");
}

// ---- judge aggregation ----

void judge_aggregation(Criterion& c) {
    auto two = [](double v) { return fmt(v); };
    const auto gpt4v = aggregate_runs({81.82, 81.14, 82.50});
    const auto minicpm = aggregate_runs({63.86, 64.09, 64.32});
    const auto vga = aggregate_runs({90.68, 90.68, 91.17});
    c.check(two(gpt4v) == "81.82" && std::abs(gpt4v - 81.82) < 1e-9, "first row average " + two(gpt4v));
    c.check(two(minicpm) == "64.09" && std::abs(minicpm - 64.09) < 1e-9, "second row average " + two(minicpm));
    c.check(two(vga) == "90.84", "third row average " + two(vga) + ", expected 90.84 under half-to-even");
    c.check(two(aggregate_runs({50, 50, 50})) == "50.00", "constant runs");
    c.note("81.82, 64.09 exact; (90.68, 90.68, 91.17) averages to " + two(vga));
}

// ---- bench ----

void bench_construction(Criterion& c) {
    TempDir dir;
    auto screens = synth_corpus(dir.path(), 36, 8);
    std::set<std::string> training;
    for (std::size_t i = 0; i < screens.size(); i += 3) training.insert(screens[i].screen_id);
    auto cfg = resolve_backend({}, "mock");
    LlmClient client(make_backend(cfg), cfg);
    BenchBuildOptions opts;
    opts.seed = 3;
    const auto bench = build_bench(screens, training, opts, &client);
    std::set<std::string> used;
    for (const auto& b : bench) used.insert(b.screen_id);
    c.check(bench.size() == 44, "bench has " + std::to_string(bench.size()) + " items");
    c.check(used.size() == 22, "bench uses " + std::to_string(used.size()) + " screens");
    c.check(build_bench(screens, training, opts, &client) == bench, "rebuild differs");

    std::map<std::string, std::string> answers;
    for (std::size_t i = 0; i < bench.size(); ++i)
        answers[bench[i].item_id] = i % 2 ? bench[i].reference_answer : "Tap the button.";
    auto jcfg = resolve_backend({}, "mock-judge");
    LlmClient judge_client(make_backend(jcfg), jcfg);
    RunOptions ro;
    ro.screens = &screens;
    ro.training_screens = &training;
    const auto rep = run_and_aggregate(bench, answers, judge_client, ro);
    c.check(rep.training_disjoint && *rep.training_disjoint, "training disjointness check failed");
    c.check(rep.run_means[0] == rep.run_means[1] && rep.run_means[1] == rep.run_means[2], "mock judge runs differ");
    for (const auto& s : rep.item_scores) c.check(s[0] == s[1] && s[1] == s[2], "item scores differ across runs");
    const auto again = run_and_aggregate(bench, answers, judge_client, ro);
    c.check(again.to_json() == rep.to_json(), "second scoring differs");
    c.note("44 items on 22 held-out screens; run means " + fmt(rep.run_means[0]) + "/" + fmt(rep.run_means[1]) + "/" +
           fmt(rep.run_means[2]) + ", average " + fmt(rep.average));
}

// ---- attention ----

void attention(Criterion& c) {
    using namespace forge::attn;
    AttentionDump<double> d;
    d.image_indices = {0, 1};
    d.matrix.resize(2, 4);
    d.matrix << 0.1, 0.2, 0.3, 0.4, 0.25, 0.25, 0.25, 0.25;
    const auto s = summarize(d);
    c.check(std::abs(s.totals(0) - 0.3) <= 1e-12 && std::abs(s.totals(1) - 0.5) <= 1e-12, "totals");
    c.check(std::abs(s.means(0) - 0.175) <= 1e-12 && std::abs(s.means(1) - 0.225) <= 1e-12, "means");
    c.check(std::abs(s.grand_mean - 0.4) <= 1e-12, "grand mean");

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0, 1);
    double worst = 0;
    int rejected = 0, corrupted = 0;
    for (int n = 0; n < 100; ++n) {
        const int A = 1 + int(rng() % 16), T = 2 + int(rng() % 64);
        AttentionDump<double> r;
        r.matrix.resize(A, T);
        for (int i = 0; i < A; ++i) {
            for (int j = 0; j < T; ++j) r.matrix(i, j) = u(rng);
            r.matrix.row(i) /= r.matrix.row(i).sum();
        }
        for (int j = 0; j < T; ++j)
            if (u(rng) < 0.5) r.image_indices.push_back(j);
        const auto rs = summarize(r);
        double totals = 0, means = 0;
        for (int i = 0; i < A; ++i)
            for (auto j : r.image_indices) totals += r.matrix(i, j);
        for (auto j : r.image_indices) {
            double m = 0;
            for (int i = 0; i < A; ++i) m += r.matrix(i, j);
            means += m / A;
        }
        worst = std::max({worst, std::abs(means * A - totals), std::abs(rs.grand_mean - totals / A)});

        auto bad = r;
        const int row = int(rng() % std::uint64_t(A));
        bad.matrix(row, int(rng() % std::uint64_t(T))) += 0.01;
        ++corrupted;
        try {
            summarize(bad);
        } catch (const ValidationError& e) {
            if (e.row && *e.row == row) ++rejected;
        }
    }
    c.check(worst <= 1e-9, "identity gap " + std::to_string(worst));
    c.check(rejected == corrupted, std::to_string(corrupted - rejected) + " corrupted dumps not rejected by row");
    char gap[32];
    std::snprintf(gap, sizeof gap, "%.1e", worst);
    c.note("closed form to 1e-12; 100 random dumps, max identity gap " + std::string(gap) + "; " +
           std::to_string(rejected) + "/" + std::to_string(corrupted) + " corrupted rows rejected");
}

// ---- end to end ----

int sh(const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); }

/// Runs the whole offline pipeline in `dir`; returns output file contents by name.
std::map<std::string, std::string> pipeline(const std::filesystem::path& dir, Criterion& c) {
    const std::string cli = FORGE_CLI_PATH;
    const std::string cd = "cd '" + dir.string() + "' && '" + cli + "' ";
    auto step = [&](const std::string& args) {
        const int rc = sh(cd + args);
        c.check(rc == 0, "forge " + args + " exited with " + std::to_string(rc));
        return rc == 0;
    };
    std::map<std::string, std::string> out;
    if (!step("synth --out raw --count 50 --seed 9")) return out;
    if (!step("ingest --in raw --out screens.jsonl --report ingest.json")) return out;
    const auto lines = read_jsonl(dir / "screens.jsonl");
    c.check(lines.size() == 50, "ingested " + std::to_string(lines.size()) + " screens");
    write_jsonl_atomic(dir / "train_screens.jsonl", std::vector<json>(lines.begin(), lines.begin() + 28));
    if (!step("gen --screens train_screens.jsonl --total 400 --backend mock --seed 7 --out corpus.jsonl --report gen.json"))
        return out;
    if (!step("lint --corpus corpus.jsonl --screens screens.jsonl --report lint.json --out linted.jsonl")) return out;
    if (!step("pack --corpus linted.jsonl --screens screens.jsonl --out-dir stages --include-pending")) return out;
    if (!step("bench build --screens screens.jsonl --bench bench.jsonl --stages-dir stages --backend mock --seed 1"))
        return out;
    std::vector<json> answers;
    const auto bench = read_bench(dir / "bench.jsonl");
    for (std::size_t i = 0; i < bench.size(); ++i)
        answers.push_back({{"item_id", bench[i].item_id}, {"answer", i % 3 ? bench[i].reference_answer : "Use the menu."}});
    write_jsonl_atomic(dir / "answers.jsonl", answers);
    if (!step("bench run --bench bench.jsonl --answers answers.jsonl --judge mock-judge --screens screens.jsonl "
              "--stages-dir stages --report bench_report.json"))
        return out;
    for (const char* f : {"screens.jsonl", "ingest.json", "corpus.jsonl", "gen.json", "lint.json", "linted.jsonl",
                          "stages/stage1.jsonl", "stages/stage2.jsonl", "stages/manifest.json", "bench.jsonl",
                          "bench_report.json"})
        out[f] = read_text_file(dir / f);
    return out;
}

void end_to_end(Criterion& c) {
    const auto t0 = std::chrono::steady_clock::now();
    TempDir a, b;
    const auto ra = pipeline(a.path(), c);
    const auto rb = pipeline(b.path(), c);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.check(!ra.empty() && ra.size() == rb.size(), "pipeline incomplete");
    for (const auto& [name, bytes] : ra) {
        auto it = rb.find(name);
        c.check(it != rb.end() && it->second == bytes, name + " differs between runs");
        c.check(!bytes.empty(), name + " is empty");
    }
    c.check(secs < 60.0, "two runs took " + fmt(secs) + "s");
    if (ra.count("stages/manifest.json")) {
        const auto m = json::parse(ra.at("stages/manifest.json"));
        const auto rep = json::parse(ra.at("bench_report.json"));
        const auto gen = json::parse(ra.at("gen.json"));
        c.check(json::parse(ra.at("bench_report.json"))["training_disjointness"]["pass"] == true, "bench overlaps training");
        c.check(read_bench(a / "bench.jsonl").size() == 44, "bench size");
        c.note("stages " + m["stages"][0]["data_size"].dump() + "/" + m["stages"][1]["data_size"].dump() + ", gen " +
               gen["produced"].dump() + " pairs, bench average " + rep["average"].dump());
    }
    c.note(std::to_string(ra.size()) + " outputs byte-identical across two runs, " + fmt(secs) + "s total");
}

// ---- review ----

std::vector<QAPair> review_corpus(std::size_t n) {
    std::vector<QAPair> out;
    for (std::size_t i = 0; i < n; ++i) {
        QAPair p;
        p.pair_id = "conv_simple-" + std::to_string(100000 + i);
        p.screen_id = "s";
        p.task = TaskKind::conv_simple;
        p.turns = {{Role::user, "Q" + std::to_string(i)}, {Role::assistant, "A" + std::to_string(i)}};
        out.push_back(std::move(p));
    }
    return out;
}

void review(Criterion& c) {
    TempDir dir;
    const auto corpus = review_corpus(150);
    std::mt19937_64 rng(8);
    // Oracle state: last decision and text per pair, folded from the submissions themselves.
    std::map<std::string, std::pair<std::string, std::string>> oracle;
    {
        ReviewStore store(corpus, {}, dir / "log.jsonl");
        for (int k = 0; k < 1000; ++k) {
            const auto& p = corpus[rng() % corpus.size()];
            ReviewVerdict v;
            v.pair_id = p.pair_id;
            v.reviewer = "r" + std::to_string(k % 3);
            const int d = int(rng() % 3);
            v.decision = d == 0 ? Decision::accept : d == 1 ? Decision::reject : Decision::edit;
            std::string text = p.turns[1].text;
            if (v.decision == Decision::edit) {
                text = "edited " + std::to_string(k);
                v.edited_turns = std::vector<Turn>{{Role::user, p.turns[0].text}, {Role::assistant, text}};
            }
            store.submit(v);
            oracle[p.pair_id] = {std::string(to_string(v.decision)), text};
        }
    }
    ReviewStore reopened(corpus, {}, dir / "log.jsonl");
    std::vector<std::string> expected, got;
    for (const auto& p : corpus)
        if (auto it = oracle.find(p.pair_id); it != oracle.end() && it->second.first != "reject")
            expected.push_back(p.pair_id + "|" + it->second.second);
    for (const auto& p : reopened.export_corpus()) got.push_back(p.pair_id + "|" + p.turns.back().text);
    c.check(reopened.replayed_lines() == 1000, "replayed " + std::to_string(reopened.replayed_lines()) + " lines");
    c.check(got == expected, "export differs from the replay oracle");
    c.note("1000 verdicts over 150 pairs, export of " + std::to_string(got.size()) + " matches oracle");

    // Crash: a child acknowledges verdicts through a pipe and is killed mid-stream.
    TempDir crash;
    const auto big = review_corpus(600);
    int fds[2];
    if (::pipe(fds) != 0) throw std::runtime_error("pipe failed");
    const pid_t pid = ::fork();
    if (pid < 0) throw std::runtime_error("fork failed");
    if (pid == 0) {
        ::close(fds[0]);
        ReviewStore store(big, {}, crash / "log.jsonl");
        for (const auto& p : big) {
            ReviewVerdict v;
            v.pair_id = p.pair_id;
            v.decision = Decision::accept;
            store.submit(v);
            const char ack = 1;
            if (::write(fds[1], &ack, 1) != 1) ::_exit(2);
        }
        ::_exit(0);
    }
    ::close(fds[1]);
    long long acked = 0;
    char ch;
    while (acked < 200 && ::read(fds[0], &ch, 1) == 1) ++acked;
    ::kill(pid, SIGKILL);
    ::waitpid(pid, nullptr, 0);
    while (::read(fds[0], &ch, 1) == 1) ++acked;
    ::close(fds[0]);
    // Simulate a torn in-flight append on top of the kill.
    {
        std::ofstream f(crash / "log.jsonl", std::ios::app);
        f << R"({"seq":999999,"pair_id":"conv_simple-1)";
    }
    ReviewStore restarted(big, {}, crash / "log.jsonl");
    const auto exported = restarted.export_corpus();
    bool prefix_ok = exported.size() >= std::size_t(acked);
    for (long long i = 0; prefix_ok && i < acked; ++i) prefix_ok = exported[std::size_t(i)].pair_id == big[std::size_t(i)].pair_id;
    c.check(prefix_ok, "acknowledged verdicts lost after restart");
    c.check(restarted.torn_tail_dropped(), "torn tail not detected");
    c.note(std::to_string(acked) + " acknowledged before kill, " + std::to_string(exported.size()) + " recovered");
}

} // namespace

int main() {
    int failed = 0;
    failed += run_criterion("preprocessing invariants on fuzzed hierarchies", preprocessing);
    failed += run_criterion("spatial relations match the brute-force oracle", relations);
    failed += run_criterion("task composition", composition);
    failed += run_criterion("curriculum packing", curriculum);
    failed += run_criterion("referent lint fixtures and mock pass rate", lint_fixtures);
    failed += run_criterion("judge score aggregation", judge_aggregation);
    failed += run_criterion("bench construction", bench_construction);
    failed += run_criterion("attention statistics", attention);
    failed += run_criterion("end-to-end offline run", end_to_end);
    failed += run_criterion("review replay and crash recovery", review);
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << "\n";
    return failed ? 1 : 0;
}
