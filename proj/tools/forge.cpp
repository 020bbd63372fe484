#include "forge/attnstat.hpp"
#include "forge/curriculum.hpp"
#include "forge/guibench.hpp"
#include "forge/ingest.hpp"
#include "forge/jsonl.hpp"
#include "forge/llm.hpp"
#include "forge/review_http.hpp"
#include "forge/synth.hpp"
#include "forge/taskgen.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <unordered_map>

using namespace forge;
using nlohmann::json;

namespace {

void write_json(const std::filesystem::path& path, const json& j) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    write_file_atomic(path, j.dump(2) + "\n");
}

std::unique_ptr<LlmClient> make_client(const std::string& name, const std::string& config_path, std::optional<std::uint64_t> seed) {
    std::vector<BackendConfig> configs;
    if (!config_path.empty()) configs = load_backend_configs(json::parse(read_text_file(config_path)));
    BackendConfig cfg = resolve_backend(configs, name);
    if (seed) cfg.seed = *seed;
    return std::make_unique<LlmClient>(make_backend(cfg), cfg);
}

ScreenSize parse_screen_size(const std::string& s) {
    const auto x = s.find('x');
    if (x == std::string::npos) throw CLI::ValidationError("--screen-size", "expected WxH");
    ScreenSize size{std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
    if (size.width <= 0 || size.height <= 0) throw CLI::ValidationError("--screen-size", "dimensions must be positive");
    return size;
}

ReviewServer* g_server = nullptr;
void on_signal(int) {
    if (g_server) g_server->stop();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"forge: build, check, curate and evaluate GUI question-answering corpora"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Parse view hierarchies into normalized screen records");
    std::string in_dir, screens_out, screen_size = "1440x2560", ingest_report;
    bool strict = false;
    ingest->add_option("--in", in_dir, "Directory of {id}.json hierarchies with {id}.jpg screenshots")->required();
    ingest->add_option("--out", screens_out, "Output screens JSONL")->required();
    ingest->add_flag("--strict", strict, "Fail on any dropped node or rejected screen");
    ingest->add_option("--screen-size", screen_size, "Coordinate space of the hierarchies, WxH")->capture_default_str();
    ingest->add_option("--report", ingest_report, "Write an ingest report JSON");

    // lint
    auto* lint = app.add_subcommand("lint", "Check that answers ground the elements they mention");
    std::string lint_corpus, lint_screens, lint_report, lint_out;
    lint->add_option("--corpus", lint_corpus)->required();
    lint->add_option("--screens", lint_screens)->required();
    lint->add_option("--report", lint_report)->required();
    lint->add_option("--out", lint_out, "Also write the corpus with refreshed lint verdicts");

    // gen
    auto* gen = app.add_subcommand("gen", "Generate a QA corpus through a model backend");
    std::string gen_screens, gen_backend = "mock", gen_out, gen_config, gen_report;
    long long gen_total = 0;
    std::uint64_t gen_seed = 0;
    int gen_workers = 0;
    gen->add_option("--screens", gen_screens)->required();
    gen->add_option("--total", gen_total, "Total number of pairs across task kinds")->required()->check(CLI::NonNegativeNumber);
    gen->add_option("--backend", gen_backend)->capture_default_str();
    gen->add_option("--seed", gen_seed)->capture_default_str();
    gen->add_option("--out", gen_out)->required();
    gen->add_option("--config", gen_config, "Backend configuration JSON");
    gen->add_option("--report", gen_report, "Write a generation report JSON");
    gen->add_option("--workers", gen_workers, "Parallel requests (default: backend max_inflight)");

    // pack
    auto* pack = app.add_subcommand("pack", "Split reviewed pairs into the two training stages");
    std::string pack_corpus, pack_screens, pack_out, pack_manifest_cfg;
    bool include_pending = false, include_unlinted = false;
    pack->add_option("--corpus", pack_corpus)->required();
    pack->add_option("--screens", pack_screens)->required();
    pack->add_option("--out-dir", pack_out)->required();
    pack->add_flag("--include-pending", include_pending, "Also pack unreviewed pairs whose lint verdict passed");
    pack->add_flag("--include-unlinted", include_unlinted, "With --include-pending, ignore lint verdicts");
    pack->add_option("--manifest-config", pack_manifest_cfg, "JSON overrides for training hyperparameters");

    // bench
    auto* bench = app.add_subcommand("bench", "Build or score the held-out GUI bench");
    bench->require_subcommand(1);
    auto* bench_build = bench->add_subcommand("build", "Sample bench screens and questions");
    std::string bb_screens, bb_out, bb_stages, bb_curated, bb_backend = "mock", bb_config;
    std::size_t bb_images = 22, bb_questions = 2;
    std::uint64_t bb_seed = 0;
    bench_build->add_option("--screens", bb_screens)->required();
    bench_build->add_option("--bench", bb_out, "Output bench JSONL")->required();
    bench_build->add_option("--stages-dir", bb_stages, "Training stage directory; its screens are excluded");
    bench_build->add_option("--curated", bb_curated, "Curated questions JSONL");
    bench_build->add_option("--backend", bb_backend, "Backend synthesizing questions")->capture_default_str();
    bench_build->add_option("--config", bb_config);
    bench_build->add_option("--images", bb_images)->capture_default_str();
    bench_build->add_option("--questions", bb_questions)->capture_default_str();
    bench_build->add_option("--seed", bb_seed)->capture_default_str();
    auto* bench_run = bench->add_subcommand("run", "Judge answers over three runs");
    std::string br_bench, br_answers, br_judge = "mock-judge", br_report, br_config, br_screens, br_stages;
    bench_run->add_option("--bench", br_bench)->required();
    bench_run->add_option("--answers", br_answers)->required();
    bench_run->add_option("--judge", br_judge)->capture_default_str();
    bench_run->add_option("--report", br_report)->required();
    bench_run->add_option("--config", br_config);
    bench_run->add_option("--screens", br_screens, "Screens JSONL, enables failure categories");
    bench_run->add_option("--stages-dir", br_stages, "Training stage directory, enables the disjointness check");

    // attn
    auto* attn = app.add_subcommand("attn", "Summarize and compare image-token attention dumps");
    std::string attn_dump, attn_against, attn_report;
    attn->add_option("--dump", attn_dump)->required();
    attn->add_option("--against", attn_against);
    attn->add_option("--report", attn_report)->required();

    // serve
    auto* serve = app.add_subcommand("serve", "Run the review HTTP API");
    std::string sv_corpus, sv_screens, sv_log, sv_host = "127.0.0.1", sv_static;
    int sv_port = 8080;
    serve->add_option("--corpus", sv_corpus)->required();
    serve->add_option("--screens", sv_screens)->required();
    serve->add_option("--port", sv_port)->capture_default_str();
    serve->add_option("--host", sv_host)->capture_default_str();
    serve->add_option("--log", sv_log, "Verdict log (default: <corpus>.verdicts.jsonl)");
    serve->add_option("--static", sv_static, "Directory of static assets served at /");

    // synth
    auto* synth = app.add_subcommand("synth", "Write synthetic app screens (hierarchy + screenshot)");
    std::string sy_out;
    std::size_t sy_count = 50;
    std::uint64_t sy_seed = 0;
    synth->add_option("--out", sy_out)->required();
    synth->add_option("--count", sy_count)->capture_default_str();
    synth->add_option("--seed", sy_seed)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            IngestOptions opts;
            opts.screen_size = parse_screen_size(screen_size);
            opts.strict = strict;
            IngestReport rep;
            auto screens = ingest_directory(in_dir, opts, rep);
            write_screens(screens_out, screens);
            for (const auto& m : rep.messages) std::cerr << "warning: " << m << "\n";
            std::cerr << "ingested " << rep.screens_ok << " screen(s), rejected " << rep.screens_rejected
                      << ", dropped nodes " << rep.dropped_nodes << "\n";
            if (!ingest_report.empty())
                write_json(ingest_report, {{"screens_ok", rep.screens_ok},
                                           {"screens_rejected", rep.screens_rejected},
                                           {"dropped_nodes", rep.dropped_nodes},
                                           {"degenerate", rep.degenerate},
                                           {"messages", rep.messages}});
        } else if (*lint) {
            auto corpus = read_corpus(lint_corpus);
            auto screens = read_screens(lint_screens);
            std::unordered_map<std::string, std::size_t> by_id;
            for (std::size_t i = 0; i < screens.size(); ++i) by_id.emplace(screens[i].screen_id, i);
            std::unordered_map<std::string, FactsIndex> facts;
            FactsOptions fo;
            fo.compute_relations = false;
            long long pass = 0, missing = 0;
            std::map<std::string, long long> failures;
            json by_task = json::object(), verdicts = json::array();
            for (auto& p : corpus) {
                auto it = by_id.find(p.screen_id);
                if (it == by_id.end()) {
                    ++missing;
                    continue;
                }
                const auto& screen = screens[it->second];
                auto fit = facts.find(screen.screen_id);
                if (fit == facts.end()) fit = facts.emplace(screen.screen_id, build_facts_from_disk(screen, fo)).first;
                p.lint = lint_pair(p, screen, fit->second);
                const std::string task(to_string(p.task));
                auto& t = by_task[task];
                if (t.is_null()) t = {{"pairs", 0}, {"pass", 0}};
                t["pairs"] = t["pairs"].get<long long>() + 1;
                if (p.lint->pass) {
                    ++pass;
                    t["pass"] = t["pass"].get<long long>() + 1;
                } else {
                    ++failures[std::string(to_string(p.lint->failure_kind))];
                }
                verdicts.push_back(to_json(*p.lint));
            }
            const long long linted = static_cast<long long>(corpus.size()) - missing;
            write_json(lint_report, {{"pairs", linted},
                                     {"pass", pass},
                                     {"pass_rate", linted ? double(pass) / double(linted) : 1.0},
                                     {"failures", failures},
                                     {"missing_screen", missing},
                                     {"by_task", by_task},
                                     {"verdicts", verdicts}});
            if (!lint_out.empty()) write_corpus(lint_out, corpus);
            std::cerr << "lint: " << pass << "/" << linted << " pass\n";
        } else if (*gen) {
            auto screens = read_screens(gen_screens);
            auto client = make_client(gen_backend, gen_config, gen_seed);
            GenerationOptions opts;
            opts.seed = gen_seed;
            opts.workers = gen_workers;
            GenerationReport rep;
            auto corpus = generate_corpus(screens, plan_composition(gen_total), *client, opts, rep);
            write_corpus(gen_out, corpus);
            if (!gen_report.empty()) write_json(gen_report, rep.to_json());
            std::cerr << "generated " << corpus.size() << " of " << gen_total << " pair(s)\n";
            for (const auto& [k, r] : rep.kinds)
                if (r.shortfall() > 0) std::cerr << "warning: " << to_string(k) << " short by " << r.shortfall() << "\n";
        } else if (*pack) {
            auto lines = read_jsonl(pack_corpus);
            auto screens = read_screens(pack_screens);
            PackOptions opts;
            opts.include_pending = include_pending;
            opts.pending_requires_lint = !include_unlinted;
            auto packed = pack_stages(lines, screens, opts);
            ManifestConfig cfg;
            if (!pack_manifest_cfg.empty()) cfg = manifest_config_from_json(json::parse(read_text_file(pack_manifest_cfg)));
            auto manifest = write_stages(pack_out, packed, cfg);
            std::cerr << "stage1 " << packed.foundation.size() << ", stage2 " << packed.advanced.size() << " sample(s)\n";
            if (manifest["warning"].get<bool>())
                for (const auto& w : manifest["warnings"]) std::cerr << "warning: " << w.get<std::string>() << "\n";
        } else if (*bench_build) {
            auto screens = read_screens(bb_screens);
            std::set<std::string> training;
            if (!bb_stages.empty())
                training = training_screen_ids({std::filesystem::path(bb_stages) / "stage1.jsonl",
                                                std::filesystem::path(bb_stages) / "stage2.jsonl"});
            BenchBuildOptions opts;
            opts.n_images = bb_images;
            opts.questions_per_image = bb_questions;
            opts.seed = bb_seed;
            std::unique_ptr<LlmClient> client;
            if (!bb_curated.empty()) opts.curated = read_curated_questions(bb_curated);
            else client = make_client(bb_backend, bb_config, bb_seed);
            auto items = build_bench(screens, training, opts, client.get());
            write_bench(bb_out, items);
            std::cerr << "bench: " << items.size() << " item(s)\n";
        } else if (*bench_run) {
            auto items = read_bench(br_bench);
            auto answers = read_answers(br_answers);
            auto client = make_client(br_judge, br_config, std::nullopt);
            RunOptions opts;
            std::vector<ScreenRecord> screens;
            std::set<std::string> training;
            if (!br_screens.empty()) {
                screens = read_screens(br_screens);
                opts.screens = &screens;
            }
            if (!br_stages.empty()) {
                training = training_screen_ids({std::filesystem::path(br_stages) / "stage1.jsonl",
                                                std::filesystem::path(br_stages) / "stage2.jsonl"});
                opts.training_screens = &training;
            }
            auto rep = run_and_aggregate(items, answers, *client, opts);
            write_json(br_report, rep.to_json());
            std::cerr << "bench average " << rep.average << "\n";
        } else if (*attn) {
            auto a = attn::summarize(attn::load_dump<double>(attn_dump));
            json report = {{"dump", attn::to_json(a)}};
            if (!attn_against.empty()) {
                auto b = attn::summarize(attn::load_dump<double>(attn_against));
                report["against"] = attn::to_json(b);
                report["comparison"] = attn::to_json(attn::compare(a, b));
            }
            write_json(attn_report, report);
        } else if (*serve) {
            if (sv_log.empty()) sv_log = sv_corpus + ".verdicts.jsonl";
            ReviewStore store(read_corpus(sv_corpus), read_screens(sv_screens), sv_log);
            std::optional<std::filesystem::path> static_dir;
            if (!sv_static.empty()) static_dir = sv_static;
            ReviewServer server(store, static_dir);
            server.bind(sv_host, sv_port);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "serving on http://" << sv_host << ":" << sv_port << "\n";
            server.run();
            g_server = nullptr;
        } else if (*synth) {
            SynthOptions opts;
            opts.seed = sy_seed;
            auto names = write_synth_screens(sy_out, sy_count, opts);
            std::cerr << "wrote " << names.size() << " screen(s) to " << sy_out << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
