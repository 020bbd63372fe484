#include "forge/llm.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>

#include <doctest.h>
#include <httplib.h>

using namespace forge;
using nlohmann::json;

namespace {

/// Local chat-completions stand-in that replays a scripted list of statuses.
class FakeServer {
public:
    explicit FakeServer(std::vector<int> statuses, std::string retry_after = {})
        : statuses_(std::move(statuses)), retry_after_(std::move(retry_after)) {
        srv_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            const int i = calls_++;
            last_body_ = req.body;
            last_auth_ = req.get_header_value("Authorization");
            const int status = i < int(statuses_.size()) ? statuses_[i] : 200;
            res.status = status;
            if (status == 429 && !retry_after_.empty()) res.set_header("Retry-After", retry_after_);
            if (status == 200)
                res.set_content(R"({"choices":[{"message":{"content":"hello"}}],"usage":{"prompt_tokens":3,"completion_tokens":1}})",
                                "application/json");
            else
                res.set_content(R"({"error":"scripted"})", "application/json");
        });
        port_ = srv_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { srv_.listen_after_bind(); });
        srv_.wait_until_ready();
    }
    ~FakeServer() {
        srv_.stop();
        thread_.join();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
    int calls() const { return calls_; }
    std::string last_body() const { return last_body_; }
    std::string last_auth() const { return last_auth_; }

private:
    httplib::Server srv_;
    std::vector<int> statuses_;
    std::string retry_after_;
    std::atomic<int> calls_{0};
    std::string last_body_, last_auth_;
    int port_ = 0;
    std::thread thread_;
};

BackendConfig http_config(const std::string& endpoint) {
    ::setenv("FORGE_TEST_KEY", "sk-test", 1);
    BackendConfig c;
    c.name = "fake";
    c.kind = "openai";
    c.endpoint = endpoint;
    c.model = "fake-model";
    c.auth_env = "FORGE_TEST_KEY";
    c.image_capable = false;
    c.timeout_seconds = 5;
    c.requests_per_minute = 1000;
    return c;
}

struct SleepLog {
    std::vector<std::chrono::milliseconds> waits;
    auto sleeper() {
        return [this](std::chrono::milliseconds d) { waits.push_back(d); };
    }
};

GenerationRequest text_request(const std::string& text = "hi") {
    GenerationRequest r;
    r.system_text = "sys";
    r.user_text = text;
    r.tag = "description";
    return r;
}

} // namespace

TEST_CASE("two throttles then success takes three attempts and honors Retry-After") {
    FakeServer srv({429, 429, 200}, "2");
    auto cfg = http_config(srv.endpoint());
    LlmClient client(make_backend(cfg), cfg);
    SleepLog log;
    client.set_sleeper(log.sleeper());
    auto c = client.complete(text_request());
    CHECK(c.text == "hello");
    CHECK(c.attempts == 3);
    CHECK(srv.calls() == 3);
    REQUIRE(log.waits.size() == 2);
    CHECK(log.waits[0] == std::chrono::milliseconds(2000));
    CHECK(log.waits[1] == std::chrono::milliseconds(2000));
    CHECK(c.usage.prompt_tokens == 3);
    CHECK(srv.last_auth() == "Bearer sk-test");
    auto body = json::parse(srv.last_body());
    CHECK(body["model"] == "fake-model");
}

TEST_CASE("backoff grows exponentially without Retry-After") {
    FakeServer srv({500, 503, 502, 200});
    auto cfg = http_config(srv.endpoint());
    cfg.retry.max_attempts = 4;
    cfg.retry.base_backoff_ms = 100;
    cfg.retry.jitter = 0.2;
    LlmClient client(make_backend(cfg), cfg);
    SleepLog log;
    client.set_sleeper(log.sleeper());
    auto c = client.complete(text_request());
    CHECK(c.attempts == 4);
    REQUIRE(log.waits.size() == 3);
    for (int i = 0; i < 3; ++i) {
        const double base = 100.0 * (1 << i);
        CHECK(log.waits[i].count() >= base);
        CHECK(log.waits[i].count() <= base * 1.2 + 1);
    }
}

TEST_CASE("permanent errors are raised after one attempt") {
    FakeServer srv({400, 200});
    auto cfg = http_config(srv.endpoint());
    LlmClient client(make_backend(cfg), cfg);
    SleepLog log;
    client.set_sleeper(log.sleeper());
    try {
        client.complete(text_request());
        FAIL("expected a BackendError");
    } catch (const BackendError& e) {
        CHECK(e.error_class == ErrorClass::permanent);
        CHECK(e.status == 400);
    }
    CHECK(srv.calls() == 1);
    CHECK(log.waits.empty());
}

TEST_CASE("exhausted retries report the last cause") {
    FakeServer srv({500, 500, 500, 500, 500});
    auto cfg = http_config(srv.endpoint());
    cfg.retry.max_attempts = 3;
    LlmClient client(make_backend(cfg), cfg);
    SleepLog log;
    client.set_sleeper(log.sleeper());
    try {
        client.complete(text_request());
        FAIL("expected RetriesExhausted");
    } catch (const RetriesExhausted& e) {
        CHECK(e.attempts == 3);
        CHECK(e.last_cause.find("500") != std::string::npos);
    }
    CHECK(srv.calls() == 3);
}

TEST_CASE("image requests to a text-only backend fail before any call") {
    FakeServer srv({200});
    auto cfg = http_config(srv.endpoint());
    LlmClient client(make_backend(cfg), cfg);
    auto req = text_request();
    req.image = ImageAttachment{"x.jpg", "AAAA"};
    CHECK_THROWS_AS(client.complete(req), RoutingError);
    CHECK(srv.calls() == 0);

    auto mcfg = resolve_backend({}, "mock-text");
    LlmClient mock(make_backend(mcfg), mcfg);
    CHECK_THROWS_AS(mock.complete(req), RoutingError);
}

TEST_CASE("missing API key environment variable is a permanent error") {
    auto cfg = http_config("http://127.0.0.1:1/v1/chat/completions");
    cfg.auth_env = "FORGE_TEST_KEY_UNSET";
    ::unsetenv("FORGE_TEST_KEY_UNSET");
    CHECK_THROWS_AS(make_backend(cfg), BackendError);
}

TEST_CASE("backend configs are validated and never carry keys") {
    auto ok = load_backend_configs(json::parse(R"({"backends":{"gpt":{"kind":"openai","endpoint":"https://x/v1","model":"m",
        "auth_env":"K","image_capable":true,"max_inflight":2,"requests_per_minute":30,"retry":{"max_attempts":5}}}})"));
    REQUIRE(ok.size() == 1);
    CHECK(ok[0].name == "gpt");
    CHECK(ok[0].image_capable);
    CHECK(ok[0].max_inflight == 2);
    CHECK(ok[0].retry.max_attempts == 5);
    CHECK_THROWS_AS(load_backend_configs(json::parse(R"({"gpt":{"kind":"openai","api_key":"sk-123"}})")), std::invalid_argument);
    CHECK_THROWS_AS(load_backend_configs(json::parse(R"({"gpt":{"kind":"carrier-pigeon"}})")), std::invalid_argument);
    CHECK_THROWS_AS(load_backend_configs(json::parse(R"({"gpt":{"max_inflight":0}})")), std::invalid_argument);
    CHECK(resolve_backend(ok, "gpt").model == "m");
    CHECK(resolve_backend(ok, "mock").kind == "mock");
    CHECK_THROWS_AS(resolve_backend(ok, "nope"), std::invalid_argument);
}

TEST_CASE("rate limiter admits at most limit requests per window") {
    using namespace std::chrono;
    RateLimiter lim(5, milliseconds(200));
    std::vector<steady_clock::time_point> stamps;
    for (int i = 0; i < 12; ++i) {
        lim.acquire();
        stamps.push_back(steady_clock::now());
    }
    for (std::size_t i = 5; i < stamps.size(); ++i)
        CHECK(stamps[i] - stamps[i - 5] >= milliseconds(195));
}

TEST_CASE("in-flight gate bounds concurrency") {
    class SlowBackend final : public Backend {
    public:
        std::string name() const override { return "slow"; }
        bool supports_images() const override { return false; }
        Completion complete(const GenerationRequest&) override {
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
            return {"ok", {}, 1, "slow"};
        }
    };
    BackendConfig cfg;
    cfg.name = "slow";
    cfg.max_inflight = 3;
    cfg.requests_per_minute = 100000;
    LlmClient client(std::make_unique<SlowBackend>(), cfg);
    std::vector<std::thread> ts;
    for (int t = 0; t < 12; ++t)
        ts.emplace_back([&] {
            for (int i = 0; i < 4; ++i) client.complete(text_request());
        });
    for (auto& t : ts) t.join();
    CHECK(client.peak_inflight() <= 3);
    CHECK(client.peak_inflight() >= 2);
}

TEST_CASE("mock backend is deterministic in request and seed") {
    MockBackend a(7), b(7), c(8);
    PromptElement e;
    e.id = "1";
    e.class_name = "Button";
    e.target = "\"Login\" button";
    e.label = "Login";
    e.bounds = "<0.1, 0.2, 0.3, 0.4>";
    e.click = "<0.2, 0.3>";
    e.shape = "rectangle";
    e.position = "top left of the page";
    auto req = text_request("task: bound\npairs: 3\ntemplate: Where is the {target}? => It is at {bounds}.\n" +
                            format_element_line(e) + "\n");
    const auto ra = a.complete(req).text, rb = b.complete(req).text;
    CHECK(ra == rb);
    auto arr = json::parse(ra);
    REQUIRE(arr.size() == 3);
    CHECK(arr[0]["answer"] == "It is at <0.1, 0.2, 0.3, 0.4>.");
    CHECK(json::parse(c.complete(req).text).size() == 3);
}

TEST_CASE("element lines round trip") {
    PromptElement e;
    e.id = "abc";
    e.class_name = "ImageButton";
    e.target = "\"Heart\" icon";
    e.label = "Heart";
    e.bounds = "<0.87, 0.48, 0.93, 0.51>";
    e.click = "<0.9, 0.495>";
    e.shape = "icon";
    e.colors = {"red", "white"};
    e.position = "middle right of the page";
    e.function = "like the video";
    auto back = parse_element_lines("header\n" + format_element_line(e) + "\n");
    REQUIRE(back.size() == 1);
    CHECK(back[0].id == e.id);
    CHECK(back[0].target == "'Heart' icon");
    CHECK(back[0].bounds == e.bounds);
    CHECK(back[0].click == e.click);
    CHECK(back[0].colors == e.colors);
    CHECK(back[0].position == e.position);
    CHECK(back[0].function == e.function);
    CHECK(fill_template("Tap the {color} {shape} at {click}.", back[0]) == "Tap the red icon at <0.9, 0.495>.");
}

TEST_CASE("mock judge scores token F1") {
    MockBackend m;
    GenerationRequest r;
    r.tag = "judge";
    r.user_text = "<reference>\nTap the blue Start button.\n</reference>\n<candidate>\nTap the blue Start button.\n</candidate>\n";
    CHECK(json::parse(m.complete(r).text)["score"].get<double>() == doctest::Approx(100.0));
    r.user_text = "<reference>\nTap the blue Start button.\n</reference>\n<candidate>\n</candidate>\n";
    CHECK(json::parse(m.complete(r).text)["score"].get<double>() == 0.0);
}

TEST_CASE("token F1 and base64 helpers") {
    CHECK(token_f1("a b c", "a b c") == doctest::Approx(1.0));
    CHECK(token_f1("a b", "a b c d") == doctest::Approx(2 * 1.0 * 0.5 / 1.5));
    CHECK(token_f1("", "a") == 0.0);
    CHECK(token_f1("The CAT", "the cat!") == doctest::Approx(1.0));
    auto b64 = [](const std::string& s) { return base64_encode(std::vector<std::uint8_t>(s.begin(), s.end())); };
    CHECK(b64("") == "");
    CHECK(b64("f") == "Zg==");
    CHECK(b64("fo") == "Zm8=");
    CHECK(b64("foo") == "Zm9v");
    CHECK(b64("foobar") == "Zm9vYmFy");
    CHECK(fnv1a("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
}
