#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace forge {

struct ImageAttachment {
    std::string path;
    std::string base64;
    std::string media_type = "image/jpeg";
};

struct GenerationRequest {
    std::string system_text;
    std::string user_text;
    std::optional<ImageAttachment> image;
    int max_output_tokens = 1024;
    double temperature = 0.7;
    std::string tag; // task kind name, "judge" or "bench"

    /// Canonical bytes used for hashing (mock seeding, caching).
    std::string canonical_bytes() const;
};

struct Usage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

struct Completion {
    std::string text;
    Usage usage;
    int attempts = 1;
    std::string backend;
};

struct RetryPolicy {
    int max_attempts = 4;
    int base_backoff_ms = 500;
    double jitter = 0.2; // fraction of the backoff added at random
};

struct BackendConfig {
    std::string name = "mock";
    std::string kind = "mock"; // "mock" or "openai" (chat-completions compatible)
    std::string endpoint;
    std::string model;
    std::string auth_env; // environment variable holding the API key
    bool image_capable = true;
    int max_inflight = 4;
    int requests_per_minute = 600;
    std::chrono::milliseconds rate_window{60'000};
    RetryPolicy retry;
    int timeout_seconds = 120;
    std::uint64_t seed = 0; // mock only

    void validate() const;
};

std::vector<BackendConfig> load_backend_configs(const nlohmann::json& j);
/// Looks `name` up in `configs`; "mock" and "mock-text" are always available.
BackendConfig resolve_backend(const std::vector<BackendConfig>& configs, const std::string& name);

enum class ErrorClass { transient, throttle, permanent };

struct BackendError : std::runtime_error {
    BackendError(ErrorClass cls, int status, const std::string& what,
                 std::optional<std::chrono::milliseconds> retry_after = std::nullopt)
        : std::runtime_error(what), error_class(cls), status(status), retry_after(retry_after) {}
    ErrorClass error_class;
    int status;
    std::optional<std::chrono::milliseconds> retry_after;
};

struct RetriesExhausted : std::runtime_error {
    RetriesExhausted(const std::string& last_cause, int attempts)
        : std::runtime_error("retries exhausted after " + std::to_string(attempts) + " attempt(s): " + last_cause),
          last_cause(last_cause), attempts(attempts) {}
    std::string last_cause;
    int attempts;
};

struct RoutingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string name() const = 0;
    virtual bool supports_images() const = 0;
    /// One attempt; throws BackendError on failure.
    virtual Completion complete(const GenerationRequest& req) = 0;
};

/// Deterministic offline backend. Fills grounded answers from the element lines of the prompt itself,
/// and scores judge requests by token-overlap F1 between candidate and reference.
class MockBackend final : public Backend {
public:
    explicit MockBackend(std::uint64_t seed = 0, bool image_capable = true, std::string name = "mock")
        : seed_(seed), image_capable_(image_capable), name_(std::move(name)) {}
    std::string name() const override { return name_; }
    bool supports_images() const override { return image_capable_; }
    Completion complete(const GenerationRequest& req) override;

private:
    std::uint64_t seed_;
    bool image_capable_;
    std::string name_;
};

/// Chat-completions style HTTP backend.
class HttpBackend final : public Backend {
public:
    explicit HttpBackend(BackendConfig cfg);
    std::string name() const override { return cfg_.name; }
    bool supports_images() const override { return cfg_.image_capable; }
    Completion complete(const GenerationRequest& req) override;

private:
    BackendConfig cfg_;
    std::string api_key_;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg);

/// Sliding-window limiter: at most `limit` acquisitions in any window of the given length.
class RateLimiter {
public:
    using Clock = std::chrono::steady_clock;
    RateLimiter(int limit, Clock::duration window);
    void acquire();

private:
    int limit_;
    Clock::duration window_;
    std::mutex mu_;
    std::deque<Clock::time_point> stamps_;
};

/// Bounds concurrent in-flight requests.
class InflightGate {
public:
    explicit InflightGate(int max_inflight) : max_(max_inflight) {}
    void acquire();
    void release();
    int peak() const;

    class Permit {
    public:
        explicit Permit(InflightGate& g) : g_(&g) { g_->acquire(); }
        ~Permit() { if (g_) g_->release(); }
        Permit(const Permit&) = delete;
        Permit& operator=(const Permit&) = delete;

    private:
        InflightGate* g_;
    };

private:
    int max_;
    int current_ = 0;
    int peak_ = 0;
    mutable std::mutex mu_;
    std::condition_variable cv_;
};

/// Thread-safe front end: routing check, rate limiting, in-flight bound, retry with exponential backoff.
class LlmClient {
public:
    LlmClient(std::unique_ptr<Backend> backend, BackendConfig cfg);

    Completion complete(const GenerationRequest& req);

    const BackendConfig& config() const { return cfg_; }
    Backend& backend() { return *backend_; }
    int peak_inflight() const { return gate_.peak(); }

    /// Replaces sleeping between retries (tests).
    void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) { sleeper_ = std::move(sleeper); }

private:
    std::unique_ptr<Backend> backend_;
    BackendConfig cfg_;
    RateLimiter limiter_;
    InflightGate gate_;
    std::function<void(std::chrono::milliseconds)> sleeper_;
    std::mutex rng_mu_;
    std::uint64_t rng_state_;
};

// ---- prompt element lines shared by prompt building and the mock backend ----

struct PromptElement {
    std::string id;
    std::string class_name;
    std::string target;  // how answers should name the element, e.g. "Login" button
    std::string label;   // raw text or content description, may be empty
    std::string bounds;  // literal, empty for image-based hints
    std::string click;   // literal, may be empty
    std::string shape;
    std::vector<std::string> colors;
    std::string position;
    std::string function; // short phrase describing what the element is for
};

std::string format_element_line(const PromptElement& e);
std::vector<PromptElement> parse_element_lines(const std::string& text);

/// Substitutes {target}, {bounds}, {click}, {position}, {shape}, {color} and {function}.
std::string fill_template(std::string tmpl, const PromptElement& e);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);

/// FNV-1a 64.
std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull);

/// Token-overlap F1 in [0,1]; lower-cased alphanumeric tokens, multiset overlap.
double token_f1(const std::string& candidate, const std::string& reference);

} // namespace forge
