#include "forge/llm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <random>
#include <regex>
#include <sstream>
#include <thread>

namespace forge {

using nlohmann::json;

std::uint64_t fnv1a(std::string_view s, std::uint64_t h) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string GenerationRequest::canonical_bytes() const {
    std::string out;
    out += "tag\x1f" + tag + "\x1e";
    out += "system\x1f" + system_text + "\x1e";
    out += "user\x1f" + user_text + "\x1e";
    if (image) out += "image\x1f" + image->path + "\x1f" + std::to_string(image->base64.size()) + "\x1e";
    out += "max\x1f" + std::to_string(max_output_tokens);
    return out;
}

void BackendConfig::validate() const {
    if (max_inflight < 1) throw std::invalid_argument(name + ": max_inflight must be >= 1");
    if (retry.max_attempts < 1) throw std::invalid_argument(name + ": retry.max_attempts must be >= 1");
    if (requests_per_minute < 1) throw std::invalid_argument(name + ": requests_per_minute must be >= 1");
    if (kind != "mock" && kind != "openai") throw std::invalid_argument(name + ": unknown backend kind " + kind);
}

std::vector<BackendConfig> load_backend_configs(const json& j) {
    std::vector<BackendConfig> out;
    const auto& backends = j.contains("backends") ? j.at("backends") : j;
    for (auto it = backends.begin(); it != backends.end(); ++it) {
        const auto& b = it.value();
        BackendConfig c;
        c.name = it.key();
        c.kind = b.value("kind", "openai");
        c.endpoint = b.value("endpoint", "");
        c.model = b.value("model", "");
        c.auth_env = b.value("auth_env", "");
        c.image_capable = b.value("image_capable", false);
        c.max_inflight = b.value("max_inflight", 4);
        c.requests_per_minute = b.value("requests_per_minute", 60);
        c.timeout_seconds = b.value("timeout_seconds", 120);
        c.seed = b.value("seed", std::uint64_t{0});
        if (auto r = b.find("retry"); r != b.end()) {
            c.retry.max_attempts = r->value("max_attempts", c.retry.max_attempts);
            c.retry.base_backoff_ms = r->value("base_backoff_ms", c.retry.base_backoff_ms);
            c.retry.jitter = r->value("jitter", c.retry.jitter);
        }
        if (b.contains("api_key") || b.contains("key"))
            throw std::invalid_argument(c.name + ": API keys are read from the environment (auth_env), not config files");
        c.validate();
        out.push_back(std::move(c));
    }
    return out;
}

BackendConfig resolve_backend(const std::vector<BackendConfig>& configs, const std::string& name) {
    for (const auto& c : configs)
        if (c.name == name) return c;
    if (name == "mock" || name == "mock-judge" || name == "mock-text") {
        BackendConfig c;
        c.name = name;
        c.image_capable = name != "mock-text";
        c.requests_per_minute = 1'000'000; // offline, nothing to protect
        return c;
    }
    throw std::invalid_argument("unknown backend: " + name);
}

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg) {
    cfg.validate();
    if (cfg.kind == "mock") return std::make_unique<MockBackend>(cfg.seed, cfg.image_capable, cfg.name);
    return std::make_unique<HttpBackend>(cfg);
}

// ---------------------------------------------------------------------------

RateLimiter::RateLimiter(int limit, Clock::duration window) : limit_(limit), window_(window) {
    if (limit < 1) throw std::invalid_argument("rate limit must be >= 1");
}

void RateLimiter::acquire() {
    std::unique_lock lk(mu_);
    for (;;) {
        const auto now = Clock::now();
        while (!stamps_.empty() && stamps_.front() + window_ <= now) stamps_.pop_front();
        if (static_cast<int>(stamps_.size()) < limit_) {
            stamps_.push_back(now);
            return;
        }
        const auto wake = stamps_.front() + window_;
        lk.unlock();
        std::this_thread::sleep_until(wake);
        lk.lock();
    }
}

void InflightGate::acquire() {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] { return current_ < max_; });
    ++current_;
    peak_ = std::max(peak_, current_);
}

void InflightGate::release() {
    {
        std::lock_guard lk(mu_);
        --current_;
    }
    cv_.notify_one();
}

int InflightGate::peak() const {
    std::lock_guard lk(mu_);
    return peak_;
}

LlmClient::LlmClient(std::unique_ptr<Backend> backend, BackendConfig cfg)
    : backend_(std::move(backend)), cfg_(std::move(cfg)),
      limiter_(cfg_.requests_per_minute, cfg_.rate_window),
      gate_(cfg_.max_inflight),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }),
      rng_state_(cfg_.seed * 0x9e3779b97f4a7c15ull + 1) {
    cfg_.validate();
}

Completion LlmClient::complete(const GenerationRequest& req) {
    if (req.image && !backend_->supports_images())
        throw RoutingError("request carries an image but backend '" + backend_->name() + "' is text-only");

    std::string last_cause;
    for (int attempt = 1; attempt <= cfg_.retry.max_attempts; ++attempt) {
        std::optional<std::chrono::milliseconds> wait;
        try {
            InflightGate::Permit permit(gate_);
            limiter_.acquire();
            Completion c = backend_->complete(req);
            c.attempts = attempt;
            c.backend = backend_->name();
            return c;
        } catch (const BackendError& e) {
            if (e.error_class == ErrorClass::permanent) throw;
            last_cause = e.what();
            wait = e.retry_after;
        }
        if (attempt == cfg_.retry.max_attempts) break;
        if (!wait) {
            double u;
            {
                std::lock_guard lk(rng_mu_);
                rng_state_ ^= rng_state_ << 13;
                rng_state_ ^= rng_state_ >> 7;
                rng_state_ ^= rng_state_ << 17;
                u = double(rng_state_ >> 11) / double(1ull << 53);
            }
            const double base = cfg_.retry.base_backoff_ms * std::pow(2.0, attempt - 1);
            wait = std::chrono::milliseconds(static_cast<long long>(base * (1.0 + cfg_.retry.jitter * u)));
        }
        sleeper_(*wait);
    }
    throw RetriesExhausted(last_cause, cfg_.retry.max_attempts);
}

// ---------------------------------------------------------------------------

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    static constexpr char tbl[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += tbl[(n >> 18) & 63];
        out += tbl[(n >> 12) & 63];
        out += tbl[(n >> 6) & 63];
        out += tbl[n & 63];
    }
    if (i + 1 == bytes.size()) {
        const std::uint32_t n = bytes[i] << 16;
        out += tbl[(n >> 18) & 63];
        out += tbl[(n >> 12) & 63];
        out += "==";
    } else if (i + 2 == bytes.size()) {
        const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out += tbl[(n >> 18) & 63];
        out += tbl[(n >> 12) & 63];
        out += tbl[(n >> 6) & 63];
        out += '=';
    }
    return out;
}

namespace {

std::string quote_field(const std::string& s) {
    std::string out = s;
    std::replace(out.begin(), out.end(), '"', '\'');
    std::replace(out.begin(), out.end(), '\n', ' ');
    return "\"" + out + "\"";
}

std::vector<std::string> tokens(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

} // namespace

std::string format_element_line(const PromptElement& e) {
    std::string line = "- id=" + e.id + " class=" + (e.class_name.empty() ? "View" : e.class_name);
    line += " target=" + quote_field(e.target);
    if (!e.label.empty()) line += " label=" + quote_field(e.label);
    if (!e.bounds.empty()) line += " bounds=" + e.bounds;
    if (!e.click.empty()) line += " click=" + e.click;
    line += " shape=" + e.shape;
    if (!e.colors.empty()) {
        line += " colors=";
        for (std::size_t i = 0; i < e.colors.size(); ++i) line += (i ? "," : "") + e.colors[i];
    }
    line += " position=" + quote_field(e.position);
    if (!e.function.empty()) line += " function=" + quote_field(e.function);
    return line;
}

std::vector<PromptElement> parse_element_lines(const std::string& text) {
    static const std::regex field(R"re((\w+)=("[^"]*"|<[^>]*>|\S+))re");
    std::vector<PromptElement> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("- id=", 0) != 0) continue;
        PromptElement e;
        for (auto it = std::sregex_iterator(line.begin(), line.end(), field); it != std::sregex_iterator(); ++it) {
            const std::string key = (*it)[1].str();
            std::string val = (*it)[2].str();
            if (val.size() >= 2 && val.front() == '"') val = val.substr(1, val.size() - 2);
            if (key == "id") e.id = val;
            else if (key == "class") e.class_name = val;
            else if (key == "target") e.target = val;
            else if (key == "label") e.label = val;
            else if (key == "bounds") e.bounds = val;
            else if (key == "click") e.click = val;
            else if (key == "shape") e.shape = val;
            else if (key == "position") e.position = val;
            else if (key == "function") e.function = val;
            else if (key == "colors") {
                std::stringstream cs(val);
                std::string c;
                while (std::getline(cs, c, ',')) e.colors.push_back(c);
            }
        }
        out.push_back(std::move(e));
    }
    return out;
}

double token_f1(const std::string& candidate, const std::string& reference) {
    const auto c = tokens(candidate), r = tokens(reference);
    if (c.empty() || r.empty()) return 0.0;
    std::map<std::string, int> rc;
    for (const auto& t : r) ++rc[t];
    int common = 0;
    for (const auto& t : c) {
        auto it = rc.find(t);
        if (it != rc.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) return 0.0;
    const double p = double(common) / double(c.size()), rr = double(common) / double(r.size());
    return 2 * p * rr / (p + rr);
}

// ---------------------------------------------------------------------------
// Mock backend

namespace {

struct SplitMix {
    std::uint64_t s;
    std::uint64_t next() {
        std::uint64_t z = (s += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    std::size_t below(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(next() % n); }
};

std::string line_value(const std::string& text, const std::string& key) {
    const auto pos = text.find("\n" + key + ": ");
    const auto start = text.rfind(key + ": ", 0) == 0 ? 0 : pos == std::string::npos ? std::string::npos : pos + 1;
    if (start == std::string::npos) return {};
    const auto vstart = start + key.size() + 2;
    const auto end = text.find('\n', vstart);
    return text.substr(vstart, end == std::string::npos ? std::string::npos : end - vstart);
}

std::vector<std::string> line_values(const std::string& text, const std::string& key) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (line.rfind(key + ": ", 0) == 0) out.push_back(line.substr(key.size() + 2));
    return out;
}

std::string block(const std::string& text, const std::string& tag) {
    const std::string open = "<" + tag + ">", close = "</" + tag + ">";
    const auto a = text.find(open);
    if (a == std::string::npos) return {};
    const auto b = text.find(close, a);
    if (b == std::string::npos) return {};
    auto s = text.substr(a + open.size(), b - a - open.size());
    if (!s.empty() && s.front() == '\n') s.erase(0, 1);
    if (!s.empty() && s.back() == '\n') s.pop_back();
    return s;
}

std::string collapse_spaces(std::string s) {
    std::string out;
    for (char c : s) {
        if (c == ' ' && (out.empty() || out.back() == ' ')) continue;
        out += c;
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    std::string fixed;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i] == ' ' && i + 1 < out.size() && (out[i + 1] == '.' || out[i + 1] == ',')) continue;
        fixed += out[i];
    }
    return fixed;
}

std::string fill(std::string tmpl, const PromptElement& e) {
    auto replace_all = [&](const std::string& key, const std::string& val) {
        for (auto p = tmpl.find(key); p != std::string::npos; p = tmpl.find(key, p + val.size()))
            tmpl.replace(p, key.size(), val);
    };
    std::string colors = e.colors.empty() ? "" : e.colors.front();
    replace_all("{target}", e.target);
    replace_all("{bounds}", e.bounds);
    replace_all("{click}", e.click.empty() ? e.bounds : e.click);
    replace_all("{position}", e.position);
    replace_all("{shape}", e.shape == "rounded-rectangle" ? "rounded rectangle" : e.shape);
    replace_all("{color}", colors);
    replace_all("{function}", e.function.empty() ? "interact with this part of the page" : e.function);
    return collapse_spaces(tmpl);
}

bool satisfiable(const std::string& tmpl, const PromptElement& e) {
    const bool coords = tmpl.find("{bounds}") != std::string::npos || tmpl.find("{click}") != std::string::npos;
    if (tmpl.find("{bounds}") != std::string::npos && e.bounds.empty()) return false;
    if (tmpl.find("{click}") != std::string::npos && e.click.empty()) return false;
    // A target already named by its coordinates would repeat them.
    if (coords && e.target.find('<') != std::string::npos) return false;
    return !e.target.empty();
}

const std::vector<std::string>& missing_features() {
    static const std::vector<std::string> f{"login", "share", "search", "payment", "map", "camera", "upload",
                                            "calendar", "chat", "download", "music", "video", "settings"};
    return f;
}

json qa(const std::string& q, const std::string& a) { return {{"question", q}, {"answer", a}}; }

// Built-in conversation styles; text-only styles may use coordinates, image-based ones may not.
json conversation(const std::string& task, const std::vector<PromptElement>& els, SplitMix& rng) {
    json arr = json::array();
    std::vector<const PromptElement*> labeled, clickable;
    for (const auto& e : els) {
        if (e.label.empty()) continue;
        labeled.push_back(&e);
        if (!e.click.empty()) clickable.push_back(&e);
    }
    auto pick = [&]() -> const PromptElement& {
        return labeled.empty() ? els[rng.below(els.size())] : *labeled[rng.below(labeled.size())];
    };
    auto pick_clickable = [&]() -> const PromptElement& {
        return clickable.empty() ? pick() : *clickable[rng.below(clickable.size())];
    };
    if (task == "conv_simple") {
        const auto& e = pick();
        arr.push_back(qa(fill("Where is the {target}?", e), fill("The {target} is in the {position}, at {bounds}.", e)));
    } else if (task == "conv_complex") {
        const auto& e = pick_clickable();
        const auto& f = pick();
        arr.push_back(qa(fill("I want to {function}. What should I do?", e),
                         fill("Use the {target} in the {position}. Its bounds are {bounds}, so tap at {click}.", e)));
        arr.push_back(qa(fill("And what is the {target} for?", f),
                         fill("The {target} in the {position} lets you {function}. It spans {bounds}.", f)));
    } else if (task == "conv_4o_long") {
        const auto& e = pick();
        const auto& f = pick();
        arr.push_back(qa("What can I do on this screen?",
                         fill("You can {function} with the {color} {shape} {target} in the {position}.", e)));
        arr.push_back(qa(fill("What does the {target} look like?", e),
                         fill("The {target} is a {color} {shape} in the {position}.", e)));
        arr.push_back(qa(fill("Is there anything else I should notice?", f),
                         fill("There is also the {color} {shape} {target} in the {position}, which lets you {function}.", f)));
    } else { // conv_4o_short and anything else
        const auto& e = pick();
        arr.push_back(qa(fill("How can I {function}?", e), fill("Tap the {color} {shape} {target} in the {position}.", e)));
    }
    return arr;
}

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

json missing_function(const std::vector<PromptElement>& els, SplitMix& rng) {
    std::string present;
    for (const auto& e : els) present += lower(e.label) + " " + lower(e.function) + " ";
    std::vector<std::string> absent;
    for (const auto& f : missing_features())
        if (present.find(f) == std::string::npos) absent.push_back(f);
    const std::string feature = absent.empty() ? "printing" : absent[rng.below(absent.size())];
    const std::string article = std::string("aeiou").find(feature.front()) != std::string::npos ? "an " : "a ";
    json arr = json::array();
    arr.push_back(qa("How can I use the " + feature + " function here?",
                     "This page seems to be focused on displaying its current content, but it doesn't appear to have " +
                         article + feature + " function."));
    return arr;
}

std::string judge_response(const std::string& user) {
    const double f1 = token_f1(block(user, "candidate"), block(user, "reference"));
    json j = {{"score", 100.0 * f1}, {"rationale", "token-overlap F1 between candidate and reference"}};
    return j.dump();
}

int approx_tokens(const std::string& s) { return static_cast<int>(tokens(s).size()); }

} // namespace

std::string fill_template(std::string tmpl, const PromptElement& e) { return fill(std::move(tmpl), e); }

Completion MockBackend::complete(const GenerationRequest& req) {
    if (req.image && !image_capable_) throw BackendError(ErrorClass::permanent, 400, "mock backend is text-only");
    Completion c;
    c.backend = name_;
    if (req.tag == "judge") {
        c.text = judge_response(req.user_text);
    } else {
        SplitMix rng{fnv1a(req.canonical_bytes()) ^ (seed_ * 0x9e3779b97f4a7c15ull)};
        const std::string task = line_value(req.user_text, "task");
        const int n = std::max(1, std::atoi(line_value(req.user_text, "pairs").c_str()));
        auto elements = parse_element_lines(req.user_text);
        // Only elements an answer can name unambiguously.
        std::vector<PromptElement> usable;
        for (auto& e : elements)
            if (!e.label.empty() || !e.bounds.empty()) usable.push_back(e);

        json arr = json::array();
        if (task == "conv_4o_miss") {
            arr = missing_function(elements, rng);
        } else if (usable.empty()) {
            arr.push_back(qa("What is shown on this screen?", "The screen mainly shows content without interactive controls."));
        } else if (task.rfind("conv_", 0) == 0) {
            arr = conversation(task, usable, rng);
        } else {
            std::vector<std::pair<std::string, std::string>> templates;
            for (const auto& t : line_values(req.user_text, "template")) {
                const auto sep = t.find(" => ");
                if (sep != std::string::npos) templates.emplace_back(t.substr(0, sep), t.substr(sep + 4));
            }
            if (templates.empty()) templates.emplace_back("What is the {target}?", "The {target} is in the {position}.");
            for (int i = 0; i < n; ++i) {
                for (int tries = 0; tries < 16; ++tries) {
                    const auto& e = usable[rng.below(usable.size())];
                    const auto& [q, a] = templates[rng.below(templates.size())];
                    if (!satisfiable(q, e) || !satisfiable(a, e)) continue;
                    arr.push_back(qa(fill(q, e), fill(a, e)));
                    break;
                }
            }
            if (arr.empty()) arr.push_back(qa("What is shown on this screen?", "The screen mainly shows content."));
        }
        c.text = arr.dump();
    }
    c.usage.prompt_tokens = approx_tokens(req.system_text) + approx_tokens(req.user_text);
    c.usage.completion_tokens = approx_tokens(c.text);
    return c;
}

} // namespace forge
