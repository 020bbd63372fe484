#include "forge/llm.hpp"

#include <cstdlib>
#include <regex>

#include <httplib.h>

namespace forge {

using nlohmann::json;

namespace {

struct ParsedUrl {
    std::string scheme_host_port;
    std::string path;
};

ParsedUrl split_url(const std::string& url) {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re)) throw std::invalid_argument("bad endpoint URL: " + url);
    return {m[1].str(), m[2].matched ? m[2].str() : "/v1/chat/completions"};
}

std::optional<std::chrono::milliseconds> retry_after(const httplib::Result& res) {
    if (!res || !res->has_header("Retry-After")) return std::nullopt;
    const auto v = res->get_header_value("Retry-After");
    char* end = nullptr;
    const double secs = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || secs < 0) return std::nullopt;
    return std::chrono::milliseconds(static_cast<long long>(secs * 1000));
}

} // namespace

HttpBackend::HttpBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.auth_env.empty()) throw std::invalid_argument(cfg_.name + ": auth_env is required");
    const char* key = std::getenv(cfg_.auth_env.c_str());
    if (!key || !*key) throw BackendError(ErrorClass::permanent, 0, cfg_.name + ": environment variable " + cfg_.auth_env + " is not set");
    api_key_ = key;
    split_url(cfg_.endpoint);
}

Completion HttpBackend::complete(const GenerationRequest& req) {
    if (req.image && !cfg_.image_capable)
        throw BackendError(ErrorClass::permanent, 0, cfg_.name + " cannot accept images");
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", req.user_text}});
    if (req.image)
        content.push_back({{"type", "image_url"},
                           {"image_url", {{"url", "data:" + req.image->media_type + ";base64," + req.image->base64}}}});
    json body = {{"model", cfg_.model},
                 {"messages", json::array({{{"role", "system"}, {"content", req.system_text}},
                                           {{"role", "user"}, {"content", content}}})},
                 {"max_tokens", req.max_output_tokens},
                 {"temperature", req.temperature}};

    const auto url = split_url(cfg_.endpoint);
    httplib::Client cli(url.scheme_host_port);
    cli.set_connection_timeout(cfg_.timeout_seconds, 0);
    cli.set_read_timeout(cfg_.timeout_seconds, 0);
    cli.set_write_timeout(cfg_.timeout_seconds, 0);
    httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};
    auto res = cli.Post(url.path, headers, body.dump(), "application/json");
    if (!res) throw BackendError(ErrorClass::transient, 0, cfg_.name + ": " + httplib::to_string(res.error()));
    const int status = res->status;
    if (status == 429 || status == 503)
        throw BackendError(ErrorClass::throttle, status, cfg_.name + ": throttled (" + std::to_string(status) + ")",
                           retry_after(res));
    if (status == 408 || status >= 500)
        throw BackendError(ErrorClass::transient, status, cfg_.name + ": server error " + std::to_string(status));
    if (status != 200)
        throw BackendError(ErrorClass::permanent, status,
                           cfg_.name + ": request rejected (" + std::to_string(status) + "): " + res->body.substr(0, 200));

    json reply;
    try {
        reply = json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw BackendError(ErrorClass::transient, status, cfg_.name + ": unparseable reply: " + e.what());
    }
    Completion c;
    c.backend = cfg_.name;
    try {
        c.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw BackendError(ErrorClass::transient, status, cfg_.name + ": reply missing content: " + e.what());
    }
    if (auto u = reply.find("usage"); u != reply.end()) {
        c.usage.prompt_tokens = u->value("prompt_tokens", 0);
        c.usage.completion_tokens = u->value("completion_tokens", 0);
    }
    return c;
}

} // namespace forge
