#pragma once

#include "forge/review.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace forge {

/// JSON API over a ReviewStore. The reviewer name is taken from the X-Reviewer header or the verdict body.
class ReviewServer {
public:
    explicit ReviewServer(ReviewStore& store, std::optional<std::filesystem::path> static_dir = std::nullopt);
    ~ReviewServer();
    ReviewServer(const ReviewServer&) = delete;
    ReviewServer& operator=(const ReviewServer&) = delete;

    /// Binds to an ephemeral port and returns it.
    int bind_any_port(const std::string& host = "127.0.0.1");
    void bind(const std::string& host, int port);
    /// Serves until stop() is called.
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Overlay geometry and facts of every element on a screen.
nlohmann::json elements_json(const ScreenRecord& screen, const FactsIndex& facts);

} // namespace forge
