#include "forge/review_http.hpp"

#include "forge/image.hpp"

#include <httplib.h>

namespace forge {

using nlohmann::json;

json elements_json(const ScreenRecord& screen, const FactsIndex& facts) {
    json arr = json::array();
    for (const auto& e : screen.elements) {
        json el = {{"id", e.id},
                   {"class", e.class_name},
                   {"bounds", {e.bounds.x1, e.bounds.y1, e.bounds.x2, e.bounds.y2}},
                   {"bounds_literal", bounds_literal(e.bounds)},
                   {"depth", e.depth}};
        if (e.click_point) el["click"] = {e.click_point->x, e.click_point->y};
        if (auto l = element_label(e)) el["label"] = *l;
        if (const auto* f = facts.find(e.id)) {
            el["shape"] = to_string(f->shape);
            el["colors"] = f->color_names;
            el["position"] = f->position_phrase;
        }
        arr.push_back(std::move(el));
    }
    return {{"screen_id", screen.screen_id}, {"elements", arr}};
}

struct ReviewServer::Impl {
    ReviewStore& store;
    httplib::Server server;
    Impl(ReviewStore& s) : store(s) {}
};

namespace {

void send_json(httplib::Response& res, const json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, {{"error", message}}, status);
}

} // namespace

ReviewServer::ReviewServer(ReviewStore& store, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>(store)) {
    auto& srv = impl_->server;
    auto& st = impl_->store;

    srv.Get("/api/pairs/next", [&st](const httplib::Request& req, httplib::Response& res) {
        std::optional<TaskKind> filter;
        if (req.has_param("task")) {
            const auto t = req.get_param_value("task");
            filter = task_from_string(t);
            if (!filter) return send_error(res, 400, "unknown task kind: " + t);
        }
        auto item = st.next_pending(filter);
        if (!item) return send_json(res, {{"pair", nullptr}, {"stats", st.stats().to_json()}});
        json out = {{"pair", to_json(item->pair)}};
        if (item->pair.lint) out["lint"] = to_json(*item->pair.lint);
        if (item->screen) {
            out["screen"] = {{"screen_id", item->screen->screen_id},
                             {"image_url", "/api/screens/" + item->screen->screen_id + "/image"},
                             {"width", item->screen->screen_size.width},
                             {"height", item->screen->screen_size.height}};
            out["elements"] = elements_json(*item->screen, item->facts)["elements"];
        }
        send_json(res, out);
    });

    srv.Get(R"(/api/screens/([^/]+)/image)", [&st](const httplib::Request& req, httplib::Response& res) {
        const auto* screen = st.screen(req.matches[1].str());
        if (!screen) return send_error(res, 404, "unknown screen: " + req.matches[1].str());
        try {
            const auto bytes = read_file_bytes(screen->image_path);
            res.set_content(reinterpret_cast<const char*>(bytes.data()), bytes.size(), "image/jpeg");
        } catch (const std::exception&) {
            send_error(res, 404, "no screenshot for " + screen->screen_id);
        }
    });

    srv.Get(R"(/api/screens/([^/]+)/elements)", [&st](const httplib::Request& req, httplib::Response& res) {
        const auto* screen = st.screen(req.matches[1].str());
        if (!screen) return send_error(res, 404, "unknown screen: " + req.matches[1].str());
        FactsOptions fo;
        fo.compute_relations = false;
        send_json(res, elements_json(*screen, build_facts_from_disk(*screen, fo)));
    });

    srv.Post("/api/verdicts", [&st](const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::parse_error& e) {
            return send_error(res, 400, std::string("invalid JSON: ") + e.what());
        }
        try {
            auto v = verdict_from_json(body);
            if (req.has_header("X-Reviewer")) v.reviewer = req.get_header_value("X-Reviewer");
            v.seq = 0;
            const auto ack = st.submit(std::move(v));
            send_json(res, {{"ack", true}, {"seq", ack.seq}, {"pair_id", ack.pair_id}, {"decision", to_string(ack.decision)}});
        } catch (const UnknownPair& e) {
            send_error(res, 404, e.what());
        } catch (const InvalidVerdict& e) {
            send_error(res, 400, e.what());
        }
    });

    srv.Get("/api/export", [&st](const httplib::Request&, httplib::Response& res) {
        std::string body;
        for (const auto& p : st.export_corpus()) body += to_json(p).dump() + "\n";
        res.set_content(body, "application/x-ndjson");
    });

    srv.Get("/api/stats", [&st](const httplib::Request&, httplib::Response& res) { send_json(res, st.stats().to_json()); });

    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            send_error(res, 500, e.what());
        } catch (...) {
            send_error(res, 500, "internal error");
        }
    });

    if (static_dir && !srv.set_mount_point("/", static_dir->string()))
        throw std::runtime_error("cannot serve static files from " + static_dir->string());
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind_any_port(const std::string& host) {
    const int port = impl_->server.bind_to_any_port(host);
    if (port < 0) throw std::runtime_error("cannot bind " + host);
    return port;
}

void ReviewServer::bind(const std::string& host, int port) {
    if (!impl_->server.bind_to_port(host, port))
        throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
}

void ReviewServer::run() { impl_->server.listen_after_bind(); }

void ReviewServer::stop() {
    if (impl_) impl_->server.stop();
}

} // namespace forge
