// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include "morphvol/service.hpp"

#include <charconv>
#include <cmath>
#include <mutex>
#include <numbers>
#include <optional>
#include <stdexcept>

#include <httplib.h>

#include "morphvol/io.hpp"

namespace morphvol {

namespace {

using json = nlohmann::json;

constexpr const char* kFallbackIndex = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>morphvol</title></head>
<body>
<p>Viewer bundle not installed. Render endpoint:</p>
<img id="frame" src="/render" width="256" height="256" style="image-rendering: pixelated">
</body></html>
)";

struct BadQuery : std::runtime_error {
    using std::runtime_error::runtime_error;
};

HttpResponse error(int status, const std::string& msg) {
    return {status, "application/json", json{{"error", msg}}.dump()};
}

double parse_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        throw BadQuery("'" + key + "' must be a finite number, got '" + s + "'");
    return v;
}

template <class T>
T parse_integer(const std::string& key, const std::string& s) {
    T v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        throw BadQuery("'" + key + "' must be an integer, got '" + s + "'");
    return v;
}

struct RenderRequest {
    std::optional<double> yaw, pitch;
    std::optional<std::uint64_t> seed;
    std::optional<int> size;
    bool blend = false;
};

RenderRequest parse_query(const Query& q, int max_size) {
    RenderRequest r;
    for (const auto& [k, v] : q) {
        if (k == "yaw") {
            r.yaw = parse_double(k, v);
        } else if (k == "pitch") {
            r.pitch = parse_double(k, v);
            if (std::abs(*r.pitch) >= std::numbers::pi / 2) throw BadQuery("'pitch' must lie strictly inside (-pi/2, pi/2)");
        } else if (k == "seed") {
            r.seed = parse_integer<std::uint64_t>(k, v);
        } else if (k == "size") {
            r.size = parse_integer<int>(k, v);
            if (*r.size < 1 || *r.size > max_size) throw BadQuery("'size' must lie in [1, " + std::to_string(max_size) + "]");
        } else if (k == "blend") {
            if (v != "0" && v != "1") throw BadQuery("'blend' must be 0 or 1");
            r.blend = v == "1";
        } else {
            throw BadQuery("unknown query parameter '" + k + "'");
        }
    }
    return r;
}

}  // namespace

struct RenderService::Impl {
    std::shared_ptr<const PortraitModel> model;
    ServiceOptions opt;
    mutable std::mutex snapshot_mutex;
    std::mutex writer_mutex;
    std::shared_ptr<const ControlParams> snapshot;
    httplib::Server server;

    std::shared_ptr<const ControlParams> load() const {
        std::lock_guard lock(snapshot_mutex);
        return snapshot;
    }

    RenderOutput render(const Query& q) const {
        const RenderRequest req = parse_query(q, opt.max_size);
        ControlParams p = *load();
        if (req.yaw) p.pose.yaw = *req.yaw;
        if (req.pitch) p.pose.pitch = *req.pitch;
        const int size = req.size.value_or(0);
        const Camera cam = model->camera_for(p.pose, size, size);
        const RenderOptions ro = model->render_options(opt.deterministic, req.seed.value_or(opt.seed));
        if (req.blend) return model->render_blended(p, neutral_params(model->epsilon_dim()).beta, cam, ro);
        return model->render(p, cam, ro);
    }
};

RenderService::RenderService(std::shared_ptr<const PortraitModel> model, ServiceOptions opt)
    : RenderService(model, std::move(opt), neutral_params(model->epsilon_dim())) {}

RenderService::RenderService(std::shared_ptr<const PortraitModel> model, ServiceOptions opt, ControlParams initial)
    : impl_(std::make_unique<Impl>()) {
    if (!model) throw std::invalid_argument("RenderService: null model");
    initial.validate(model->epsilon_dim());
    impl_->model = std::move(model);
    impl_->opt = std::move(opt);
    impl_->snapshot = std::make_shared<const ControlParams>(std::move(initial));

    auto query_of = [](const httplib::Request& req) {
        Query q;
        for (const auto& [k, v] : req.params) q[k] = v;
        return q;
    };
    auto reply = [](httplib::Response& res, const HttpResponse& r) {
        res.status = r.status;
        if (!r.body.empty() || !r.content_type.empty()) res.set_content(r.body, r.content_type);
    };
    auto& s = impl_->server;
    s.Get("/render", [=, this](const httplib::Request& req, httplib::Response& res) { reply(res, render(query_of(req))); });
    s.Get("/semantic", [=, this](const httplib::Request& req, httplib::Response& res) { reply(res, semantic(query_of(req))); });
    s.Get("/params", [=, this](const httplib::Request&, httplib::Response& res) { reply(res, get_params()); });
    s.Post("/params", [=, this](const httplib::Request& req, httplib::Response& res) { reply(res, post_params(req.body)); });
    s.Get("/meta", [=, this](const httplib::Request&, httplib::Response& res) { reply(res, meta()); });
    const auto& dir = impl_->opt.static_dir;
    if (!dir.empty() && std::filesystem::is_regular_file(dir / "index.html")) {
        s.set_mount_point("/", dir.string());
    } else {
        s.Get("/", [=, this](const httplib::Request&, httplib::Response& res) { reply(res, index()); });
    }
    s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string msg = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            msg = e.what();
        } catch (...) {
        }
        res.status = 500;
        res.set_content(json{{"error", msg}}.dump(), "application/json");
    });
}

RenderService::~RenderService() { stop(); }

std::shared_ptr<const ControlParams> RenderService::params() const { return impl_->load(); }

HttpResponse RenderService::render(const Query& q) const {
    try {
        return {200, "image/png", encode_png(impl_->render(q).rgb_image())};
    } catch (const BadQuery& e) {
        return error(400, e.what());
    }
}

HttpResponse RenderService::semantic(const Query& q) const {
    try {
        const RenderOutput out = impl_->render(q);
        return {200, "image/png", encode_png(label_image(out.semantic_labels(), out.width, out.height))};
    } catch (const BadQuery& e) {
        return error(400, e.what());
    }
}

HttpResponse RenderService::get_params() const {
    return {200, "application/json", params_to_json(*impl_->load()).dump()};
}

HttpResponse RenderService::post_params(const std::string& body) {
    json fragment;
    try {
        fragment = json::parse(body);
    } catch (const json::parse_error& e) {
        return error(400, std::string("malformed JSON: ") + e.what());
    }
    std::lock_guard writer(impl_->writer_mutex);
    std::shared_ptr<const ControlParams> next;
    try {
        next = std::make_shared<const ControlParams>(merge_params(*impl_->load(), fragment, impl_->model->epsilon_dim()));
    } catch (const std::exception& e) {
        return error(400, e.what());
    }
    {
        std::lock_guard lock(impl_->snapshot_mutex);
        impl_->snapshot = std::move(next);
    }
    return {204, "", ""};
}

HttpResponse RenderService::meta() const {
    const PortraitModel& m = *impl_->model;
    json j{{"config", config_to_json(m.config)},
           {"epsilon_dim", m.epsilon_dim()},
           {"w_shape", {m.mapping.out_rows, m.mapping.out_cols}},
           {"classes", m.config.classes},
           {"face_classes", m.face_classes()},
           {"basis_vertices", m.basis.vertex_count()},
           {"deterministic", impl_->opt.deterministic},
           {"max_size", impl_->opt.max_size}};
    return {200, "application/json", j.dump()};
}

HttpResponse RenderService::index() const { return {200, "text/html", kFallbackIndex}; }

int RenderService::bind(const std::string& host, int port) {
    if (port == 0) return impl_->server.bind_to_any_port(host);
    return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool RenderService::run() { return impl_->server.listen_after_bind(); }

void RenderService::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace morphvol
