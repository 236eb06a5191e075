// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include <doctest.h>

#include <atomic>
#include <thread>

#include "morphvol/io.hpp"
#include "morphvol/service.hpp"

#include <httplib.h>

using namespace morphvol;
using json = nlohmann::json;

namespace {

std::shared_ptr<const PortraitModel> tiny_model() {
    static const auto m = [] {
        SceneConfig c;
        c.model.plane_resolution = 8;
        c.model.plane_channels = 4;
        c.model.w_rows = 2;
        c.model.w_cols = 16;
        c.model.mapping_layers = 3;
        c.model.generator_hidden = 16;
        c.model.decoder_hidden = 8;
        c.sampling.coarse = 8;
        c.sampling.fine = 8;
        c.camera.width = c.camera.height = 8;
        return std::make_shared<const PortraitModel>(PortraitModel::create(c));
    }();
    return m;
}

json error_of(const HttpResponse& r) { return json::parse(r.body); }

}  // namespace

TEST_SUITE("service") {

TEST_CASE("render returns a deterministic PNG") {
    RenderService s(tiny_model(), {});
    const HttpResponse a = s.render({{"yaw", "0.2"}, {"size", "8"}});
    CHECK(a.status == 200);
    CHECK(a.content_type == "image/png");
    CHECK(a.body.substr(1, 3) == "PNG");
    CHECK(s.render({{"yaw", "0.2"}, {"size", "8"}}).body == a.body);
}

TEST_CASE("yaw sweep gives distinct images") {
    RenderService s(tiny_model(), {});
    const auto a = s.render({{"yaw", "-0.4"}}).body, b = s.render({{"yaw", "0.0"}}).body, c = s.render({{"yaw", "0.4"}}).body;
    CHECK(a != b);
    CHECK(b != c);
    CHECK(a != c);
}

TEST_CASE("invalid queries are 400 with a JSON error") {
    RenderService s(tiny_model(), {});
    for (const Query& q : std::vector<Query>{{{"yaw", "abc"}},
                                             {{"yaw", "0.1x"}},
                                             {{"pitch", "1.6"}},
                                             {{"size", "0"}},
                                             {{"size", "100000"}},
                                             {{"seed", "-1"}},
                                             {{"blend", "2"}},
                                             {{"zoom", "1"}}}) {
        const HttpResponse r = s.render(q);
        CHECK(r.status == 400);
        CHECK(r.content_type == "application/json");
        CHECK(error_of(r).contains("error"));
        CHECK(s.semantic(q).status == 400);
    }
}

TEST_CASE("POST merges, GET echoes, bad fragments leave state alone") {
    RenderService s(tiny_model(), {});
    const auto before = s.params();
    const HttpResponse ok = s.post_params(R"({"pose": {"yaw": 0.3}, "beta": [)" + [] {
        std::string v;
        for (int i = 0; i < 64; ++i) v += (i ? "," : "") + std::string("0.5");
        return v;
    }() + "]}");
    CHECK(ok.status == 204);
    const json j = json::parse(s.get_params().body);
    CHECK(j["pose"]["yaw"] == 0.3);
    CHECK(j["beta"][10] == 0.5);
    CHECK(j["alpha"] == params_to_json(*before)["alpha"]);
    CHECK(*before == neutral_params(tiny_model()->epsilon_dim()));

    const auto snapshot = s.params();
    CHECK(s.post_params("{not json").status == 400);
    CHECK(s.post_params(R"({"beta": [1, 2]})").status == 400);
    CHECK(s.post_params(R"({"pose": {"spin": 1}})").status == 400);
    CHECK(*s.params() == *snapshot);
}

TEST_CASE("blend with a neutral expression matches the plain render") {
    RenderService s(tiny_model(), {});
    CHECK(s.render({{"blend", "1"}}).body == s.render({{"blend", "0"}}).body);
}

TEST_CASE("semantic, meta and index") {
    RenderService s(tiny_model(), {});
    CHECK(s.semantic({}).content_type == "image/png");
    const json m = json::parse(s.meta().body);
    CHECK(m["epsilon_dim"] == 64);
    CHECK(m["classes"].size() == 6);
    CHECK(m["face_classes"] == json::array({1, 3, 4}));
    CHECK(m["config"]["sampling"]["coarse"] == 8);
    CHECK(s.index().content_type == "text/html");
}

TEST_CASE("live server over HTTP") {
    RenderService s(tiny_model(), {});
    const int port = s.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread t([&] { s.run(); });
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    for (int i = 0; i < 100; ++i) {
        if (c.Get("/meta")) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    const auto r1 = c.Get("/render?yaw=0.1&size=8");
    const auto r2 = c.Get("/render?yaw=0.1&size=8");
    REQUIRE(r1);
    REQUIRE(r2);
    CHECK(r1->status == 200);
    CHECK(r1->get_header_value("Content-Type") == "image/png");
    CHECK(r1->body == r2->body);
    const auto bad = c.Get("/render?size=abc");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    CHECK(json::parse(bad->body).contains("error"));
    const auto post = c.Post("/params", R"({"pose": {"pitch": 0.1}})", "application/json");
    REQUIRE(post);
    CHECK(post->status == 204);
    const auto get = c.Get("/params");
    REQUIRE(get);
    CHECK(json::parse(get->body)["pose"]["pitch"] == 0.1);
    const auto index = c.Get("/");
    REQUIRE(index);
    CHECK(index->status == 200);

    // Concurrent merges never expose a torn snapshot.
    std::atomic<bool> torn{false};
    std::thread writer([&] {
        httplib::Client w("127.0.0.1", port);
        for (int i = 0; i < 20; ++i) {
            const double v = i;
            w.Post("/params", json{{"pose", {{"yaw", v / 100}, {"roll", v / 100}}}}.dump(), "application/json");
        }
    });
    for (int i = 0; i < 20; ++i) {
        const auto g = c.Get("/params");
        if (g && g->status == 200) {
            const json j = json::parse(g->body);
            if (j["pose"]["yaw"] != j["pose"]["roll"] && j["pose"]["roll"] != 0.0) torn = true;
        }
    }
    writer.join();
    CHECK_FALSE(torn);
    s.stop();
    t.join();
}

}
