// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include <doctest.h>

#include <filesystem>

#include "morphvol/scene.hpp"

using namespace morphvol;
namespace fs = std::filesystem;

namespace {

SceneConfig small_config() {
    SceneConfig c;
    c.model.plane_resolution = 8;
    c.model.plane_channels = 4;
    c.model.w_rows = 2;
    c.model.w_cols = 16;
    c.model.mapping_layers = 3;
    c.model.generator_hidden = 16;
    c.model.decoder_hidden = 8;
    c.model.epsilon_dim = 8;
    c.sampling.coarse = 12;
    c.sampling.fine = 12;
    return c;
}

ControlParams expressive(const PortraitModel& m) {
    ControlParams p = neutral_params(m.epsilon_dim());
    Rng rng(5);
    for (double& v : p.beta) v = rng.normal(0.0, 0.8);
    return p;
}

}  // namespace

TEST_SUITE("scene") {

TEST_CASE("weights round trip through the container") {
    PortraitModel a = PortraitModel::create(small_config());
    SceneConfig other = small_config();
    other.seed = 99;
    PortraitModel b = PortraitModel::create(other);
    const ControlParams p = expressive(a);
    const Camera cam = a.camera_for(p.pose, 6, 6);
    CHECK(a.render(p, cam, a.render_options(true, 0)).rgb.data != b.render(p, cam, b.render_options(true, 0)).rgb.data);
    const fs::path path = fs::temp_directory_path() / "morphvol_scene_weights.ntc";
    a.save_weights(path);
    b.load_weights(path);
    CHECK(a.render(p, cam, a.render_options(true, 0)).rgb.data == b.render(p, cam, b.render_options(true, 0)).rgb.data);
    CHECK(b.w_mean == a.w_mean);

    SceneConfig wider = small_config();
    wider.model.plane_channels = 5;
    PortraitModel c = PortraitModel::create(wider);
    CHECK_THROWS(c.load_weights(path));
}

TEST_CASE("seeded initialization is reproducible") {
    const PortraitModel a = PortraitModel::create(small_config());
    const PortraitModel b = PortraitModel::create(small_config());
    CHECK(a.w_for(expressive(a)) == b.w_for(expressive(b)));
}

TEST_CASE("blending identities on the model") {
    const PortraitModel m = PortraitModel::create(small_config());
    const ControlParams p = expressive(m);
    const auto neutral = neutral_params(m.epsilon_dim()).beta;
    const Camera cam = m.camera_for(p.pose, 6, 6);
    const RenderOptions ro = m.render_options(true, 0);
    const RenderOutput plain = m.render(p, cam, ro);
    CHECK(m.render_blended(p, neutral, cam, ro, 1.0).rgb.data == plain.rgb.data);
    ControlParams q = p;
    q.beta = neutral;
    CHECK(m.render_blended(p, neutral, cam, ro, 0.0).rgb.data == m.render(q, cam, ro).rgb.data);
    CHECK(m.render_blended(q, neutral, cam, ro).rgb.data == m.render(q, cam, ro).rgb.data);
}

TEST_CASE("the view direction points from target to camera") {
    const PortraitModel m = PortraitModel::create(small_config());
    const Vec3 d = PortraitModel::view_direction(m.camera_for(Pose{}));
    CHECK(d[2] == doctest::Approx(1.0));
}

TEST_CASE("prior fitting lowers its loss") {
    PortraitModel m = PortraitModel::create(small_config());
    PriorFitOptions o;
    o.steps = 40;
    o.size = 8;
    o.subjects = 1;
    const auto r = fit_prior(m, o);
    CHECK(r.back().total < 0.7 * r.front().total);
    CHECK(prior_subjects(m, o).front().beta == neutral_params(m.epsilon_dim()).beta);
}

TEST_CASE("invalid params are rejected") {
    const PortraitModel m = PortraitModel::create(small_config());
    ControlParams p = neutral_params(m.epsilon_dim());
    p.epsilon.push_back(0.0);
    CHECK_THROWS_AS(m.w_for(p), std::invalid_argument);
    p = neutral_params(m.epsilon_dim());
    p.gamma[0] = std::nan("");
    CHECK_THROWS_AS(m.w_for(p), std::invalid_argument);
}

}
