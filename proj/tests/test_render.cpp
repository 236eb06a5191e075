// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "morphvol/render.hpp"
#include "morphvol/scene.hpp"

using namespace morphvol;

namespace {

Camera small_camera(int size, double yaw = 0.0, double pitch = 0.0) {
    CameraConfig cc;
    cc.width = size;
    cc.height = size;
    return orbit_camera(yaw, pitch, cc);
}

// Constant field integrated over [start, far] has alpha = 1 - exp(-sigma * length).
double closed_form_alpha(double sigma, double length) { return 1.0 - std::exp(-sigma * length); }

}  // namespace

TEST_SUITE("render") {

TEST_CASE("stratified samples: midpoints tile the segment") {
    const RaySamples s = stratified_samples(1.0, 3.0, 4, nullptr);
    CHECK(s.t == std::vector<double>{1.25, 1.75, 2.25, 2.75});
    CHECK(s.deltas == std::vector<double>{0.5, 0.5, 0.5, 0.5});
    Rng rng(3);
    const RaySamples j = stratified_samples(1.0, 3.0, 8, &rng);
    for (std::size_t i = 0; i < j.t.size(); ++i) {
        CHECK(j.t[i] >= 1.0 + 0.25 * i);
        CHECK(j.t[i] < 1.0 + 0.25 * (i + 1));
    }
    CHECK_THROWS_AS(stratified_samples(2.0, 1.0, 4, nullptr), std::invalid_argument);
}

TEST_CASE("inverse CDF puts all samples in the only weighted bin") {
    const RaySamples coarse = stratified_samples(0.0, 4.0, 4, nullptr);
    const std::vector<double> w{0.0, 0.0, 1.0, 0.0};
    const RaySamples fine = inverse_cdf_samples(coarse, w, 5, nullptr);
    REQUIRE(fine.t.size() == 5);
    for (double t : fine.t) {
        CHECK(t >= 2.0);
        CHECK(t <= 3.0);
    }
    const RaySamples none = inverse_cdf_samples(coarse, std::vector<double>(4, 0.0), 5, nullptr);
    CHECK(none.fallback);
    const RaySamples merged = importance_samples(coarse, std::vector<double>(4, 0.0), 4, 4.0, nullptr);
    CHECK(merged.fallback);
    CHECK(merged.t.size() == 8);
    CHECK(std::is_sorted(merged.t.begin(), merged.t.end()));
    CHECK(std::accumulate(merged.deltas.begin(), merged.deltas.end(), 0.0) == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("integrate_ray: constant density matches the closed form") {
    const RaySamples s = stratified_samples(0.5, 2.5, 96, nullptr);
    const std::size_t n = s.t.size();
    std::vector<double> colors(3 * n), sigmas(n, 0.7), logits(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        colors[3 * i] = 0.2, colors[3 * i + 1] = 0.5, colors[3 * i + 2] = 0.9;
        logits[2 * i] = 0.3, logits[2 * i + 1] = -1.0;
    }
    const RayIntegral r = integrate_ray(colors, sigmas, logits, s.deltas, s.t);
    const double a = closed_form_alpha(0.7, 2.0);
    CHECK(r.alpha == doctest::Approx(a).epsilon(1e-12));
    CHECK(r.color[1] == doctest::Approx(0.5 * a).epsilon(1e-12));
    CHECK(r.semantic[0] + r.semantic[1] == doctest::Approx(r.alpha).epsilon(1e-14));
    double optical = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(r.transmittance[i] == doctest::Approx(std::exp(-optical)).epsilon(1e-14));
        optical += 0.7 * s.deltas[i];
    }
}

TEST_CASE("integrate_ray rejects negative density and ragged input") {
    const std::vector<double> c(6, 0.0), d{1.0, 1.0}, l;
    CHECK_THROWS_AS(integrate_ray(c, std::vector<double>{1.0, -1.0}, l, d), std::invalid_argument);
    CHECK_THROWS_AS(integrate_ray(c, std::vector<double>{1.0}, l, d), std::invalid_argument);
}

TEST_CASE("empty space renders transparent with zero depth") {
    const ConstantField f(0.0, {1.0, 1.0, 1.0}, {0.5, 0.5});
    const RenderOutput out = render_image(f, small_camera(4));
    for (double a : out.alpha.data) CHECK(a == 0.0);
    for (double d : out.depth.data) CHECK(d == 0.0);
    CHECK(out.fallback_rays == 16);
}

TEST_CASE("rendered constant field: alpha and depth") {
    const Camera cam = small_camera(6);
    const ConstantField f(0.4, {0.3, 0.6, 0.9}, {0.25, 0.75});
    const RenderOutput out = render_image(f, cam);
    const double a = closed_form_alpha(0.4, cam.far - cam.near);
    for (std::size_t i = 0; i < out.alpha.size(); ++i) {
        CHECK(out.alpha.data[i] == doctest::Approx(a).epsilon(1e-9));
        CHECK(out.rgb(i, 2) == doctest::Approx(0.9 * a).epsilon(1e-9));
        CHECK(out.semantic(i, 1) == doctest::Approx(0.75 * a).epsilon(1e-9));
        CHECK(out.depth.data[i] > cam.near);
        CHECK(out.depth.data[i] < cam.far);
    }
}

TEST_CASE("sphere: hit rays are opaque, miss rays are empty") {
    const Camera cam = small_camera(16);
    const ShapeField f(ShapeField::Kind::sphere, {0.0, 0.0, 0.0}, {0.4, 0.4, 0.4}, 200.0, {1.0, 0.0, 0.0}, 3, 2);
    const RenderOutput out = render_image(f, cam);
    const auto labels = out.semantic_labels();
    const std::size_t center = 8 * 16 + 8;
    CHECK(out.alpha.data[center] > 0.999);
    CHECK(labels[center] == 2);
    CHECK(out.depth.data[center] == doctest::Approx(cam.radius() - 0.4).epsilon(0.02));
    CHECK(out.alpha.data[0] == 0.0);
}

TEST_CASE("semantic mass equals alpha on a random tri-plane field") {
    SceneConfig cfg;
    cfg.model.plane_resolution = 8;
    cfg.model.plane_channels = 4;
    cfg.model.w_rows = 2;
    cfg.model.w_cols = 16;
    cfg.model.mapping_layers = 2;
    const PortraitModel m = PortraitModel::initialize(cfg, make_synthetic_basis());
    const ControlParams p = neutral_params(m.epsilon_dim());
    const Camera cam = m.camera_for(p.pose, 8, 8);
    const RenderOutput out = m.render(p, cam, m.render_options(false, 4));
    for (std::size_t i = 0; i < out.alpha.size(); ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < out.classes; ++k) s += out.semantic(i, k);
        CHECK(s == doctest::Approx(out.alpha.data[i]).epsilon(1e-12));
        CHECK(out.alpha.data[i] >= 0.0);
        CHECK(out.alpha.data[i] <= 1.0);
    }
}

TEST_CASE("forced blend weights select the dynamic or static field bit-exactly") {
    auto dyn = std::make_shared<ShapeField>(ShapeField::Kind::sphere, Vec3{0.1, 0.0, 0.0}, Vec3{0.3, 0.3, 0.3}, 30.0,
                                            std::array<double, 3>{0.9, 0.2, 0.1}, 3, 1);
    auto stat = std::make_shared<ShapeField>(ShapeField::Kind::box, Vec3{-0.1, 0.0, 0.0}, Vec3{0.3, 0.2, 0.3}, 10.0,
                                             std::array<double, 3>{0.1, 0.2, 0.8}, 3, 2);
    const Camera cam = small_camera(10, 0.3, 0.1);
    const RenderOptions ro;
    const std::vector<int> face{1};
    const RenderOutput d = render_image(*dyn, cam, ro), s = render_image(*stat, cam, ro);
    const RenderOutput one = render_image(BlendedField(dyn, stat, face, 1.0), cam, ro);
    const RenderOutput zero = render_image(BlendedField(dyn, stat, face, 0.0), cam, ro);
    CHECK(one.rgb.data == d.rgb.data);
    CHECK(one.semantic.data == d.semantic.data);
    CHECK(zero.rgb.data == s.rgb.data);
    CHECK(zero.alpha.data == s.alpha.data);
    // Identical fields blend to themselves with the dynamic weight too.
    const RenderOutput same = render_image(BlendedField(dyn, dyn, face), cam, ro);
    CHECK(same.rgb.data == d.rgb.data);
}

TEST_CASE("blend weight is the face-class probability mass") {
    const std::vector<double> logits{0.0, std::log(2.0), std::log(3.0)};
    const std::vector<int> face{1, 2};
    CHECK(face_weight(logits, face) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("background replacement") {
    const ConstantField f(0.4, {1.0, 0.0, 0.0}, {1.0});
    const RenderOutput out = render_image(f, small_camera(2));
    const Image bg(2, 2, 3, 0.5);
    const Image r = replace_background(out, bg);
    const double a = out.alpha.data[0];
    CHECK(r.at(0, 0, 0) == doctest::Approx(a + (1 - a) * 0.5));
    CHECK(r.at(0, 0, 1) == doctest::Approx((1 - a) * 0.5));
}

TEST_CASE("deterministic renders ignore the seed, jittered renders follow it") {
    const ShapeField f(ShapeField::Kind::sphere, {0.0, 0.0, 0.0}, {0.4, 0.4, 0.4}, 5.0, {0.5, 0.5, 0.5}, 2, 1);
    const Camera cam = small_camera(6);
    RenderOptions a, b;
    b.seed = 9;
    CHECK(render_image(f, cam, a).rgb.data == render_image(f, cam, b).rgb.data);
    a.deterministic = b.deterministic = false;
    CHECK(render_image(f, cam, b).rgb.data == render_image(f, cam, b).rgb.data);
    CHECK(render_image(f, cam, a).rgb.data != render_image(f, cam, b).rgb.data);
}

TEST_CASE("render is independent of the thread count") {
    const ShapeField f(ShapeField::Kind::sphere, {0.0, 0.0, 0.0}, {0.4, 0.4, 0.4}, 5.0, {0.5, 0.5, 0.5}, 2, 1);
    const Camera cam = small_camera(12);
    const int saved = ad::num_threads();
    ad::set_num_threads(1);
    const RenderOutput a = render_image(f, cam);
    ad::set_num_threads(4);
    const RenderOutput b = render_image(f, cam);
    ad::set_num_threads(saved);
    CHECK(a.rgb.data == b.rgb.data);
    CHECK(a.depth.data == b.depth.data);
}

}
