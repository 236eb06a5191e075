// Copyright Contributors to the morphvol Project
// SPDX-License-Identifier: Apache-2.0
//
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "morphvol/latent.hpp"
#include "morphvol/render.hpp"
#include "morphvol/triplane.hpp"

using namespace morphvol;

namespace {

// Plane values that are affine in the texel coordinates, so bilinear lookup is exact.
TriPlanes affine_planes(int P) {
    TriPlanes t(P, 2, 1.0);
    for (int k = 0; k < 3; ++k)
        for (int j = 0; j < P; ++j)
            for (int i = 0; i < P; ++i) {
                t.data(t.row(k, i, j), 0) = 1.0 + k + 2.0 * i;
                t.data(t.row(k, i, j), 1) = -3.0 * j + 0.5 * k;
            }
    return t;
}

}  // namespace

TEST_SUITE("triplane") {

TEST_CASE("positional encoding layout") {
    const std::vector<double> x{0.25};
    const auto e = positional_encoding(x, 2);
    REQUIRE(e.size() == encoded_size(1, 2));
    CHECK(e[0] == 0.25);
    CHECK(e[1] == doctest::Approx(std::sin(std::numbers::pi / 4)));
    CHECK(e[2] == doctest::Approx(std::cos(std::numbers::pi / 4)));
    CHECK(e[3] == doctest::Approx(1.0));
    CHECK(std::abs(e[4]) < 1e-15);
}

TEST_CASE("projection maps the bound box onto the unit square per plane") {
    const auto uv = project_point({-1.0, 0.0, 1.0}, 1.0);
    CHECK(uv[0].u == 0.0);
    CHECK(uv[0].v == 0.5);
    CHECK(uv[1].v == 1.0);
    CHECK(uv[2].u == 0.5);
    const auto clamped = project_point({5.0, -5.0, 0.0}, 2.0);
    CHECK(clamped[0].u == 1.0);
    CHECK(clamped[0].v == 0.0);
}

TEST_CASE("bilinear lookup is exact on affine planes") {
    const TriPlanes t = affine_planes(5);
    // Align corners: u = 0.375 is texel coordinate 1.5.
    const auto f = sample_plane(t, 1, {0.375, 0.75});
    CHECK(f[0] == doctest::Approx(2.0 + 2.0 * 1.5));
    CHECK(f[1] == doctest::Approx(-3.0 * 3.0 + 0.5));
    const auto corner = sample_plane(t, 2, {1.0, 1.0});
    CHECK(corner[0] == doctest::Approx(3.0 + 8.0));
}

TEST_CASE("aggregate feature is the sum over the three planes and matches the tap form") {
    const TriPlanes t = affine_planes(6);
    const Vec3 p{0.2, -0.4, 0.7};
    const auto uv = project_point(p, 1.0);
    const auto f = aggregate_feature(p, t);
    for (std::size_t c = 0; c < 2; ++c) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += sample_plane(t, k, uv[k])[c];
        CHECK(f[c] == doctest::Approx(s).epsilon(1e-14));
    }
    const ad::Mat pts(1, 3, {p[0], p[1], p[2]});
    const ad::Mat g = ad::row_gather(ad::Var::constant(t.data), aggregate_taps(pts, 6, 1.0)).value();
    CHECK(g(0, 0) == doctest::Approx(f[0]).epsilon(1e-14));
    CHECK(g(0, 1) == doctest::Approx(f[1]).epsilon(1e-14));
}

TEST_CASE("decoder heads: color in [0,1], density >= 0, shared first layer") {
    Rng rng(4);
    const FieldDecoder dec = make_field_decoder(8, 16, 6, rng);
    CHECK(dec.feature_dim() == 8);
    CHECK(dec.class_count() == 6);
    CHECK(dec.appearance.in_dim() == dec.shared.out_dim());
    CHECK(dec.semantic.in_dim() == dec.shared.out_dim());
    for (int i = 0; i < 20; ++i) {
        std::vector<double> f(8);
        for (double& v : f) v = rng.normal(0.0, 3.0);
        const PointSample s = decode(dec, f);
        for (double c : s.color) {
            CHECK(c >= 0.0);
            CHECK(c <= 1.0);
        }
        CHECK(s.sigma >= 0.0);
        CHECK(s.logits.size() == 6);
    }
}

TEST_CASE("semantic logits do not depend on the view direction") {
    Rng rng(5);
    const FieldDecoder dec = make_field_decoder(4, 8, 3, rng, true);
    std::vector<double> f{0.3, -1.0, 0.5, 2.0};
    const Vec3 d1{0.0, 0.0, 1.0}, d2{0.6, 0.0, 0.8};
    const PointSample a = decode(dec, f, &d1), b = decode(dec, f, &d2);
    CHECK(a.logits == b.logits);
    CHECK(a.color != b.color);
}

TEST_CASE("generator output shape follows the config") {
    Rng rng(6);
    GeneratorConfig gc;
    gc.resolution = 4;
    gc.channels = 3;
    gc.hidden = 8;
    const TriPlaneGenerator g = make_triplane_generator(10, gc, rng);
    CHECK(g.w_dim() == 10);
    const std::vector<double> w(10, 0.1);
    const TriPlanes t = generate_triplanes(g, w, {0.0, 0.0, 1.0});
    CHECK(t.data.rows == 48);
    CHECK(t.data.cols == 3);
    const TriPlanes t2 = generate_triplanes(g, w, {1.0, 0.0, 0.0});
    CHECK(t.data.data != t2.data.data);
}

TEST_CASE("mapping network shape") {
    Rng rng(7);
    const MappingNetwork m = make_mapping_network(20, 3, 5, 4, rng);
    CHECK(m.mlp.layers.size() == 4);
    CHECK(m.out_dim() == 15);
    CHECK(map_to_w(m, std::vector<double>(20, 0.5)).size() == 15);
}

}
